use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BenchError;
use crate::encode::Table;
use crate::ring::RngHandle;

/// Seeded synthetic two-class problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    /// Balanced classes; every predictor is `U(0, 1)` for class 0 and
    /// `U(2, 3)` for class 1, so the class supports are disjoint.
    Separable,
    /// Standard normal predictors, `P(y = 1) = logistic(2 w.x)` with weights
    /// `w_j = (-1)^j / sqrt(P)`.
    NoisyLinear,
    /// `y = [x_1 > 0] xor [x_2 > 0]` over `U(-1, 1)` predictors, flipped with
    /// probability 0.1. Remaining predictors are noise.
    Xor,
}

impl FromStr for Generator {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "separable" => Ok(Generator::Separable),
            "noisy-linear" => Ok(Generator::NoisyLinear),
            "xor" => Ok(Generator::Xor),
            other => Err(BenchError::Invalid(format!("unknown generator `{other}` (separable, noisy-linear, xor)"))),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::Separable => "separable",
            Generator::NoisyLinear => "noisy-linear",
            Generator::Xor => "xor",
        })
    }
}

/// Draws `rows` observations of `predictors` numeric columns `x1..xP` with a
/// 0/1 response `y`.
pub fn generate(kind: Generator, rows: usize, predictors: usize, seed: u64) -> Result<Table, BenchError> {
    let min_p = if kind == Generator::Xor { 2 } else { 1 };
    if predictors < min_p || rows < 4 {
        return Err(BenchError::Invalid(format!("{kind} needs at least {min_p} predictors and 4 rows")));
    }
    let mut rng = RngHandle::new(seed).substream("synth", 0);
    let mut cols = vec![Vec::with_capacity(rows); predictors];
    let mut y = Vec::with_capacity(rows);
    match kind {
        Generator::Separable => {
            let mut labels: Vec<u8> = (0..rows).map(|i| (i % 2) as u8).collect();
            labels.shuffle(&mut rng);
            for &l in &labels {
                for c in cols.iter_mut() {
                    c.push(2.0 * l as f64 + rng.random::<f64>());
                }
            }
            y = labels;
        }
        Generator::NoisyLinear => {
            let scale = 1.0 / (predictors as f64).sqrt();
            for _ in 0..rows {
                let mut eta = 0.0;
                for (j, c) in cols.iter_mut().enumerate() {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    eta += if j % 2 == 0 { scale } else { -scale } * x;
                    c.push(x);
                }
                y.push(rng.random_bool(1.0 / (1.0 + (-2.0 * eta).exp())) as u8);
            }
        }
        Generator::Xor => {
            for _ in 0..rows {
                for c in cols.iter_mut() {
                    c.push(rng.random_range(-1.0..1.0));
                }
                let l = (cols[0].last() > Some(&0.0)) != (cols[1].last() > Some(&0.0));
                y.push((l != rng.random_bool(0.1)) as u8);
            }
        }
    }
    let names: Vec<String> = (1..=predictors).map(|j| format!("x{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Ok(Table::numeric(&refs, cols, &y)?)
}
