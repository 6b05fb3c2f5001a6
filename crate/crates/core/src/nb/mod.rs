//! Naive Bayes for encrypted data.
//!
//! The semi-parametric variant models each predictor's log-odds by a one-step
//! logistic fit whose coefficients are returned as numerator/denominator pairs;
//! the multinomial variant returns count tables. Divisions and logarithms happen
//! only after decryption, in the `assemble` functions.
//!
//! ```
//! use hestats::encode::{encode, Method, PartitionSpec, Table};
//! use hestats::fv::Evaluator;
//! use hestats::nb::{snb_assemble, snb_fit, snb_predict_raw};
//!
//! let table = Table::numeric(&["x"], vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]], &[0, 0, 1, 0, 1, 1]).unwrap();
//! let (spec, _) = PartitionSpec::build(&table, 3).unwrap();
//! let data = encode(&table, &spec, Method::Ordinal { centered: false }).unwrap();
//! let ev = Evaluator::plaintext();
//! let fit = snb_fit(&ev, &data, true).unwrap();
//! let p = snb_assemble(&snb_predict_raw(&ev, &fit, &data).unwrap()).unwrap();
//! assert!(p[5] > p[0]);
//! ```

mod mnb;
mod snb;
mod theory;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::{EncodeError, Method, QuantizedDataset, VarKind, VarLayout};
use crate::fv::{Budget, EncryptedValue, ErrorClass, Evaluator, FheError};

pub use mnb::{mnb_assemble, mnb_fit, mnb_predict_raw, MnbFit, MnbRaw};
pub use snb::{snb_assemble, snb_fit, snb_predict_raw, snb_theta, theta_is_degenerate, SnbFit, SnbRaw};
pub use theory::{asymptote, generalisation_error, shrinkage_curve};

#[derive(Debug, Error)]
pub enum NbError {
    #[error(transparent)]
    Fhe(#[from] FheError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("{0}")]
    Invalid(String),
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("malformed model artifact: {0}")]
    Corrupt(String),
}

impl NbError {
    pub fn class(&self) -> ErrorClass {
        match self {
            NbError::Fhe(e) => e.class(),
            NbError::Encode(e) => e.class(),
            NbError::Corrupt(_) => ErrorClass::Corrupt,
            _ => ErrorClass::Validation,
        }
    }
}

/// Layout and encoding a model was fitted on; prediction data must match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub method: Method,
    pub layout: Vec<VarLayout>,
}

impl ModelShape {
    fn of(data: &QuantizedDataset) -> Self {
        ModelShape { method: data.method, layout: data.layout.clone() }
    }

    fn check(&self, data: &QuantizedDataset) -> Result<(), NbError> {
        if data.method != self.method || data.layout != self.layout {
            return Err(NbError::Invalid("data encoding differs from the one the model was fitted on".into()));
        }
        Ok(())
    }
}

/// Response of a two-class dataset as 0/1 values (the second class is 1).
fn binary_response(data: &QuantizedDataset) -> Result<Vec<&EncryptedValue>, NbError> {
    if !data.is_labelled() || data.n_classes() != 2 {
        return Err(NbError::Invalid(format!("need a binary response, found {} classes", data.n_classes())));
    }
    Ok(data.y.iter().map(|r| &r[1]).collect())
}

/// Integer code of variable `var` in `row`: the stored value under Method 2,
/// or `sum_k k * x_k` (bins numbered from 1) under Method 1.
fn predictor(ev: &Evaluator, data: &QuantizedDataset, row: usize, var: usize) -> Result<EncryptedValue, NbError> {
    let block = data.block(row, var);
    if block.len() == 1 {
        return Ok(block[0].clone());
    }
    let mut acc = EncryptedValue::zero();
    for (k, x) in block.iter().enumerate() {
        acc = ev.add(&acc, &ev.scale(x, k as i64 + 1))?;
    }
    Ok(acc)
}

/// Largest absolute predictor code the encoding can produce.
fn max_code(shape: &ModelShape) -> u64 {
    shape
        .layout
        .iter()
        .map(|l| match (shape.method, l.kind) {
            (_, VarKind::Binary) => 1,
            (Method::Ordinal { centered: true }, _) => (l.n_bins as u64).div_ceil(2),
            _ => l.n_bins as u64,
        })
        .max()
        .unwrap_or(0)
}

fn check_budget(ev: &Evaluator, encrypted: bool, budget: Budget) -> Result<(), NbError> {
    if let (true, Some(p)) = (encrypted, ev.params()) {
        budget.check(p)?;
    }
    Ok(())
}

/// Per-level fan-in of SNB: the `n` scaling of a sum over `n` rows, the
/// working response `4y - 2` and the bin weights of an indicator code.
fn snb_fan_in(n: u64, shape: &ModelShape) -> u64 {
    (2 * n * n).max(16).max(max_code(shape).pow(3))
}

/// Per-level fan-in of MNB: sums over rows, then over the bins of a variable.
fn mnb_fan_in(n: u64, shape: &ModelShape) -> u64 {
    shape.layout.iter().map(|l| l.n_bins as u64).max().unwrap_or(1).max(n).max(2)
}

fn max_depth<'a>(values: impl IntoIterator<Item = &'a EncryptedValue>) -> u32 {
    values.into_iter().map(EncryptedValue::depth).max().unwrap_or(0)
}

fn to_f64(v: &EncryptedValue) -> Result<f64, NbError> {
    use num_traits::ToPrimitive;
    v.as_plain()
        .and_then(|b| b.to_f64())
        .ok_or_else(|| NbError::Invalid("assembly needs decrypted values".into()))
}

fn meta_of<T: for<'de> Deserialize<'de>>(meta: &str, kind: &str) -> Result<T, NbError> {
    #[derive(Deserialize)]
    struct Kind {
        kind: String,
    }
    let k: Kind = serde_json::from_str(meta).map_err(|e| NbError::Corrupt(e.to_string()))?;
    if k.kind != kind {
        return Err(NbError::Corrupt(format!("bundle holds a {}, not a {kind}", k.kind)));
    }
    serde_json::from_str(meta).map_err(|e| NbError::Corrupt(e.to_string()))
}

fn open_all(values: &mut [EncryptedValue], sk: &crate::fv::SecretKey) -> Result<(), NbError> {
    for v in values {
        *v = EncryptedValue::Plain(v.reveal(Some(sk))?);
    }
    Ok(())
}

/// What an SNB fit followed by prediction needs on data shaped like `data`,
/// with fresh encrypted inputs.
pub fn snb_budget(data: &QuantizedDataset, paired: bool) -> Budget {
    let shape = ModelShape::of(data);
    let x = max_code(&shape) as u128;
    let n = data.n_rows() as u128;
    let fan_in = snb_fan_in(n as u64, &shape);
    if paired {
        Budget { depth: 3, max_abs: 8 * n * n * x * x, fan_in }
    } else {
        Budget { depth: 2, max_abs: 2 * n * x.max(1) * x, fan_in }
    }
}

/// What an MNB fit followed by prediction needs on data shaped like `data`.
pub fn mnb_budget(data: &QuantizedDataset, laplace: u32) -> Budget {
    let n = data.n_rows() as u64;
    Budget { depth: 2, max_abs: n as u128 + laplace as u128, fan_in: mnb_fan_in(n, &ModelShape::of(data)) }
}

/// Evaluator suited to a model's data: keyed if anything is encrypted.
pub fn evaluator(rlk: Option<Arc<crate::fv::RelinKey>>) -> Evaluator {
    rlk.map(Evaluator::new).unwrap_or_default()
}
