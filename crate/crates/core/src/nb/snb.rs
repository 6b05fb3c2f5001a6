use serde::{Deserialize, Serialize};

use super::{
    binary_response, check_budget, max_code, snb_fan_in, max_depth, meta_of, open_all, predictor, to_f64, ModelShape, NbError,
};
use crate::encode::QuantizedDataset;
use crate::fv::io::Bundle;
use crate::fv::{Budget, EncryptedValue, Evaluator, SecretKey};

/// Semi-parametric naive Bayes sufficient statistics.
///
/// Per predictor, `coeffs[j] = [a_j, b_j, d_j]`. Paired fits hold the one-step
/// intercept and slope numerators over a shared denominator. Unpaired fits set
/// `a_j = 0`, `b_j = sum x z`, `d_j = sum x^2`, with the common intercept
/// `sum_z / n`. Either way a prediction numerator is `a_j + b_j x*`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnbFit {
    pub paired: bool,
    pub shape: ModelShape,
    pub n: u64,
    /// `(N - sum y, sum y)`.
    pub class_counts: [EncryptedValue; 2],
    pub sum_z: EncryptedValue,
    pub coeffs: Vec<[EncryptedValue; 3]>,
}

/// Undivided per-row predictions: `e[i][j] = a_j + b_j x*_ij` over `d[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnbRaw {
    pub paired: bool,
    pub n: u64,
    pub class_counts: [EncryptedValue; 2],
    pub sum_z: EncryptedValue,
    pub d: Vec<EncryptedValue>,
    pub e: Vec<Vec<EncryptedValue>>,
}

/// Class counts `(sum y, N - sum y)` from which the prior odds are formed.
pub fn snb_theta(ev: &Evaluator, data: &QuantizedDataset) -> Result<(EncryptedValue, EncryptedValue), NbError> {
    let y = binary_response(data)?;
    let s = ev.sum(y.iter().copied())?;
    let rest = ev.sub(&EncryptedValue::from(data.n_rows() as i64), &s)?;
    Ok((s, rest))
}

/// True when a class is absent, so the prior log-odds are undefined.
pub fn theta_is_degenerate(sum_y: i64, n: i64) -> bool {
    sum_y == 0 || sum_y == n
}

/// Fits every predictor independently with the first IRLS step from zero,
/// i.e. working response `z = 4y - 2` and unit weights.
pub fn snb_fit(ev: &Evaluator, data: &QuantizedDataset, paired: bool) -> Result<SnbFit, NbError> {
    let y = binary_response(data)?;
    let n = data.n_rows();
    if n == 0 {
        return Err(NbError::Invalid("cannot fit on zero rows".into()));
    }
    let shape = ModelShape::of(data);
    let x_max = max_code(&shape) as u128;
    let nn = n as u128;
    let (depth, bound) = if paired { (2, 4 * nn * nn * x_max * x_max) } else { (1, 2 * nn * x_max.max(1) * x_max) };
    let base = max_depth(data.x.iter().chain(&data.y).flatten());
    let fan_in = snb_fan_in(n as u64, &shape);
    check_budget(ev, data.is_encrypted(), Budget { depth: base + depth, max_abs: bound, fan_in })?;

    let z: Vec<EncryptedValue> =
        y.iter().map(|v| ev.sub(&ev.scale(v, 4), &EncryptedValue::from(2))).collect::<Result<_, _>>()?;
    let sum_z = ev.sum(&z)?;
    let (sum_y, rest) = snb_theta(ev, data)?;
    let mut coeffs = Vec::with_capacity(data.layout.len());
    for j in 0..data.layout.len() {
        let x: Vec<EncryptedValue> = (0..n).map(|i| predictor(ev, data, i, j)).collect::<Result<_, _>>()?;
        let mut sx = EncryptedValue::zero();
        let mut sxx = EncryptedValue::zero();
        let mut sxz = EncryptedValue::zero();
        for (xi, zi) in x.iter().zip(&z) {
            sx = ev.add(&sx, xi)?;
            sxx = ev.add(&sxx, &ev.mul(xi, xi)?)?;
            sxz = ev.add(&sxz, &ev.mul(xi, zi)?)?;
        }
        coeffs.push(if paired {
            let a = ev.sub(&ev.mul(&sxx, &sum_z)?, &ev.mul(&sx, &sxz)?)?;
            let b = ev.sub(&ev.scale(&sxz, n as i64), &ev.mul(&sx, &sum_z)?)?;
            let d = ev.sub(&ev.scale(&sxx, n as i64), &ev.mul(&sx, &sx)?)?;
            [a, b, d]
        } else {
            [EncryptedValue::zero(), sxz, sxx]
        });
    }
    Ok(SnbFit { paired, shape, n: n as u64, class_counts: [rest, sum_y], sum_z, coeffs })
}

/// Numerators `a_j + b_j x*_j` for every row of `data`, with the denominators.
pub fn snb_predict_raw(ev: &Evaluator, fit: &SnbFit, data: &QuantizedDataset) -> Result<SnbRaw, NbError> {
    fit.shape.check(data)?;
    let x_max = max_code(&fit.shape) as u128;
    let nn = fit.n as u128;
    let bound = if fit.paired { 8 * nn * nn * x_max * x_max } else { 2 * nn * x_max * x_max };
    let cd = max_depth(fit.coeffs.iter().flatten());
    let xd = max_depth(data.x.iter().flatten());
    let fit_enc = fit.coeffs.iter().flatten().any(EncryptedValue::is_cipher);
    let needed = match (fit_enc, data.is_encrypted()) {
        (true, true) => cd.max(xd) + 1,
        (true, false) => cd,
        (false, true) => xd,
        (false, false) => 0,
    };
    let fan_in = snb_fan_in(fit.n, &fit.shape);
    check_budget(ev, fit_enc || data.is_encrypted(), Budget { depth: needed, max_abs: bound, fan_in })?;
    let e = (0..data.n_rows())
        .map(|i| {
            fit.coeffs
                .iter()
                .enumerate()
                .map(|(j, [a, b, _])| Ok(ev.add(a, &ev.mul(b, &predictor(ev, data, i, j)?)?)?))
                .collect::<Result<Vec<_>, NbError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(SnbRaw {
        paired: fit.paired,
        n: fit.n,
        class_counts: fit.class_counts.clone(),
        sum_z: fit.sum_z.clone(),
        d: fit.coeffs.iter().map(|c| c[2].clone()).collect(),
        e,
    })
}

/// Probability of class 1 per row from decrypted raw predictions:
/// `1 / (1 + exp(-psi))` with `psi = (P - 1) log(n0 / n1) + sum_j f_j`.
///
/// Predictors whose denominator is zero (constant columns) are left out of the
/// sum with a warning.
pub fn snb_assemble(raw: &SnbRaw) -> Result<Vec<f64>, NbError> {
    let n0 = to_f64(&raw.class_counts[0])?;
    let n1 = to_f64(&raw.class_counts[1])?;
    if n0 <= 0.0 || n1 <= 0.0 {
        return Err(NbError::Degenerate(format!("class counts ({n0}, {n1}) leave the prior odds undefined")));
    }
    let p = raw.d.len();
    let d: Vec<f64> = raw.d.iter().map(to_f64).collect::<Result<_, _>>()?;
    for (j, _) in d.iter().enumerate().filter(|(_, v)| **v == 0.0) {
        log::warn!("predictor {} has zero denominator and is dropped", j + 1);
    }
    let intercept = if raw.paired { 0.0 } else { to_f64(&raw.sum_z)? / raw.n as f64 };
    let prior = (p as f64 - 1.0) * (n0 / n1).ln();
    raw.e
        .iter()
        .map(|row| {
            let mut psi = prior;
            for (ej, dj) in row.iter().zip(&d) {
                if *dj != 0.0 {
                    psi += to_f64(ej)? / dj + intercept;
                }
            }
            Ok(1.0 / (1.0 + (-psi).exp()))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct FitMeta {
    kind: String,
    paired: bool,
    n: u64,
    #[serde(flatten)]
    shape: ModelShape,
}

#[derive(Serialize, Deserialize)]
struct RawMeta {
    kind: String,
    paired: bool,
    n: u64,
    rows: usize,
    predictors: usize,
}

impl SnbFit {
    /// Predictors whose plaintext denominator is zero.
    pub fn degenerate_predictors(&self) -> Vec<usize> {
        (0..self.coeffs.len()).filter(|&j| self.coeffs[j][2].plain_i64() == Some(0)).collect()
    }

    pub fn decrypt(&self, sk: &SecretKey) -> Result<SnbFit, NbError> {
        let mut out = self.clone();
        open_all(&mut out.class_counts, sk)?;
        open_all(std::slice::from_mut(&mut out.sum_z), sk)?;
        for c in &mut out.coeffs {
            open_all(c, sk)?;
        }
        Ok(out)
    }

    /// Shape `[P + 1, 3]`: a header row `[n0, n1, sum_z]`, then `[a_j, b_j, d_j]`.
    pub fn to_bundle(&self) -> Bundle {
        let meta = FitMeta { kind: "snb-fit".into(), paired: self.paired, n: self.n, shape: self.shape.clone() };
        let mut cells = vec![self.class_counts[0].clone(), self.class_counts[1].clone(), self.sum_z.clone()];
        cells.extend(self.coeffs.iter().flatten().cloned());
        Bundle { meta: serde_json::to_string(&meta).expect("metadata serialises"), shape: vec![self.coeffs.len() + 1, 3], cells }
    }

    pub fn from_bundle(b: &Bundle) -> Result<SnbFit, NbError> {
        let meta: FitMeta = meta_of(&b.meta, "snb-fit")?;
        let p = meta.shape.layout.len();
        if b.shape != [p + 1, 3] || b.cells.len() != 3 + 3 * p {
            return Err(NbError::Corrupt(format!("shape {:?} does not match {p} predictors", b.shape)));
        }
        let c = &b.cells;
        Ok(SnbFit {
            paired: meta.paired,
            shape: meta.shape,
            n: meta.n,
            class_counts: [c[0].clone(), c[1].clone()],
            sum_z: c[2].clone(),
            coeffs: c[3..].chunks(3).map(|w| [w[0].clone(), w[1].clone(), w[2].clone()]).collect(),
        })
    }
}

impl SnbRaw {
    pub fn decrypt(&self, sk: &SecretKey) -> Result<SnbRaw, NbError> {
        let mut out = self.clone();
        open_all(&mut out.class_counts, sk)?;
        open_all(std::slice::from_mut(&mut out.sum_z), sk)?;
        open_all(&mut out.d, sk)?;
        for r in &mut out.e {
            open_all(r, sk)?;
        }
        Ok(out)
    }

    /// Flat cells `[n0, n1, sum_z, d_1..d_P, e_11..e_NP]`.
    pub fn to_bundle(&self) -> Bundle {
        let meta = RawMeta {
            kind: "snb-raw".into(),
            paired: self.paired,
            n: self.n,
            rows: self.e.len(),
            predictors: self.d.len(),
        };
        let mut cells = vec![self.class_counts[0].clone(), self.class_counts[1].clone(), self.sum_z.clone()];
        cells.extend(self.d.iter().cloned());
        cells.extend(self.e.iter().flatten().cloned());
        Bundle { meta: serde_json::to_string(&meta).expect("metadata serialises"), shape: vec![cells.len()], cells }
    }

    pub fn from_bundle(b: &Bundle) -> Result<SnbRaw, NbError> {
        let meta: RawMeta = meta_of(&b.meta, "snb-raw")?;
        let (rows, p) = (meta.rows, meta.predictors);
        if b.cells.len() != 3 + p + rows * p {
            return Err(NbError::Corrupt("cell count does not match the shape".into()));
        }
        let c = &b.cells;
        Ok(SnbRaw {
            paired: meta.paired,
            n: meta.n,
            class_counts: [c[0].clone(), c[1].clone()],
            sum_z: c[2].clone(),
            d: c[3..3 + p].to_vec(),
            e: c[3 + p..].chunks(p.max(1)).take(rows).map(<[_]>::to_vec).collect(),
        })
    }
}
