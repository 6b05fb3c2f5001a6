//! Turning tabular data into integers a homomorphic scheme can carry.
//!
//! Two encodings are offered. Method 1 replaces each variable by indicator
//! columns, one per bin. Method 2 replaces it by its bin number. Comparisons
//! on encrypted Method-1 data reduce to sums and products of indicators:
//!
//! ```
//! use hestats::encode::{eq_indicator, range_indicator};
//! use hestats::fv::{EncryptedValue, Evaluator};
//!
//! let ev = Evaluator::plaintext();
//! let a: Vec<EncryptedValue> = [0, 0, 1, 0, 0].map(EncryptedValue::from).to_vec();
//! let b: Vec<EncryptedValue> = [0, 1, 0, 0, 0].map(EncryptedValue::from).to_vec();
//! assert_eq!(eq_indicator(&ev, &a, &b).unwrap().plain_i64(), Some(0));
//! assert_eq!(range_indicator(&ev, &a, &[1, 2]).unwrap().plain_i64(), Some(1));
//! ```

mod partition;
mod table;

use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fv::io::Bundle;
use crate::fv::{EncryptedValue, ErrorClass, Evaluator, FheError, PublicKey, SecretKey};
use crate::ring::RngHandle;

pub use partition::{class_order, quantile_type7, PartitionSpec, VarKind, VarSpec};
pub(crate) use partition::{escape, unescape};
pub use table::{Column, Table};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Fhe(#[from] FheError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Shape(String),
    #[error("value `{value}` of `{var}` lies outside every bin")]
    OutsideBins { var: String, value: String },
    #[error("{value} * 10^{phi} does not fit in a 64-bit integer")]
    Overflow { value: f64, phi: u32 },
    #[error("cannot quantise non-finite value {0}")]
    NotFinite(f64),
    #[error("bin set is empty")]
    EmptyBinSet,
    #[error("blocks of width {0} and {1} cannot be compared")]
    BlockMismatch(usize, usize),
    #[error("malformed dataset: {0}")]
    Corrupt(String),
}

impl EncodeError {
    pub fn class(&self) -> ErrorClass {
        match self {
            EncodeError::Fhe(e) => e.class(),
            EncodeError::Io(_) | EncodeError::Parse { .. } | EncodeError::Corrupt(_) => ErrorClass::Corrupt,
            _ => ErrorClass::Validation,
        }
    }
}

/// `round(10^phi * z)` with halves rounded away from zero.
///
/// `z` is taken to be the shortest decimal that round-trips to the same `f64`,
/// so `quantize_real(-2.345, 2)` is `-235` even though the nearest double to
/// -2.345 lies slightly above it.
pub fn quantize_real(z: f64, phi: u32) -> Result<i64, EncodeError> {
    if !z.is_finite() {
        return Err(EncodeError::NotFinite(z));
    }
    let s = format!("{z:e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i64 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let frac_len = mantissa.split_once('.').map_or(0, |(_, f)| f.len()) as i64;
    let d: BigInt = digits.parse().expect("decimal digits");
    // |z| = d * 10^(exp - frac_len)
    let shift = exp - frac_len + phi as i64;
    let magnitude = if shift >= 0 {
        d * BigInt::from(10).pow(shift as u32)
    } else {
        let div = BigInt::from(10).pow((-shift) as u32);
        let (q, r) = d.div_rem(&div);
        if r * 2 >= div {
            q + 1
        } else {
            q
        }
    };
    let v = if negative { -magnitude } else { magnitude };
    v.to_i64().ok_or(EncodeError::Overflow { value: z, phi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum Method {
    /// Indicator columns per bin.
    OneHot,
    /// Bin numbers `1..=m`, or centred on the middle bin.
    Ordinal { centered: bool },
}

/// Where a variable lives among the encoded columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    pub name: String,
    pub kind: VarKind,
    pub n_bins: usize,
    pub offset: usize,
    pub width: usize,
}

/// Encoded predictors and one-hot response, each cell plaintext or encrypted.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedDataset {
    pub method: Method,
    pub layout: Vec<VarLayout>,
    pub classes: Vec<String>,
    pub x: Vec<Vec<EncryptedValue>>,
    pub y: Vec<Vec<EncryptedValue>>,
}

/// Method-2 code of bin `k` (0-based) out of `m`.
pub fn ordinal_code(kind: VarKind, k: usize, m: usize, centered: bool) -> i64 {
    match kind {
        VarKind::Binary => k as i64,
        _ if centered => k as i64 + 1 - m.div_ceil(2) as i64,
        _ => k as i64 + 1,
    }
}

fn bin_of(var: &VarSpec, col: &Column, i: usize) -> Result<usize, EncodeError> {
    match col {
        Column::Numeric(v) => var.bin_of_number(v[i]),
        Column::Categorical(v) => var.bin_of_level(&v[i]),
    }
}

/// Encodes a table under a partition spec. Test rows use the training spec, so
/// labels must be among its classes; an unlabelled table gives empty responses.
pub fn encode(table: &Table, spec: &PartitionSpec, method: Method) -> Result<QuantizedDataset, EncodeError> {
    let n = table.n_rows();
    let mut layout = Vec::with_capacity(spec.vars.len());
    let mut offset = 0;
    for v in &spec.vars {
        let width = if method == Method::OneHot { v.width() } else { 1 };
        layout.push(VarLayout { name: v.name.clone(), kind: v.kind, n_bins: v.n_bins(), offset, width });
        offset += width;
    }
    if matches!(method, Method::Ordinal { .. }) && spec.vars.iter().any(|v| v.kind == VarKind::Categorical) {
        log::warn!("categorical variables get arbitrary ordinal codes under Method 2");
    }
    let mut x = vec![Vec::with_capacity(offset); n];
    for var in &spec.vars {
        let col = table
            .column(&var.name)
            .ok_or_else(|| EncodeError::Shape(format!("table has no column `{}`", var.name)))?;
        for (i, row) in x.iter_mut().enumerate() {
            let k = bin_of(var, col, i)?;
            match method {
                Method::OneHot if var.kind == VarKind::Binary => row.push(EncryptedValue::from(k as i64)),
                Method::OneHot => row.extend((0..var.n_bins()).map(|j| EncryptedValue::from((j == k) as i64))),
                Method::Ordinal { centered } => {
                    row.push(EncryptedValue::from(ordinal_code(var.kind, k, var.n_bins(), centered)))
                }
            }
        }
    }
    let y = match &table.labels {
        Some(labels) => labels
            .iter()
            .map(|l| {
                let c = spec
                    .classes
                    .iter()
                    .position(|k| k == l)
                    .ok_or_else(|| EncodeError::OutsideBins { var: spec.response.clone(), value: l.clone() })?;
                Ok((0..spec.classes.len()).map(|j| EncryptedValue::from((j == c) as i64)).collect())
            })
            .collect::<Result<Vec<_>, EncodeError>>()?,
        None => vec![Vec::new(); n],
    };
    Ok(QuantizedDataset { method, layout, classes: spec.classes.clone(), x, y })
}

fn bin_value(ev: &Evaluator, block: &[EncryptedValue], k: usize) -> Result<EncryptedValue, EncodeError> {
    if block.len() == 1 {
        // binary variable: bin 1 is the stored indicator, bin 0 its complement
        return match k {
            0 => Ok(ev.sub(&EncryptedValue::from(1), &block[0])?),
            1 => Ok(block[0].clone()),
            _ => Err(EncodeError::BlockMismatch(1, k + 1)),
        };
    }
    block.get(k).cloned().ok_or(EncodeError::BlockMismatch(block.len(), k + 1))
}

/// Indicator that two rows share a bin of one variable: `sum_k a_k * b_k`.
/// Multiplicative depth one above the inputs.
pub fn eq_indicator(ev: &Evaluator, a: &[EncryptedValue], b: &[EncryptedValue]) -> Result<EncryptedValue, EncodeError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(EncodeError::BlockMismatch(a.len(), b.len()));
    }
    let bins = if a.len() == 1 { 2 } else { a.len() };
    let mut acc = EncryptedValue::zero();
    for k in 0..bins {
        acc = ev.add(&acc, &ev.mul(&bin_value(ev, a, k)?, &bin_value(ev, b, k)?)?)?;
    }
    Ok(acc)
}

/// Indicator that a row's bin lies in `bins`: `sum_{k in K} x_k`. No depth used.
pub fn range_indicator(ev: &Evaluator, block: &[EncryptedValue], bins: &[usize]) -> Result<EncryptedValue, EncodeError> {
    if bins.is_empty() {
        return Err(EncodeError::EmptyBinSet);
    }
    let mut acc = EncryptedValue::zero();
    for &k in bins {
        acc = ev.add(&acc, &bin_value(ev, block, k)?)?;
    }
    Ok(acc)
}

impl QuantizedDataset {
    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_cols(&self) -> usize {
        self.layout.iter().map(|l| l.width).sum()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn is_labelled(&self) -> bool {
        !self.classes.is_empty() && self.y.iter().all(|r| r.len() == self.classes.len())
    }

    /// Variable name for every encoded column.
    pub fn column_names(&self) -> Vec<String> {
        self.layout
            .iter()
            .flat_map(|l| {
                (0..l.width).map(move |k| if l.width == 1 { l.name.clone() } else { format!("{}[{}]", l.name, k + 1) })
            })
            .collect()
    }

    /// The encoded cells of variable `var` in row `row`.
    pub fn block(&self, row: usize, var: usize) -> &[EncryptedValue] {
        let l = &self.layout[var];
        &self.x[row][l.offset..l.offset + l.width]
    }

    pub fn select(&self, rows: &[usize]) -> QuantizedDataset {
        QuantizedDataset {
            method: self.method,
            layout: self.layout.clone(),
            classes: self.classes.clone(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i].clone()).collect(),
        }
    }

    pub fn is_encrypted(&self) -> bool {
        self.x.iter().chain(&self.y).flatten().any(EncryptedValue::is_cipher)
    }

    /// Plaintext class index per row, if the response is plaintext.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.y
            .iter()
            .map(|r| r.iter().position(|v| v.plain_i64() == Some(1)).filter(|_| r.iter().all(|v| v.as_plain().is_some())))
            .collect()
    }

    /// Encrypts every cell. Row `i` draws from its own substream, so the result
    /// does not depend on how rows are scheduled.
    pub fn encrypt(&self, pk: &PublicKey, rng: &RngHandle) -> Result<QuantizedDataset, EncodeError> {
        let mut out = self.clone();
        for (i, (xr, yr)) in out.x.iter_mut().zip(out.y.iter_mut()).enumerate() {
            let mut r = rng.substream("encrypt-data", i as u64);
            for v in xr.iter_mut().chain(yr.iter_mut()) {
                *v = v.encrypt(pk, &mut r)?;
            }
        }
        Ok(out)
    }

    pub fn decrypt(&self, sk: &SecretKey) -> Result<QuantizedDataset, EncodeError> {
        let mut out = self.clone();
        for v in out.x.iter_mut().chain(out.y.iter_mut()).flatten() {
            *v = EncryptedValue::Plain(v.reveal(Some(sk))?);
        }
        Ok(out)
    }

    /// Packs the dataset into a container bundle of shape `rows x (columns + classes)`.
    pub fn to_bundle(&self) -> Bundle {
        let meta = serde_json::json!({
            "kind": "dataset",
            "encoding": self.method,
            "layout": self.layout,
            "classes": self.classes,
            "labelled": self.is_labelled(),
        });
        let labelled = self.is_labelled();
        let width = self.n_cols() + if labelled { self.n_classes() } else { 0 };
        let mut cells = Vec::with_capacity(self.n_rows() * width);
        for (xr, yr) in self.x.iter().zip(&self.y) {
            cells.extend(xr.iter().cloned());
            if labelled {
                cells.extend(yr.iter().cloned());
            }
        }
        Bundle { meta: meta.to_string(), shape: vec![self.n_rows(), width], cells }
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<QuantizedDataset, EncodeError> {
        #[derive(Deserialize)]
        struct Meta {
            kind: String,
            encoding: Method,
            layout: Vec<VarLayout>,
            classes: Vec<String>,
            labelled: bool,
        }
        let meta: Meta = serde_json::from_str(&bundle.meta).map_err(|e| EncodeError::Corrupt(e.to_string()))?;
        if meta.kind != "dataset" {
            return Err(EncodeError::Corrupt(format!("bundle holds a {}, not a dataset", meta.kind)));
        }
        let n_cols: usize = meta.layout.iter().map(|l| l.width).sum();
        let width = n_cols + if meta.labelled { meta.classes.len() } else { 0 };
        if bundle.shape.len() != 2 || bundle.shape[1] != width {
            return Err(EncodeError::Corrupt(format!("shape {:?} does not match the layout", bundle.shape)));
        }
        let rows = bundle.shape[0];
        let mut x = Vec::with_capacity(rows);
        let mut y = Vec::with_capacity(rows);
        for r in bundle.cells.chunks(width.max(1)).take(rows) {
            x.push(r[..n_cols].to_vec());
            y.push(r[n_cols..].to_vec());
        }
        if x.len() != rows {
            return Err(EncodeError::Corrupt("row count".into()));
        }
        Ok(QuantizedDataset { method: meta.encoding, layout: meta.layout, classes: meta.classes, x, y })
    }
}

/// Evaluator for a dataset: keyed when encrypted, plaintext otherwise.
pub fn evaluator_for(data: &QuantizedDataset, rlk: Option<Arc<crate::fv::RelinKey>>) -> Result<Evaluator, EncodeError> {
    match (data.is_encrypted(), rlk) {
        (_, Some(k)) => Ok(Evaluator::new(k)),
        (false, None) => Ok(Evaluator::plaintext()),
        (true, None) => Err(FheError::MissingKey("relinearisation key").into()),
    }
}

/// Largest absolute plaintext value in the dataset, for message-range checks.
pub fn max_abs_plain(data: &QuantizedDataset) -> BigInt {
    data.x
        .iter()
        .chain(&data.y)
        .flatten()
        .filter_map(|v| v.as_plain().map(|b| b.abs()))
        .fold(BigInt::zero(), |a, b| a.max(b))
}
