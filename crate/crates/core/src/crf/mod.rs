//! Completely random forests.
//!
//! Trees are grown without looking at the data: every split variable and every
//! split point is drawn at random from the partition of the encoded variables.
//! Fitting then only needs sums and products of Method-1 indicators, so the
//! same code counts leaf membership on plaintext or encrypted rows.
//!
//! ```
//! use hestats::crf::{fit, grow, predict, prob, ForestVar};
//! use hestats::encode::{encode, Method, PartitionSpec, Table};
//! use hestats::fv::Evaluator;
//! use hestats::ring::RngHandle;
//!
//! let table = Table::numeric(&["x"], vec![vec![1.0, 2.0, 3.0, 4.0]], &[0, 0, 1, 1]).unwrap();
//! let (spec, _) = PartitionSpec::build(&table, 4).unwrap();
//! let data = encode(&table, &spec, Method::OneHot).unwrap();
//! let forest = grow(ForestVar::from_layout(&data.layout), 5, 1, 7, 1.0).unwrap();
//! let ev = Evaluator::plaintext();
//! let tensor = fit(&forest, &data, 0, &ev, &RngHandle::new(1)).unwrap();
//! let votes = predict(&forest, &tensor, &data.select(&[3]), &ev).unwrap();
//! let z: Vec<i64> = votes[0].iter().map(|v| v.plain_i64().unwrap()).collect();
//! let p = prob(&z).unwrap();
//! assert!(p[1] > p[0]);
//! ```

mod fit;
mod spec;

use thiserror::Error;

use crate::encode::EncodeError;
use crate::fv::{ErrorClass, FheError};

pub use fit::{
    budget, combine, fit, fit_depth, or_prefix, predict, prob, stochastic_fraction, FitTensor, VoteVector,
};
pub use spec::{grow, leaf_path_index, ForestSpec, ForestVar, Split, TreeSpec};

/// Largest supported tree depth; a tree has `2^L` leaves.
pub const MAX_DEPTH: u32 = 16;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error(transparent)]
    Fhe(#[from] FheError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("no variable with at least two bins after {0} draws")]
    NoSplittable(u32),
    #[error("fits come from different forests or layouts: {0}")]
    Provenance(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed forest artifact: {0}")]
    Corrupt(String),
}

impl CrfError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CrfError::Fhe(e) => e.class(),
            CrfError::Encode(e) => e.class(),
            CrfError::Io(_) | CrfError::Parse { .. } | CrfError::Corrupt(_) => ErrorClass::Corrupt,
            _ => ErrorClass::Validation,
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn unhex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok()).collect()
}

#[cfg(test)]
mod tests;
