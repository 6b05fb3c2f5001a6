//! Evaluation harness: stratified splits, AUC, synthetic data, repeated
//! train/test experiments and the directory-queue shard runner.
//!
//! ```
//! use hestats::bench::{auc, run_experiment, Experiment, ModelKind};
//!
//! assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
//! let exp = Experiment::from_config("dataset = synth:separable\nrows = 40\nmodel = mnb\nreplications = 2\n").unwrap();
//! assert_eq!(exp.model, ModelKind::Mnb { laplace: 1 });
//! let report = run_experiment(&exp).unwrap();
//! assert_eq!(report.replications.len(), 2);
//! ```

mod eval;
mod experiment;
mod shard;
mod synth;

use thiserror::Error;

use crate::crf::CrfError;
use crate::encode::EncodeError;
use crate::fv::{ErrorClass, FheError};
use crate::nb::NbError;

pub use eval::{auc, confusion, stratified_split};
pub use experiment::{run_experiment, DataSource, Experiment, MetricsReport, ModelKind, ParamChoice, Replication};
pub use shard::{fit_path, list_shards, shard_queue_run, shard_split, ShardJob, ShardOutcome, COMBINED};
pub use synth::{generate, Generator};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Fhe(#[from] FheError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error(transparent)]
    Nb(#[from] NbError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("shards {0} and {1} have identical contents")]
    DuplicateShard(String, String),
    #[error("replication {index}: {source}")]
    Replication { index: usize, source: Box<BenchError> },
    #[error("shard {path}: {source}")]
    Shard { path: String, source: Box<BenchError> },
}

impl BenchError {
    pub fn class(&self) -> ErrorClass {
        match self {
            BenchError::Fhe(e) => e.class(),
            BenchError::Encode(e) => e.class(),
            BenchError::Crf(e) => e.class(),
            BenchError::Nb(e) => e.class(),
            BenchError::Io(_) => ErrorClass::Corrupt,
            BenchError::Replication { source, .. } | BenchError::Shard { source, .. } => source.class(),
            _ => ErrorClass::Validation,
        }
    }
}

#[cfg(test)]
mod tests;
