//! Leveled somewhat-homomorphic encryption over `Z_q[x]/(x^d + 1)` with
//! plaintext modulus `t`, plus the [`EncryptedValue`] abstraction the
//! statistical modules are written against.
//!
//! Parameters are chosen up front. A [`Budget`] states the depth, largest
//! value and widest sum a computation needs, and callers check it before
//! doing any work rather than decrypting noise afterwards.
//!
//! ```
//! use std::sync::Arc;
//! use hestats::fv::{dec, enc, he_add, he_mul, keygen, tier_params};
//! use hestats::ring::RngHandle;
//!
//! let params = Arc::new(tier_params(1024, 256).unwrap());
//! let mut rng = RngHandle::new(7);
//! let keys = keygen(&params, &mut rng);
//! let a = enc(&keys.pk, 6, &mut rng).unwrap();
//! let b = enc(&keys.pk, -7, &mut rng).unwrap();
//! assert_eq!(dec(&keys.sk, &he_add(&a, &b).unwrap()).unwrap(), -1);
//! assert_eq!(dec(&keys.sk, &he_mul(&a, &b, &keys.rlk).unwrap()).unwrap(), -42);
//! ```

mod cipher;
pub mod io;
mod keys;
mod params;
mod value;

use thiserror::Error;

use crate::ring::RingError;

pub use cipher::{dec, dec_unchecked, enc, he_add, he_mul, he_mul_unchecked, he_sub, noise_log2, Ciphertext};
pub use keys::{keygen, KeySet, PublicBundle, PublicKey, RelinKey, SecretKey};
pub use params::{
    make_params, min_q_bits, min_q_bits_for, params_for, params_help, plaintext_modulus_for, security_estimate, tier_params, SchemeParams,
    DEFAULT_SIGMA, TIERS, TIER_Q_BITS,
};
pub use value::{signed_residue, EncryptedValue, Evaluator};

#[derive(Debug, Error)]
pub enum FheError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("operands use different parameter sets")]
    ParamsMismatch,
    #[error("depth budget exceeded: needs {needed}, parameters support {bound}")]
    DepthExceeded { needed: u32, bound: u32 },
    #[error("message {value} outside the signed range of t = {t}")]
    MessageOutOfRange { value: String, t: u64 },
    #[error("missing {0}")]
    MissingKey(&'static str),
    #[error("no parameter tier gives {lambda_bits}-bit security for |m| <= {max_abs} at depth {depth}")]
    NoTier { lambda_bits: u32, max_abs: u64, depth: u32 },
    #[error("noise budget exceeded: depth {depth} with sums of up to {fan_in} terms per level needs a larger q")]
    NoiseBudget { depth: u32, fan_in: u64 },
    #[error("coefficient budget exceeded: values up to {needed} need t > {needed_t}, have t = {t}")]
    CoefficientBudget { needed: String, needed_t: String, t: u64 },
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error class, used by the command line for its exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Budget,
    Corrupt,
}

impl FheError {
    pub fn class(&self) -> ErrorClass {
        match self {
            FheError::DepthExceeded { .. } | FheError::CoefficientBudget { .. } | FheError::NoiseBudget { .. } => {
                ErrorClass::Budget
            }
            FheError::Corrupt(_) | FheError::Io(_) => ErrorClass::Corrupt,
            _ => ErrorClass::Validation,
        }
    }
}

/// Multiplicative depth a forest needs: `L` for the counts, `+M` with the
/// stochastic fraction, `+L` more if predicting on an unrefreshed encrypted fit.
pub fn depth_requirement_crf(l: u32, m: u32, predict_without_refresh: bool) -> u32 {
    l + m + if predict_without_refresh { l } else { 0 }
}

/// Largest coefficient a combined forest can hold: `T * max_c n_c`.
pub fn coeff_requirement_crf(trees: u64, class_counts: &[u64]) -> u64 {
    trees * class_counts.iter().copied().max().unwrap_or(0)
}

/// Depth of the semi-parametric naive Bayes fit (paired with intercept, or unpaired numerator).
pub fn depth_requirement_snb(paired: bool) -> u32 {
    if paired {
        4
    } else {
        2
    }
}

/// Coefficient bound of the SNB sufficient statistics: `2N^2` paired, `2N` unpaired.
pub fn coeff_requirement_snb(n: u64, paired: bool) -> u64 {
    if paired {
        2 * n * n
    } else {
        2 * n
    }
}

/// Fails unless every value up to `max_abs` in absolute value is representable mod t.
pub fn check_coefficients(params: &SchemeParams, max_abs: &num_bigint::BigInt) -> Result<(), FheError> {
    let (_, hi) = params.message_range();
    if num_bigint::BigInt::from(hi) >= *max_abs {
        Ok(())
    } else {
        let needed_t: num_bigint::BigInt = max_abs * 2 + 1;
        Err(FheError::CoefficientBudget { needed: max_abs.to_string(), needed_t: needed_t.to_string(), t: params.t() })
    }
}

/// Fails unless the parameters support `needed` levels of multiplication.
pub fn check_depth(params: &SchemeParams, needed: u32) -> Result<(), FheError> {
    if needed <= params.depth_bound() {
        Ok(())
    } else {
        Err(FheError::DepthExceeded { needed, bound: params.depth_bound() })
    }
}

/// Fails unless `depth` levels with sums of up to `fan_in` terms each stay
/// within the modelled noise bound.
pub fn check_noise(params: &SchemeParams, depth: u32, fan_in: u64) -> Result<(), FheError> {
    if params.supports(depth, fan_in) {
        Ok(())
    } else {
        Err(FheError::NoiseBudget { depth, fan_in })
    }
}

/// What a computation needs from the parameters: multiplicative depth, the
/// largest absolute value it produces and its per-level additive fan-in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub depth: u32,
    pub max_abs: u128,
    pub fan_in: u64,
}

impl Budget {
    /// Depth, coefficient and noise checks in that order.
    pub fn check(&self, params: &SchemeParams) -> Result<(), FheError> {
        check_depth(params, self.depth)?;
        check_coefficients(params, &num_bigint::BigInt::from(self.max_abs))?;
        check_noise(params, self.depth, self.fan_in)
    }
}

#[cfg(test)]
mod tests;
