use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::{limbs, RingError, RingParams, RingPoly};

/// Deterministic, portable random stream (ChaCha20).
///
/// Substreams are derived from the key and a `(tag, index)` pair rather than
/// from the current position, so a substream does not depend on how much of
/// the parent has been consumed. Hand each concurrent task its own substream.
#[derive(Clone, Debug)]
pub struct RngHandle {
    seed: u64,
    key: [u8; 32],
    inner: ChaCha20Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"hestats/rng");
        h.update(seed.to_le_bytes());
        Self::from_key(seed, h.finalize().into())
    }

    fn from_key(seed: u64, key: [u8; 32]) -> Self {
        RngHandle { seed, key, inner: ChaCha20Rng::from_seed(key) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self, tag: &str, index: u64) -> RngHandle {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update((tag.len() as u64).to_le_bytes());
        h.update(tag.as_bytes());
        h.update(index.to_le_bytes());
        Self::from_key(self.seed, h.finalize().into())
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Coefficients i.i.d. uniform on `[0, q)`.
pub fn sample_uniform(params: &Arc<RingParams>, rng: &mut RngHandle) -> RingPoly {
    let l = params.limbs();
    let bits = params.modulus().bits() as usize;
    let exact_pow2 = params.pow2_bits().map(|k| k as usize);
    let mut coeffs = vec![0u64; params.degree() * l];
    for c in coeffs.chunks_mut(l) {
        loop {
            c.iter_mut().for_each(|w| *w = rng.next_u64());
            match exact_pow2 {
                Some(k) => {
                    limbs::mask_to_bits(c, k);
                    break;
                }
                None => {
                    limbs::mask_to_bits(c, bits);
                    if limbs::to_biguint(c) < *params.modulus() {
                        break;
                    }
                }
            }
        }
    }
    RingPoly::from_raw(params, coeffs)
}

/// Coefficients uniform on `{-1, 0, 1}`.
pub fn sample_ternary(params: &Arc<RingParams>, rng: &mut RngHandle) -> RingPoly {
    let v = ternary_values(params.degree(), rng);
    RingPoly::from_i64(params, &v).expect("length matches degree")
}

pub(crate) fn ternary_values(d: usize, rng: &mut RngHandle) -> Vec<i64> {
    (0..d).map(|_| rng.random_range(-1i64..=1)).collect()
}

/// Rounded continuous Gaussian of width `sigma`, rejecting draws beyond 6σ.
pub fn sample_gaussian(params: &Arc<RingParams>, sigma: f64, rng: &mut RngHandle) -> Result<RingPoly, RingError> {
    let v = gaussian_values(params.degree(), sigma, rng)?;
    RingPoly::from_i64(params, &v)
}

pub(crate) fn gaussian_values(d: usize, sigma: f64, rng: &mut RngHandle) -> Result<Vec<i64>, RingError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(RingError::BadSigma(sigma));
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| RingError::BadSigma(sigma))?;
    let cut = 6.0 * sigma;
    Ok((0..d)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= cut {
                break x.round() as i64;
            }
        })
        .collect())
}
