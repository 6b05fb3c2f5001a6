use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use sha2::{Digest, Sha256};

use super::FheError;
use crate::ring::{RingParams, MAX_DEGREE};

/// Ring degrees offered by [`params_help`], smallest first.
pub const TIERS: [usize; 5] = [1024, 2048, 4096, 8192, 16384];

/// Default modulus size per tier, used when a caller names a tier directly.
pub const TIER_Q_BITS: [(usize, u32); 5] = [(1024, 80), (2048, 100), (4096, 128), (8192, 224), (16384, 256)];

pub const DEFAULT_SIGMA: f64 = 16.0;

/// Decryption needs the noise below this many standard deviations of headroom.
const TAIL_SDS: f64 = 8.0;
const MAX_Q_BITS: u32 = 1024;

/// Parameters of the FV scheme with `q = 2^q_bits`.
#[derive(Clone)]
pub struct SchemeParams {
    ring: Arc<RingParams>,
    q_bits: u32,
    t: u64,
    sigma: f64,
    delta: BigUint,
    relin_base_bits: u32,
    security_estimate_bits: u32,
    depth_bound: u32,
    digest: [u8; 32],
}

impl fmt::Debug for SchemeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeParams")
            .field("d", &self.degree())
            .field("q_bits", &self.q_bits)
            .field("t", &self.t)
            .field("sigma", &self.sigma)
            .field("depth_bound", &self.depth_bound)
            .field("security_estimate_bits", &self.security_estimate_bits)
            .finish()
    }
}

impl fmt::Display for SchemeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ring        x^{}+1", self.degree())?;
        writeln!(f, "q           2^{}", self.q_bits)?;
        writeln!(f, "t           {}", self.t)?;
        writeln!(f, "delta       {}", self.delta)?;
        writeln!(f, "sigma       {}", self.sigma)?;
        writeln!(f, "relin base  2^{}", self.relin_base_bits)?;
        writeln!(f, "security    ~{} bits (heuristic, advisory only)", self.security_estimate_bits)?;
        write!(f, "depth       {} multiplications", self.depth_bound)
    }
}

impl PartialEq for SchemeParams {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}

impl Eq for SchemeParams {}

impl SchemeParams {
    pub fn ring(&self) -> &Arc<RingParams> {
        &self.ring
    }

    pub fn degree(&self) -> usize {
        self.ring.degree()
    }

    pub fn q_bits(&self) -> u32 {
        self.q_bits
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `floor(q / t)`.
    pub fn delta(&self) -> &BigUint {
        &self.delta
    }

    pub fn relin_base_bits(&self) -> u32 {
        self.relin_base_bits
    }

    pub fn relin_digits(&self) -> usize {
        self.q_bits.div_ceil(self.relin_base_bits) as usize
    }

    pub fn security_estimate_bits(&self) -> u32 {
        self.security_estimate_bits
    }

    /// Multiplicative depth the noise model guarantees.
    pub fn depth_bound(&self) -> u32 {
        self.depth_bound
    }

    /// SHA-256 over the canonical parameter encoding.
    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    /// Signed message range `[lo, hi]`; residues above `t/2` decode as negatives.
    pub fn message_range(&self) -> (i64, i64) {
        signed_range(self.t)
    }

    /// Bytes per serialized coefficient.
    pub fn coeff_bytes(&self) -> usize {
        self.q_bits.div_ceil(8) as usize
    }

    /// Whether a fresh encryption is within the noise budget.
    pub fn fresh_decryption_ok(&self) -> bool {
        noise_fits(self.degree(), self.t, self.q_bits, self.sigma, self.relin_base_bits, 0, 1)
    }

    /// log2 of the modelled noise standard deviation after `depth` multiplications.
    pub fn noise_log2_sd(&self, depth: u32) -> f64 {
        noise_log2_sd(self.degree(), self.t, self.q_bits, self.sigma, self.relin_base_bits, depth, 1)
    }

    /// Whether `depth` levels decrypt reliably when every level may also sum
    /// up to `fan_in` independent terms (see [`noise_log2_sd`]).
    pub fn supports(&self, depth: u32, fan_in: u64) -> bool {
        noise_fits(self.degree(), self.t, self.q_bits, self.sigma, self.relin_base_bits, depth, fan_in)
    }

    pub(crate) fn encode_block(&self) -> [u8; 24] {
        encode_block(self.degree(), self.q_bits, self.t, self.sigma)
    }
}

pub(crate) fn signed_range(t: u64) -> (i64, i64) {
    (-(((t - 1) / 2) as i64), (t / 2) as i64)
}

fn encode_block(d: usize, q_bits: u32, t: u64, sigma: f64) -> [u8; 24] {
    let mut b = [0u8; 24];
    b[0..4].copy_from_slice(&(d as u32).to_le_bytes());
    b[4..8].copy_from_slice(&q_bits.to_le_bytes());
    b[8..16].copy_from_slice(&t.to_le_bytes());
    b[16..24].copy_from_slice(&sigma.to_bits().to_le_bytes());
    b
}

pub(crate) fn decode_block(b: &[u8]) -> Result<SchemeParams, FheError> {
    if b.len() != 24 {
        return Err(FheError::Corrupt("parameter block length".into()));
    }
    let d = u32::from_le_bytes(b[0..4].try_into().unwrap()) as usize;
    let q_bits = u32::from_le_bytes(b[4..8].try_into().unwrap());
    let t = u64::from_le_bytes(b[8..16].try_into().unwrap());
    let sigma = f64::from_bits(u64::from_le_bytes(b[16..24].try_into().unwrap()));
    make_params(d, t, q_bits, sigma).map_err(|e| FheError::Corrupt(format!("parameter block: {e}")))
}

fn relin_base_for(q_bits: u32) -> u32 {
    if q_bits >= 192 {
        32
    } else {
        16
    }
}

/// Advisory security level from a closed-form lattice-reduction heuristic.
///
/// The attack needs a short vector of length `beta = (q / sigma) * sqrt(ln(1/eps) / pi)`
/// with `eps = 2^-64`; reaching it in dimension `d` takes root-Hermite factor
/// `delta` with `log2 delta = log2(beta)^2 / (4 d log2 q)`, and the bit cost is
/// `1.8 / log2 delta - 110`. This gives about 128 bits for `(4096, 2^128, 16)` and
/// about 158 bits for `(8192, 2^224, 16)`.
pub fn security_estimate(d: usize, q_bits: u32, sigma: f64) -> u32 {
    let eps_term = 0.5 * ((64.0 * std::f64::consts::LN_2) / std::f64::consts::PI).log2();
    let lg_beta = q_bits as f64 - sigma.log2() + eps_term;
    if lg_beta <= 0.0 {
        return u32::MAX;
    }
    let lg_delta = lg_beta * lg_beta / (4.0 * d as f64 * q_bits as f64);
    let bits = 1.8 / lg_delta - 110.0;
    if bits <= 0.0 {
        0
    } else {
        bits.min(u32::MAX as f64) as u32
    }
}

fn log2_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (1.0 + (lo - hi).exp2()).log2()
}

/// Central-limit noise model, in log2 of the standard deviation.
///
/// Fresh: `e1 - e*u + e2*s` gives `sigma * sqrt(1 + 4d/3)`. Each multiplication
/// scales by `t * (d/3 + 1)`: the dominant terms `t*(v1*r2 + v2*r1)` have
/// `sd(r) = sqrt(d/18)` for a uniform ciphertext against a ternary key.
/// Relinearisation adds `sigma * 2^w * sqrt(l*d/3)` and rounding adds about `d`.
/// One extra bit per level covers correlations the independence argument
/// ignores; measured chains sit up to half a bit per level above the bare model.
///
/// `fan_in` is the variance growth allowed from additions and plaintext scaling
/// at each level: a sum of `k` independent terms counts `k`, a scale by `s`
/// counts `s^2`. It enters before every multiplication and once at the end.
fn noise_log2_sd(d: usize, t: u64, q_bits: u32, sigma: f64, w: u32, depth: u32, fan_in: u64) -> f64 {
    let d = d as f64;
    let ell = q_bits.div_ceil(w) as f64;
    let mut sd = sigma.log2() + 0.5 * (1.0 + 4.0 * d / 3.0).log2();
    let growth = (t as f64).log2() + (d / 3.0 + 1.0).log2() + 1.0;
    let relin = sigma.log2() + w as f64 + 0.5 * (ell * d / 3.0).log2();
    let round = d.log2() + 1.0;
    let fan = 0.5 * (fan_in.max(1) as f64).log2();
    for _ in 0..depth {
        sd = log2_add(log2_add(sd + fan + growth, relin), round);
    }
    sd + fan
}

fn noise_fits(d: usize, t: u64, q_bits: u32, sigma: f64, w: u32, depth: u32, fan_in: u64) -> bool {
    let lg_t = (t as f64).log2();
    let lg_half_delta = q_bits as f64 - lg_t - 1.0;
    let noise = log2_add(TAIL_SDS.log2() + noise_log2_sd(d, t, q_bits, sigma, w, depth, fan_in), 2.0 * lg_t);
    noise < lg_half_delta
}

fn depth_bound_for(d: usize, t: u64, q_bits: u32, sigma: f64, w: u32) -> u32 {
    let mut depth = 0;
    while depth < 256 && noise_fits(d, t, q_bits, sigma, w, depth + 1, 1) {
        depth += 1;
    }
    depth
}

/// Builds parameters with `q = 2^q_bits`.
pub fn make_params(d: usize, t: u64, q_bits: u32, sigma: f64) -> Result<SchemeParams, FheError> {
    if !d.is_power_of_two() || !(2..=MAX_DEGREE).contains(&d) {
        return Err(FheError::InvalidParams(format!("ring degree {d} must be a power of two in [2, {MAX_DEGREE}]")));
    }
    if t < 2 || t > 1 << 62 {
        return Err(FheError::InvalidParams(format!("plaintext modulus {t} must lie in [2, 2^62]")));
    }
    if q_bits == 0 || q_bits > MAX_Q_BITS {
        return Err(FheError::InvalidParams(format!("q_bits {q_bits} must lie in [1, {MAX_Q_BITS}]")));
    }
    if q_bits <= 64 && (t as u128) >= (1u128 << q_bits) {
        return Err(FheError::InvalidParams(format!("t = {t} must be below q = 2^{q_bits}")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(FheError::InvalidParams(format!("sigma {sigma} must be positive")));
    }
    let ring = Arc::new(RingParams::pow2(d, q_bits)?);
    let q = BigUint::one() << q_bits;
    let delta = &q / BigUint::from(t);
    let relin_base_bits = relin_base_for(q_bits);
    let mut h = Sha256::new();
    h.update(b"hestats/fv-params/v1");
    h.update(encode_block(d, q_bits, t, sigma));
    Ok(SchemeParams {
        ring,
        q_bits,
        t,
        sigma,
        delta,
        relin_base_bits,
        security_estimate_bits: security_estimate(d, q_bits, sigma),
        depth_bound: depth_bound_for(d, t, q_bits, sigma, relin_base_bits),
        digest: h.finalize().into(),
    })
}

/// Default parameters of a named tier with the given plaintext modulus.
pub fn tier_params(d: usize, t: u64) -> Result<SchemeParams, FheError> {
    let q_bits = TIER_Q_BITS
        .iter()
        .find(|(td, _)| *td == d)
        .map(|(_, q)| *q)
        .ok_or_else(|| FheError::InvalidParams(format!("no parameter tier with d = {d}")))?;
    make_params(d, t, q_bits, DEFAULT_SIGMA)
}

/// Smallest power of two strictly above `2 * max_abs`.
pub fn plaintext_modulus_for(max_abs: u64) -> u64 {
    (2 * max_abs as u128 + 1).next_power_of_two().max(2) as u64
}

/// Smallest `q_bits` whose modelled noise supports `depth` multiplications.
pub fn min_q_bits(d: usize, t: u64, sigma: f64, depth: u32) -> Option<u32> {
    min_q_bits_for(d, t, sigma, depth, 1)
}

/// As [`min_q_bits`], allowing sums of up to `fan_in` terms at every level.
pub fn min_q_bits_for(d: usize, t: u64, sigma: f64, depth: u32, fan_in: u64) -> Option<u32> {
    let start = 64 - t.leading_zeros() + 1;
    (start..=MAX_Q_BITS).find(|&q| noise_fits(d, t, q, sigma, relin_base_for(q), depth, fan_in))
}

/// Picks the smallest tier meeting a security level, message size and depth.
///
/// The plaintext modulus is the smallest power of two above `2 * max_abs`; within
/// each tier `q` is the smallest power of two supporting `depth`, which also
/// maximises the security estimate for that tier.
pub fn params_help(lambda_bits: u32, max_abs: u64, depth: u32) -> Result<SchemeParams, FheError> {
    params_for(lambda_bits, max_abs, depth, 1)
}

/// As [`params_help`], sizing `q` for sums of up to `fan_in` terms per level.
pub fn params_for(lambda_bits: u32, max_abs: u64, depth: u32, fan_in: u64) -> Result<SchemeParams, FheError> {
    if lambda_bits == 0 || max_abs == 0 {
        return Err(FheError::InvalidParams("lambda and max must be positive".into()));
    }
    let t = plaintext_modulus_for(max_abs);
    for &d in &TIERS {
        let Some(q_bits) = min_q_bits_for(d, t, DEFAULT_SIGMA, depth, fan_in) else { continue };
        if security_estimate(d, q_bits, DEFAULT_SIGMA) >= lambda_bits {
            return make_params(d, t, q_bits, DEFAULT_SIGMA);
        }
    }
    Err(FheError::NoTier { lambda_bits, max_abs, depth })
}
