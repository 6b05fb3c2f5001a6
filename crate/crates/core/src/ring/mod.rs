//! Arithmetic in `Z_q[x]/(x^d + 1)` with multi-precision coefficients.
//!
//! Coefficients are stored canonically in `[0, q)` as little-endian u64 limbs.
//! The centered view maps residues `>= ceil(q/2)` to `residue - q`, giving the
//! range `[-q/2, q/2)`.
//!
//! [`RingPoly::mul`] computes the exact integer negacyclic convolution through a
//! multi-prime NTT and reduces afterwards, so it is bit-identical to
//! [`RingPoly::mul_schoolbook`], the reference path.

pub(crate) mod crt;
pub(crate) mod limbs;
pub(crate) mod ntt;
pub(crate) mod sample;

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use sample::{sample_gaussian, sample_ternary, sample_uniform, RngHandle};

use crt::ConvBasis;

/// Largest supported ring degree.
pub const MAX_DEGREE: usize = 1 << ntt::MAX_LOG_DEGREE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RingError {
    #[error("ring degree {0} is not a power of two in [2, {MAX_DEGREE}]")]
    BadDegree(usize),
    #[error("coefficient modulus must be at least 2")]
    BadModulus,
    #[error("operands belong to different rings")]
    ParamsMismatch,
    #[error("expected {expected} coefficients, got {got}")]
    Length { expected: usize, got: usize },
    #[error("gaussian width must be positive and finite, got {0}")]
    BadSigma(f64),
}

#[derive(Clone, PartialEq, Eq)]
pub struct RingParams {
    degree: usize,
    modulus: BigUint,
    bits: u64,
    limbs: usize,
    pow2: Option<u32>,
    q_limbs: Vec<u64>,
    center: Vec<u64>,
}

impl fmt::Debug for RingParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pow2 {
            Some(k) => write!(f, "RingParams(d={}, q=2^{})", self.degree, k),
            None => write!(f, "RingParams(d={}, q={})", self.degree, self.modulus),
        }
    }
}

impl RingParams {
    pub fn new(degree: usize, modulus: BigUint) -> Result<Self, RingError> {
        if !degree.is_power_of_two() || !(2..=MAX_DEGREE).contains(&degree) {
            return Err(RingError::BadDegree(degree));
        }
        if modulus < BigUint::from(2u32) {
            return Err(RingError::BadModulus);
        }
        let bits = modulus.bits();
        let pow2 = (modulus.count_ones() == 1).then(|| (bits - 1) as u32);
        let limbs = limbs::limbs_for_bits(bits);
        let q_limbs = limbs::from_biguint(&modulus, limbs);
        let center = limbs::from_biguint(&modulus.div_ceil(&BigUint::from(2u32)), limbs);
        Ok(RingParams { degree, modulus, bits, limbs, pow2, q_limbs, center })
    }

    /// The ring with `q = 2^bits`.
    pub fn pow2(degree: usize, bits: u32) -> Result<Self, RingError> {
        Self::new(degree, BigUint::one() << bits)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// `Some(k)` when `q = 2^k`.
    pub fn pow2_bits(&self) -> Option<u32> {
        self.pow2
    }

    pub(crate) fn limbs(&self) -> usize {
        self.limbs
    }

    pub(crate) fn log_degree(&self) -> u64 {
        self.degree.trailing_zeros() as u64
    }

    /// Bits needed for the magnitude of a product of two centered polynomials.
    fn product_bits(&self) -> u64 {
        2 * self.bits + self.log_degree()
    }

    pub(crate) fn center_info(&self) -> (&[u64], &[u64]) {
        (&self.center, &self.q_limbs)
    }

    fn reduce_biguint(&self, v: &BigUint) -> Vec<u64> {
        limbs::from_biguint(&(v % &self.modulus), self.limbs)
    }

    pub(crate) fn reduce_bigint(&self, v: &BigInt) -> Vec<u64> {
        let m = BigInt::from_biguint(Sign::Plus, self.modulus.clone());
        let r = v.mod_floor(&m);
        limbs::from_biguint(r.magnitude(), self.limbs)
    }

    /// Reduces an exact signed two's-complement integer into canonical limbs.
    pub(crate) fn reduce_signed_limbs(&self, x: &[u64], out: &mut [u64]) {
        match self.pow2 {
            Some(k) => limbs::extract_bits(x, 0, k as usize, out),
            None => out.copy_from_slice(&self.reduce_bigint(&limbs::to_bigint_signed(x))),
        }
    }

    fn add_coeff(&self, a: &mut [u64], b: &[u64]) {
        let carry = limbs::add_assign(a, b);
        match self.pow2 {
            Some(k) => limbs::mask_to_bits(a, k as usize),
            None => {
                if carry || limbs::cmp(a, &self.q_limbs) != std::cmp::Ordering::Less {
                    limbs::sub_assign(a, &self.q_limbs);
                }
            }
        }
    }

    fn sub_coeff(&self, a: &mut [u64], b: &[u64]) {
        if limbs::sub_assign(a, b) {
            match self.pow2 {
                Some(k) => limbs::mask_to_bits(a, k as usize),
                None => {
                    limbs::add_assign(a, &self.q_limbs);
                }
            }
        }
    }
}

/// An element of `Z_q[x]/(x^d + 1)`.
#[derive(Clone)]
pub struct RingPoly {
    params: Arc<RingParams>,
    coeffs: Vec<u64>,
}

impl PartialEq for RingPoly {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.params, &other.params) || self.params == other.params)
            && self.coeffs == other.coeffs
    }
}

impl Eq for RingPoly {}

impl fmt::Debug for RingPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown: Vec<String> = (0..self.params.degree.min(8)).map(|i| self.coeff(i).to_string()).collect();
        write!(f, "RingPoly({:?}, [{}{}])", self.params, shown.join(", "), if self.params.degree > 8 { ", .." } else { "" })
    }
}

impl RingPoly {
    pub fn zero(params: &Arc<RingParams>) -> Self {
        RingPoly { params: params.clone(), coeffs: vec![0; params.degree * params.limbs] }
    }

    /// The constant polynomial `c`.
    pub fn constant(params: &Arc<RingParams>, c: &BigInt) -> Self {
        let mut p = Self::zero(params);
        let l = params.limbs;
        p.coeffs[..l].copy_from_slice(&params.reduce_bigint(c));
        p
    }

    /// `c * x^k` for `k < d`.
    pub fn monomial(params: &Arc<RingParams>, k: usize, c: &BigInt) -> Self {
        assert!(k < params.degree);
        let mut p = Self::zero(params);
        let l = params.limbs;
        p.coeffs[k * l..(k + 1) * l].copy_from_slice(&params.reduce_bigint(c));
        p
    }

    /// Builds a polynomial from arbitrary integers, reducing each mod q.
    pub fn from_coeffs(params: &Arc<RingParams>, values: &[BigInt]) -> Result<Self, RingError> {
        if values.len() != params.degree {
            return Err(RingError::Length { expected: params.degree, got: values.len() });
        }
        let coeffs = values.iter().flat_map(|v| params.reduce_bigint(v)).collect();
        Ok(RingPoly { params: params.clone(), coeffs })
    }

    pub fn from_i64(params: &Arc<RingParams>, values: &[i64]) -> Result<Self, RingError> {
        let big: Vec<BigInt> = values.iter().map(|&v| BigInt::from(v)).collect();
        Self::from_coeffs(params, &big)
    }

    pub(crate) fn from_raw(params: &Arc<RingParams>, coeffs: Vec<u64>) -> Self {
        debug_assert_eq!(coeffs.len(), params.degree * params.limbs);
        RingPoly { params: params.clone(), coeffs }
    }

    pub(crate) fn raw(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn params(&self) -> &Arc<RingParams> {
        &self.params
    }

    pub fn degree(&self) -> usize {
        self.params.degree
    }

    fn limb(&self, i: usize) -> &[u64] {
        let l = self.params.limbs;
        &self.coeffs[i * l..(i + 1) * l]
    }

    /// Canonical coefficient `i` in `[0, q)`.
    pub fn coeff(&self, i: usize) -> BigUint {
        limbs::to_biguint(self.limb(i))
    }

    /// Centered coefficient `i` in `[-q/2, q/2)`.
    pub fn centered(&self, i: usize) -> BigInt {
        let c = self.limb(i);
        let v = BigInt::from_biguint(Sign::Plus, limbs::to_biguint(c));
        if limbs::cmp(c, &self.params.center) != std::cmp::Ordering::Less {
            v - BigInt::from_biguint(Sign::Plus, self.params.modulus.clone())
        } else {
            v
        }
    }

    pub fn coeffs(&self) -> Vec<BigUint> {
        (0..self.degree()).map(|i| self.coeff(i)).collect()
    }

    pub fn centered_coeffs(&self) -> Vec<BigInt> {
        (0..self.degree()).map(|i| self.centered(i)).collect()
    }

    /// Largest centered coefficient magnitude, as a bit length.
    pub fn max_centered_bits(&self) -> u64 {
        (0..self.degree()).map(|i| self.centered(i).magnitude().bits()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        limbs::is_zero(&self.coeffs)
    }

    fn check(&self, other: &RingPoly) -> Result<(), RingError> {
        if Arc::ptr_eq(&self.params, &other.params) || self.params == other.params {
            Ok(())
        } else {
            Err(RingError::ParamsMismatch)
        }
    }

    pub fn add(&self, other: &RingPoly) -> Result<RingPoly, RingError> {
        self.check(other)?;
        let mut out = self.clone();
        out.add_assign_unchecked(other);
        Ok(out)
    }

    pub fn sub(&self, other: &RingPoly) -> Result<RingPoly, RingError> {
        self.check(other)?;
        let mut out = self.clone();
        out.sub_assign_unchecked(other);
        Ok(out)
    }

    pub fn neg(&self) -> RingPoly {
        let mut out = RingPoly::zero(&self.params);
        out.sub_assign_unchecked(self);
        out
    }

    pub(crate) fn add_assign_unchecked(&mut self, other: &RingPoly) {
        let l = self.params.limbs;
        let params = self.params.clone();
        for (a, b) in self.coeffs.chunks_mut(l).zip(other.coeffs.chunks(l)) {
            params.add_coeff(a, b);
        }
    }

    pub(crate) fn sub_assign_unchecked(&mut self, other: &RingPoly) {
        let l = self.params.limbs;
        let params = self.params.clone();
        for (a, b) in self.coeffs.chunks_mut(l).zip(other.coeffs.chunks(l)) {
            params.sub_coeff(a, b);
        }
    }

    /// Negacyclic product via the exact NTT/CRT convolution.
    pub fn mul(&self, other: &RingPoly) -> Result<RingPoly, RingError> {
        self.check(other)?;
        let params = &self.params;
        let basis = ConvBasis::for_bits(params.degree, params.product_bits());
        let a = basis.transform_limbs(&self.coeffs, params.limbs, Some(params.center_info()));
        let b = basis.transform_limbs(&other.coeffs, params.limbs, Some(params.center_info()));
        Ok(Self::reconstruct_mod_q(params, &basis, basis.mul(&a, &b)))
    }

    pub(crate) fn reconstruct_mod_q(params: &Arc<RingParams>, basis: &ConvBasis, t: crt::Transformed) -> RingPoly {
        let l = params.limbs;
        let mut coeffs = vec![0u64; params.degree * l];
        basis.reconstruct(t, |i, x| params.reduce_signed_limbs(x, &mut coeffs[i * l..(i + 1) * l]));
        RingPoly::from_raw(params, coeffs)
    }

    /// Reference O(d²) product with sign folding for `x^d = -1`.
    pub fn mul_schoolbook(&self, other: &RingPoly) -> Result<RingPoly, RingError> {
        self.check(other)?;
        let d = self.degree();
        let a = self.coeffs();
        let b = other.coeffs();
        let mut acc = vec![BigInt::zero(); d];
        for (i, ai) in a.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                let prod = BigInt::from_biguint(Sign::Plus, ai * bj);
                if i + j < d {
                    acc[i + j] += prod;
                } else {
                    acc[i + j - d] -= prod;
                }
            }
        }
        RingPoly::from_coeffs(&self.params, &acc)
    }

    /// Coefficient-wise `s * a mod q`.
    pub fn scalar_mul(&self, s: &BigInt) -> RingPoly {
        let params = &self.params;
        if let (Some(k), Some(mag)) = (params.pow2, s.magnitude().to_u64()) {
            let l = params.limbs;
            let mut coeffs = self.coeffs.clone();
            for c in coeffs.chunks_mut(l) {
                limbs::mul_small_add(c, mag, 0);
                limbs::mask_to_bits(c, k as usize);
            }
            let out = RingPoly::from_raw(params, coeffs);
            return if s.is_negative() { out.neg() } else { out };
        }
        let s = s.mod_floor(&BigInt::from_biguint(Sign::Plus, params.modulus.clone())).magnitude().clone();
        let coeffs = (0..self.degree()).flat_map(|i| params.reduce_biguint(&(self.coeff(i) * &s))).collect();
        RingPoly::from_raw(params, coeffs)
    }
}

pub fn ring_add(a: &RingPoly, b: &RingPoly) -> Result<RingPoly, RingError> {
    a.add(b)
}

pub fn ring_sub(a: &RingPoly, b: &RingPoly) -> Result<RingPoly, RingError> {
    a.sub(b)
}

pub fn ring_mul(a: &RingPoly, b: &RingPoly) -> Result<RingPoly, RingError> {
    a.mul(b)
}

pub fn ring_scalar_mul(a: &RingPoly, s: &BigInt) -> RingPoly {
    a.scalar_mul(s)
}
