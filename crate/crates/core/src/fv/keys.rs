use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_traits::One;

use super::params::SchemeParams;
use crate::ring::crt::{ConvBasis, Transformed};
use crate::ring::sample::{gaussian_values, ternary_values};
use crate::ring::{sample_uniform, RingPoly, RngHandle};

/// Ternary secret `s`.
#[derive(Clone, Debug)]
pub struct SecretKey {
    pub(crate) params: Arc<SchemeParams>,
    pub(crate) s: RingPoly,
    pub(crate) small: Vec<i64>,
    cache: OnceLock<Transformed>,
}

/// `(p0, p1) = (-(a*s + e), a)`.
#[derive(Clone, Debug)]
pub struct PublicKey {
    pub(crate) params: Arc<SchemeParams>,
    pub(crate) p0: RingPoly,
    pub(crate) p1: RingPoly,
    cache: OnceLock<(Transformed, Transformed)>,
}

/// Pairs `(-(a_i*s + e_i) + 2^(w*i) * s^2, a_i)` for base-`2^w` digit decomposition.
#[derive(Clone, Debug)]
pub struct RelinKey {
    pub(crate) params: Arc<SchemeParams>,
    pub(crate) pairs: Vec<(RingPoly, RingPoly)>,
    cache: OnceLock<Vec<(Transformed, Transformed)>>,
}

#[derive(Clone, Debug)]
pub struct KeySet {
    pub pk: PublicKey,
    pub sk: SecretKey,
    pub rlk: RelinKey,
}

/// Public material an untrusted evaluator holds: encryption and relinearisation keys.
#[derive(Clone, Debug)]
pub struct PublicBundle {
    pub pk: PublicKey,
    pub rlk: RelinKey,
}

/// Basis for products of a full-size polynomial with a small one (|coeff| <= 2^small_bits).
pub(crate) fn small_basis(params: &SchemeParams, small_bits: u64) -> Arc<ConvBasis> {
    let d = params.degree();
    ConvBasis::for_bits(d, params.q_bits() as u64 + small_bits + d.trailing_zeros() as u64)
}

pub(crate) fn relin_basis(params: &SchemeParams) -> Arc<ConvBasis> {
    let d = params.degree();
    let ell = params.relin_digits() as u64;
    let log_ell = 64 - ell.leading_zeros() as u64;
    ConvBasis::for_bits(d, params.relin_base_bits() as u64 + params.q_bits() as u64 + d.trailing_zeros() as u64 + log_ell)
}

fn transform_centered(basis: &ConvBasis, p: &RingPoly) -> Transformed {
    basis.transform_limbs(p.raw(), p.params().limbs(), Some(p.params().center_info()))
}

impl SecretKey {
    pub(crate) fn new(params: Arc<SchemeParams>, small: Vec<i64>) -> Self {
        let s = RingPoly::from_i64(params.ring(), &small).expect("degree matches");
        SecretKey { params, s, small, cache: OnceLock::new() }
    }

    pub fn params(&self) -> &Arc<SchemeParams> {
        &self.params
    }

    /// `x * s mod q` for a full-size `x`.
    pub(crate) fn mul_by_secret(&self, x: &RingPoly) -> RingPoly {
        let basis = small_basis(&self.params, 1);
        let st = self.cache.get_or_init(|| basis.transform_small(&self.small));
        let xt = transform_centered(&basis, x);
        RingPoly::reconstruct_mod_q(self.params.ring(), &basis, basis.mul(&xt, st))
    }
}

impl PublicKey {
    pub(crate) fn new(params: Arc<SchemeParams>, p0: RingPoly, p1: RingPoly) -> Self {
        PublicKey { params, p0, p1, cache: OnceLock::new() }
    }

    pub fn params(&self) -> &Arc<SchemeParams> {
        &self.params
    }

    /// `(p0 * u, p1 * u)` for ternary `u`.
    pub(crate) fn mul_by_small(&self, u: &[i64]) -> (RingPoly, RingPoly) {
        let basis = small_basis(&self.params, 1);
        let (t0, t1) = self
            .cache
            .get_or_init(|| (transform_centered(&basis, &self.p0), transform_centered(&basis, &self.p1)));
        let ut = basis.transform_small(u);
        let ring = self.params.ring();
        (
            RingPoly::reconstruct_mod_q(ring, &basis, basis.mul(t0, &ut)),
            RingPoly::reconstruct_mod_q(ring, &basis, basis.mul(t1, &ut)),
        )
    }
}

impl RelinKey {
    pub(crate) fn new(params: Arc<SchemeParams>, pairs: Vec<(RingPoly, RingPoly)>) -> Self {
        RelinKey { params, pairs, cache: OnceLock::new() }
    }

    pub fn params(&self) -> &Arc<SchemeParams> {
        &self.params
    }

    pub(crate) fn transformed(&self, basis: &ConvBasis) -> &[(Transformed, Transformed)] {
        self.cache.get_or_init(|| {
            self.pairs
                .iter()
                .map(|(a, b)| (transform_centered(basis, a), transform_centered(basis, b)))
                .collect()
        })
    }
}

impl KeySet {
    pub fn params(&self) -> &Arc<SchemeParams> {
        &self.pk.params
    }

    pub fn public(&self) -> PublicBundle {
        PublicBundle { pk: self.pk.clone(), rlk: self.rlk.clone() }
    }
}

impl PublicBundle {
    pub fn params(&self) -> &Arc<SchemeParams> {
        &self.pk.params
    }
}

/// Generates a fresh key set. Every component is drawn from its own substream.
pub fn keygen(params: &Arc<SchemeParams>, rng: &mut RngHandle) -> KeySet {
    let ring = params.ring();
    let d = params.degree();
    let sigma = params.sigma();
    let sk = SecretKey::new(params.clone(), ternary_values(d, &mut rng.substream("keygen/secret", 0)));

    let mut pk_rng = rng.substream("keygen/public", 0);
    let a = sample_uniform(ring, &mut pk_rng);
    let e = RingPoly::from_i64(ring, &gaussian_values(d, sigma, &mut pk_rng).expect("sigma validated")).unwrap();
    let mut p0 = sk.mul_by_secret(&a);
    p0.add_assign_unchecked(&e);
    let pk = PublicKey::new(params.clone(), p0.neg(), a);

    let s2 = sk.mul_by_secret(&sk.s);
    let w = params.relin_base_bits();
    let pairs = (0..params.relin_digits())
        .map(|i| {
            let mut r = rng.substream("keygen/relin", i as u64);
            let a = sample_uniform(ring, &mut r);
            let e = RingPoly::from_i64(ring, &gaussian_values(d, sigma, &mut r).expect("sigma validated")).unwrap();
            let mut b = sk.mul_by_secret(&a);
            b.add_assign_unchecked(&e);
            let mut b = b.neg();
            b.add_assign_unchecked(&s2.scalar_mul(&(BigInt::one() << (w as usize * i))));
            (b, a)
        })
        .collect();
    let rlk = RelinKey::new(params.clone(), pairs);
    KeySet { pk, sk, rlk }
}
