use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};

use super::keys::{relin_basis, PublicKey, RelinKey, SecretKey};
use super::params::SchemeParams;
use super::FheError;
use crate::ring::crt::ConvBasis;
use crate::ring::limbs;
use crate::ring::sample::{gaussian_values, ternary_values};
use crate::ring::{RingPoly, RngHandle};

/// FV ciphertext `(c0, c1)` with `c0 + c1*s = delta*m + v (mod q)`.
#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub(crate) params: Arc<SchemeParams>,
    pub(crate) c0: RingPoly,
    pub(crate) c1: RingPoly,
    pub(crate) depth: u32,
}

impl PartialEq for Ciphertext {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.depth == other.depth && self.c0 == other.c0 && self.c1 == other.c1
    }
}

pub(crate) fn same_params(a: &Arc<SchemeParams>, b: &Arc<SchemeParams>) -> Result<(), FheError> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(FheError::ParamsMismatch)
    }
}

/// Reduces `m` to the signed residue in `(-t/2, t/2]`.
pub(crate) fn signed_mod_t(m: &BigInt, t: u64) -> i64 {
    let r = m.mod_floor(&BigInt::from(t)).to_u64().expect("residue below t");
    if r > t / 2 {
        r as i64 - t as i64
    } else {
        r as i64
    }
}

impl Ciphertext {
    pub fn params(&self) -> &Arc<SchemeParams> {
        &self.params
    }

    /// Multiplicative depth consumed so far.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn polys(&self) -> [&RingPoly; 2] {
        [&self.c0, &self.c1]
    }

    pub(crate) fn from_parts(params: Arc<SchemeParams>, c0: RingPoly, c1: RingPoly, depth: u32) -> Self {
        Ciphertext { params, c0, c1, depth }
    }

    fn delta_times(&self, m: &BigInt) -> RingPoly {
        let t = self.params.t();
        let r = m.mod_floor(&BigInt::from(t));
        let delta = BigInt::from_biguint(Sign::Plus, self.params.delta().clone());
        RingPoly::constant(self.params.ring(), &(delta * r))
    }

    pub fn add_plain(&self, m: &BigInt) -> Ciphertext {
        let mut out = self.clone();
        out.c0.add_assign_unchecked(&self.delta_times(m));
        out
    }

    /// Multiplies by a plaintext integer; no depth is consumed.
    pub fn mul_plain(&self, m: &BigInt) -> Ciphertext {
        let s = BigInt::from(signed_mod_t(m, self.params.t()));
        Ciphertext {
            params: self.params.clone(),
            c0: self.c0.scalar_mul(&s),
            c1: self.c1.scalar_mul(&s),
            depth: self.depth,
        }
    }

    pub fn neg(&self) -> Ciphertext {
        Ciphertext { params: self.params.clone(), c0: self.c0.neg(), c1: self.c1.neg(), depth: self.depth }
    }
}

/// Encrypts a signed message in the range given by [`SchemeParams::message_range`].
pub fn enc(pk: &PublicKey, m: i64, rng: &mut RngHandle) -> Result<Ciphertext, FheError> {
    let params = &pk.params;
    let (lo, hi) = params.message_range();
    if m < lo || m > hi {
        return Err(FheError::MessageOutOfRange { value: m.to_string(), t: params.t() });
    }
    Ok(encrypt_residue(pk, &BigInt::from(m), rng))
}

/// Encrypts `m mod t` for any integer `m`.
pub(crate) fn encrypt_residue(pk: &PublicKey, m: &BigInt, rng: &mut RngHandle) -> Ciphertext {
    let params = &pk.params;
    let d = params.degree();
    let ring = params.ring();
    let u = ternary_values(d, rng);
    let (mut c0, mut c1) = pk.mul_by_small(&u);
    let e1 = gaussian_values(d, params.sigma(), rng).expect("sigma validated");
    let e2 = gaussian_values(d, params.sigma(), rng).expect("sigma validated");
    c0.add_assign_unchecked(&RingPoly::from_i64(ring, &e1).unwrap());
    c1.add_assign_unchecked(&RingPoly::from_i64(ring, &e2).unwrap());
    let ct = Ciphertext { params: params.clone(), c0, c1, depth: 0 };
    ct.add_plain(m)
}

fn phase(sk: &SecretKey, ct: &Ciphertext) -> Result<RingPoly, FheError> {
    same_params(&sk.params, &ct.params)?;
    let mut x = sk.mul_by_secret(&ct.c1);
    x.add_assign_unchecked(&ct.c0);
    Ok(x)
}

/// `round(t * x / q) mod t` for canonical `x`, in the signed view.
fn decode_coeff(params: &SchemeParams, x: &BigUint) -> i64 {
    let k = params.q_bits() as usize;
    let t = params.t();
    let half = BigUint::from(1u32) << (k - 1);
    let v: BigUint = (x * t + half) >> k;
    let r = (v % t).to_u64().unwrap();
    if r > t / 2 {
        r as i64 - t as i64
    } else {
        r as i64
    }
}

/// Decrypts to the signed residue. Ciphertexts past the depth bound are refused
/// because their noise is no longer guaranteed to be below `delta/2`.
pub fn dec(sk: &SecretKey, ct: &Ciphertext) -> Result<i64, FheError> {
    if ct.depth > ct.params.depth_bound() {
        return Err(FheError::DepthExceeded { needed: ct.depth, bound: ct.params.depth_bound() });
    }
    dec_unchecked(sk, ct)
}

/// Decrypts without consulting the depth counter.
pub fn dec_unchecked(sk: &SecretKey, ct: &Ciphertext) -> Result<i64, FheError> {
    let x = phase(sk, ct)?;
    Ok(decode_coeff(&ct.params, &x.coeff(0)))
}

/// log2 of the largest noise coefficient `|c0 + c1*s - delta*m|`, for diagnostics.
pub fn noise_log2(sk: &SecretKey, ct: &Ciphertext) -> Result<f64, FheError> {
    let x = phase(sk, ct)?;
    let params = &ct.params;
    let t = params.t();
    let delta = BigInt::from_biguint(Sign::Plus, params.delta().clone());
    let mut worst = BigInt::zero();
    for i in 0..params.degree() {
        let m = decode_coeff(params, &x.coeff(i));
        let r = BigInt::from(m).mod_floor(&BigInt::from(t));
        let expected = RingPoly::monomial(params.ring(), i, &(&delta * r));
        let v = x.sub(&expected)?.centered(i);
        if v.magnitude() > worst.magnitude() {
            worst = v;
        }
    }
    Ok(if worst.is_zero() { 0.0 } else { big_log2(worst.magnitude()) })
}

fn big_log2(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 52 {
        return (v.to_u64().unwrap() as f64).log2();
    }
    let shift = bits - 52;
    ((v >> shift).to_u64().unwrap() as f64).log2() + shift as f64
}

pub fn he_add(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, FheError> {
    same_params(&a.params, &b.params)?;
    let mut out = a.clone();
    out.c0.add_assign_unchecked(&b.c0);
    out.c1.add_assign_unchecked(&b.c1);
    out.depth = a.depth.max(b.depth);
    Ok(out)
}

pub fn he_sub(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, FheError> {
    same_params(&a.params, &b.params)?;
    let mut out = a.clone();
    out.c0.sub_assign_unchecked(&b.c0);
    out.c1.sub_assign_unchecked(&b.c1);
    out.depth = a.depth.max(b.depth);
    Ok(out)
}

/// Homomorphic product with relinearisation. Fails rather than produce a
/// ciphertext beyond the parameters' depth bound.
pub fn he_mul(a: &Ciphertext, b: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext, FheError> {
    let depth = a.depth.max(b.depth) + 1;
    let bound = a.params.depth_bound();
    if depth > bound {
        return Err(FheError::DepthExceeded { needed: depth, bound });
    }
    he_mul_unchecked(a, b, rlk)
}

/// [`he_mul`] without the depth-bound check; the counter still advances.
pub fn he_mul_unchecked(a: &Ciphertext, b: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext, FheError> {
    same_params(&a.params, &b.params)?;
    same_params(&a.params, &rlk.params)?;
    let params = &a.params;
    let [d0, d1, d2] = tensor(a, b);
    let (r0, r1) = relinearize(params, &d2, rlk);
    let mut c0 = d0;
    let mut c1 = d1;
    c0.add_assign_unchecked(&r0);
    c1.add_assign_unchecked(&r1);
    Ok(Ciphertext { params: params.clone(), c0, c1, depth: a.depth.max(b.depth) + 1 })
}

/// `round(t/q * (a ⊗ b)) mod q` on the exact centered integer tensor.
fn tensor(a: &Ciphertext, b: &Ciphertext) -> [RingPoly; 3] {
    let params = &a.params;
    let ring = params.ring();
    let d = params.degree();
    let k = params.q_bits() as usize;
    let basis = ConvBasis::for_bits(d, 2 * k as u64 + d.trailing_zeros() as u64 + 1);
    let tr = |p: &RingPoly| basis.transform_limbs(p.raw(), ring.limbs(), Some(ring.center_info()));
    let (a0, a1) = (tr(&a.c0), tr(&a.c1));
    let (b0, b1) = if std::ptr::eq(a, b) { (a0.clone(), a1.clone()) } else { (tr(&b.c0), tr(&b.c1)) };
    let t0 = basis.mul(&a0, &b0);
    let mut t1 = basis.mul(&a0, &b1);
    basis.mul_acc(&mut t1, &a1, &b0);
    let t2 = basis.mul(&a1, &b1);
    [t0, t1, t2].map(|t| scale_round(params, &basis, t))
}

fn scale_round(params: &Arc<SchemeParams>, basis: &ConvBasis, t: crate::ring::crt::Transformed) -> RingPoly {
    let ring = params.ring();
    let l = ring.limbs();
    let k = params.q_bits() as usize;
    let pt = params.t();
    let mut out = vec![0u64; params.degree() * l];
    let mut buf = vec![0u64; basis.out_limbs + 1];
    let mut half = vec![0u64; basis.out_limbs + 1];
    half[(k - 1) / 64] = 1u64 << ((k - 1) % 64);
    basis.reconstruct(t, |i, x| {
        let fill = if x.last().is_some_and(|&w| w >> 63 == 1) { u64::MAX } else { 0 };
        buf[..x.len()].copy_from_slice(x);
        buf[x.len()] = fill;
        limbs::mul_small_add(&mut buf, pt, 0);
        limbs::add_assign(&mut buf, &half);
        limbs::extract_bits(&buf, k, k, &mut out[i * l..(i + 1) * l]);
    });
    RingPoly::from_raw(ring, out)
}

fn relinearize(params: &Arc<SchemeParams>, c2: &RingPoly, rlk: &RelinKey) -> (RingPoly, RingPoly) {
    let ring = params.ring();
    let d = params.degree();
    let l = ring.limbs();
    let w = params.relin_base_bits() as usize;
    let basis = relin_basis(params);
    let keys = rlk.transformed(&basis);
    let mut acc0 = basis.zero();
    let mut acc1 = basis.zero();
    let mut digits = vec![0i64; d];
    let mut word = [0u64; 1];
    for (i, (k0, k1)) in keys.iter().enumerate() {
        for (j, c) in c2.raw().chunks(l).enumerate() {
            limbs::extract_bits(c, w * i, w, &mut word);
            digits[j] = word[0] as i64;
        }
        let dt = basis.transform_small(&digits);
        basis.mul_acc(&mut acc0, &dt, k0);
        basis.mul_acc(&mut acc1, &dt, k1);
    }
    (RingPoly::reconstruct_mod_q(ring, &basis, acc0), RingPoly::reconstruct_mod_q(ring, &basis, acc1))
}
