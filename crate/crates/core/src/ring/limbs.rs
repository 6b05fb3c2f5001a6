//! Little-endian u64 limb helpers shared by the ring and CRT code.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};

pub(crate) fn limbs_for_bits(bits: u64) -> usize {
    (bits.max(1)).div_ceil(64) as usize
}

pub(crate) fn add_assign(a: &mut [u64], b: &[u64]) -> bool {
    let mut carry = false;
    for (x, &y) in a.iter_mut().zip(b) {
        let (s1, c1) = x.overflowing_add(y);
        let (s2, c2) = s1.overflowing_add(carry as u64);
        *x = s2;
        carry = c1 | c2;
    }
    carry
}

pub(crate) fn sub_assign(a: &mut [u64], b: &[u64]) -> bool {
    let mut borrow = false;
    for (x, &y) in a.iter_mut().zip(b) {
        let (d1, b1) = x.overflowing_sub(y);
        let (d2, b2) = d1.overflowing_sub(borrow as u64);
        *x = d2;
        borrow = b1 | b2;
    }
    borrow
}

pub(crate) fn cmp(a: &[u64], b: &[u64]) -> Ordering {
    for (x, y) in a.iter().rev().zip(b.iter().rev()) {
        match x.cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

pub(crate) fn is_zero(a: &[u64]) -> bool {
    a.iter().all(|&x| x == 0)
}

/// `acc = acc * m + add`, returning the carry-out word.
pub(crate) fn mul_small_add(acc: &mut [u64], m: u64, add: u64) -> u64 {
    let mut carry = add as u128;
    for x in acc.iter_mut() {
        let v = *x as u128 * m as u128 + carry;
        *x = v as u64;
        carry = v >> 64;
    }
    carry as u64
}

pub(crate) fn negate(a: &mut [u64]) {
    let mut carry = true;
    for x in a.iter_mut() {
        let (v, c) = (!*x).overflowing_add(carry as u64);
        *x = v;
        carry = c;
    }
}

/// Reads 64 bits starting at bit `start`, sign-extending past the end.
fn window(src: &[u64], start: usize) -> u64 {
    let fill = if src.last().is_some_and(|&w| w >> 63 == 1) { u64::MAX } else { 0 };
    let word = |i: usize| src.get(i).copied().unwrap_or(fill);
    let (i, s) = (start / 64, start % 64);
    if s == 0 {
        word(i)
    } else {
        (word(i) >> s) | (word(i + 1) << (64 - s))
    }
}

/// Copies bits `[start, start + nbits)` of a two's-complement integer into `dst`.
pub(crate) fn extract_bits(src: &[u64], start: usize, nbits: usize, dst: &mut [u64]) {
    for (i, d) in dst.iter_mut().enumerate() {
        *d = window(src, start + 64 * i);
    }
    mask_to_bits(dst, nbits);
}

pub(crate) fn mask_to_bits(a: &mut [u64], nbits: usize) {
    for (i, w) in a.iter_mut().enumerate() {
        let lo = 64 * i;
        if lo >= nbits {
            *w = 0;
        } else if nbits - lo < 64 {
            *w &= (1u64 << (nbits - lo)) - 1;
        }
    }
}

pub(crate) fn to_biguint(a: &[u64]) -> BigUint {
    let mut bytes = Vec::with_capacity(a.len() * 8);
    for w in a {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    BigUint::from_bytes_le(&bytes)
}

/// Interprets `a` as two's complement.
pub(crate) fn to_bigint_signed(a: &[u64]) -> BigInt {
    if a.last().is_some_and(|&w| w >> 63 == 1) {
        let mut n = a.to_vec();
        negate(&mut n);
        BigInt::from_biguint(Sign::Minus, to_biguint(&n))
    } else {
        BigInt::from_biguint(Sign::Plus, to_biguint(a))
    }
}

/// Writes `v` into exactly `len` limbs; `v` must fit.
pub(crate) fn from_biguint(v: &BigUint, len: usize) -> Vec<u64> {
    let mut out = v.to_u64_digits();
    debug_assert!(out.len() <= len);
    out.resize(len, 0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_handles_sign_extension() {
        // -1 in one limb: every extracted bit is one.
        let mut dst = [0u64; 2];
        extract_bits(&[u64::MAX], 60, 70, &mut dst);
        assert_eq!(dst, [u64::MAX, (1 << 6) - 1]);
        extract_bits(&[0x8000_0000_0000_0000, 0], 63, 2, &mut dst);
        assert_eq!(dst, [1, 0]);
    }

    #[test]
    fn signed_roundtrip() {
        let mut a = vec![5u64, 0];
        negate(&mut a);
        assert_eq!(to_bigint_signed(&a), BigInt::from(-5));
        assert_eq!(to_biguint(&[0, 1]), BigUint::from(1u128 << 64));
    }
}
