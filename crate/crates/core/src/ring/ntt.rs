//! Negacyclic number-theoretic transforms over word-sized primes.
//!
//! Every prime satisfies p ≡ 1 (mod 2^15), so one prime list serves all ring
//! degrees up to 2^14. Twiddle multiplication uses Shoup's precomputed
//! quotients; pointwise products use Montgomery reduction, whose stray
//! factor 2^-64 is cancelled inside the inverse transform's final scaling.

use std::sync::OnceLock;

pub(crate) const MAX_LOG_DEGREE: u32 = 14;
const PRIME_COUNT: usize = 48;

pub(crate) fn primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let step = 1u64 << (MAX_LOG_DEGREE + 1);
        let mut k = ((1u64 << 62) - 1) / step;
        let mut out = Vec::with_capacity(PRIME_COUNT);
        while out.len() < PRIME_COUNT {
            let p = k * step + 1;
            if is_prime(p) {
                out.push(p);
            }
            k -= 1;
        }
        out
    })
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

pub(crate) fn inv_mod(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

/// Deterministic Miller–Rabin for 64-bit inputs.
pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[inline]
pub(crate) fn shoup(w: u64, p: u64) -> u64 {
    (((w as u128) << 64) / p as u128) as u64
}

/// `x * w mod p` given `ws = shoup(w, p)`; valid for any `x < 2^64`.
#[inline(always)]
pub(crate) fn shoup_mul(x: u64, w: u64, ws: u64, p: u64) -> u64 {
    let q = ((x as u128 * ws as u128) >> 64) as u64;
    let r = x.wrapping_mul(w).wrapping_sub(q.wrapping_mul(p));
    r.min(r.wrapping_sub(p))
}

#[inline(always)]
pub(crate) fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    // branch-free: for s < p the wrapped difference is huge and min keeps s
    let s = a + b;
    s.min(s.wrapping_sub(p))
}

#[inline(always)]
pub(crate) fn sub_mod(a: u64, b: u64, p: u64) -> u64 {
    let d = a.wrapping_sub(b);
    d.min(d.wrapping_add(p))
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

#[derive(Debug)]
pub(crate) struct NttTable {
    pub(crate) p: u64,
    n: usize,
    mont_neg_inv: u64,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    ipsi_rev: Vec<u64>,
    ipsi_rev_shoup: Vec<u64>,
    // n^-1 * 2^64 mod p: undoes both the transform size and one Montgomery factor.
    scale: u64,
    scale_shoup: u64,
}

impl NttTable {
    pub(crate) fn new(p: u64, n: usize) -> Self {
        let log_n = n.trailing_zeros();
        assert!(n.is_power_of_two() && log_n <= MAX_LOG_DEGREE);
        assert_eq!((p - 1) % (2 * n as u64), 0);
        let psi = primitive_root_of_unity(p, 2 * n as u64);
        let ipsi = inv_mod(psi, p);
        let mut psi_rev = vec![0u64; n];
        let mut ipsi_rev = vec![0u64; n];
        let (mut pw, mut ipw) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = pw;
            ipsi_rev[r] = ipw;
            pw = mul_mod(pw, psi, p);
            ipw = mul_mod(ipw, ipsi, p);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| shoup(w, p)).collect();
        let ipsi_rev_shoup = ipsi_rev.iter().map(|&w| shoup(w, p)).collect();
        let r_mod_p = ((1u128 << 64) % p as u128) as u64;
        let scale = mul_mod(inv_mod(n as u64 % p, p), r_mod_p, p);
        let mut inv = 1u64;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(p.wrapping_mul(inv)));
        }
        NttTable {
            p,
            n,
            mont_neg_inv: inv.wrapping_neg(),
            psi_rev,
            psi_rev_shoup,
            ipsi_rev,
            ipsi_rev_shoup,
            scale,
            scale_shoup: shoup(scale, p),
        }
    }

    /// In-place forward transform; input and output in [0, p).
    pub(crate) fn forward(&self, a: &mut [u64]) {
        let p = self.p;
        let n = self.n;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                let j1 = 2 * i * t;
                let w = self.psi_rev[m + i];
                let ws = self.psi_rev_shoup[m + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = shoup_mul(*y, w, ws, p);
                    *x = add_mod(u, v, p);
                    *y = sub_mod(u, v, p);
                }
            }
            m <<= 1;
        }
    }

    /// In-place inverse transform. Assumes the input carries one Montgomery
    /// factor 2^-64, as produced by [`NttTable::mont_mul`].
    pub(crate) fn inverse(&self, a: &mut [u64]) {
        let p = self.p;
        let n = self.n;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.ipsi_rev[h + i];
                let ws = self.ipsi_rev_shoup[h + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    *x = add_mod(u, v, p);
                    *y = shoup_mul(sub_mod(u, v, p), w, ws, p);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = shoup_mul(*x, self.scale, self.scale_shoup, p);
        }
    }

    /// `a * b * 2^-64 mod p` for `a, b < p`.
    #[inline(always)]
    pub(crate) fn mont_mul(&self, a: u64, b: u64) -> u64 {
        let t = a as u128 * b as u128;
        let m = (t as u64).wrapping_mul(self.mont_neg_inv);
        let u = ((t + m as u128 * self.p as u128) >> 64) as u64;
        u.min(u.wrapping_sub(self.p))
    }
}

fn primitive_root_of_unity(p: u64, order: u64) -> u64 {
    let exp = (p - 1) / order;
    for g in 2u64.. {
        let w = pow_mod(g, exp, p);
        if pow_mod(w, order / 2, p) == p - 1 {
            return w;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_negacyclic(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let prod = mul_mod(a[i], b[j], p);
                let k = i + j;
                if k < n {
                    out[k] = add_mod(out[k], prod, p);
                } else {
                    out[k - n] = sub_mod(out[k - n], prod, p);
                }
            }
        }
        out
    }

    #[test]
    fn primes_are_ntt_friendly() {
        let ps = primes();
        assert_eq!(ps.len(), PRIME_COUNT);
        for &p in ps {
            assert!(p < 1 << 62 && p > 1 << 61);
            assert_eq!((p - 1) % (1 << 15), 0);
        }
    }

    #[test]
    fn miller_rabin_small_cases() {
        let small: Vec<u64> = (0..200).filter(|&n| is_prime(n)).collect();
        let sieve: Vec<u64> = (0..200u64)
            .filter(|&n| n >= 2 && (2..n).all(|d| n % d != 0))
            .collect();
        assert_eq!(small, sieve);
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2,3,5,7
    }

    #[test]
    fn transform_product_matches_schoolbook() {
        let p = primes()[0];
        for log_n in [1u32, 3, 6] {
            let n = 1 << log_n;
            let table = NttTable::new(p, n);
            let a: Vec<u64> = (0..n as u64).map(|i| (i * 7919 + 3) % p).collect();
            let b: Vec<u64> = (0..n as u64).map(|i| p - 1 - i * 104729).collect();
            let expect = naive_negacyclic(&a, &b, p);
            let (mut fa, mut fb) = (a.clone(), b.clone());
            table.forward(&mut fa);
            table.forward(&mut fb);
            let mut prod: Vec<u64> = fa.iter().zip(&fb).map(|(&x, &y)| table.mont_mul(x, y)).collect();
            table.inverse(&mut prod);
            assert_eq!(prod, expect, "n = {n}");
        }
    }
}
