//! Exact integer negacyclic convolution through a multi-prime NTT.
//!
//! Inputs are lifted to signed integers, reduced modulo each prime of the
//! basis, multiplied in the transform domain and reconstructed with Garner's
//! mixed-radix algorithm. When the prime product exceeds twice the largest
//! possible output magnitude the reconstruction is the exact integer result,
//! so any later reduction (mod 2^k, mod q, or FV rescaling) is bit-identical to
//! schoolbook arithmetic.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::limbs;
use super::ntt::{self, shoup, shoup_mul, NttTable};

const PRIME_BITS: u64 = 61;

/// Residues of a polynomial in the transform domain, prime-major.
#[derive(Clone, Debug)]
pub(crate) struct Transformed {
    pub(crate) data: Vec<u64>,
}

#[derive(Debug)]
pub(crate) struct ConvBasis {
    pub(crate) degree: usize,
    tables: Vec<Arc<NttTable>>,
    garner: Vec<Vec<(u64, u64)>>,
    modulus: Vec<u64>,
    half: Vec<u64>,
    pub(crate) out_limbs: usize,
    limb_pow: Vec<Vec<(u64, u64)>>,
}

fn table_for(p: u64, n: usize) -> Arc<NttTable> {
    static TABLES: OnceLock<Mutex<HashMap<(u64, usize), Arc<NttTable>>>> = OnceLock::new();
    let map = TABLES.get_or_init(Default::default);
    if let Some(t) = map.lock().unwrap().get(&(p, n)) {
        return t.clone();
    }
    let t = Arc::new(NttTable::new(p, n));
    map.lock().unwrap().entry((p, n)).or_insert(t).clone()
}

impl ConvBasis {
    /// Basis able to represent any convolution output of magnitude below `2^bits`.
    pub(crate) fn for_bits(degree: usize, bits: u64) -> Arc<ConvBasis> {
        static BASES: OnceLock<Mutex<HashMap<(usize, usize), Arc<ConvBasis>>>> = OnceLock::new();
        let count = (bits + 2).div_ceil(PRIME_BITS) as usize;
        assert!(count <= ntt::primes().len(), "modulus too large for the prime basis");
        let map = BASES.get_or_init(Default::default);
        if let Some(b) = map.lock().unwrap().get(&(degree, count)) {
            return b.clone();
        }
        let b = Arc::new(ConvBasis::new(degree, count));
        map.lock().unwrap().entry((degree, count)).or_insert(b).clone()
    }

    fn new(degree: usize, count: usize) -> ConvBasis {
        let ps = &ntt::primes()[..count];
        let tables = ps.iter().map(|&p| table_for(p, degree)).collect();
        let garner = (0..count)
            .map(|i| {
                (0..i)
                    .map(|j| {
                        let inv = ntt::inv_mod(ps[j] % ps[i], ps[i]);
                        (inv, shoup(inv, ps[i]))
                    })
                    .collect()
            })
            .collect();
        let out_limbs = limbs::limbs_for_bits(64 * count as u64 + 66);
        let mut modulus = vec![0u64; out_limbs];
        modulus[0] = 1;
        for &p in ps {
            limbs::mul_small_add(&mut modulus, p, 0);
        }
        let mut half = modulus.clone();
        let mut carry = 0u64;
        for w in half.iter_mut().rev() {
            let next = *w & 1;
            *w = (*w >> 1) | (carry << 63);
            carry = next;
        }
        ConvBasis { degree, tables, garner, modulus, half, out_limbs, limb_pow: Vec::new() }
            .with_limb_powers(16)
    }

    fn with_limb_powers(mut self, max_limbs: usize) -> Self {
        self.limb_pow = self
            .tables
            .iter()
            .map(|t| {
                let p = t.p;
                let base = ((1u128 << 64) % p as u128) as u64;
                let mut acc = 1u64;
                (0..max_limbs)
                    .map(|_| {
                        let cur = acc;
                        acc = ntt::mul_mod(acc, base, p);
                        (cur, shoup(cur, p))
                    })
                    .collect()
            })
            .collect();
        self
    }

    pub(crate) fn prime_count(&self) -> usize {
        self.tables.len()
    }

    fn residue(&self, prime: usize, value: &[u64]) -> u64 {
        let p = self.tables[prime].p;
        let pows = &self.limb_pow[prime];
        let mut r = 0u64;
        for (l, &w) in value.iter().enumerate() {
            let (c, cs) = pows[l];
            r = ntt::add_mod(r, shoup_mul(w, c, cs, p), p);
        }
        r
    }

    /// Transforms canonical multi-limb coefficients. With `center = Some((threshold, q))`
    /// every coefficient `>= threshold` is lifted to `coefficient - q` first.
    pub(crate) fn transform_limbs(
        &self,
        coeffs: &[u64],
        width: usize,
        center: Option<(&[u64], &[u64])>,
    ) -> Transformed {
        let d = self.degree;
        assert!(width <= 16);
        let mut data = vec![0u64; d * self.prime_count()];
        for (j, t) in self.tables.iter().enumerate() {
            let p = t.p;
            let q_mod = center.map(|(_, q)| self.residue(j, q));
            let row = &mut data[j * d..(j + 1) * d];
            for (i, slot) in row.iter_mut().enumerate() {
                let c = &coeffs[i * width..(i + 1) * width];
                let mut r = self.residue(j, c);
                if let (Some((thr, _)), Some(qm)) = (center, q_mod) {
                    if limbs::cmp(c, thr) != std::cmp::Ordering::Less {
                        r = ntt::sub_mod(r, qm, p);
                    }
                }
                *slot = r;
            }
            t.forward(row);
        }
        Transformed { data }
    }

    /// Transforms small signed coefficients.
    pub(crate) fn transform_small(&self, coeffs: &[i64]) -> Transformed {
        let d = self.degree;
        assert_eq!(coeffs.len(), d);
        let mut data = vec![0u64; d * self.prime_count()];
        for (j, t) in self.tables.iter().enumerate() {
            let p = t.p;
            let row = &mut data[j * d..(j + 1) * d];
            for (slot, &c) in row.iter_mut().zip(coeffs) {
                let r = c.unsigned_abs() % p;
                *slot = if c >= 0 || r == 0 { r } else { p - r };
            }
            t.forward(row);
        }
        Transformed { data }
    }

    pub(crate) fn zero(&self) -> Transformed {
        Transformed { data: vec![0u64; self.degree * self.prime_count()] }
    }

    pub(crate) fn mul(&self, a: &Transformed, b: &Transformed) -> Transformed {
        let d = self.degree;
        let mut data = vec![0u64; a.data.len()];
        for (j, t) in self.tables.iter().enumerate() {
            let r = j * d..(j + 1) * d;
            for ((o, &x), &y) in data[r.clone()].iter_mut().zip(&a.data[r.clone()]).zip(&b.data[r]) {
                *o = t.mont_mul(x, y);
            }
        }
        Transformed { data }
    }

    /// `acc += a * b` in the transform domain.
    pub(crate) fn mul_acc(&self, acc: &mut Transformed, a: &Transformed, b: &Transformed) {
        let d = self.degree;
        for (j, t) in self.tables.iter().enumerate() {
            let p = t.p;
            let r = j * d..(j + 1) * d;
            for ((o, &x), &y) in acc.data[r.clone()].iter_mut().zip(&a.data[r.clone()]).zip(&b.data[r]) {
                *o = ntt::add_mod(*o, t.mont_mul(x, y), p);
            }
        }
    }

    /// Inverse-transforms and hands each exact signed coefficient to `sink` as
    /// `out_limbs` two's-complement limbs.
    pub(crate) fn reconstruct(&self, mut t: Transformed, mut sink: impl FnMut(usize, &[u64])) {
        let d = self.degree;
        let k = self.prime_count();
        for (j, table) in self.tables.iter().enumerate() {
            table.inverse(&mut t.data[j * d..(j + 1) * d]);
        }
        let mut v = vec![0u64; k];
        let mut acc = vec![0u64; self.out_limbs];
        for i in 0..d {
            for j in 0..k {
                let p = self.tables[j].p;
                let mut x = t.data[j * d + i];
                for (l, &(inv, invs)) in self.garner[j].iter().enumerate() {
                    // earlier digits are below their own prime, which may exceed p
                    let vl = v[l].min(v[l].wrapping_sub(p));
                    let diff = ntt::sub_mod(x, vl, p);
                    x = shoup_mul(diff, inv, invs, p);
                }
                v[j] = x;
            }
            acc.iter_mut().for_each(|w| *w = 0);
            acc[0] = v[k - 1];
            for j in (0..k - 1).rev() {
                limbs::mul_small_add(&mut acc, self.tables[j].p, v[j]);
            }
            if limbs::cmp(&acc, &self.half) == std::cmp::Ordering::Greater {
                limbs::sub_assign(&mut acc, &self.modulus);
            }
            sink(i, &acc);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn exact_signed_convolution() {
        let d = 16;
        let a: Vec<i64> = (0..d as i64).map(|i| (i * 37 - 250) * 1_000_003).collect();
        let b: Vec<i64> = (0..d as i64).map(|i| 999_999_937 - i * i * 12_345).collect();
        let mut expect = vec![BigInt::from(0); d];
        for i in 0..d {
            for j in 0..d {
                let prod = BigInt::from(a[i]) * BigInt::from(b[j]);
                if i + j < d {
                    expect[i + j] += prod;
                } else {
                    expect[i + j - d] -= prod;
                }
            }
        }
        let basis = ConvBasis::for_bits(d, 130);
        let prod = basis.mul(&basis.transform_small(&a), &basis.transform_small(&b));
        let mut got = vec![BigInt::from(0); d];
        basis.reconstruct(prod, |i, x| got[i] = limbs::to_bigint_signed(x));
        assert_eq!(got, expect);
    }
}
