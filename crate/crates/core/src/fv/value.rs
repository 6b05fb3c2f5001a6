use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use super::cipher::{dec, encrypt_residue, he_add, he_mul, he_sub, same_params, signed_mod_t, Ciphertext};
use super::keys::{PublicBundle, PublicKey, RelinKey, SecretKey};
use super::params::SchemeParams;
use super::FheError;
use crate::ring::RngHandle;

/// A value that is either a plaintext integer or a ciphertext.
///
/// Statistical code is written once against this type. Two plaintext operands
/// give exact big-integer results; a ciphertext operand makes the result a
/// ciphertext and plaintext operands are absorbed as scalars.
#[derive(Clone, Debug, PartialEq)]
pub enum EncryptedValue {
    Plain(BigInt),
    Cipher(Ciphertext),
}

impl From<i64> for EncryptedValue {
    fn from(v: i64) -> Self {
        EncryptedValue::Plain(BigInt::from(v))
    }
}

impl From<BigInt> for EncryptedValue {
    fn from(v: BigInt) -> Self {
        EncryptedValue::Plain(v)
    }
}

impl From<Ciphertext> for EncryptedValue {
    fn from(c: Ciphertext) -> Self {
        EncryptedValue::Cipher(c)
    }
}

impl EncryptedValue {
    pub fn zero() -> Self {
        EncryptedValue::Plain(BigInt::zero())
    }

    pub fn is_cipher(&self) -> bool {
        matches!(self, EncryptedValue::Cipher(_))
    }

    pub fn as_plain(&self) -> Option<&BigInt> {
        match self {
            EncryptedValue::Plain(v) => Some(v),
            EncryptedValue::Cipher(_) => None,
        }
    }

    /// Plaintext value as `i64`, if it is plaintext and fits.
    pub fn plain_i64(&self) -> Option<i64> {
        self.as_plain().and_then(|v| v.to_i64())
    }

    /// Multiplicative depth consumed; zero for plaintext.
    pub fn depth(&self) -> u32 {
        match self {
            EncryptedValue::Plain(_) => 0,
            EncryptedValue::Cipher(c) => c.depth(),
        }
    }

    /// Decrypts ciphertexts; plaintexts are returned unchanged.
    pub fn reveal(&self, sk: Option<&SecretKey>) -> Result<BigInt, FheError> {
        match self {
            EncryptedValue::Plain(v) => Ok(v.clone()),
            EncryptedValue::Cipher(c) => {
                let sk = sk.ok_or(FheError::MissingKey("secret key"))?;
                Ok(BigInt::from(dec(sk, c)?))
            }
        }
    }

    /// Encrypts a plaintext value (reduced mod t); ciphertexts pass through.
    pub fn encrypt(&self, pk: &PublicKey, rng: &mut RngHandle) -> Result<EncryptedValue, FheError> {
        match self {
            EncryptedValue::Plain(v) => {
                let t = pk.params().t();
                let (lo, hi) = pk.params().message_range();
                let fits = v.to_i64().is_some_and(|x| x >= lo && x <= hi);
                if !fits {
                    return Err(FheError::MessageOutOfRange { value: v.to_string(), t });
                }
                Ok(EncryptedValue::Cipher(encrypt_residue(pk, v, rng)))
            }
            EncryptedValue::Cipher(c) => {
                same_params(c.params(), pk.params())?;
                Ok(self.clone())
            }
        }
    }
}

/// Arithmetic context for [`EncryptedValue`].
///
/// The plaintext evaluator performs exact integer arithmetic. A keyed evaluator
/// additionally multiplies ciphertexts (relinearising with its key) and enforces
/// the depth bound: a product past the bound is an error, never a silently noisy
/// ciphertext.
#[derive(Clone, Debug, Default)]
pub struct Evaluator {
    params: Option<Arc<SchemeParams>>,
    rlk: Option<Arc<RelinKey>>,
}

impl Evaluator {
    pub fn plaintext() -> Self {
        Evaluator::default()
    }

    pub fn new(rlk: Arc<RelinKey>) -> Self {
        Evaluator { params: Some(rlk.params().clone()), rlk: Some(rlk) }
    }

    pub fn from_public(bundle: &PublicBundle) -> Self {
        Self::new(Arc::new(bundle.rlk.clone()))
    }

    pub fn params(&self) -> Option<&Arc<SchemeParams>> {
        self.params.as_ref()
    }

    /// Remaining multiplicative depth for a value, if a bound applies.
    pub fn depth_bound(&self) -> Option<u32> {
        self.params.as_ref().map(|p| p.depth_bound())
    }

    fn check(&self, c: &Ciphertext) -> Result<(), FheError> {
        match &self.params {
            Some(p) => same_params(p, c.params()),
            None => Err(FheError::MissingKey("relinearisation key")),
        }
    }

    pub fn add(&self, a: &EncryptedValue, b: &EncryptedValue) -> Result<EncryptedValue, FheError> {
        use EncryptedValue::*;
        Ok(match (a, b) {
            (Plain(x), Plain(y)) => Plain(x + y),
            (Cipher(c), Plain(v)) | (Plain(v), Cipher(c)) => Cipher(c.add_plain(v)),
            (Cipher(x), Cipher(y)) => Cipher(he_add(x, y)?),
        })
    }

    pub fn sub(&self, a: &EncryptedValue, b: &EncryptedValue) -> Result<EncryptedValue, FheError> {
        use EncryptedValue::*;
        Ok(match (a, b) {
            (Plain(x), Plain(y)) => Plain(x - y),
            (Cipher(c), Plain(v)) => Cipher(c.add_plain(&-v)),
            (Plain(v), Cipher(c)) => Cipher(c.neg().add_plain(v)),
            (Cipher(x), Cipher(y)) => Cipher(he_sub(x, y)?),
        })
    }

    pub fn neg(&self, a: &EncryptedValue) -> EncryptedValue {
        match a {
            EncryptedValue::Plain(x) => EncryptedValue::Plain(-x),
            EncryptedValue::Cipher(c) => EncryptedValue::Cipher(c.neg()),
        }
    }

    pub fn mul(&self, a: &EncryptedValue, b: &EncryptedValue) -> Result<EncryptedValue, FheError> {
        use EncryptedValue::*;
        Ok(match (a, b) {
            (Plain(x), Plain(y)) => Plain(x * y),
            (Cipher(c), Plain(v)) | (Plain(v), Cipher(c)) => Cipher(c.mul_plain(v)),
            (Cipher(x), Cipher(y)) => {
                self.check(x)?;
                let rlk = self.rlk.as_ref().ok_or(FheError::MissingKey("relinearisation key"))?;
                Cipher(he_mul(x, y, rlk)?)
            }
        })
    }

    pub fn scale(&self, a: &EncryptedValue, s: i64) -> EncryptedValue {
        match a {
            EncryptedValue::Plain(x) => EncryptedValue::Plain(x * s),
            EncryptedValue::Cipher(c) => EncryptedValue::Cipher(c.mul_plain(&BigInt::from(s))),
        }
    }

    /// Sum of all values; the empty sum is plaintext zero.
    pub fn sum<'a>(&self, values: impl IntoIterator<Item = &'a EncryptedValue>) -> Result<EncryptedValue, FheError> {
        let mut acc = EncryptedValue::zero();
        for v in values {
            acc = self.add(&acc, v)?;
        }
        Ok(acc)
    }

    /// Product in a balanced tree, keeping the depth at `ceil(log2(n))` above the inputs.
    pub fn product(&self, values: &[EncryptedValue]) -> Result<EncryptedValue, FheError> {
        match values.len() {
            0 => Ok(EncryptedValue::from(1)),
            1 => Ok(values[0].clone()),
            n => {
                let (l, r) = values.split_at(n / 2);
                self.mul(&self.product(l)?, &self.product(r)?)
            }
        }
    }
}

/// Reduces a plaintext result to the signed residue mod t, the value a
/// ciphertext computing the same expression decrypts to.
pub fn signed_residue(v: &BigInt, t: u64) -> i64 {
    signed_mod_t(v, t)
}
