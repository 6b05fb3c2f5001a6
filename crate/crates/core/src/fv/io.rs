//! The `EFHE` binary container for keys, ciphertexts and value bundles.
//!
//! ```text
//! magic "EFHE" | version u16 | kind u8 | params digest [32]
//! poly count u32 | per poly: byte length u32, then d coefficients of ceil(q_bits/8) bytes
//! trailer: has_params u8 [+ params block 24 bytes] | kind-specific fields
//! ```
//!
//! All integers are little-endian. Kind-specific trailers: a ciphertext stores
//! its depth (u32); a bundle stores a UTF-8 metadata string, its shape and a tag
//! per cell (plaintext cells inline as signed bytes, ciphertext cells as a
//! depth, consuming the next two polynomials).

use std::path::Path;
use std::sync::Arc;

use num_bigint::BigInt;

use super::cipher::{same_params, Ciphertext};
use super::keys::{KeySet, PublicBundle, PublicKey, RelinKey, SecretKey};
use super::params::{decode_block, SchemeParams};
use super::value::EncryptedValue;
use super::FheError;
use crate::ring::{limbs, RingPoly};

pub const MAGIC: [u8; 4] = *b"EFHE";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Ciphertext = 1,
    PublicKeys = 2,
    KeySet = 3,
    Bundle = 4,
}

impl Kind {
    fn from_byte(b: u8) -> Result<Kind, FheError> {
        Ok(match b {
            1 => Kind::Ciphertext,
            2 => Kind::PublicKeys,
            3 => Kind::KeySet,
            4 => Kind::Bundle,
            other => return Err(FheError::Corrupt(format!("unknown kind byte {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Ciphertext => "ciphertext",
            Kind::PublicKeys => "public keys",
            Kind::KeySet => "key set",
            Kind::Bundle => "bundle",
        }
    }
}

/// Shaped array of values plus free-form metadata, e.g. a fitted model.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub meta: String,
    pub shape: Vec<usize>,
    pub cells: Vec<EncryptedValue>,
}

/// Header-level summary of a container, as printed by `inspect`.
#[derive(Clone, Debug)]
pub struct ContainerInfo {
    pub kind: Kind,
    pub version: u16,
    pub digest: [u8; 32],
    pub poly_count: usize,
    pub poly_bytes: usize,
    pub total_bytes: usize,
    pub params: Option<SchemeParams>,
    pub depth: Option<u32>,
    pub meta: Option<String>,
    pub shape: Option<Vec<usize>>,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(kind: Kind, digest: [u8; 32], polys: &[&RingPoly], coeff_bytes: usize) -> Writer {
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 + polys.len() * (4 + polys.first().map_or(0, |p| p.degree()) * coeff_bytes));
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(kind as u8);
        buf.extend_from_slice(&digest);
        buf.extend_from_slice(&(polys.len() as u32).to_le_bytes());
        let mut w = Writer { buf };
        for p in polys {
            w.poly(p, coeff_bytes);
        }
        w
    }

    fn poly(&mut self, p: &RingPoly, coeff_bytes: usize) {
        let l = p.params().limbs();
        self.buf.extend_from_slice(&((p.degree() * coeff_bytes) as u32).to_le_bytes());
        for c in p.raw().chunks(l) {
            let mut bytes = Vec::with_capacity(l * 8);
            for w in c {
                bytes.extend_from_slice(&w.to_le_bytes());
            }
            self.buf.extend_from_slice(&bytes[..coeff_bytes]);
        }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }

    fn params(&mut self, p: Option<&SchemeParams>) {
        match p {
            Some(p) => {
                self.u8(1);
                self.buf.extend_from_slice(&p.encode_block());
            }
            None => self.u8(0),
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FheError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| FheError::Corrupt("truncated container".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FheError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FheError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FheError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8], FheError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn finish(&self) -> Result<(), FheError> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(FheError::Corrupt(format!("{} trailing bytes", self.data.len() - self.pos)))
        }
    }
}

struct Parsed<'a> {
    kind: Kind,
    version: u16,
    digest: [u8; 32],
    polys: Vec<&'a [u8]>,
    params: Option<SchemeParams>,
    rest: Reader<'a>,
}

fn parse(data: &[u8]) -> Result<Parsed<'_>, FheError> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(FheError::Corrupt("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(FheError::Corrupt(format!("unsupported version {version}")));
    }
    let kind = Kind::from_byte(r.u8()?)?;
    let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
    let count = r.u32()? as usize;
    let mut polys = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        polys.push(r.bytes()?);
    }
    let params = match r.u8()? {
        0 => None,
        1 => Some(decode_block(r.take(24)?)?),
        other => return Err(FheError::Corrupt(format!("bad params flag {other}"))),
    };
    match &params {
        Some(p) if p.digest() != digest => return Err(FheError::Corrupt("params digest mismatch".into())),
        None if digest != [0u8; 32] => return Err(FheError::Corrupt("digest without params".into())),
        _ => {}
    }
    Ok(Parsed { kind, version, digest, polys, params, rest: r })
}

fn decode_poly(params: &SchemeParams, bytes: &[u8]) -> Result<RingPoly, FheError> {
    let ring = params.ring();
    let cb = params.coeff_bytes();
    let d = params.degree();
    if bytes.len() != d * cb {
        return Err(FheError::Corrupt(format!("polynomial has {} bytes, expected {}", bytes.len(), d * cb)));
    }
    let l = ring.limbs();
    let mut coeffs = vec![0u64; d * l];
    let mut padded = vec![0u8; l * 8];
    for (i, c) in bytes.chunks(cb).enumerate() {
        padded.iter_mut().for_each(|b| *b = 0);
        padded[..cb].copy_from_slice(c);
        let dst = &mut coeffs[i * l..(i + 1) * l];
        for (j, w) in dst.iter_mut().enumerate() {
            *w = u64::from_le_bytes(padded[j * 8..j * 8 + 8].try_into().unwrap());
        }
        let mut masked = dst.to_vec();
        limbs::mask_to_bits(&mut masked, params.q_bits() as usize);
        if masked != dst {
            return Err(FheError::Corrupt("coefficient exceeds modulus".into()));
        }
    }
    Ok(RingPoly::from_raw(ring, coeffs))
}

fn expect_kind(p: &Parsed, kind: Kind) -> Result<(), FheError> {
    if p.kind == kind {
        Ok(())
    } else {
        Err(FheError::Corrupt(format!("expected {}, found {}", kind.name(), p.kind.name())))
    }
}

fn require_params(p: &Parsed) -> Result<Arc<SchemeParams>, FheError> {
    p.params.clone().map(Arc::new).ok_or_else(|| FheError::Corrupt("missing parameter block".into()))
}

pub fn save_ct(ct: &Ciphertext) -> Vec<u8> {
    let params = ct.params();
    let mut w = Writer::new(Kind::Ciphertext, params.digest(), &[&ct.c0, &ct.c1], params.coeff_bytes());
    w.params(Some(params));
    w.u32(ct.depth());
    w.buf
}

pub fn load_ct(data: &[u8]) -> Result<Ciphertext, FheError> {
    let mut p = parse(data)?;
    expect_kind(&p, Kind::Ciphertext)?;
    let params = require_params(&p)?;
    if p.polys.len() != 2 {
        return Err(FheError::Corrupt("ciphertext must hold two polynomials".into()));
    }
    let c0 = decode_poly(&params, p.polys[0])?;
    let c1 = decode_poly(&params, p.polys[1])?;
    let depth = p.rest.u32()?;
    p.rest.finish()?;
    Ok(Ciphertext::from_parts(params, c0, c1, depth))
}

fn save_key_material(kind: Kind, pk: &PublicKey, rlk: &RelinKey, sk: Option<&SecretKey>) -> Vec<u8> {
    let params = pk.params();
    let mut polys: Vec<&RingPoly> = vec![&pk.p0, &pk.p1];
    for (a, b) in &rlk.pairs {
        polys.push(a);
        polys.push(b);
    }
    if let Some(sk) = sk {
        polys.push(&sk.s);
    }
    let mut w = Writer::new(kind, params.digest(), &polys, params.coeff_bytes());
    w.params(Some(params));
    w.buf
}

pub fn save_keys(keys: &KeySet) -> Vec<u8> {
    save_key_material(Kind::KeySet, &keys.pk, &keys.rlk, Some(&keys.sk))
}

pub fn save_public(bundle: &PublicBundle) -> Vec<u8> {
    save_key_material(Kind::PublicKeys, &bundle.pk, &bundle.rlk, None)
}

fn load_key_material(data: &[u8], kind: Kind) -> Result<(PublicKey, RelinKey, Option<SecretKey>), FheError> {
    let p = parse(data)?;
    expect_kind(&p, kind)?;
    p.rest.finish()?;
    let params = require_params(&p)?;
    let ell = params.relin_digits();
    let want = 2 + 2 * ell + usize::from(kind == Kind::KeySet);
    if p.polys.len() != want {
        return Err(FheError::Corrupt(format!("expected {want} polynomials, found {}", p.polys.len())));
    }
    let polys = p.polys.iter().map(|b| decode_poly(&params, b)).collect::<Result<Vec<_>, _>>()?;
    let pk = PublicKey::new(params.clone(), polys[0].clone(), polys[1].clone());
    let pairs = (0..ell).map(|i| (polys[2 + 2 * i].clone(), polys[3 + 2 * i].clone())).collect();
    let rlk = RelinKey::new(params.clone(), pairs);
    let sk = if kind == Kind::KeySet {
        let s = &polys[want - 1];
        let small = s
            .centered_coeffs()
            .iter()
            .map(|c| match i64::try_from(c) {
                Ok(v) if (-1..=1).contains(&v) => Ok(v),
                _ => Err(FheError::Corrupt("secret key is not ternary".into())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Some(SecretKey::new(params, small))
    } else {
        None
    };
    Ok((pk, rlk, sk))
}

pub fn load_keys(data: &[u8]) -> Result<KeySet, FheError> {
    let (pk, rlk, sk) = load_key_material(data, Kind::KeySet)?;
    Ok(KeySet { pk, rlk, sk: sk.expect("key set carries a secret") })
}

pub fn load_public(data: &[u8]) -> Result<PublicBundle, FheError> {
    match parse(data)?.kind {
        Kind::KeySet => Ok(load_keys(data)?.public()),
        _ => {
            let (pk, rlk, _) = load_key_material(data, Kind::PublicKeys)?;
            Ok(PublicBundle { pk, rlk })
        }
    }
}

pub fn save_bundle(bundle: &Bundle) -> Result<Vec<u8>, FheError> {
    let expected: usize = bundle.shape.iter().product();
    if expected != bundle.cells.len() {
        return Err(FheError::InvalidParams(format!("shape {:?} does not match {} cells", bundle.shape, bundle.cells.len())));
    }
    let mut params: Option<Arc<SchemeParams>> = None;
    let mut polys = Vec::new();
    for c in &bundle.cells {
        if let EncryptedValue::Cipher(ct) = c {
            match &params {
                Some(p) => same_params(p, ct.params())?,
                None => params = Some(ct.params().clone()),
            }
            polys.push(&ct.c0);
            polys.push(&ct.c1);
        }
    }
    let digest = params.as_ref().map_or([0u8; 32], |p| p.digest());
    let cb = params.as_ref().map_or(0, |p| p.coeff_bytes());
    let mut w = Writer::new(Kind::Bundle, digest, &polys, cb);
    w.params(params.as_deref());
    w.bytes(bundle.meta.as_bytes());
    w.u32(bundle.shape.len() as u32);
    for &s in &bundle.shape {
        w.u32(s as u32);
    }
    for c in &bundle.cells {
        match c {
            EncryptedValue::Plain(v) => {
                w.u8(0);
                w.bytes(&v.to_signed_bytes_le());
            }
            EncryptedValue::Cipher(ct) => {
                w.u8(1);
                w.u32(ct.depth());
            }
        }
    }
    Ok(w.buf)
}

pub fn load_bundle(data: &[u8]) -> Result<Bundle, FheError> {
    let mut p = parse(data)?;
    expect_kind(&p, Kind::Bundle)?;
    let params = p.params.clone().map(Arc::new);
    let meta = String::from_utf8(p.rest.bytes()?.to_vec()).map_err(|_| FheError::Corrupt("metadata is not UTF-8".into()))?;
    let ndims = p.rest.u32()? as usize;
    let shape = (0..ndims).map(|_| p.rest.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
    let n = shape.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).ok_or_else(|| FheError::Corrupt("shape overflow".into()))?;
    if n > data.len() {
        return Err(FheError::Corrupt("shape larger than container".into()));
    }
    let mut cells = Vec::with_capacity(n);
    let mut next_poly = 0;
    for _ in 0..n {
        match p.rest.u8()? {
            0 => cells.push(EncryptedValue::Plain(BigInt::from_signed_bytes_le(p.rest.bytes()?))),
            1 => {
                let depth = p.rest.u32()?;
                let params = params.as_ref().ok_or_else(|| FheError::Corrupt("ciphertext cell without parameters".into()))?;
                if next_poly + 2 > p.polys.len() {
                    return Err(FheError::Corrupt("missing ciphertext polynomials".into()));
                }
                let c0 = decode_poly(params, p.polys[next_poly])?;
                let c1 = decode_poly(params, p.polys[next_poly + 1])?;
                next_poly += 2;
                cells.push(EncryptedValue::Cipher(Ciphertext::from_parts(params.clone(), c0, c1, depth)));
            }
            other => return Err(FheError::Corrupt(format!("bad cell tag {other}"))),
        }
    }
    if next_poly != p.polys.len() {
        return Err(FheError::Corrupt("unreferenced polynomials".into()));
    }
    p.rest.finish()?;
    Ok(Bundle { meta, shape, cells })
}

pub fn inspect(data: &[u8]) -> Result<ContainerInfo, FheError> {
    let mut p = parse(data)?;
    let mut info = ContainerInfo {
        kind: p.kind,
        version: p.version,
        digest: p.digest,
        poly_count: p.polys.len(),
        poly_bytes: p.polys.first().map_or(0, |b| b.len()),
        total_bytes: data.len(),
        params: p.params.clone(),
        depth: None,
        meta: None,
        shape: None,
    };
    match p.kind {
        Kind::Ciphertext => info.depth = Some(p.rest.u32()?),
        Kind::Bundle => {
            info.meta = Some(String::from_utf8_lossy(p.rest.bytes()?).into_owned());
            let ndims = p.rest.u32()?;
            info.shape = Some((0..ndims).map(|_| p.rest.u32().map(|v| v as usize)).collect::<Result<_, _>>()?);
        }
        _ => {}
    }
    Ok(info)
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), FheError> {
    let path = path.as_ref();
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Vec<u8>, FheError> {
    Ok(std::fs::read(path)?)
}
