use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{ForestSpec, TreeSpec};
use super::{hex, unhex, CrfError};
use crate::encode::{range_indicator, Method, QuantizedDataset};
use crate::fv::io::Bundle;
use crate::fv::{Budget, EncryptedValue, Evaluator, SecretKey};
use crate::ring::RngHandle;

/// Per-class vote totals for one test row.
pub type VoteVector = Vec<EncryptedValue>;

/// Leaf counts of a fitted forest, indexed `[tree][leaf][class]`.
///
/// `counts` holds the raw class counts per leaf. When the stochastic fraction
/// was used, `adjusted` holds each count multiplied by its leaf's estimate, and
/// prediction votes with those instead.
#[derive(Clone, Debug, PartialEq)]
pub struct FitTensor {
    pub forest_digest: [u8; 32],
    pub trees: usize,
    pub leaves: usize,
    pub classes: Vec<String>,
    pub counts: Vec<EncryptedValue>,
    pub adjusted: Option<Vec<EncryptedValue>>,
    pub n_fit: u64,
    pub resample_m: u32,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    forest: String,
    n_fit: u64,
    resample_m: u32,
    classes: Vec<String>,
    adjusted: bool,
}

impl FitTensor {
    fn index(&self, t: usize, b: usize, c: usize) -> usize {
        (t * self.leaves + b) * self.classes.len() + c
    }

    /// Raw count for tree `t`, leaf `b`, class `c` (all 0-based).
    pub fn count(&self, t: usize, b: usize, c: usize) -> &EncryptedValue {
        &self.counts[self.index(t, b, c)]
    }

    /// The tensor prediction votes with.
    pub fn votes(&self) -> &[EncryptedValue] {
        self.adjusted.as_deref().unwrap_or(&self.counts)
    }

    pub fn is_encrypted(&self) -> bool {
        self.counts.iter().chain(self.adjusted.iter().flatten()).any(EncryptedValue::is_cipher)
    }

    /// Deepest ciphertext in the tensor.
    pub fn depth(&self) -> u32 {
        self.counts.iter().chain(self.adjusted.iter().flatten()).map(EncryptedValue::depth).max().unwrap_or(0)
    }

    pub fn zeros_like(&self) -> FitTensor {
        let zero = |v: &Vec<EncryptedValue>| vec![EncryptedValue::zero(); v.len()];
        FitTensor { counts: zero(&self.counts), adjusted: self.adjusted.as_ref().map(zero), n_fit: 0, ..self.clone() }
    }

    pub fn decrypt(&self, sk: &SecretKey) -> Result<FitTensor, CrfError> {
        let open = |v: &Vec<EncryptedValue>| -> Result<Vec<EncryptedValue>, CrfError> {
            v.iter().map(|x| Ok(EncryptedValue::Plain(x.reveal(Some(sk))?))).collect()
        };
        Ok(FitTensor { counts: open(&self.counts)?, adjusted: self.adjusted.as_ref().map(open).transpose()?, ..self.clone() })
    }

    /// Shape `[layers, trees, leaves, classes]`; the second layer is the adjusted counts.
    pub fn to_bundle(&self) -> Bundle {
        let meta = Meta {
            kind: "crf-fit".into(),
            forest: hex(&self.forest_digest),
            n_fit: self.n_fit,
            resample_m: self.resample_m,
            classes: self.classes.clone(),
            adjusted: self.adjusted.is_some(),
        };
        let layers = 1 + usize::from(self.adjusted.is_some());
        let cells = self.counts.iter().chain(self.adjusted.iter().flatten()).cloned().collect();
        Bundle {
            meta: serde_json::to_string(&meta).expect("metadata serialises"),
            shape: vec![layers, self.trees, self.leaves, self.classes.len()],
            cells,
        }
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<FitTensor, CrfError> {
        let meta: Meta = serde_json::from_str(&bundle.meta).map_err(|e| CrfError::Corrupt(e.to_string()))?;
        if meta.kind != "crf-fit" {
            return Err(CrfError::Corrupt(format!("bundle holds a {}, not a forest fit", meta.kind)));
        }
        let digest: [u8; 32] = unhex(&meta.forest)
            .and_then(|d| d.try_into().ok())
            .ok_or_else(|| CrfError::Corrupt("bad forest digest".into()))?;
        let &[layers, trees, leaves, classes] = bundle.shape.as_slice() else {
            return Err(CrfError::Corrupt(format!("unexpected shape {:?}", bundle.shape)));
        };
        if layers != 1 + usize::from(meta.adjusted) || classes != meta.classes.len() || !leaves.is_power_of_two() {
            return Err(CrfError::Corrupt(format!("shape {:?} does not match the metadata", bundle.shape)));
        }
        let per = trees * leaves * classes;
        if bundle.cells.len() != layers * per {
            return Err(CrfError::Corrupt(format!("{} cells for shape {:?}", bundle.cells.len(), bundle.shape)));
        }
        let (counts, adjusted) = bundle.cells.split_at(per);
        Ok(FitTensor {
            forest_digest: digest,
            trees,
            leaves,
            classes: meta.classes,
            counts: counts.to_vec(),
            adjusted: meta.adjusted.then(|| adjusted.to_vec()),
            n_fit: meta.n_fit,
            resample_m: meta.resample_m,
        })
    }
}

/// Multiplicative depth of a fit on fresh data: `L` for the counts, and with
/// `m >= 2` the adjusted counts reach `L + log2(m)`.
pub fn fit_depth(depth: u32, m: u32) -> u32 {
    match m {
        0 => depth,
        1 => depth + 1,
        m => depth + m.trailing_zeros(),
    }
}

/// Widest sum at any level: rows, bins of a split side, resampled draws,
/// vote terms, and the three terms of an OR step.
fn fan_in(forest: &ForestSpec, rows: u64, m: u32, votes: u64) -> u64 {
    let bins = forest.vars.iter().map(|v| v.n_bins as u64).max().unwrap_or(1);
    rows.max(bins).max(m as u64).max(votes).max(3)
}

/// What fitting `forest` on `rows` fresh encrypted rows and then predicting
/// encrypted rows needs from the scheme parameters.
pub fn budget(forest: &ForestSpec, rows: u64, m: u32) -> Budget {
    let trees = forest.n_trees() as u64;
    Budget {
        depth: fit_depth(forest.depth, m) + 1,
        max_abs: trees as u128 * rows as u128 * (m as u128 + 1),
        fan_in: fan_in(forest, rows, m, trees * forest.n_leaves() as u64),
    }
}

fn check_layout(forest: &ForestSpec, data: &QuantizedDataset) -> Result<(), CrfError> {
    if data.method != Method::OneHot {
        return Err(CrfError::Invalid("forests need indicator (Method 1) encoding".into()));
    }
    let same = data.layout.len() == forest.vars.len()
        && data.layout.iter().zip(&forest.vars).all(|(l, v)| l.name == v.name && l.n_bins == v.n_bins && l.kind == v.kind);
    if !same {
        return Err(CrfError::Provenance("dataset layout differs from the forest's variables".into()));
    }
    Ok(())
}

/// Indicator of each leaf for one row, built level by level so a node's
/// indicator is its parent's times the split's range indicator.
fn leaf_indicators(ev: &Evaluator, tree: &TreeSpec, data: &QuantizedDataset, row: usize) -> Result<Vec<EncryptedValue>, CrfError> {
    let mut nodes: Vec<EncryptedValue> = Vec::new();
    for (l, level) in tree.levels.iter().enumerate() {
        let mut next = Vec::with_capacity(2 * level.len());
        for (g, split) in level.iter().enumerate() {
            for side in &split.sides {
                let r = range_indicator(ev, data.block(row, split.var), side)?;
                next.push(if l == 0 { r } else { ev.mul(&nodes[g], &r)? });
            }
        }
        nodes = next;
    }
    Ok(nodes)
}

/// Fits leaf counts for every tree of `forest`.
///
/// With `resample_m > 0` each leaf also gets a stochastic fraction estimate
/// from its own substream of `rng`, so plaintext and encrypted fits with the
/// same seed resample the same rows.
pub fn fit(forest: &ForestSpec, data: &QuantizedDataset, resample_m: u32, ev: &Evaluator, rng: &RngHandle) -> Result<FitTensor, CrfError> {
    check_layout(forest, data)?;
    if !data.is_labelled() {
        return Err(CrfError::Invalid("fitting needs a labelled dataset".into()));
    }
    if resample_m != 0 && !resample_m.is_power_of_two() {
        return Err(CrfError::Invalid(format!("resample size {resample_m} is not a power of two")));
    }
    let n = data.n_rows();
    if n == 0 {
        return Err(CrfError::Invalid("cannot fit on zero rows".into()));
    }
    if data.is_encrypted() {
        if let Some(p) = ev.params() {
            let base = data.x.iter().chain(&data.y).flatten().map(EncryptedValue::depth).max().unwrap_or(0);
            Budget {
                depth: base + fit_depth(forest.depth, resample_m),
                max_abs: n as u128 * (resample_m as u128 + 1),
                fan_in: fan_in(forest, n as u64, resample_m, 0),
            }
            .check(p)?;
        }
    }
    let (leaves, n_classes) = (forest.n_leaves(), data.n_classes());
    let mut counts = Vec::with_capacity(forest.n_trees() * leaves * n_classes);
    let mut adjusted = (resample_m > 0).then(|| Vec::with_capacity(counts.capacity()));
    for (t, tree) in forest.trees.iter().enumerate() {
        let ind = (0..n).map(|i| leaf_indicators(ev, tree, data, i)).collect::<Result<Vec<_>, _>>()?;
        let tree_rng = rng.substream("fraction-tree", t as u64);
        for b in 0..leaves {
            let mut leaf = Vec::with_capacity(n_classes);
            for c in 0..n_classes {
                let mut acc = EncryptedValue::zero();
                for (row, y) in ind.iter().zip(&data.y) {
                    acc = ev.add(&acc, &ev.mul(&y[c], &row[b])?)?;
                }
                leaf.push(acc);
            }
            if let Some(adj) = adjusted.as_mut() {
                let eta: Vec<EncryptedValue> = ind.iter().map(|r| r[b].clone()).collect();
                let est = stochastic_fraction(ev, &eta, resample_m, &mut tree_rng.substream("leaf", b as u64))?;
                for v in &leaf {
                    adj.push(ev.mul(v, &est)?);
                }
            }
            counts.extend(leaf);
        }
    }
    Ok(FitTensor {
        forest_digest: forest.digest(),
        trees: forest.n_trees(),
        leaves,
        classes: data.classes.clone(),
        counts,
        adjusted,
        n_fit: n as u64,
        resample_m,
    })
}

/// Turns `v` into its prefix OR in `log2(len)` rounds:
/// round `l` sets `v[i] = v[i] + v[i - 2^l] - v[i] * v[i - 2^l]` for all `i >= 2^l` at once.
pub fn or_prefix(ev: &Evaluator, v: &mut [EncryptedValue]) -> Result<(), CrfError> {
    let mut shift = 1;
    while shift < v.len() {
        // descending order reads v[i - shift] before this round overwrites it
        for i in (shift..v.len()).rev() {
            let prod = ev.mul(&v[i], &v[i - shift])?;
            v[i] = ev.sub(&ev.add(&v[i], &v[i - shift])?, &prod)?;
        }
        shift *= 2;
    }
    Ok(())
}

/// Truncated-geometric estimate of `N / sum(eta)` from `m` draws of `eta` with
/// replacement: one plus the number of leading zeros, capped at `m + 1`.
pub fn stochastic_fraction(ev: &Evaluator, eta: &[EncryptedValue], m: u32, rng: &mut RngHandle) -> Result<EncryptedValue, CrfError> {
    if !m.is_power_of_two() {
        return Err(CrfError::Invalid(format!("resample size {m} is not a power of two")));
    }
    if eta.is_empty() {
        return Err(CrfError::Invalid("nothing to resample".into()));
    }
    let mut v: Vec<EncryptedValue> = (0..m).map(|_| eta[rng.random_range(0..eta.len())].clone()).collect();
    or_prefix(ev, &mut v)?;
    Ok(ev.sub(&EncryptedValue::from(m as i64 + 1), &ev.sum(&v)?)?)
}

/// Adds fits of the same forest elementwise, e.g. fits of disjoint shards.
pub fn combine(fits: &[FitTensor]) -> Result<FitTensor, CrfError> {
    let first = fits.first().ok_or_else(|| CrfError::Invalid("nothing to combine".into()))?;
    let ev = Evaluator::plaintext();
    let mut out = first.clone();
    for f in &fits[1..] {
        if f.forest_digest != first.forest_digest {
            return Err(CrfError::Provenance("forest digests differ".into()));
        }
        if (f.trees, f.leaves, &f.classes, f.resample_m, f.adjusted.is_some())
            != (first.trees, first.leaves, &first.classes, first.resample_m, first.adjusted.is_some())
        {
            return Err(CrfError::Provenance("tensor shapes or settings differ".into()));
        }
        let add = |a: &mut Vec<EncryptedValue>, b: &[EncryptedValue]| -> Result<(), CrfError> {
            for (x, y) in a.iter_mut().zip(b) {
                *x = ev.add(x, y)?;
            }
            Ok(())
        };
        add(&mut out.counts, &f.counts)?;
        if let (Some(a), Some(b)) = (out.adjusted.as_mut(), f.adjusted.as_ref()) {
            add(a, b)?;
        }
        out.n_fit += f.n_fit;
    }
    Ok(out)
}

/// Vote totals per class for each row of `data`, summed over trees.
pub fn predict(forest: &ForestSpec, fit: &FitTensor, data: &QuantizedDataset, ev: &Evaluator) -> Result<Vec<VoteVector>, CrfError> {
    check_layout(forest, data)?;
    if fit.forest_digest != forest.digest() {
        return Err(CrfError::Provenance("the fit was made with a different forest".into()));
    }
    if (fit.trees, fit.leaves) != (forest.n_trees(), forest.n_leaves()) {
        return Err(CrfError::Provenance("tensor shape differs from the forest".into()));
    }
    if let Some(p) = ev.params() {
        let xd = data.x.iter().flatten().map(EncryptedValue::depth).max().unwrap_or(0);
        let leaf = xd + forest.depth - 1;
        let needed = match (fit.is_encrypted(), data.is_encrypted()) {
            (true, true) => fit.depth().max(leaf) + 1,
            (true, false) => fit.depth(),
            (false, true) => leaf,
            (false, false) => 0,
        };
        if needed > 0 {
            let scale = fit.resample_m as u128 + 1;
            let votes = (fit.trees * fit.leaves) as u64;
            Budget {
                depth: needed,
                max_abs: fit.trees as u128 * fit.n_fit as u128 * if fit.adjusted.is_some() { scale } else { 1 },
                fan_in: fan_in(forest, fit.n_fit, fit.resample_m, votes),
            }
            .check(p)?;
        }
    }
    let votes = fit.votes();
    let n_classes = fit.classes.len();
    (0..data.n_rows())
        .map(|i| {
            let mut acc = vec![EncryptedValue::zero(); n_classes];
            for (t, tree) in forest.trees.iter().enumerate() {
                let ind = leaf_indicators(ev, tree, data, i)?;
                for (b, leaf) in ind.iter().enumerate() {
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a = ev.add(a, &ev.mul(&votes[fit.index(t, b, c)], leaf)?)?;
                    }
                }
            }
            Ok(acc)
        })
        .collect()
}

/// Normalises decrypted votes to a probability vector. All-zero votes give
/// the uniform distribution.
pub fn prob(votes: &[i64]) -> Result<Vec<f64>, CrfError> {
    if votes.is_empty() || votes.iter().any(|&v| v < 0) {
        return Err(CrfError::Invalid(format!("votes must be non-negative, got {votes:?}")));
    }
    let total: f64 = votes.iter().map(|&v| v as f64).sum();
    if total == 0.0 {
        log::warn!("all votes are zero; returning the uniform distribution");
        return Ok(vec![1.0 / votes.len() as f64; votes.len()]);
    }
    Ok(votes.iter().map(|&v| v as f64 / total).collect())
}
