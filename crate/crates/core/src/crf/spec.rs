use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::{CrfError, MAX_DEPTH};
use crate::encode::{escape, unescape, VarKind, VarLayout};
use crate::ring::RngHandle;

const MAX_DRAWS: u32 = 256;

/// A predictor as the forest sees it: a name, a kind and a bin count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForestVar {
    pub name: String,
    pub kind: VarKind,
    pub n_bins: usize,
}

impl ForestVar {
    pub fn from_layout(layout: &[VarLayout]) -> Vec<ForestVar> {
        layout.iter().map(|l| ForestVar { name: l.name.clone(), kind: l.kind, n_bins: l.n_bins }).collect()
    }
}

/// One split: a variable and the two disjoint bin sets covering its bins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub var: usize,
    pub sides: [Vec<usize>; 2],
}

/// `levels[l - 1][b - 1]` is the split of branch `b` at level `l`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeSpec {
    pub subset: Vec<usize>,
    pub levels: Vec<Vec<Split>>,
}

impl TreeSpec {
    pub fn depth(&self) -> u32 {
        self.levels.len() as u32
    }

    /// Leaf (1-based) reached by a row whose variables fall in `bins`, found by
    /// walking down from the root.
    pub fn leaf_of(&self, bins: &[usize]) -> usize {
        let mut branch = 0;
        for level in &self.levels {
            let split = &level[branch];
            let side = usize::from(!split.sides[0].contains(&bins[split.var]));
            branch = 2 * branch + side;
        }
        branch + 1
    }
}

/// A grown forest. It can be regrown exactly from its seed, variables, size and depth.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestSpec {
    pub seed: u64,
    pub depth: u32,
    pub subset_fraction: f64,
    pub vars: Vec<ForestVar>,
    pub trees: Vec<TreeSpec>,
}

/// Grows `trees` trees of depth `depth`.
///
/// Each tree draws its own predictor subset of size `ceil(subset_fraction * P)`.
/// Every split picks a variable uniformly from the subset; ordinal and binary
/// variables are cut at a uniformly chosen interior boundary, categorical ones
/// send each bin to a side by a fair coin until both sides are non-empty.
pub fn grow(vars: Vec<ForestVar>, trees: usize, depth: u32, seed: u64, subset_fraction: f64) -> Result<ForestSpec, CrfError> {
    if vars.is_empty() {
        return Err(CrfError::Invalid("a forest needs at least one variable".into()));
    }
    if trees == 0 || !(1..=MAX_DEPTH).contains(&depth) {
        return Err(CrfError::Invalid(format!("need T >= 1 and 1 <= L <= {MAX_DEPTH}, got T = {trees}, L = {depth}")));
    }
    if !(subset_fraction > 0.0 && subset_fraction <= 1.0) {
        return Err(CrfError::Invalid(format!("subset fraction {subset_fraction} outside (0, 1]")));
    }
    let root = RngHandle::new(seed);
    let p = vars.len();
    let size = ((subset_fraction * p as f64).ceil() as usize).clamp(1, p);
    let mut out = Vec::with_capacity(trees);
    for t in 0..trees {
        let mut rng = root.substream("grow-tree", t as u64);
        let mut subset = sample(&mut rng, p, size).into_vec();
        subset.sort_unstable();
        let mut levels = Vec::with_capacity(depth as usize);
        for l in 0..depth {
            let splits = (0..1usize << l).map(|_| draw_split(&vars, &subset, &mut rng)).collect::<Result<_, _>>()?;
            levels.push(splits);
        }
        out.push(TreeSpec { subset, levels });
    }
    Ok(ForestSpec { seed, depth, subset_fraction, vars, trees: out })
}

fn draw_split(vars: &[ForestVar], subset: &[usize], rng: &mut RngHandle) -> Result<Split, CrfError> {
    for _ in 0..MAX_DRAWS {
        let var = subset[rng.random_range(0..subset.len())];
        let m = vars[var].n_bins;
        if m < 2 {
            continue;
        }
        let sides = match vars[var].kind {
            VarKind::Categorical => loop {
                let (a, b): (Vec<usize>, Vec<usize>) = (0..m).partition(|_| rng.random_bool(0.5));
                if !a.is_empty() && !b.is_empty() {
                    break [a, b];
                }
            },
            VarKind::Binary | VarKind::Ordinal => {
                let cut = rng.random_range(1..m);
                [(0..cut).collect(), (cut..m).collect()]
            }
        };
        return Ok(Split { var, sides });
    }
    Err(CrfError::NoSplittable(MAX_DRAWS))
}

/// Branch `g` at level `l` and side `h` (1 or 2) on the path to leaf `b`,
/// for a tree of depth `depth`. Everything is 1-based.
pub fn leaf_path_index(b: u64, l: u32, depth: u32) -> Result<(u64, u64), CrfError> {
    if !(1..=MAX_DEPTH).contains(&depth) || !(1..=depth).contains(&l) || b == 0 || b > 1 << depth {
        return Err(CrfError::Invalid(format!("no leaf {b} at level {l} of a depth-{depth} tree")));
    }
    let span = 1u64 << (depth + 1 - l);
    let g = b.div_ceil(span);
    let h = ((b - 1) % span) / (span / 2) + 1;
    Ok((g, h))
}

const HEADER: &str = "# hestats forest v1";

impl ForestSpec {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_leaves(&self) -> usize {
        1 << self.depth
    }

    /// Text form. Splits are listed explicitly so the forest can be checked
    /// without rerunning the generator:
    ///
    /// ```text
    /// # hestats forest v1
    /// seed    <u64>
    /// depth   <L>
    /// subset  <fraction>
    /// var     <name>  <kind>  <bins>
    /// tree    <t>     <subset indices, comma separated>
    /// split   <t>     <l>     <b>     <var>   <bins of side 1>|<bins of side 2>
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\nseed\t{}\ndepth\t{}\nsubset\t{}\n", self.seed, self.depth, self.subset_fraction);
        for v in &self.vars {
            let kind = match v.kind {
                VarKind::Binary => "binary",
                VarKind::Ordinal => "ordinal",
                VarKind::Categorical => "categorical",
            };
            let _ = writeln!(s, "var\t{}\t{kind}\t{}", escape(&v.name), v.n_bins);
        }
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree\t{}\t{}", t + 1, join(&tree.subset));
            for (l, level) in tree.levels.iter().enumerate() {
                for (b, sp) in level.iter().enumerate() {
                    let _ = writeln!(s, "split\t{}\t{}\t{}\t{}\t{}|{}", t + 1, l + 1, b + 1, sp.var, join(&sp.sides[0]), join(&sp.sides[1]));
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<ForestSpec, CrfError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |n: usize, msg: &str| CrfError::Parse { line: n + 1, msg: msg.to_string() };
        match lines.next() {
            Some((_, HEADER)) => {}
            Some((n, _)) => return Err(bad(n, "missing forest header")),
            None => return Err(bad(0, "empty forest")),
        }
        let (mut seed, mut depth, mut subset_fraction) = (None, None, None);
        let mut vars = Vec::new();
        let mut trees: Vec<TreeSpec> = Vec::new();
        let list = |n: usize, s: &str| -> Result<Vec<usize>, CrfError> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',').map(|x| x.parse().map_err(|_| bad(n, "expected a list of indices"))).collect()
        };
        for (n, line) in lines {
            let f: Vec<&str> = line.split('\t').collect();
            let num = |i: usize| -> Result<u64, CrfError> {
                f.get(i).and_then(|x| x.parse().ok()).ok_or_else(|| bad(n, "expected an integer field"))
            };
            match (f[0], f.len()) {
                ("seed", 2) => seed = Some(num(1)?),
                ("depth", 2) => depth = Some(num(1)? as u32),
                ("subset", 2) => subset_fraction = Some(f[1].parse::<f64>().map_err(|_| bad(n, "bad subset fraction"))?),
                ("var", 4) => {
                    let kind = match f[2] {
                        "binary" => VarKind::Binary,
                        "ordinal" => VarKind::Ordinal,
                        "categorical" => VarKind::Categorical,
                        _ => return Err(bad(n, "unknown variable kind")),
                    };
                    vars.push(ForestVar { name: unescape(f[1]), kind, n_bins: num(3)? as usize });
                }
                ("tree", 3) => {
                    if num(1)? as usize != trees.len() + 1 {
                        return Err(bad(n, "trees out of order"));
                    }
                    trees.push(TreeSpec { subset: list(n, f[2])?, levels: Vec::new() });
                }
                ("split", 6) => {
                    let (t, l, b) = (num(1)? as usize, num(2)? as usize, num(3)? as usize);
                    let nt = trees.len();
                    let tree = trees.last_mut().filter(|_| t == nt).ok_or_else(|| bad(n, "split outside its tree"))?;
                    if l == tree.levels.len() + 1 && b == 1 {
                        tree.levels.push(Vec::new());
                    }
                    let nl = tree.levels.len();
                    let level = tree.levels.last_mut().filter(|lv| l == nl && b == lv.len() + 1);
                    let level = level.ok_or_else(|| bad(n, "splits out of order"))?;
                    let (a, c) = f[5].split_once('|').ok_or_else(|| bad(n, "expected two sides"))?;
                    level.push(Split { var: num(4)? as usize, sides: [list(n, a)?, list(n, c)?] });
                }
                _ => return Err(bad(n, &format!("unrecognised line `{}`", f[0]))),
            }
        }
        let missing = |what: &str| CrfError::Parse { line: 0, msg: format!("missing {what}") };
        let spec = ForestSpec {
            seed: seed.ok_or_else(|| missing("seed"))?,
            depth: depth.ok_or_else(|| missing("depth"))?,
            subset_fraction: subset_fraction.ok_or_else(|| missing("subset"))?,
            vars,
            trees,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks shape and that every split partitions its variable's bins.
    pub fn validate(&self) -> Result<(), CrfError> {
        let bad = |msg: String| Err(CrfError::Corrupt(msg));
        if !(1..=MAX_DEPTH).contains(&self.depth) || self.trees.is_empty() || self.vars.is_empty() {
            return bad("empty forest or depth out of range".into());
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.levels.len() != self.depth as usize {
                return bad(format!("tree {} has {} levels", t + 1, tree.levels.len()));
            }
            if tree.subset.is_empty() || tree.subset.iter().any(|&v| v >= self.vars.len()) {
                return bad(format!("tree {} has an invalid predictor subset", t + 1));
            }
            for (l, level) in tree.levels.iter().enumerate() {
                if level.len() != 1 << l {
                    return bad(format!("tree {} level {} has {} splits", t + 1, l + 1, level.len()));
                }
                for sp in level {
                    let Some(var) = self.vars.get(sp.var) else {
                        return bad(format!("split on unknown variable {}", sp.var));
                    };
                    let mut seen = vec![false; var.n_bins];
                    for &k in sp.sides.iter().flatten() {
                        if k >= var.n_bins || std::mem::replace(&mut seen[k], true) {
                            return bad(format!("split on `{}` is not a partition of its bins", var.name));
                        }
                    }
                    if seen.contains(&false) || sp.sides.iter().any(Vec::is_empty) {
                        return bad(format!("split on `{}` is not a partition of its bins", var.name));
                    }
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the text form, used to tie fitted tensors to their forest.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CrfError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ForestSpec, CrfError> {
        ForestSpec::from_text(&std::fs::read_to_string(path)?)
    }
}
