use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::{Column, Table};
use super::EncodeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    /// A 0/1 variable: two bins stored as a single indicator column.
    Binary,
    /// Ordered bins given by upper-inclusive cut points.
    Ordinal,
    /// One bin per observed level, in sorted order.
    Categorical,
}

/// The partition of one variable's support.
///
/// Ordinal bin `k` holds values in `(cuts[k-1], cuts[k]]`; values below the first
/// or above the last cut fall in the end bins, so out-of-range test values clamp.
#[derive(Clone, Debug, PartialEq)]
pub struct VarSpec {
    pub name: String,
    pub kind: VarKind,
    pub cuts: Vec<f64>,
    pub levels: Vec<String>,
}

impl VarSpec {
    pub fn binary(name: &str) -> Self {
        VarSpec { name: name.into(), kind: VarKind::Binary, cuts: vec![], levels: vec![] }
    }

    pub fn ordinal(name: &str, cuts: Vec<f64>) -> Self {
        VarSpec { name: name.into(), kind: VarKind::Ordinal, cuts, levels: vec![] }
    }

    pub fn categorical(name: &str, levels: Vec<String>) -> Self {
        VarSpec { name: name.into(), kind: VarKind::Categorical, cuts: vec![], levels }
    }

    pub fn n_bins(&self) -> usize {
        match self.kind {
            VarKind::Binary => 2,
            VarKind::Ordinal => self.cuts.len() + 1,
            VarKind::Categorical => self.levels.len(),
        }
    }

    /// Number of Method-1 indicator columns.
    pub fn width(&self) -> usize {
        match self.kind {
            VarKind::Binary => 1,
            _ => self.n_bins(),
        }
    }

    pub fn bin_of_number(&self, v: f64) -> Result<usize, EncodeError> {
        match self.kind {
            VarKind::Binary if v == 0.0 || v == 1.0 => Ok(v as usize),
            VarKind::Ordinal if v.is_finite() => Ok(self.cuts.iter().take_while(|&&c| v > c).count()),
            VarKind::Categorical => self.bin_of_level(&v.to_string()),
            _ => Err(EncodeError::OutsideBins { var: self.name.clone(), value: v.to_string() }),
        }
    }

    pub fn bin_of_level(&self, s: &str) -> Result<usize, EncodeError> {
        match self.kind {
            VarKind::Categorical => self
                .levels
                .iter()
                .position(|l| l == s)
                .ok_or_else(|| EncodeError::OutsideBins { var: self.name.clone(), value: s.into() }),
            _ => s
                .parse::<f64>()
                .map_err(|_| EncodeError::OutsideBins { var: self.name.clone(), value: s.into() })
                .and_then(|v| self.bin_of_number(v)),
        }
    }
}

/// Partitions for every predictor plus the response classes, shared by the
/// training and test encodings.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionSpec {
    pub vars: Vec<VarSpec>,
    pub response: String,
    pub classes: Vec<String>,
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n-1)p`), the default of most statistics packages.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Sorted class labels; numerically when every label is a number.
pub fn class_order(labels: &[String]) -> Vec<String> {
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.iter().all(|c| c.parse::<f64>().is_ok()) {
        classes.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    classes
}

impl PartitionSpec {
    /// Derives partitions from training data.
    ///
    /// Numeric columns holding only 0 and 1 become binary. Numeric columns with at
    /// most `bins` distinct values get one bin per value. Other numeric columns
    /// are cut at the `k/bins` empirical quantiles; tied quantiles collapse bins.
    /// Non-numeric columns get one bin per level. Returns warnings alongside.
    pub fn build(table: &Table, bins: usize) -> Result<(PartitionSpec, Vec<String>), EncodeError> {
        if bins < 2 {
            return Err(EncodeError::Shape("need at least two bins per variable".into()));
        }
        if table.n_rows() == 0 {
            return Err(EncodeError::Shape("no observations".into()));
        }
        let mut warnings = Vec::new();
        let mut vars = Vec::new();
        for (name, col) in table.names.iter().zip(&table.columns) {
            let spec = match col {
                Column::Numeric(v) => {
                    let distinct = sorted_unique(v.clone());
                    if distinct.len() == 2 && distinct == [0.0, 1.0] {
                        VarSpec::binary(name)
                    } else if distinct.len() <= bins {
                        VarSpec::ordinal(name, distinct[..distinct.len() - 1].to_vec())
                    } else {
                        let mut sorted = v.clone();
                        sorted.sort_by(f64::total_cmp);
                        let raw: Vec<f64> = (1..bins).map(|k| quantile_type7(&sorted, k as f64 / bins as f64)).collect();
                        let mut cuts = raw.clone();
                        cuts.dedup();
                        // a cut at the maximum would leave an empty top bin
                        cuts.retain(|&c| c < sorted[sorted.len() - 1]);
                        if cuts.len() < raw.len() {
                            warnings.push(format!("{name}: tied quantiles merged, {} bins instead of {bins}", cuts.len() + 1));
                        }
                        VarSpec::ordinal(name, cuts)
                    }
                }
                Column::Categorical(v) => {
                    let mut levels = v.clone();
                    levels.sort();
                    levels.dedup();
                    VarSpec::categorical(name, levels)
                }
            };
            if spec.n_bins() < 2 {
                warnings.push(format!("{name}: constant column, single bin"));
            }
            vars.push(spec);
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        let classes = table.labels.as_ref().map(|l| class_order(l)).unwrap_or_default();
        Ok((PartitionSpec { vars, response: table.response_name.clone(), classes }, warnings))
    }

    pub fn var(&self, name: &str) -> Option<&VarSpec> {
        self.vars.iter().find(|v| v.name == name)
    }

    /// Plain-text form, one tab-separated line per entry:
    ///
    /// ```text
    /// # hestats partition spec v1
    /// response  <name>  <class>...
    /// binary    <name>
    /// ordinal   <name>  <cut>...
    /// categorical <name> <level>...
    /// ```
    ///
    /// Tabs, newlines and backslashes inside names are escaped as `\t`, `\n`, `\\`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# hestats partition spec v1\n");
        let line = |s: &mut String, head: &str, name: &str, rest: Vec<String>| {
            let _ = write!(s, "{head}\t{}", escape(name));
            for r in rest {
                let _ = write!(s, "\t{r}");
            }
            s.push('\n');
        };
        line(&mut s, "response", &self.response, self.classes.iter().map(|c| escape(c)).collect());
        for v in &self.vars {
            match v.kind {
                VarKind::Binary => line(&mut s, "binary", &v.name, vec![]),
                VarKind::Ordinal => line(&mut s, "ordinal", &v.name, v.cuts.iter().map(|c| c.to_string()).collect()),
                VarKind::Categorical => line(&mut s, "categorical", &v.name, v.levels.iter().map(|l| escape(l)).collect()),
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<PartitionSpec, EncodeError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |n: usize, msg: &str| EncodeError::Parse { line: n + 1, msg: msg.to_string() };
        match lines.next() {
            Some((_, "# hestats partition spec v1")) => {}
            Some((n, _)) => return Err(bad(n, "missing spec header")),
            None => return Err(bad(0, "empty spec")),
        }
        let mut response = None;
        let mut vars = Vec::new();
        for (n, l) in lines {
            let fields: Vec<&str> = l.split('\t').collect();
            if fields.len() < 2 {
                return Err(bad(n, "expected a kind and a name"));
            }
            let name = unescape(fields[1]);
            let rest = &fields[2..];
            match fields[0] {
                "response" => response = Some((name, rest.iter().map(|s| unescape(s)).collect())),
                "binary" if rest.is_empty() => vars.push(VarSpec::binary(&name)),
                "ordinal" => {
                    let cuts: Vec<f64> = rest
                        .iter()
                        .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
                        .collect::<Option<_>>()
                        .ok_or_else(|| bad(n, "cut points must be finite numbers"))?;
                    if cuts.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(bad(n, "cut points must increase"));
                    }
                    vars.push(VarSpec::ordinal(&name, cuts));
                }
                "categorical" => vars.push(VarSpec::categorical(&name, rest.iter().map(|s| unescape(s)).collect())),
                other => return Err(bad(n, &format!("unknown entry `{other}`"))),
            }
        }
        let (response, classes) = response.ok_or_else(|| bad(0, "missing response line"))?;
        Ok(PartitionSpec { vars, response, classes })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncodeError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PartitionSpec, EncodeError> {
        PartitionSpec::from_text(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

pub(crate) fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(o) => out.push(o),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}
