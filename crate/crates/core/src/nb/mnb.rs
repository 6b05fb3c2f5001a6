use serde::{Deserialize, Serialize};

use super::{binary_response, check_budget, max_depth, mnb_fan_in, meta_of, open_all, to_f64, ModelShape, NbError};
use crate::encode::{Method, QuantizedDataset};
use crate::fv::io::Bundle;
use crate::fv::{Budget, EncryptedValue, Evaluator, SecretKey};

/// Multinomial naive Bayes count tables.
///
/// `tables[j][k] = [n(x_j = k, y = 0) + laplace, n(x_j = k, y = 1) + laplace]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MnbFit {
    pub shape: ModelShape,
    pub laplace: u32,
    pub n: u64,
    /// `(N - sum y, sum y)`.
    pub class_counts: [EncryptedValue; 2],
    pub tables: Vec<Vec<[EncryptedValue; 2]>>,
}

/// Per row and predictor, the table entries selected by the row's bin.
#[derive(Clone, Debug, PartialEq)]
pub struct MnbRaw {
    pub laplace: u32,
    pub n: u64,
    pub bins: Vec<usize>,
    pub class_counts: [EncryptedValue; 2],
    pub selected: Vec<Vec<[EncryptedValue; 2]>>,
}

fn bin_cells(ev: &Evaluator, block: &[EncryptedValue]) -> Result<Vec<EncryptedValue>, NbError> {
    if block.len() == 1 {
        Ok(vec![ev.sub(&EncryptedValue::from(1), &block[0])?, block[0].clone()])
    } else {
        Ok(block.to_vec())
    }
}

fn one_hot(data: &QuantizedDataset) -> Result<(), NbError> {
    if data.method != Method::OneHot {
        return Err(NbError::Invalid("multinomial naive Bayes needs indicator (Method 1) encoding".into()));
    }
    Ok(())
}

/// Counts every (bin, class) pair. Depth one above the data.
pub fn mnb_fit(ev: &Evaluator, data: &QuantizedDataset, laplace: u32) -> Result<MnbFit, NbError> {
    one_hot(data)?;
    binary_response(data)?;
    let n = data.n_rows();
    let base = max_depth(data.x.iter().chain(&data.y).flatten());
    let fan_in = mnb_fan_in(n as u64, &ModelShape::of(data));
    check_budget(ev, data.is_encrypted(), Budget { depth: base + 1, max_abs: n as u128 + laplace as u128, fan_in })?;
    let lap = EncryptedValue::from(laplace as i64);
    let class_counts = [ev.sum(data.y.iter().map(|r| &r[0]))?, ev.sum(data.y.iter().map(|r| &r[1]))?];
    let mut tables = Vec::with_capacity(data.layout.len());
    for (j, l) in data.layout.iter().enumerate() {
        let mut t = vec![[lap.clone(), lap.clone()]; l.n_bins];
        for (i, y) in data.y.iter().enumerate() {
            for (k, x) in bin_cells(ev, data.block(i, j))?.iter().enumerate() {
                for c in 0..2 {
                    t[k][c] = ev.add(&t[k][c], &ev.mul(x, &y[c])?)?;
                }
            }
        }
        tables.push(t);
    }
    Ok(MnbFit { shape: ModelShape::of(data), laplace, n: n as u64, class_counts, tables })
}

/// Selects `sum_k x*_jk * table[j][k][c]` for every row, predictor and class.
pub fn mnb_predict_raw(ev: &Evaluator, fit: &MnbFit, data: &QuantizedDataset) -> Result<MnbRaw, NbError> {
    one_hot(data)?;
    fit.shape.check(data)?;
    let fit_enc = fit.tables.iter().flatten().flatten().any(EncryptedValue::is_cipher);
    let td = max_depth(fit.tables.iter().flatten().flatten());
    let xd = max_depth(data.x.iter().flatten());
    let needed = match (fit_enc, data.is_encrypted()) {
        (true, true) => td.max(xd) + 1,
        (true, false) => td,
        (false, true) => xd,
        (false, false) => 0,
    };
    let budget = Budget { depth: needed, max_abs: fit.n as u128 + fit.laplace as u128, fan_in: mnb_fan_in(fit.n, &fit.shape) };
    check_budget(ev, fit_enc || data.is_encrypted(), budget)?;
    let selected = (0..data.n_rows())
        .map(|i| {
            fit.tables
                .iter()
                .enumerate()
                .map(|(j, table)| {
                    let mut s = [EncryptedValue::zero(), EncryptedValue::zero()];
                    for (x, entry) in bin_cells(ev, data.block(i, j))?.iter().zip(table) {
                        for c in 0..2 {
                            s[c] = ev.add(&s[c], &ev.mul(x, &entry[c])?)?;
                        }
                    }
                    Ok(s)
                })
                .collect::<Result<Vec<_>, NbError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(MnbRaw {
        laplace: fit.laplace,
        n: fit.n,
        bins: fit.shape.layout.iter().map(|l| l.n_bins).collect(),
        class_counts: fit.class_counts.clone(),
        selected,
    })
}

/// `P(y = 1 | x*) = F_1 / (F_0 + F_1)` with
/// `F_c = (n_c / N) * prod_j selected_jc / (n_c + laplace * M_j)`.
pub fn mnb_assemble(raw: &MnbRaw) -> Result<Vec<f64>, NbError> {
    let n = raw.n as f64;
    let nc = [to_f64(&raw.class_counts[0])?, to_f64(&raw.class_counts[1])?];
    let lap = raw.laplace as f64;
    raw.selected
        .iter()
        .map(|row| {
            let mut log_f = [0.0; 2];
            for (c, lf) in log_f.iter_mut().enumerate() {
                *lf = (nc[c] / n).ln();
                for (s, &m) in row.iter().zip(&raw.bins) {
                    let den = nc[c] + lap * m as f64;
                    *lf += if den > 0.0 { (to_f64(&s[c])? / den).ln() } else { f64::NEG_INFINITY };
                }
            }
            match log_f {
                [f0, f1] if f0 == f64::NEG_INFINITY && f1 == f64::NEG_INFINITY => {
                    Err(NbError::Degenerate("both class factors are zero".into()))
                }
                [f0, f1] => Ok(1.0 / (1.0 + (f0 - f1).exp())),
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct FitMeta {
    kind: String,
    laplace: u32,
    n: u64,
    #[serde(flatten)]
    shape: ModelShape,
}

#[derive(Serialize, Deserialize)]
struct RawMeta {
    kind: String,
    laplace: u32,
    n: u64,
    bins: Vec<usize>,
    rows: usize,
}

impl MnbFit {
    pub fn decrypt(&self, sk: &SecretKey) -> Result<MnbFit, NbError> {
        let mut out = self.clone();
        open_all(&mut out.class_counts, sk)?;
        for e in out.tables.iter_mut().flatten() {
            open_all(e, sk)?;
        }
        Ok(out)
    }

    /// Shape `[bins + 1, 2]`: a header row `[n0, n1]`, then each table row
    /// `[c0, c1]`, variable by variable.
    pub fn to_bundle(&self) -> Bundle {
        let meta = FitMeta { kind: "mnb-fit".into(), laplace: self.laplace, n: self.n, shape: self.shape.clone() };
        let mut cells = self.class_counts.to_vec();
        cells.extend(self.tables.iter().flatten().flatten().cloned());
        let bins: usize = self.tables.iter().map(Vec::len).sum();
        Bundle { meta: serde_json::to_string(&meta).expect("metadata serialises"), shape: vec![bins + 1, 2], cells }
    }

    pub fn from_bundle(b: &Bundle) -> Result<MnbFit, NbError> {
        let meta: FitMeta = meta_of(&b.meta, "mnb-fit")?;
        let bins: usize = meta.shape.layout.iter().map(|l| l.n_bins).sum();
        if b.shape != [bins + 1, 2] || b.cells.len() != 2 + 2 * bins {
            return Err(NbError::Corrupt(format!("shape {:?} does not match the layout", b.shape)));
        }
        let mut rest = b.cells[2..].chunks(2).map(|w| [w[0].clone(), w[1].clone()]);
        let tables = meta.shape.layout.iter().map(|l| rest.by_ref().take(l.n_bins).collect()).collect();
        Ok(MnbFit {
            shape: meta.shape,
            laplace: meta.laplace,
            n: meta.n,
            class_counts: [b.cells[0].clone(), b.cells[1].clone()],
            tables,
        })
    }
}

impl MnbRaw {
    pub fn decrypt(&self, sk: &SecretKey) -> Result<MnbRaw, NbError> {
        let mut out = self.clone();
        open_all(&mut out.class_counts, sk)?;
        for s in out.selected.iter_mut().flatten() {
            open_all(s, sk)?;
        }
        Ok(out)
    }

    /// Shape `[rows * P + 1, 2]`: a header row `[n0, n1]`, then the selections.
    pub fn to_bundle(&self) -> Bundle {
        let meta = RawMeta {
            kind: "mnb-raw".into(),
            laplace: self.laplace,
            n: self.n,
            bins: self.bins.clone(),
            rows: self.selected.len(),
        };
        let mut cells = self.class_counts.to_vec();
        cells.extend(self.selected.iter().flatten().flatten().cloned());
        Bundle {
            meta: serde_json::to_string(&meta).expect("metadata serialises"),
            shape: vec![self.selected.len() * self.bins.len() + 1, 2],
            cells,
        }
    }

    pub fn from_bundle(b: &Bundle) -> Result<MnbRaw, NbError> {
        let meta: RawMeta = meta_of(&b.meta, "mnb-raw")?;
        let (rows, p) = (meta.rows, meta.bins.len());
        if b.shape != [rows * p + 1, 2] || b.cells.len() != 2 * (rows * p + 1) {
            return Err(NbError::Corrupt("cell count does not match the shape".into()));
        }
        let pairs: Vec<[EncryptedValue; 2]> = b.cells[2..].chunks(2).map(|w| [w[0].clone(), w[1].clone()]).collect();
        Ok(MnbRaw {
            laplace: meta.laplace,
            n: meta.n,
            bins: meta.bins,
            class_counts: [b.cells[0].clone(), b.cells[1].clone()],
            selected: pairs.chunks(p.max(1)).take(rows).map(<[_]>::to_vec).collect(),
        })
    }
}
