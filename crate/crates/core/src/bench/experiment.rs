use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::{auc, confusion, generate, stratified_split, BenchError, Generator};
use crate::crf::{self, ForestVar};
use crate::encode::{class_order, encode, Method, PartitionSpec, QuantizedDataset, Table};
use crate::fv::io::save_bundle;
use crate::fv::{keygen, make_params, params_for, Budget, EncryptedValue, Evaluator, KeySet, SchemeParams};
use crate::nb;
use crate::ring::RngHandle;

/// Where an experiment's rows come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, response: String },
    Synthetic { kind: Generator, rows: usize, predictors: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Crf { trees: usize, depth: u32, resample_m: u32, subset_fraction: f64 },
    Snb { paired: bool, centered: bool },
    Mnb { laplace: u32 },
}

/// How encrypted runs pick their scheme parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamChoice {
    /// Smallest tier with at least this many bits of estimated security.
    Auto { lambda: u32 },
    Explicit { degree: usize, t: u64, q_bits: u32 },
}

/// One benchmark configuration: `replications` stratified splits, each
/// encoded, optionally encrypted, fitted, predicted and scored.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub data: DataSource,
    pub model: ModelKind,
    pub bins: usize,
    pub split: f64,
    pub replications: usize,
    pub seed: u64,
    pub encrypt: bool,
    pub params: ParamChoice,
    pub threshold: f64,
    pub jobs: usize,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            data: DataSource::Synthetic { kind: Generator::Separable, rows: 200, predictors: 4 },
            model: ModelKind::Crf { trees: 100, depth: 3, resample_m: 8, subset_fraction: 1.0 },
            bins: 4,
            split: 0.8,
            replications: 20,
            seed: 1,
            encrypt: false,
            params: ParamChoice::Auto { lambda: 80 },
            threshold: 0.5,
            jobs: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, BenchError> {
    v.parse().map_err(|_| BenchError::Config { line, msg: format!("bad value `{v}` for `{key}`") })
}

impl Experiment {
    /// Reads a flat `key = value` file. Blank lines and `#` comments are
    /// skipped; unknown keys are errors. See the README for the key list.
    pub fn from_config(text: &str) -> Result<Experiment, BenchError> {
        let mut kv = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| BenchError::Config { line: i + 1, msg: "expected key = value".into() })?;
            kv.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| kv.iter().rev().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));
        macro_rules! or {
            ($key:expr, $default:expr) => {
                match get($key) {
                    Some((l, v)) => parse(l, $key, v)?,
                    None => $default,
                }
            };
        }
        const KEYS: &[&str] = &[
            "dataset", "response", "rows", "predictors", "model", "trees", "depth", "resample", "subset", "paired",
            "centered", "laplace", "bins", "split", "replications", "seed", "encrypt", "lambda", "ring_degree",
            "plain_modulus", "q_bits", "threshold", "jobs",
        ];
        if let Some((l, k, _)) = kv.iter().find(|(_, k, _)| !KEYS.contains(&k.as_str())) {
            return Err(BenchError::Config { line: *l, msg: format!("unknown key `{k}`") });
        }
        let d = Experiment::default();
        let data = match get("dataset") {
            None => d.data.clone(),
            Some((l, v)) => match v.strip_prefix("synth:") {
                Some(kind) => DataSource::Synthetic {
                    kind: kind.parse().map_err(|e: BenchError| BenchError::Config { line: l, msg: e.to_string() })?,
                    rows: or!("rows", 200),
                    predictors: or!("predictors", 4),
                },
                None => DataSource::Csv { path: v.into(), response: or!("response", "y".to_string()) },
            },
        };
        let model = match get("model").map(|(l, v)| (l, v.to_string())).unwrap_or((0, "crf".into())) {
            (_, m) if m == "crf" => ModelKind::Crf {
                trees: or!("trees", 100),
                depth: or!("depth", 3),
                resample_m: or!("resample", 8),
                subset_fraction: or!("subset", 1.0),
            },
            (_, m) if m == "snb" => {
                let paired = or!("paired", true);
                ModelKind::Snb { paired, centered: or!("centered", !paired) }
            }
            (_, m) if m == "mnb" => ModelKind::Mnb { laplace: or!("laplace", 1) },
            (l, m) => return Err(BenchError::Config { line: l, msg: format!("unknown model `{m}`") }),
        };
        let params = match get("ring_degree") {
            Some(_) => ParamChoice::Explicit {
                degree: or!("ring_degree", 0),
                t: or!("plain_modulus", 0),
                q_bits: or!("q_bits", 0),
            },
            None => ParamChoice::Auto { lambda: or!("lambda", 80) },
        };
        let exp = Experiment {
            data,
            model,
            bins: or!("bins", d.bins),
            split: or!("split", d.split),
            replications: or!("replications", d.replications),
            seed: or!("seed", d.seed),
            encrypt: or!("encrypt", d.encrypt),
            params,
            threshold: or!("threshold", d.threshold),
            jobs: or!("jobs", d.jobs),
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(BenchError::Invalid(format!("split fraction {} must lie strictly between 0 and 1", self.split)));
        }
        if self.replications == 0 || self.jobs == 0 {
            return Err(BenchError::Invalid("replications and jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load_table(&self) -> Result<Table, BenchError> {
        match &self.data {
            DataSource::Csv { path, response } => Ok(Table::read_csv(path, response)?),
            DataSource::Synthetic { kind, rows, predictors } => generate(*kind, *rows, *predictors, self.seed),
        }
    }

    fn method(&self) -> Method {
        match self.model {
            ModelKind::Snb { centered, .. } => Method::Ordinal { centered },
            _ => Method::OneHot,
        }
    }

    /// What fit plus prediction on `data` needs from the scheme parameters.
    fn budget(&self, data: &QuantizedDataset) -> Result<Budget, BenchError> {
        Ok(match self.model {
            ModelKind::Crf { trees, depth, resample_m, .. } => {
                // only the forest's shape matters here, not its splits
                let forest = crf::grow(ForestVar::from_layout(&data.layout), trees, depth, 0, 1.0)?;
                crf::budget(&forest, data.n_rows() as u64, resample_m)
            }
            ModelKind::Snb { paired, .. } => nb::snb_budget(data, paired),
            ModelKind::Mnb { laplace } => nb::mnb_budget(data, laplace),
        })
    }

    /// Scheme parameters large enough for every replication: the budget is
    /// taken over the whole table, which bounds any training subset.
    pub fn scheme_params(&self, table: &Table) -> Result<SchemeParams, BenchError> {
        let (spec, _) = PartitionSpec::build(table, self.bins)?;
        let data = encode(table, &spec, self.method())?;
        let b = self.budget(&data)?;
        let max_abs = u64::try_from(b.max_abs).map_err(|_| BenchError::Invalid("coefficient bound exceeds 64 bits".into()))?;
        Ok(match self.params {
            ParamChoice::Auto { lambda } => params_for(lambda, max_abs, b.depth, b.fan_in)?,
            ParamChoice::Explicit { degree, t, q_bits } => make_params(degree, t, q_bits, crate::fv::DEFAULT_SIGMA)?,
        })
    }
}

/// Outcome of one replication.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Replication {
    pub index: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub auc: f64,
    /// `[tp, fp, tn, fn]` at the report threshold.
    pub confusion: [u64; 4],
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    /// Largest serialized artifact of the replication (fit or predictions).
    pub peak_bytes: usize,
    /// Class-1 probabilities of the test rows, in row order.
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub model: String,
    pub encrypted: bool,
    pub params: Option<String>,
    pub threshold: f64,
    pub replications: Vec<Replication>,
}

impl MetricsReport {
    pub fn mean_auc(&self) -> f64 {
        self.replications.iter().map(|r| r.auc).sum::<f64>() / self.replications.len().max(1) as f64
    }

    pub fn min_auc(&self) -> f64 {
        self.replications.iter().map(|r| r.auc).fold(f64::INFINITY, f64::min)
    }

    /// The report with wall-clock fields zeroed, for comparing reruns.
    pub fn without_timings(&self) -> MetricsReport {
        let mut r = self.clone();
        for rep in &mut r.replications {
            rep.fit_seconds = 0.0;
            rep.predict_seconds = 0.0;
        }
        r
    }

    /// Fixed-width table. Timings are raw wall-clock seconds; the `/100`
    /// columns scale them to 100 rows (training rows for fit, test rows for
    /// prediction) from a single run, with no warm-up.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "model {}  encrypted {}  params {}  threshold {}\n",
            self.model,
            self.encrypted,
            self.params.as_deref().unwrap_or("-"),
            self.threshold
        );
        let _ = writeln!(
            s,
            "{:>4} {:>6} {:>6} {:>8} {:>6} {:>6} {:>6} {:>6} {:>10} {:>10} {:>10} {:>10} {:>12}",
            "rep", "train", "test", "auc", "tp", "fp", "tn", "fn", "fit_s", "fit_s/100", "pred_s", "pred_s/100", "peak_bytes"
        );
        for r in &self.replications {
            let per = |t: f64, n: usize| t * 100.0 / n.max(1) as f64;
            let _ = writeln!(
                s,
                "{:>4} {:>6} {:>6} {:>8.4} {:>6} {:>6} {:>6} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12}",
                r.index,
                r.n_train,
                r.n_test,
                r.auc,
                r.confusion[0],
                r.confusion[1],
                r.confusion[2],
                r.confusion[3],
                r.fit_seconds,
                per(r.fit_seconds, r.n_train),
                r.predict_seconds,
                per(r.predict_seconds, r.n_test),
                r.peak_bytes
            );
        }
        let _ = writeln!(s, "mean auc {:.4}  min auc {:.4}", self.mean_auc(), self.min_auc());
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

struct Keys {
    set: KeySet,
    ev: Evaluator,
}

/// Runs every replication and collects the report. Replications run on up to
/// `jobs` threads; each draws only from its own substreams, so the numbers do
/// not depend on scheduling.
pub fn run_experiment(exp: &Experiment) -> Result<MetricsReport, BenchError> {
    exp.validate()?;
    let table = exp.load_table()?;
    let labels = table.labels.as_ref().ok_or_else(|| BenchError::Invalid("dataset has no response".into()))?;
    let classes = class_order(labels);
    if classes.len() != 2 {
        return Err(BenchError::Invalid(format!("need a two-class response, found {}", classes.len())));
    }
    let y: Vec<usize> = labels.iter().map(|l| classes.iter().position(|c| c == l).unwrap()).collect();
    let (keys, params) = if exp.encrypt {
        let params = Arc::new(exp.scheme_params(&table)?);
        let set = keygen(&params, &mut RngHandle::new(exp.seed).substream("keygen", 0));
        let ev = Evaluator::new(Arc::new(set.rlk.clone()));
        let label = format!("d={} t={} q=2^{}", params.degree(), params.t(), params.q_bits());
        (Some(Keys { set, ev }), Some(label))
    } else {
        (None, None)
    };
    let reps: Vec<Result<Replication, BenchError>> = parallel_map(exp.replications, exp.jobs, |r| {
        replicate(exp, &table, &y, &classes, keys.as_ref(), r)
            .map_err(|e| BenchError::Replication { index: r, source: Box::new(e) })
    });
    Ok(MetricsReport {
        model: match exp.model {
            ModelKind::Crf { .. } => "crf",
            ModelKind::Snb { paired: true, .. } => "snb-paired",
            ModelKind::Snb { paired: false, .. } => "snb-unpaired",
            ModelKind::Mnb { .. } => "mnb",
        }
        .into(),
        encrypted: exp.encrypt,
        params,
        threshold: exp.threshold,
        replications: reps.into_iter().collect::<Result<_, _>>()?,
    })
}

/// `f(0..n)` on up to `jobs` scoped threads, results in index order.
pub(crate) fn parallel_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                out.lock().unwrap()[i] = Some(v);
            });
        }
    });
    out.into_inner().unwrap().into_iter().map(|v| v.expect("every index ran")).collect()
}

fn replicate(
    exp: &Experiment,
    table: &Table,
    y: &[usize],
    classes: &[String],
    keys: Option<&Keys>,
    r: usize,
) -> Result<Replication, BenchError> {
    let rng = RngHandle::new(exp.seed).substream("replication", r as u64);
    let (train_idx, test_idx) = stratified_split(y, exp.split, rng_word(&rng, "split"))?;
    let (train_t, test_t) = (table.select(&train_idx), table.select(&test_idx));
    let (spec, _) = PartitionSpec::build(&train_t, exp.bins)?;
    let method = exp.method();
    let mut train = encode(&train_t, &spec, method)?;
    let mut test = encode(&test_t, &spec, method)?;
    // the response of test rows never enters prediction
    test.y.iter_mut().for_each(Vec::clear);
    let plain_ev = Evaluator::plaintext();
    let ev = match keys {
        Some(k) => {
            train = train.encrypt(&k.set.pk, &rng.substream("encrypt-train", 0))?;
            test = test.encrypt(&k.set.pk, &rng.substream("encrypt-test", 0))?;
            &k.ev
        }
        None => &plain_ev,
    };
    let sk = keys.map(|k| &k.set.sk);
    let t0 = Instant::now();
    let fitted = Fitted::fit(exp, &train, ev, &rng)?;
    let fit_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (scores, pred_bytes) = fitted.predict(&test, ev, sk)?;
    let predict_seconds = t1.elapsed().as_secs_f64();
    let positive: Vec<bool> = test_idx.iter().map(|&i| y[i] == 1).collect();
    debug_assert_eq!(spec.classes, classes);
    Ok(Replication {
        index: r,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        auc: auc(&scores, &positive)?,
        confusion: confusion(&scores, &positive, exp.threshold),
        fit_seconds,
        predict_seconds,
        peak_bytes: fitted.bytes()?.max(pred_bytes),
        scores,
    })
}

enum Fitted {
    Crf(crf::ForestSpec, crf::FitTensor),
    Snb(nb::SnbFit),
    Mnb(nb::MnbFit),
}

fn reveal(v: &EncryptedValue, sk: Option<&crate::fv::SecretKey>) -> Result<i64, BenchError> {
    use num_traits::ToPrimitive;
    v.reveal(sk)?.to_i64().ok_or_else(|| BenchError::Invalid("vote exceeds 64 bits".into()))
}

impl Fitted {
    fn fit(exp: &Experiment, train: &QuantizedDataset, ev: &Evaluator, rng: &RngHandle) -> Result<Fitted, BenchError> {
        Ok(match exp.model {
            ModelKind::Crf { trees, depth, resample_m, subset_fraction } => {
                let vars = ForestVar::from_layout(&train.layout);
                let forest = crf::grow(vars, trees, depth, rng_word(rng, "grow"), subset_fraction)?;
                let fit = crf::fit(&forest, train, resample_m, ev, &rng.substream("fit", 0))?;
                Fitted::Crf(forest, fit)
            }
            ModelKind::Snb { paired, .. } => Fitted::Snb(nb::snb_fit(ev, train, paired)?),
            ModelKind::Mnb { laplace } => Fitted::Mnb(nb::mnb_fit(ev, train, laplace)?),
        })
    }

    fn bytes(&self) -> Result<usize, BenchError> {
        let b = match self {
            Fitted::Crf(_, f) => f.to_bundle(),
            Fitted::Snb(f) => f.to_bundle(),
            Fitted::Mnb(f) => f.to_bundle(),
        };
        Ok(save_bundle(&b)?.len())
    }

    /// Class-1 probabilities and the serialized size of the raw predictions.
    fn predict(
        &self,
        test: &QuantizedDataset,
        ev: &Evaluator,
        sk: Option<&crate::fv::SecretKey>,
    ) -> Result<(Vec<f64>, usize), BenchError> {
        Ok(match self {
            Fitted::Crf(forest, fit) => {
                let votes = crf::predict(forest, fit, test, ev)?;
                let bytes = save_bundle(&crate::fv::io::Bundle {
                    meta: String::new(),
                    shape: vec![votes.len(), fit.classes.len()],
                    cells: votes.iter().flatten().cloned().collect(),
                })?
                .len();
                let scores = votes
                    .iter()
                    .map(|v| {
                        let plain: Vec<i64> = v.iter().map(|c| reveal(c, sk)).collect::<Result<_, _>>()?;
                        Ok(crf::prob(&plain)?[1])
                    })
                    .collect::<Result<_, BenchError>>()?;
                (scores, bytes)
            }
            Fitted::Snb(fit) => {
                let raw = nb::snb_predict_raw(ev, fit, test)?;
                let bytes = save_bundle(&raw.to_bundle())?.len();
                let raw = match sk {
                    Some(sk) => raw.decrypt(sk)?,
                    None => raw,
                };
                (nb::snb_assemble(&raw)?, bytes)
            }
            Fitted::Mnb(fit) => {
                let raw = nb::mnb_predict_raw(ev, fit, test)?;
                let bytes = save_bundle(&raw.to_bundle())?.len();
                let raw = match sk {
                    Some(sk) => raw.decrypt(sk)?,
                    None => raw,
                };
                (nb::mnb_assemble(&raw)?, bytes)
            }
        })
    }
}

fn rng_word(rng: &RngHandle, tag: &str) -> u64 {
    use rand::RngCore;
    rng.substream(tag, 0).next_u64()
}
