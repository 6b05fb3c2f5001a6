use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hestats::bench::{self, Experiment, ShardJob};
use hestats::crf::{self, FitTensor, ForestSpec, ForestVar};
use hestats::encode::{encode, Method, PartitionSpec, QuantizedDataset, Table};
use hestats::fv::io::{self, Bundle};
use hestats::fv::{keygen, make_params, params_for, EncryptedValue, ErrorClass, Evaluator, SchemeParams, DEFAULT_SIGMA};
use hestats::nb;
use hestats::ring::RngHandle;

use crate::{BenchCmd, Cmd, CrfCmd, EncodeArgs, Encoding, Failure, MnbCmd, ParamArgs, ParamsCmd, ShardCmd, SnbCmd};

type Res<T = ()> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure { class: ErrorClass::Validation, msg: msg.into() }
}

fn read_bundle(path: &Path) -> Res<Bundle> {
    Ok(io::load_bundle(&io::read_file(path)?)?)
}

fn write_bundle(path: &Path, b: &Bundle) -> Res {
    io::write_file(path, &io::save_bundle(b)?)?;
    Ok(())
}

fn read_dataset(path: &Path) -> Res<QuantizedDataset> {
    Ok(QuantizedDataset::from_bundle(&read_bundle(path)?)?)
}

/// Keyed evaluator when public keys are given; encrypted inputs require them.
fn evaluator(public: Option<&PathBuf>, encrypted: bool) -> Res<Evaluator> {
    match public {
        Some(p) => Ok(Evaluator::from_public(&io::load_public(&io::read_file(p)?)?)),
        None if encrypted => Err(invalid("encrypted input needs --public with the relinearisation key")),
        None => Ok(Evaluator::plaintext()),
    }
}

fn secret(keys: Option<&PathBuf>) -> Res<Option<hestats::fv::SecretKey>> {
    keys.map(|k| Ok(io::load_keys(&io::read_file(k)?)?.sk)).transpose()
}

fn resolve_params(p: &ParamArgs) -> Res<SchemeParams> {
    match (p.degree, p.plain_modulus, p.q_bits, p.max, p.depth) {
        (Some(d), Some(t), Some(q), _, _) => Ok(make_params(d, t, q, DEFAULT_SIGMA)?),
        (None, _, _, Some(max), Some(depth)) => Ok(params_for(p.lambda, max, depth, p.fan_in)?),
        _ => Err(invalid("give --degree, --plain-modulus and --q-bits, or --max and --depth")),
    }
}

/// Writes CSV to `out`, or stdout when absent.
fn emit(out: Option<&PathBuf>, header: &str, rows: impl Iterator<Item = String>) -> Res {
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

fn probabilities_csv(out: Option<&PathBuf>, p: &[f64]) -> Res {
    emit(out, "row,probability", p.iter().enumerate().map(|(i, v)| format!("{},{v}", i + 1)))
}

fn open(b: Bundle, sk: Option<&hestats::fv::SecretKey>) -> Res<Bundle> {
    let cells = b
        .cells
        .iter()
        .map(|c| Ok(EncryptedValue::Plain(c.reveal(sk)?)))
        .collect::<Result<_, hestats::fv::FheError>>()?;
    Ok(Bundle { cells, ..b })
}

pub fn run(cmd: Cmd) -> Res {
    match cmd {
        Cmd::Params(ParamsCmd::Suggest { lambda, max, depth, fan_in }) => {
            println!("{}", params_for(lambda, max, depth, fan_in)?);
        }
        Cmd::Keygen(a) => {
            let params = Arc::new(resolve_params(&a.params)?);
            let keys = keygen(&params, &mut RngHandle::new(a.seed));
            io::write_file(&a.out_secret, &io::save_keys(&keys))?;
            io::write_file(&a.out_public, &io::save_public(&keys.public()))?;
            println!("{params}");
        }
        Cmd::Inspect { file } => inspect(&file)?,
        Cmd::Encode(a) => encode_cmd(a)?,
        Cmd::EncryptData { public, input, out, seed } => {
            let pb = io::load_public(&io::read_file(public)?)?;
            let data = read_dataset(&input)?;
            write_bundle(&out, &data.encrypt(&pb.pk, &RngHandle::new(seed))?.to_bundle())?;
        }
        Cmd::Decrypt { keys, input, out } => {
            let sk = secret(Some(&keys))?;
            write_bundle(&out, &open(read_bundle(&input)?, sk.as_ref())?)?;
        }
        Cmd::Crf(c) => crf_cmd(c)?,
        Cmd::Snb(c) => snb_cmd(c)?,
        Cmd::Mnb(c) => mnb_cmd(c)?,
        Cmd::Bench(c) => bench_cmd(c)?,
        Cmd::Shard(c) => shard_cmd(c)?,
    }
    Ok(())
}

fn inspect(file: &Path) -> Res {
    let info = io::inspect(&io::read_file(file)?)?;
    println!("kind        {}", info.kind.name());
    println!("version     {}", info.version);
    println!("params      {}", info.digest.iter().map(|b| format!("{b:02x}")).collect::<String>());
    println!("polys       {} ({} bytes)", info.poly_count, info.poly_bytes);
    println!("size        {} bytes", info.total_bytes);
    if let Some(d) = info.depth {
        println!("depth       {d}");
    }
    if let Some(s) = &info.shape {
        println!("shape       {s:?}");
    }
    if let Some(m) = &info.meta {
        println!("meta        {m}");
    }
    if let Some(p) = &info.params {
        println!("{p}");
    }
    Ok(())
}

fn encode_cmd(a: EncodeArgs) -> Res {
    let table = Table::read_csv(&a.data, &a.response)?;
    let spec = match &a.spec {
        Some(p) => PartitionSpec::load(p)?,
        None => {
            let (spec, warnings) = PartitionSpec::build(&table, a.bins)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            spec
        }
    };
    if let Some(p) = &a.spec_out {
        spec.save(p)?;
    }
    let method = match a.method {
        Encoding::Onehot => Method::OneHot,
        Encoding::Ordinal => Method::Ordinal { centered: false },
        Encoding::Centered => Method::Ordinal { centered: true },
    };
    let data = encode(&table, &spec, method)?;
    write_bundle(&a.out, &data.to_bundle())?;
    eprintln!("{} rows, {} columns", data.n_rows(), data.n_cols());
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct VotesMeta {
    kind: String,
    classes: Vec<String>,
}

fn crf_cmd(c: CrfCmd) -> Res {
    match c {
        CrfCmd::Grow { data, trees, depth, subset, seed, out } => {
            let data = read_dataset(&data)?;
            let forest = crf::grow(ForestVar::from_layout(&data.layout), trees, depth, seed, subset)?;
            forest.save(&out)?;
        }
        CrfCmd::Fit { forest, data, resample, seed, public, out } => {
            let forest = ForestSpec::load(&forest)?;
            let data = read_dataset(&data)?;
            let ev = evaluator(public.as_ref(), data.is_encrypted())?;
            let fit = crf::fit(&forest, &data, resample, &ev, &RngHandle::new(seed))?;
            write_bundle(&out, &fit.to_bundle())?;
        }
        CrfCmd::Combine { out, fits } => {
            let fits = fits
                .iter()
                .map(|f| Ok(FitTensor::from_bundle(&read_bundle(f)?)?))
                .collect::<Res<Vec<_>>>()?;
            write_bundle(&out, &crf::combine(&fits)?.to_bundle())?;
        }
        CrfCmd::Predict { forest, fit, data, public, out } => {
            let forest = ForestSpec::load(&forest)?;
            let fit = FitTensor::from_bundle(&read_bundle(&fit)?)?;
            let data = read_dataset(&data)?;
            let ev = evaluator(public.as_ref(), data.is_encrypted() || fit.is_encrypted())?;
            let votes = crf::predict(&forest, &fit, &data, &ev)?;
            let meta = VotesMeta { kind: "crf-votes".into(), classes: fit.classes.clone() };
            write_bundle(
                &out,
                &Bundle {
                    meta: serde_json::to_string(&meta).expect("metadata serialises"),
                    shape: vec![votes.len(), fit.classes.len()],
                    cells: votes.into_iter().flatten().collect(),
                },
            )?;
        }
        CrfCmd::Prob { votes, keys, out } => {
            let b = read_bundle(&votes)?;
            let meta: VotesMeta = serde_json::from_str(&b.meta)
                .ok()
                .filter(|m: &VotesMeta| m.kind == "crf-votes")
                .ok_or_else(|| Failure { class: ErrorClass::Corrupt, msg: "not a vote bundle".into() })?;
            let b = open(b, secret(keys.as_ref())?.as_ref())?;
            let c = meta.classes.len().max(1);
            let rows = b
                .cells
                .chunks(c)
                .map(|r| {
                    let v: Vec<i64> = r
                        .iter()
                        .map(|x| x.plain_i64().ok_or_else(|| invalid("vote exceeds 64 bits")))
                        .collect::<Res<_>>()?;
                    Ok(crf::prob(&v)?)
                })
                .collect::<Res<Vec<_>>>()?;
            let header = std::iter::once("row".to_string())
                .chain(meta.classes.iter().map(|k| format!("p_{k}")))
                .collect::<Vec<_>>()
                .join(",");
            emit(
                out.as_ref(),
                &header,
                rows.iter().enumerate().map(|(i, p)| {
                    std::iter::once((i + 1).to_string()).chain(p.iter().map(f64::to_string)).collect::<Vec<_>>().join(",")
                }),
            )?;
        }
    }
    Ok(())
}

fn snb_cmd(c: SnbCmd) -> Res {
    match c {
        SnbCmd::Fit { data, paired: _, unpaired, public, out } => {
            let data = read_dataset(&data)?;
            let ev = evaluator(public.as_ref(), data.is_encrypted())?;
            write_bundle(&out, &nb::snb_fit(&ev, &data, !unpaired)?.to_bundle())?;
        }
        SnbCmd::Predict { fit, data, public, out } => {
            let fit = nb::SnbFit::from_bundle(&read_bundle(&fit)?)?;
            let data = read_dataset(&data)?;
            let enc = data.is_encrypted() || fit.coeffs.iter().flatten().any(EncryptedValue::is_cipher);
            let ev = evaluator(public.as_ref(), enc)?;
            write_bundle(&out, &nb::snb_predict_raw(&ev, &fit, &data)?.to_bundle())?;
        }
        SnbCmd::Assemble { raw, keys, out } => {
            let raw = nb::SnbRaw::from_bundle(&open(read_bundle(&raw)?, secret(keys.as_ref())?.as_ref())?)?;
            probabilities_csv(out.as_ref(), &nb::snb_assemble(&raw)?)?;
        }
    }
    Ok(())
}

fn mnb_cmd(c: MnbCmd) -> Res {
    match c {
        MnbCmd::Fit { data, laplace, public, out } => {
            let data = read_dataset(&data)?;
            let ev = evaluator(public.as_ref(), data.is_encrypted())?;
            write_bundle(&out, &nb::mnb_fit(&ev, &data, laplace)?.to_bundle())?;
        }
        MnbCmd::Predict { fit, data, public, out } => {
            let fit = nb::MnbFit::from_bundle(&read_bundle(&fit)?)?;
            let data = read_dataset(&data)?;
            let enc = data.is_encrypted() || fit.tables.iter().flatten().flatten().any(EncryptedValue::is_cipher);
            let ev = evaluator(public.as_ref(), enc)?;
            write_bundle(&out, &nb::mnb_predict_raw(&ev, &fit, &data)?.to_bundle())?;
        }
        MnbCmd::Assemble { raw, keys, out } => {
            let raw = nb::MnbRaw::from_bundle(&open(read_bundle(&raw)?, secret(keys.as_ref())?.as_ref())?)?;
            probabilities_csv(out.as_ref(), &nb::mnb_assemble(&raw)?)?;
        }
    }
    Ok(())
}

fn bench_cmd(c: BenchCmd) -> Res {
    match c {
        BenchCmd::Run { config, json, jobs, threshold } => {
            let mut exp = Experiment::from_config(&std::fs::read_to_string(&config)?)?;
            if let Some(j) = jobs {
                exp.jobs = j;
            }
            if let Some(t) = threshold {
                exp.threshold = t;
            }
            let report = bench::run_experiment(&exp)?;
            print!("{}", report.to_table());
            if let Some(p) = json {
                std::fs::write(p, report.to_json())?;
            }
        }
        BenchCmd::Synth { kind, rows, predictors, seed, out } => {
            let table = bench::generate(kind.parse()?, rows, predictors, seed)?;
            table.to_csv(std::fs::File::create(out)?)?;
        }
    }
    Ok(())
}

fn shard_cmd(c: ShardCmd) -> Res {
    match c {
        ShardCmd::Split { data, rows, dir } => {
            let paths = bench::shard_split(&read_dataset(&data)?, &dir, rows)?;
            eprintln!("{} shards in {}", paths.len(), dir.display());
        }
        ShardCmd::Run { dir, jobs, forest, resample, seed, public, stop_after } => {
            let forest = ForestSpec::load(&forest)?;
            let ev = match &public {
                Some(_) => evaluator(public.as_ref(), true)?,
                None => Evaluator::plaintext(),
            };
            let out = bench::shard_queue_run(&ShardJob {
                dir: &dir,
                jobs,
                forest: &forest,
                resample_m: resample,
                seed,
                evaluator: &ev,
                stop_after,
            })?;
            eprintln!("fitted {}, skipped {}, remaining {}", out.fitted, out.skipped, out.remaining);
            if out.combined.is_some() {
                eprintln!("combined fit written to {}", dir.join(bench::COMBINED).display());
            }
        }
    }
    Ok(())
}
