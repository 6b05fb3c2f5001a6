use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::BenchError;
use crate::crf::{self, FitTensor, ForestSpec};
use crate::encode::QuantizedDataset;
use crate::fv::io::{load_bundle, read_file, save_bundle, write_file};
use crate::fv::Evaluator;
use crate::ring::RngHandle;

pub const SHARD_PREFIX: &str = "shard-";
pub const SHARD_EXT: &str = "efhe";
pub const COMBINED: &str = "combined.fit.efhe";

fn shard_name(i: usize) -> String {
    format!("{SHARD_PREFIX}{i:04}.{SHARD_EXT}")
}

/// Writes `data` as consecutive shards of at most `rows_per_shard` rows into
/// `dir`, named `shard-0001.efhe`, `shard-0002.efhe`, ...
pub fn shard_split(data: &QuantizedDataset, dir: &Path, rows_per_shard: usize) -> Result<Vec<PathBuf>, BenchError> {
    if rows_per_shard == 0 || data.n_rows() == 0 {
        return Err(BenchError::Invalid("need at least one row and one row per shard".into()));
    }
    std::fs::create_dir_all(dir)?;
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    rows.chunks(rows_per_shard)
        .enumerate()
        .map(|(i, chunk)| {
            let path = dir.join(shard_name(i + 1));
            write_file(&path, &save_bundle(&data.select(chunk).to_bundle())?)?;
            Ok(path)
        })
        .collect()
}

/// Shard files in `dir`, in name order.
pub fn list_shards(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with(SHARD_PREFIX) && name.ends_with(&format!(".{SHARD_EXT}")) && !name.contains(".fit.")
        })
        .collect();
    v.sort();
    Ok(v)
}

fn marker(shard: &Path, suffix: &str) -> PathBuf {
    let mut s = shard.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Where a shard's partial fit is written.
pub fn fit_path(shard: &Path) -> PathBuf {
    shard.with_extension(format!("fit.{SHARD_EXT}"))
}

/// Settings for [`shard_queue_run`].
pub struct ShardJob<'a> {
    pub dir: &'a Path,
    pub jobs: usize,
    pub forest: &'a ForestSpec,
    pub resample_m: u32,
    pub seed: u64,
    pub evaluator: &'a Evaluator,
    /// Stop claiming new shards after this many have been fitted in this run,
    /// leaving the rest for a later run.
    pub stop_after: Option<usize>,
}

#[derive(Debug)]
pub struct ShardOutcome {
    /// Present once every shard is done.
    pub combined: Option<FitTensor>,
    pub fitted: usize,
    pub skipped: usize,
    pub remaining: usize,
}

/// Fits every shard in `job.dir` on a pool of `job.jobs` worker threads and
/// combines the partial fits.
///
/// The directory is the queue. A worker claims a shard by creating
/// `<shard>.claim` exclusively, writes `<shard>.fit.efhe` and then
/// `<shard>.done`. A rerun skips shards with a done marker and drops claims
/// left behind without one, so an interrupted run can simply be restarted.
/// Shard `i` draws from substream `("shard", i)`, so the result does not
/// depend on which worker fitted it.
pub fn shard_queue_run(job: &ShardJob) -> Result<ShardOutcome, BenchError> {
    let shards = list_shards(job.dir)?;
    if shards.is_empty() {
        return Err(BenchError::Invalid(format!("no shards in {}", job.dir.display())));
    }
    let mut seen: HashMap<[u8; 32], &Path> = HashMap::new();
    for s in &shards {
        let digest: [u8; 32] = Sha256::digest(read_file(s)?).into();
        if let Some(prev) = seen.insert(digest, s) {
            return Err(BenchError::DuplicateShard(prev.display().to_string(), s.display().to_string()));
        }
    }
    for s in &shards {
        let claim = marker(s, ".claim");
        if claim.exists() && !marker(s, ".done").exists() {
            std::fs::remove_file(claim)?;
        }
    }
    let next = AtomicUsize::new(0);
    let fitted = AtomicUsize::new(0);
    let skipped = AtomicUsize::new(0);
    let first_error: Mutex<Option<BenchError>> = Mutex::new(None);
    let root = RngHandle::new(job.seed);
    std::thread::scope(|scope| {
        for _ in 0..job.jobs.clamp(1, shards.len()) {
            scope.spawn(|| loop {
                if first_error.lock().unwrap().is_some() {
                    break;
                }
                if job.stop_after.is_some_and(|k| fitted.load(Ordering::SeqCst) >= k) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(shard) = shards.get(i) else { break };
                if marker(shard, ".done").exists() {
                    skipped.fetch_add(1, Ordering::SeqCst);
                    continue;
                }
                let claimed = OpenOptions::new().write(true).create_new(true).open(marker(shard, ".claim"));
                if claimed.is_err() {
                    continue;
                }
                // reserve a slot under the stop limit before doing the work
                if let Some(k) = job.stop_after {
                    if fitted.fetch_add(1, Ordering::SeqCst) >= k {
                        fitted.fetch_sub(1, Ordering::SeqCst);
                        let _ = std::fs::remove_file(marker(shard, ".claim"));
                        break;
                    }
                } else {
                    fitted.fetch_add(1, Ordering::SeqCst);
                }
                if let Err(e) = fit_one(job, shard, &root.substream("shard", i as u64)) {
                    let mut slot = first_error.lock().unwrap();
                    slot.get_or_insert(BenchError::Shard { path: shard.display().to_string(), source: Box::new(e) });
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let remaining = shards.iter().filter(|s| !marker(s, ".done").exists()).count();
    let combined = if remaining == 0 {
        let parts = shards
            .iter()
            .map(|s| Ok(FitTensor::from_bundle(&load_bundle(&read_file(fit_path(s))?)?)?))
            .collect::<Result<Vec<_>, BenchError>>()?;
        let c = crf::combine(&parts)?;
        write_file(job.dir.join(COMBINED), &save_bundle(&c.to_bundle())?)?;
        Some(c)
    } else {
        None
    };
    Ok(ShardOutcome {
        combined,
        fitted: fitted.into_inner(),
        skipped: skipped.into_inner(),
        remaining,
    })
}

fn fit_one(job: &ShardJob, shard: &Path, rng: &RngHandle) -> Result<(), BenchError> {
    let data = QuantizedDataset::from_bundle(&load_bundle(&read_file(shard)?)?)?;
    let fit = crf::fit(job.forest, &data, job.resample_m, job.evaluator, rng)?;
    let bytes = save_bundle(&fit.to_bundle())?;
    write_file(fit_path(shard), &bytes)?;
    let digest: [u8; 32] = Sha256::digest(&bytes).into();
    std::fs::write(marker(shard, ".done"), crf::hex(&digest))?;
    Ok(())
}
