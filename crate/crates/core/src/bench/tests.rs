use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::crf;
use crate::encode::{encode, Method, PartitionSpec};
use crate::fv::{min_q_bits_for, plaintext_modulus_for, Evaluator, DEFAULT_SIGMA};
use crate::ring::RngHandle;

#[test]
fn split_examples() {
    let y = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
    let (train, test) = stratified_split(&y, 0.8, 3).unwrap();
    assert_eq!(train.len(), 8);
    assert_eq!(train.iter().filter(|&&i| y[i] == 1).count(), 4);
    assert_eq!(test.len(), 2);
    assert_eq!(stratified_split(&y, 0.8, 3).unwrap(), (train, test));
    assert!(stratified_split(&[0, 0, 0, 1], 0.5, 0).is_err());
    assert!(stratified_split(&[0, 0, 0], 0.5, 0).is_err());
    assert!(stratified_split(&y, 1.0, 0).is_err());
}

#[test]
fn split_keeps_class_ratio() {
    let mut rng = RngHandle::new(5);
    for _ in 0..1000 {
        let n = rng.random_range(4..200);
        let p = rng.random_range(0.05..0.95);
        let mut y: Vec<usize> = (0..n).map(|_| rng.random_bool(p) as usize).collect();
        y[0] = 0;
        y[1] = 0;
        y[2] = 1;
        y[3] = 1;
        let f = rng.random_range(0.1..0.9);
        let (train, test) = stratified_split(&y, f, rng.random()).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        let global = y.iter().sum::<usize>() as f64 / n as f64;
        let local = train.iter().map(|&i| y[i]).sum::<usize>() as f64 / train.len() as f64;
        assert!((local - global).abs() <= 1.0 / train.len() as f64, "n {n} f {f}: {local} vs {global}");
    }
}

fn pairwise_auc(s: &[f64], l: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..s.len()).filter(|&i| l[i]) {
        for j in (0..s.len()).filter(|&j| !l[j]) {
            den += 1.0;
            num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
        }
    }
    num / den
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
    assert_eq!(auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
    assert_eq!(auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
    assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    assert_eq!(confusion(&[0.2, 0.5, 0.7, 0.4], &[false, true, false, true], 0.5), [1, 1, 1, 1]);
}

proptest! {
    #[test]
    fn auc_matches_pairwise_oracle(pairs in proptest::collection::vec((0u8..6, any::<bool>()), 2..60)) {
        let mut s: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let mut l: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        s.extend([2.5, 2.5]);
        l.extend([true, false]);
        let a = auc(&s, &l).unwrap();
        prop_assert!((a - pairwise_auc(&s, &l)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn generators_are_seeded_and_shaped() {
    for kind in [Generator::Separable, Generator::NoisyLinear, Generator::Xor] {
        let a = generate(kind, 50, 3, 7).unwrap();
        assert_eq!(a, generate(kind, 50, 3, 7).unwrap());
        assert_ne!(a, generate(kind, 50, 3, 8).unwrap());
        assert_eq!(a.n_rows(), 50);
        assert_eq!(a.names, ["x1", "x2", "x3"]);
        assert_eq!(kind.to_string().parse::<Generator>().unwrap(), kind);
    }
    assert!(generate(Generator::Xor, 10, 1, 0).is_err());
}

#[test]
fn separable_classes_have_disjoint_supports() {
    let t = generate(Generator::Separable, 101, 2, 1).unwrap();
    let labels = t.labels.as_ref().unwrap();
    assert_eq!(labels.iter().filter(|l| *l == "1").count(), 50);
    for col in &t.columns {
        let crate::encode::Column::Numeric(v) = col else { panic!() };
        for (x, l) in v.iter().zip(labels) {
            let range = if l == "1" { 2.0..3.0 } else { 0.0..1.0 };
            assert!(range.contains(x));
        }
    }
}

#[test]
fn config_parsing() {
    let e = Experiment::from_config(
        "# comment\nmodel = snb\npaired = false\ndataset = synth:xor\nrows = 40\nreplications = 2  # two\nseed=9\n",
    )
    .unwrap();
    assert_eq!(e.model, ModelKind::Snb { paired: false, centered: true });
    assert_eq!(e.data, DataSource::Synthetic { kind: Generator::Xor, rows: 40, predictors: 4 });
    assert_eq!((e.replications, e.seed, e.split), (2, 9, 0.8));
    let err = Experiment::from_config("model = crf\ncolour = red\n").unwrap_err();
    assert!(matches!(err, BenchError::Config { line: 2, .. }), "{err}");
    assert!(matches!(Experiment::from_config("trees = many"), Err(BenchError::Config { line: 1, .. })));
    assert!(matches!(Experiment::from_config("split = 1.5"), Err(BenchError::Invalid(_))));
    let p = Experiment::from_config("ring_degree = 1024\nplain_modulus = 256\nq_bits = 80").unwrap();
    assert_eq!(p.params, ParamChoice::Explicit { degree: 1024, t: 256, q_bits: 80 });
}

fn small(model: ModelKind) -> Experiment {
    Experiment {
        data: DataSource::Synthetic { kind: Generator::NoisyLinear, rows: 60, predictors: 3 },
        model,
        replications: 3,
        ..Experiment::default()
    }
}

#[test]
fn reports_are_reproducible_and_schedule_independent() {
    for model in [
        ModelKind::Crf { trees: 10, depth: 2, resample_m: 4, subset_fraction: 1.0 },
        ModelKind::Snb { paired: true, centered: false },
        ModelKind::Mnb { laplace: 1 },
    ] {
        let exp = small(model);
        let a = run_experiment(&exp).unwrap();
        let b = run_experiment(&Experiment { jobs: 3, ..exp }).unwrap();
        assert_eq!(a.without_timings(), b.without_timings());
        assert_eq!(a.replications.len(), 3);
        assert!(a.replications.iter().all(|r| (0.0..=1.0).contains(&r.auc) && r.n_train + r.n_test == 60));
        assert!(a.to_table().contains("mean auc"));
        let json: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(json["replications"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn separable_data_is_easy() {
    let exp = Experiment {
        model: ModelKind::Snb { paired: true, centered: false },
        replications: 5,
        ..Experiment::default()
    };
    assert!(run_experiment(&exp).unwrap().min_auc() >= 0.99);
}

#[test]
fn encrypted_run_matches_plaintext_run() {
    let model = ModelKind::Crf { trees: 3, depth: 2, resample_m: 0, subset_fraction: 1.0 };
    let t = plaintext_modulus_for(3 * 20);
    let exp = Experiment {
        data: DataSource::Synthetic { kind: Generator::Separable, rows: 20, predictors: 2 },
        model,
        bins: 3,
        replications: 1,
        params: ParamChoice::Explicit { degree: 1024, t, q_bits: min_q_bits_for(1024, t, DEFAULT_SIGMA, 3, 20).unwrap() },
        ..Experiment::default()
    };
    let plain = run_experiment(&exp).unwrap();
    let enc = run_experiment(&Experiment { encrypt: true, ..exp }).unwrap();
    assert!(enc.encrypted && enc.params.is_some());
    assert_eq!(plain.replications[0].scores, enc.replications[0].scores);
    assert!(enc.replications[0].peak_bytes > plain.replications[0].peak_bytes);
}

#[test]
fn replication_errors_name_the_replication() {
    let exp = Experiment {
        encrypt: true,
        params: ParamChoice::Explicit { degree: 1024, t: 16, q_bits: 60 },
        ..small(ModelKind::Snb { paired: true, centered: false })
    };
    let err = run_experiment(&exp).unwrap_err();
    assert_eq!(err.class(), crate::fv::ErrorClass::Budget, "{err}");
    assert!(err.to_string().starts_with("replication 0:"));
}

fn shard_fixture(dir: &std::path::Path) -> (crf::ForestSpec, crate::encode::QuantizedDataset) {
    let table = generate(Generator::NoisyLinear, 40, 3, 2).unwrap();
    let (spec, _) = PartitionSpec::build(&table, 3).unwrap();
    let data = encode(&table, &spec, Method::OneHot).unwrap();
    let forest = crf::grow(crf::ForestVar::from_layout(&data.layout), 6, 2, 1, 1.0).unwrap();
    shard_split(&data, dir, 7).unwrap();
    (forest, data)
}

fn job<'a>(dir: &'a std::path::Path, forest: &'a crf::ForestSpec, ev: &'a Evaluator, jobs: usize) -> ShardJob<'a> {
    ShardJob { dir, jobs, forest, resample_m: 0, seed: 4, evaluator: ev, stop_after: None }
}

#[test]
fn shard_queue_equals_monolithic_fit() {
    let ev = Evaluator::plaintext();
    let mut combined = Vec::new();
    for jobs in [1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let (forest, data) = shard_fixture(dir.path());
        assert_eq!(list_shards(dir.path()).unwrap().len(), 6);
        let out = shard_queue_run(&job(dir.path(), &forest, &ev, jobs)).unwrap();
        assert_eq!((out.fitted, out.skipped, out.remaining), (6, 0, 0));
        let whole = crf::fit(&forest, &data, 0, &ev, &RngHandle::new(0)).unwrap();
        let c = out.combined.unwrap();
        assert_eq!(c, whole);
        assert!(dir.path().join(COMBINED).exists());
        combined.push(c);
    }
    assert_eq!(combined[0], combined[1]);
}

#[test]
fn interrupted_run_resumes() {
    let ev = Evaluator::plaintext();
    let dir = tempfile::tempdir().unwrap();
    let (forest, data) = shard_fixture(dir.path());
    let first = shard_queue_run(&ShardJob { stop_after: Some(2), ..job(dir.path(), &forest, &ev, 2) }).unwrap();
    assert_eq!((first.fitted, first.remaining), (2, 4));
    assert!(first.combined.is_none());
    // a claim left by a killed worker is dropped on restart
    let stale = list_shards(dir.path()).unwrap()[3].clone();
    std::fs::write(format!("{}.claim", stale.display()), b"").unwrap();
    let second = shard_queue_run(&job(dir.path(), &forest, &ev, 3)).unwrap();
    assert_eq!((second.fitted, second.skipped, second.remaining), (4, 2, 0));
    assert_eq!(second.combined.unwrap(), crf::fit(&forest, &data, 0, &ev, &RngHandle::new(0)).unwrap());
    let third = shard_queue_run(&job(dir.path(), &forest, &ev, 1)).unwrap();
    assert_eq!((third.fitted, third.skipped), (0, 6));
}

#[test]
fn duplicate_and_corrupt_shards_are_rejected() {
    let ev = Evaluator::plaintext();
    let dir = tempfile::tempdir().unwrap();
    let (forest, _) = shard_fixture(dir.path());
    let shards = list_shards(dir.path()).unwrap();
    std::fs::copy(&shards[0], dir.path().join("shard-0099.efhe")).unwrap();
    assert!(matches!(shard_queue_run(&job(dir.path(), &forest, &ev, 1)), Err(BenchError::DuplicateShard(..))));
    std::fs::write(dir.path().join("shard-0099.efhe"), b"not a container").unwrap();
    let err = shard_queue_run(&job(dir.path(), &forest, &ev, 1)).unwrap_err();
    assert_eq!(err.class(), crate::fv::ErrorClass::Corrupt, "{err}");
}
