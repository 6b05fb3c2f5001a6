use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::encode::{encode, Method, PartitionSpec, QuantizedDataset, Table, VarKind};
use crate::fv::io::{load_bundle, save_bundle};
use crate::fv::{keygen, tier_params, EncryptedValue, Evaluator, FheError};
use crate::ring::RngHandle;

fn dataset(cols: Vec<Vec<f64>>, y: &[u8], bins: usize) -> QuantizedDataset {
    let names: Vec<String> = (0..cols.len()).map(|j| format!("x{}", j + 1)).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let table = Table::numeric(&refs, cols, y).unwrap();
    let (spec, _) = PartitionSpec::build(&table, bins).unwrap();
    encode(&table, &spec, Method::OneHot).unwrap()
}

fn plain(v: &[EncryptedValue]) -> Vec<i64> {
    v.iter().map(|x| x.plain_i64().unwrap()).collect()
}

/// Bin of every variable in a plaintext row, read off the indicator blocks.
fn bins_of(data: &QuantizedDataset, row: usize) -> Vec<usize> {
    (0..data.layout.len())
        .map(|j| {
            let block = plain(data.block(row, j));
            if block.len() == 1 {
                block[0] as usize
            } else {
                block.iter().position(|&v| v == 1).unwrap()
            }
        })
        .collect()
}

fn var(name: &str, kind: VarKind, n_bins: usize) -> ForestVar {
    ForestVar { name: name.into(), kind, n_bins }
}

#[test]
fn growth_is_deterministic_in_seed() {
    let vars = vec![var("a", VarKind::Ordinal, 5), var("b", VarKind::Categorical, 4), var("c", VarKind::Binary, 2)];
    let f1 = grow(vars.clone(), 20, 3, 9, 1.0).unwrap();
    let f2 = grow(vars.clone(), 20, 3, 9, 1.0).unwrap();
    assert_eq!(f1, f2);
    assert_ne!(f1, grow(vars, 20, 3, 10, 1.0).unwrap());
    f1.validate().unwrap();
}

#[test]
fn single_level_single_tree_has_one_split() {
    let f = grow(vec![var("a", VarKind::Ordinal, 3)], 1, 1, 0, 1.0).unwrap();
    assert_eq!(f.trees.len(), 1);
    assert_eq!(f.trees[0].levels.len(), 1);
    assert_eq!(f.trees[0].levels[0].len(), 1);
}

#[test]
fn ordinal_cuts_are_uniform() {
    let f = grow(vec![var("a", VarKind::Ordinal, 5)], 1000, 1, 3, 1.0).unwrap();
    let mut freq = [0f64; 4];
    for t in &f.trees {
        let s = &t.levels[0][0];
        assert_eq!(s.sides[0], (0..s.sides[0].len()).collect::<Vec<_>>());
        freq[s.sides[0].len() - 1] += 1.0;
    }
    let chi2: f64 = freq.iter().map(|o| (o - 250.0).powi(2) / 250.0).sum();
    // 99.9th percentile of chi-squared with 3 degrees of freedom
    assert!(chi2 < 16.266, "chi2 = {chi2}, counts {freq:?}");
}

#[test]
fn categorical_splits_are_partitions() {
    let f = grow(vec![var("a", VarKind::Categorical, 6)], 200, 2, 5, 1.0).unwrap();
    for t in &f.trees {
        for s in t.levels.iter().flatten() {
            let mut all: Vec<usize> = s.sides.concat();
            all.sort_unstable();
            assert_eq!(all, (0..6).collect::<Vec<_>>());
            assert!(s.sides.iter().all(|v| !v.is_empty()));
        }
    }
}

#[test]
fn unsplittable_variables_are_redrawn_or_rejected() {
    let f = grow(vec![var("k", VarKind::Ordinal, 1), var("a", VarKind::Ordinal, 3)], 30, 2, 1, 1.0).unwrap();
    assert!(f.trees.iter().flat_map(|t| t.levels.iter().flatten()).all(|s| s.var == 1));
    assert!(matches!(grow(vec![var("k", VarKind::Ordinal, 1)], 1, 1, 1, 1.0), Err(CrfError::NoSplittable(_))));
    assert!(grow(vec![], 1, 1, 1, 1.0).is_err());
    assert!(grow(vec![var("a", VarKind::Ordinal, 3)], 1, 0, 1, 1.0).is_err());
}

#[test]
fn predictor_subsets_have_the_requested_size() {
    let vars: Vec<ForestVar> = (0..10).map(|j| var(&format!("v{j}"), VarKind::Ordinal, 4)).collect();
    let f = grow(vars, 50, 3, 2, 0.3).unwrap();
    for t in &f.trees {
        assert_eq!(t.subset.len(), 3);
        assert!(t.levels.iter().flatten().all(|s| t.subset.contains(&s.var)));
    }
}

#[test]
fn leaf_path_index_examples() {
    assert_eq!(leaf_path_index(1, 1, 2).unwrap(), (1, 1));
    assert_eq!(leaf_path_index(4, 1, 2).unwrap(), (1, 2));
    assert_eq!(leaf_path_index(3, 2, 2).unwrap(), (2, 1));
    assert!(leaf_path_index(0, 1, 2).is_err());
    assert!(leaf_path_index(5, 1, 2).is_err());
    assert!(leaf_path_index(1, 3, 2).is_err());
}

/// Walks every root-to-leaf path depth first, numbering leaves left to right
/// and recording (branch, side) at each level.
fn traverse(depth: u32) -> Vec<Vec<(u64, u64)>> {
    fn go(level: u32, depth: u32, branch: u64, path: &mut Vec<(u64, u64)>, out: &mut Vec<Vec<(u64, u64)>>) {
        if level > depth {
            out.push(path.clone());
            return;
        }
        for side in 1..=2 {
            path.push((branch, side));
            go(level + 1, depth, 2 * (branch - 1) + side, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(1, depth, 1, &mut Vec::new(), &mut out);
    out
}

#[test]
fn leaf_path_index_matches_traversal() {
    for depth in 1..=6 {
        for (b, path) in traverse(depth).iter().enumerate() {
            for (l, &expected) in path.iter().enumerate() {
                assert_eq!(leaf_path_index(b as u64 + 1, l as u32 + 1, depth).unwrap(), expected, "L={depth} b={}", b + 1);
            }
        }
    }
}

#[test]
fn text_roundtrip_and_digest() {
    let vars = vec![var("a\tb", VarKind::Ordinal, 5), var("c", VarKind::Categorical, 3)];
    let f = grow(vars, 4, 3, 77, 0.5).unwrap();
    let back = ForestSpec::from_text(&f.to_text()).unwrap();
    assert_eq!(back, f);
    assert_eq!(back.digest(), f.digest());
    let bad = f.to_text().replacen("|", ",", 1);
    assert!(ForestSpec::from_text(&bad).is_err());
    assert!(ForestSpec::from_text("# hestats forest v1\nseed\t1\n").is_err());
    assert!(ForestSpec::from_text("hello").is_err());
}

fn toy() -> (ForestSpec, QuantizedDataset) {
    // x1 bins 0..4 (values 1..4), classes 0/1
    let data = dataset(vec![vec![1.0, 2.0, 3.0, 4.0]], &[0, 1, 1, 1], 4);
    let mut forest = grow(ForestVar::from_layout(&data.layout), 1, 1, 0, 1.0).unwrap();
    forest.trees[0].levels[0][0].sides = [vec![0, 1], vec![2, 3]];
    (forest, data)
}

#[test]
fn fit_counts_match_hand_tally() {
    let (forest, data) = toy();
    let t = fit(&forest, &data, 0, &Evaluator::plaintext(), &RngHandle::new(0)).unwrap();
    // leaf 1 holds rows 1, 2 (classes 0, 1); leaf 2 holds rows 3, 4 (both class 1)
    assert_eq!(plain(&t.counts), vec![1, 1, 0, 2]);
    assert!(t.adjusted.is_none());
}

#[test]
fn counts_sum_to_n_and_match_traversal() {
    let mut rng = RngHandle::new(4);
    let n = 40;
    let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
    let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let data = dataset(cols, &y, 4);
    let forest = grow(ForestVar::from_layout(&data.layout), 6, 3, 11, 1.0).unwrap();
    let t = fit(&forest, &data, 0, &Evaluator::plaintext(), &RngHandle::new(0)).unwrap();
    let c = plain(&t.counts);
    let labels = data.labels().unwrap();
    for (ti, tree) in forest.trees.iter().enumerate() {
        let mut tally = vec![0i64; 8 * 2];
        for i in 0..n {
            tally[(tree.leaf_of(&bins_of(&data, i)) - 1) * 2 + labels[i]] += 1;
        }
        assert_eq!(&c[ti * 16..(ti + 1) * 16], &tally[..]);
        assert_eq!(tally.iter().sum::<i64>(), n as i64);
    }
}

/// First position holding a one, or the length if there is none.
fn first_one(v: &[i64]) -> i64 {
    v.iter().position(|&x| x == 1).unwrap_or(v.len()) as i64
}

#[test]
fn or_prefix_counts_leading_zeros_exhaustively() {
    let ev = Evaluator::plaintext();
    for bits in 0u32..256 {
        let v: Vec<i64> = (0..8).map(|i| ((bits >> i) & 1) as i64).collect();
        let mut e: Vec<EncryptedValue> = v.iter().map(|&x| EncryptedValue::from(x)).collect();
        or_prefix(&ev, &mut e).unwrap();
        let after = plain(&e);
        assert_eq!(8 - after.iter().sum::<i64>(), first_one(&v), "{v:?}");
    }
    let mut e: Vec<EncryptedValue> = [0, 0, 1, 0].map(EncryptedValue::from).to_vec();
    or_prefix(&ev, &mut e).unwrap();
    assert_eq!(4 + 1 - plain(&e).iter().sum::<i64>(), 3);
}

#[test]
fn stochastic_fraction_extremes() {
    let ev = Evaluator::plaintext();
    let mut rng = RngHandle::new(1);
    let ones = vec![EncryptedValue::from(1); 5];
    let zeros = vec![EncryptedValue::from(0); 5];
    assert_eq!(stochastic_fraction(&ev, &ones, 8, &mut rng).unwrap().plain_i64(), Some(1));
    assert_eq!(stochastic_fraction(&ev, &zeros, 8, &mut rng).unwrap().plain_i64(), Some(9));
    assert!(stochastic_fraction(&ev, &ones, 6, &mut rng).is_err());
    assert!(stochastic_fraction(&ev, &[], 4, &mut rng).is_err());
}

/// E[min(G, m + 1)] for G ~ Geometric(p) on {1, 2, ...}, by summing the pmf.
fn truncated_geometric_mean(p: f64, m: u32) -> f64 {
    let head: f64 = (1..=m).map(|k| k as f64 * p * (1.0 - p).powi(k as i32 - 1)).sum();
    head + (m as f64 + 1.0) * (1.0 - p).powi(m as i32)
}

#[test]
fn stochastic_fraction_mean_matches_truncated_geometric() {
    let ev = Evaluator::plaintext();
    let eta: Vec<EncryptedValue> = (0..16).map(|i| EncryptedValue::from((i % 4 == 0) as i64)).collect();
    let mut rng = RngHandle::new(2);
    let draws = 20_000;
    let xs: Vec<f64> =
        (0..draws).map(|_| stochastic_fraction(&ev, &eta, 8, &mut rng).unwrap().plain_i64().unwrap() as f64).collect();
    let mean = xs.iter().sum::<f64>() / draws as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let expect = truncated_geometric_mean(0.25, 8);
    assert!((mean - expect).abs() <= 3.0 * (var / draws as f64).sqrt(), "mean {mean}, expected {expect}");
}

#[test]
fn adjusted_counts_scale_raw_counts() {
    let (forest, data) = toy();
    let t = fit(&forest, &data, 4, &Evaluator::plaintext(), &RngHandle::new(3)).unwrap();
    let raw = plain(&t.counts);
    let adj = plain(t.adjusted.as_ref().unwrap());
    for b in 0..2 {
        // both classes of a leaf share one estimate in 1..=5
        let est: Vec<i64> = (0..2).filter(|&c| raw[b * 2 + c] > 0).map(|c| adj[b * 2 + c] / raw[b * 2 + c]).collect();
        assert!(est.iter().all(|&e| (1..=5).contains(&e) && e == est[0]));
        for c in 0..2 {
            assert_eq!(adj[b * 2 + c] % raw[b * 2 + c].max(1), 0);
        }
    }
}

#[test]
fn combine_is_additive_over_shards() {
    let mut rng = RngHandle::new(8);
    let n = 50;
    let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let y: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
    let data = dataset(cols, &y, 5);
    let forest = grow(ForestVar::from_layout(&data.layout), 5, 2, 21, 1.0).unwrap();
    let ev = Evaluator::plaintext();
    let r = RngHandle::new(0);
    let full = fit(&forest, &data, 0, &ev, &r).unwrap();
    let a = fit(&forest, &data.select(&(0..20).collect::<Vec<_>>()), 0, &ev, &r).unwrap();
    let b = fit(&forest, &data.select(&(20..n).collect::<Vec<_>>()), 0, &ev, &r).unwrap();
    assert_eq!(combine(&[a.clone(), b]).unwrap(), full);
    assert_eq!(combine(&[a.clone(), a.zeros_like()]).unwrap(), a);

    let other = grow(ForestVar::from_layout(&data.layout), 5, 2, 22, 1.0).unwrap();
    let c = fit(&other, &data, 0, &ev, &r).unwrap();
    assert!(matches!(combine(&[a.clone(), c]), Err(CrfError::Provenance(_))));
    assert!(combine(&[]).is_err());
    let adjusted = fit(&forest, &data, 2, &ev, &r).unwrap();
    assert!(combine(&[a, adjusted]).is_err());
}

#[test]
fn prediction_of_training_point_reads_its_leaf() {
    let (forest, data) = toy();
    let ev = Evaluator::plaintext();
    let t = fit(&forest, &data, 0, &ev, &RngHandle::new(0)).unwrap();
    let votes = predict(&forest, &t, &data, &ev).unwrap();
    assert_eq!(plain(&votes[0]), vec![1, 1]);
    assert_eq!(plain(&votes[3]), vec![0, 2]);

    // fit on the left leaf only: a right-leaf point then gets no votes
    let left = fit(&forest, &data.select(&[0, 1]), 0, &ev, &RngHandle::new(0)).unwrap();
    assert_eq!(plain(&predict(&forest, &left, &data.select(&[2]), &ev).unwrap()[0]), vec![0, 0]);

    let other = grow(forest.vars.clone(), 1, 1, 99, 1.0).unwrap();
    assert!(predict(&other, &t, &data, &ev).is_err());
}

#[test]
fn probabilities() {
    assert_eq!(prob(&[3, 1]).unwrap(), vec![0.75, 0.25]);
    assert_eq!(prob(&[0, 0]).unwrap(), vec![0.5, 0.5]);
    assert_eq!(prob(&[7, 13, 0]).unwrap(), vec![0.35, 0.65, 0.0]);
    assert!(prob(&[1, -1]).is_err());
}

#[test]
fn fit_rejects_bad_inputs() {
    let (forest, data) = toy();
    let ev = Evaluator::plaintext();
    let r = RngHandle::new(0);
    assert!(fit(&forest, &data, 3, &ev, &r).is_err());
    let mut ordinal = data.clone();
    ordinal.method = Method::Ordinal { centered: false };
    assert!(fit(&forest, &ordinal, 0, &ev, &r).is_err());
    let mut unlabelled = data.clone();
    unlabelled.y = vec![Vec::new(); 4];
    assert!(fit(&forest, &unlabelled, 0, &ev, &r).is_err());
}

#[test]
fn bundle_roundtrip() {
    let (forest, data) = toy();
    let t = fit(&forest, &data, 2, &Evaluator::plaintext(), &RngHandle::new(0)).unwrap();
    let back = FitTensor::from_bundle(&load_bundle(&save_bundle(&t.to_bundle()).unwrap()).unwrap()).unwrap();
    assert_eq!(back, t);
    let mut b = t.to_bundle();
    b.cells.pop();
    assert!(FitTensor::from_bundle(&b).is_err());
}

#[test]
fn encrypted_fit_and_predict_agree_with_plaintext() {
    let data = dataset(vec![vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]], &[0, 0, 1, 1, 1, 0], 3);
    let forest = grow(ForestVar::from_layout(&data.layout), 2, 1, 5, 1.0).unwrap();
    let params = Arc::new(tier_params(1024, 256).unwrap());
    let keys = keygen(&params, &mut RngHandle::new(6));
    let ev = Evaluator::new(Arc::new(keys.rlk.clone()));
    let enc = data.encrypt(&keys.pk, &RngHandle::new(7)).unwrap();
    let r = RngHandle::new(8);

    let pt = fit(&forest, &data, 2, &Evaluator::plaintext(), &r).unwrap();
    let ct = fit(&forest, &enc, 2, &ev, &r).unwrap();
    assert!(ct.counts.iter().all(|v| v.depth() == 1));
    assert!(ct.adjusted.as_ref().unwrap().iter().all(|v| v.depth() <= fit_depth(1, 2)));
    assert_eq!(ct.depth(), fit_depth(1, 2));
    assert_eq!(ct.decrypt(&keys.sk).unwrap(), pt);

    let test = enc.select(&[0, 2, 4]);
    let pv = predict(&forest, &pt, &data.select(&[0, 2, 4]), &Evaluator::plaintext()).unwrap();
    let cv = predict(&forest, &ct, &test, &ev).unwrap();
    for (p, c) in pv.iter().zip(&cv) {
        let opened: Vec<i64> = c.iter().map(|v| v.reveal(Some(&keys.sk)).unwrap().try_into().unwrap()).collect();
        assert_eq!(opened, plain(p));
    }
}

#[test]
fn depth_budget_is_enforced_before_work() {
    let data = dataset(vec![vec![1.0, 2.0, 3.0, 4.0]], &[0, 1, 0, 1], 4);
    let forest = grow(ForestVar::from_layout(&data.layout), 1, 3, 5, 1.0).unwrap();
    let params = Arc::new(tier_params(1024, 256).unwrap());
    let keys = keygen(&params, &mut RngHandle::new(6));
    let ev = Evaluator::new(Arc::new(keys.rlk.clone()));
    let enc = data.encrypt(&keys.pk, &RngHandle::new(7)).unwrap();
    let err = fit(&forest, &enc, 8, &ev, &RngHandle::new(0)).unwrap_err();
    assert!(matches!(err, CrfError::Fhe(FheError::DepthExceeded { needed: 6, .. })), "{err}");
    assert_eq!(err.class(), crate::fv::ErrorClass::Budget);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exactly_one_leaf_per_row(seed in any::<u64>(), depth in 1u32..=4, rows in proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..12)) {
        // two anchor rows give every column at least two bins
        let rows: Vec<(f64, f64)> = [(0.0, 0.0), (5.0, 5.0)].into_iter().chain(rows).collect();
        let (a, b): (Vec<f64>, Vec<f64>) = rows.iter().cloned().unzip();
        let y: Vec<u8> = (0..rows.len()).map(|i| (i % 2) as u8).collect();
        let data = dataset(vec![a, b], &y, 3);
        let forest = grow(ForestVar::from_layout(&data.layout), 3, depth, seed, 1.0).unwrap();
        let ev = Evaluator::plaintext();
        let t = fit(&forest, &data, 0, &ev, &RngHandle::new(0)).unwrap();
        for tree in 0..3 {
            let total: i64 = (0..forest.n_leaves()).flat_map(|b| (0..2).map(move |c| (b, c)))
                .map(|(b, c)| t.count(tree, b, c).plain_i64().unwrap()).sum();
            prop_assert_eq!(total, rows.len() as i64);
        }
        // product-of-ranges over the g/h path is one for exactly the traversed leaf
        for i in 0..rows.len() {
            let bins = bins_of(&data, i);
            for tree in &forest.trees {
                let hits: Vec<u64> = (1..=1u64 << depth).filter(|&b| (1..=depth).all(|l| {
                    let (g, h) = leaf_path_index(b, l, depth).unwrap();
                    let s = &tree.levels[l as usize - 1][g as usize - 1];
                    s.sides[h as usize - 1].contains(&bins[s.var])
                })).collect();
                prop_assert_eq!(hits, vec![tree.leaf_of(&bins) as u64]);
            }
        }
    }

    #[test]
    fn shard_additivity(seed in any::<u64>(), cut in 1usize..15) {
        let n = 16;
        let xs: Vec<f64> = (0..n).map(|i| ((i as u64 * 7 + seed) % 11) as f64).collect();
        let y: Vec<u8> = (0..n).map(|i| ((i as u64 + seed) % 2) as u8).collect();
        let data = dataset(vec![xs], &y, 4);
        let forest = grow(ForestVar::from_layout(&data.layout), 4, 2, seed, 1.0).unwrap();
        let ev = Evaluator::plaintext();
        let r = RngHandle::new(1);
        let full = fit(&forest, &data, 0, &ev, &r).unwrap();
        let a = fit(&forest, &data.select(&(0..cut).collect::<Vec<_>>()), 0, &ev, &r).unwrap();
        let b = fit(&forest, &data.select(&(cut..n).collect::<Vec<_>>()), 0, &ev, &r).unwrap();
        prop_assert_eq!(combine(&[a, b]).unwrap(), full);
    }
}
