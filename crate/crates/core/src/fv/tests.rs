use std::sync::Arc;

use num_bigint::BigInt;
use proptest::prelude::*;

use super::*;
use crate::ring::RngHandle;

fn setup(d: usize, t: u64, q_bits: u32, seed: u64) -> (Arc<SchemeParams>, KeySet, RngHandle) {
    let params = Arc::new(make_params(d, t, q_bits, DEFAULT_SIGMA).unwrap());
    let mut rng = RngHandle::new(seed);
    let keys = keygen(&params, &mut rng);
    (params, keys, rng)
}

#[test]
fn roundtrip_small_messages() {
    let (_, keys, mut rng) = setup(4096, 65536, 128, 1);
    for m in [2, -5, 0, 1, -1, 32767, -32767, 32768] {
        let ct = enc(&keys.pk, m, &mut rng).unwrap();
        assert_eq!(dec(&keys.sk, &ct).unwrap(), m);
    }
    assert!(matches!(enc(&keys.pk, 32769, &mut rng), Err(FheError::MessageOutOfRange { .. })));
    assert!(matches!(enc(&keys.pk, -32768, &mut rng), Err(FheError::MessageOutOfRange { .. })));
}

#[test]
fn encryption_is_randomised() {
    let (_, keys, mut rng) = setup(1024, 256, 80, 2);
    let a = enc(&keys.pk, 3, &mut rng).unwrap();
    let b = enc(&keys.pk, 3, &mut rng).unwrap();
    assert_ne!(a, b);
    assert_eq!(dec(&keys.sk, &a).unwrap(), dec(&keys.sk, &b).unwrap());
}

#[test]
fn keygen_is_deterministic_in_seed() {
    let (_, k1, _) = setup(1024, 256, 80, 9);
    let (_, k2, _) = setup(1024, 256, 80, 9);
    assert_eq!(io::save_keys(&k1), io::save_keys(&k2));
}

#[test]
fn mixed_pairs_add_and_multiply() {
    let (params, keys, mut rng) = setup(2048, 1 << 20, 100, 3);
    let (lo, hi) = params.message_range();
    let t = params.t();
    let mut draw = RngHandle::new(33);
    for _ in 0..60 {
        let m1 = rand::Rng::random_range(&mut draw, lo..=hi);
        let m2 = rand::Rng::random_range(&mut draw, lo..=hi);
        let c1 = enc(&keys.pk, m1, &mut rng).unwrap();
        let c2 = enc(&keys.pk, m2, &mut rng).unwrap();
        let sum = dec(&keys.sk, &he_add(&c1, &c2).unwrap()).unwrap();
        let diff = dec(&keys.sk, &he_sub(&c1, &c2).unwrap()).unwrap();
        let prod = dec(&keys.sk, &he_mul(&c1, &c2, &keys.rlk).unwrap()).unwrap();
        assert_eq!(sum, signed_residue(&BigInt::from(m1 + m2), t));
        assert_eq!(diff, signed_residue(&BigInt::from(m1 - m2), t));
        assert_eq!(prod, signed_residue(&(BigInt::from(m1) * m2), t));
    }
}

#[test]
fn depth_counter_and_budget() {
    let (params, keys, mut rng) = setup(1024, 16, 80, 4);
    let bound = params.depth_bound();
    assert!(bound >= 1);
    let two = enc(&keys.pk, 2, &mut rng).unwrap();
    let one = enc(&keys.pk, 1, &mut rng).unwrap();
    let mut acc = two.clone();
    for level in 1..=bound {
        acc = he_mul(&acc, &one, &keys.rlk).unwrap();
        assert_eq!(acc.depth(), level);
        assert_eq!(dec(&keys.sk, &acc).unwrap(), 2);
    }
    assert_eq!(he_add(&acc, &two).unwrap().depth(), bound);
    assert_eq!(acc.mul_plain(&BigInt::from(3)).depth(), bound);
    match he_mul(&acc, &one, &keys.rlk) {
        Err(FheError::DepthExceeded { needed, bound: b }) => assert_eq!((needed, b), (bound + 1, bound)),
        other => panic!("expected a depth error, got {other:?}"),
    }
    let over = he_mul_unchecked(&acc, &one, &keys.rlk).unwrap();
    assert!(matches!(dec(&keys.sk, &over), Err(FheError::DepthExceeded { .. })));
}

#[test]
fn empirical_noise_stays_under_model() {
    let (params, keys, mut rng) = setup(4096, 1 << 16, 160, 5);
    let mut ct = enc(&keys.pk, 3, &mut rng).unwrap();
    let one = enc(&keys.pk, 1, &mut rng).unwrap();
    for depth in 0..=params.depth_bound().min(3) {
        let observed = noise_log2(&keys.sk, &ct).unwrap();
        // the maximum over d coefficients sits within a few sd of zero
        let ceiling = params.noise_log2_sd(depth) + 3.0;
        assert!(observed < ceiling, "depth {depth}: noise 2^{observed:.1} above model ceiling 2^{ceiling:.1}");
        ct = he_mul(&ct, &one, &keys.rlk).unwrap();
    }
}

#[test]
fn plaintext_ops_keep_depth() {
    let (params, keys, mut rng) = setup(1024, 1024, 80, 6);
    let c = enc(&keys.pk, 7, &mut rng).unwrap();
    let t = params.t();
    assert_eq!(dec(&keys.sk, &c.add_plain(&BigInt::from(-9))).unwrap(), -2);
    assert_eq!(dec(&keys.sk, &c.mul_plain(&BigInt::from(-3))).unwrap(), -21);
    assert_eq!(dec(&keys.sk, &c.mul_plain(&BigInt::from(1000))).unwrap(), signed_residue(&BigInt::from(7000), t));
    assert_eq!(dec(&keys.sk, &c.neg()).unwrap(), -7);
}

#[test]
fn params_mismatch_is_an_error() {
    let (_, k1, mut r1) = setup(1024, 256, 80, 7);
    let (_, k2, mut r2) = setup(1024, 512, 80, 7);
    let a = enc(&k1.pk, 1, &mut r1).unwrap();
    let b = enc(&k2.pk, 1, &mut r2).unwrap();
    assert!(matches!(he_add(&a, &b), Err(FheError::ParamsMismatch)));
    assert!(matches!(he_mul(&a, &a, &k2.rlk), Err(FheError::ParamsMismatch)));
}

#[test]
fn evaluator_matches_plaintext_dispatch() {
    let (params, keys, mut rng) = setup(1024, 4096, 80, 8);
    let ev = Evaluator::new(Arc::new(keys.rlk.clone()));
    let plain = Evaluator::plaintext();
    let xs = [3i64, -4, 5];
    let p: Vec<EncryptedValue> = xs.iter().map(|&x| EncryptedValue::from(x)).collect();
    let c: Vec<EncryptedValue> = p.iter().map(|v| v.encrypt(&keys.pk, &mut rng).unwrap()).collect();
    let expr = |ev: &Evaluator, v: &[EncryptedValue]| -> EncryptedValue {
        let s = ev.sum(v).unwrap();
        let prod = ev.mul(&ev.sub(&v[0], &v[1]).unwrap(), &v[2]).unwrap();
        ev.add(&ev.scale(&prod, 2), &ev.neg(&s)).unwrap()
    };
    let want = expr(&plain, &p).reveal(None).unwrap();
    let got = expr(&ev, &c).reveal(Some(&keys.sk)).unwrap();
    assert_eq!(BigInt::from(signed_residue(&want, params.t())), got);
    // mixing plaintext and ciphertext operands
    let mixed = vec![c[0].clone(), p[1].clone(), c[2].clone()];
    assert_eq!(expr(&ev, &mixed).reveal(Some(&keys.sk)).unwrap(), got);
    assert!(matches!(plain.mul(&c[0], &c[1]), Err(FheError::MissingKey(_))));
    assert_eq!(ev.product(&c).unwrap().depth(), 2);
}

#[test]
fn budget_helpers() {
    assert_eq!(depth_requirement_crf(3, 8, false), 11);
    assert_eq!(depth_requirement_crf(2, 0, true), 4);
    assert_eq!(coeff_requirement_snb(547, true), 598_418);
    assert_eq!(coeff_requirement_snb(547, false), 1094);
    assert_eq!(depth_requirement_snb(true), 4);
    assert_eq!(coeff_requirement_crf(10, &[300, 247]), 3000);
    let p = make_params(1024, 256, 80, DEFAULT_SIGMA).unwrap();
    assert!(check_coefficients(&p, &BigInt::from(128)).is_ok());
    assert_eq!(check_coefficients(&p, &BigInt::from(129)).unwrap_err().class(), ErrorClass::Budget);
    assert!(check_depth(&p, p.depth_bound()).is_ok());
    assert_eq!(check_depth(&p, p.depth_bound() + 1).unwrap_err().class(), ErrorClass::Budget);
}

#[test]
fn noise_budget_grows_with_fan_in() {
    let p = make_params(1024, 128, 54, DEFAULT_SIGMA).unwrap();
    assert!(p.supports(2, 1) && !p.supports(2, 1 << 20));
    assert_eq!(check_noise(&p, 2, 1 << 20).unwrap_err().class(), ErrorClass::Budget);
    let b = Budget { depth: 2, max_abs: 45, fan_in: 1 << 20 };
    assert!(matches!(b.check(&p), Err(FheError::NoiseBudget { .. })));
    let lo = min_q_bits_for(1024, 128, DEFAULT_SIGMA, 2, 1).unwrap();
    let hi = min_q_bits_for(1024, 128, DEFAULT_SIGMA, 2, 1 << 20).unwrap();
    assert_eq!(lo, min_q_bits(1024, 128, DEFAULT_SIGMA, 2).unwrap());
    assert!(hi > lo);
}

#[test]
fn sums_of_products_decrypt_at_the_fan_in_modulus() {
    // k depth-1 products summed, then multiplied once more and summed again
    let (t, k) = (128u64, 64u64);
    let q = min_q_bits_for(1024, t, DEFAULT_SIGMA, 2, k).unwrap();
    let (_, keys, mut rng) = setup(1024, t, q, 9);
    let one = enc(&keys.pk, 1, &mut rng).unwrap();
    let mut acc = he_mul(&one, &enc(&keys.pk, 0, &mut rng).unwrap(), &keys.rlk).unwrap();
    for _ in 0..k {
        let a = enc(&keys.pk, 1, &mut rng).unwrap();
        acc = he_add(&acc, &he_mul(&a, &one, &keys.rlk).unwrap()).unwrap();
    }
    let mut total = he_mul(&acc, &one, &keys.rlk).unwrap();
    for _ in 1..k / 8 {
        total = he_add(&total, &he_mul(&acc, &enc(&keys.pk, 0, &mut rng).unwrap(), &keys.rlk).unwrap()).unwrap();
    }
    assert_eq!(dec(&keys.sk, &total).unwrap(), signed_residue(&BigInt::from(k), t));
}

#[test]
fn ciphertext_container_roundtrip_and_corruption() {
    let (_, keys, mut rng) = setup(1024, 256, 80, 10);
    let ct = he_mul(&enc(&keys.pk, 5, &mut rng).unwrap(), &enc(&keys.pk, -3, &mut rng).unwrap(), &keys.rlk).unwrap();
    let bytes = io::save_ct(&ct);
    let back = io::load_ct(&bytes).unwrap();
    assert_eq!(back, ct);
    assert_eq!(io::save_ct(&back), bytes);
    assert_eq!(dec(&keys.sk, &back).unwrap(), -15);

    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(matches!(io::load_ct(&bad), Err(FheError::Corrupt(_))));
    assert!(matches!(io::load_ct(&bytes[..bytes.len() - 1]), Err(FheError::Corrupt(_))));
    let mut digest = bytes.clone();
    digest[10] ^= 0x80;
    assert!(matches!(io::load_ct(&digest), Err(FheError::Corrupt(_))));
    assert!(matches!(io::load_keys(&bytes), Err(FheError::Corrupt(_))));
    assert!(io::load_ct(&[]).is_err());
}

#[test]
fn key_container_roundtrip() {
    let (_, keys, mut rng) = setup(1024, 256, 80, 11);
    let bytes = io::save_keys(&keys);
    let back = io::load_keys(&bytes).unwrap();
    assert_eq!(io::save_keys(&back), bytes);
    let ct = enc(&back.pk, 9, &mut rng).unwrap();
    assert_eq!(dec(&keys.sk, &ct).unwrap(), 9);
    let prod = he_mul(&ct, &ct, &back.rlk).unwrap();
    assert_eq!(dec(&back.sk, &prod).unwrap(), 81);

    let public = io::save_public(&keys.public());
    let pb = io::load_public(&public).unwrap();
    assert_eq!(io::save_public(&pb), public);
    assert!(io::load_keys(&public).is_err());
    assert_eq!(io::save_public(&io::load_public(&bytes).unwrap()), public);
    let info = io::inspect(&public).unwrap();
    assert_eq!(info.kind, io::Kind::PublicKeys);
    assert_eq!(info.poly_count, 2 + 2 * 5);
}

#[test]
fn bundle_roundtrip() {
    let (_, keys, mut rng) = setup(1024, 256, 80, 12);
    let cells = vec![
        EncryptedValue::from(-300),
        enc(&keys.pk, 4, &mut rng).unwrap().into(),
        EncryptedValue::from(0),
        enc(&keys.pk, -2, &mut rng).unwrap().into(),
    ];
    let bundle = io::Bundle { meta: "{\"kind\":\"test\"}".into(), shape: vec![2, 2], cells };
    let bytes = io::save_bundle(&bundle).unwrap();
    let back = io::load_bundle(&bytes).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(io::save_bundle(&back).unwrap(), bytes);
    let info = io::inspect(&bytes).unwrap();
    assert_eq!(info.shape, Some(vec![2, 2]));

    let plain = io::Bundle { meta: String::new(), shape: vec![3], cells: vec![1.into(), 2.into(), 3.into()] };
    let bytes = io::save_bundle(&plain).unwrap();
    assert_eq!(io::load_bundle(&bytes).unwrap(), plain);
    assert!(io::save_bundle(&io::Bundle { meta: String::new(), shape: vec![2], cells: vec![] }).is_err());
}

#[test]
fn ciphertext_size_at_large_tier() {
    let params = Arc::new(make_params(8192, 1 << 16, 224, DEFAULT_SIGMA).unwrap());
    let mut rng = RngHandle::new(13);
    let keys = keygen(&params, &mut rng);
    let ct = enc(&keys.pk, 1, &mut rng).unwrap();
    let bytes = io::save_ct(&ct);
    let theoretical = 2 * 8192 * 224 / 8;
    assert_eq!(theoretical, 458_752);
    let rel = (bytes.len() as f64 - theoretical as f64).abs() / theoretical as f64;
    assert!(rel < 0.10, "{} bytes", bytes.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homomorphism_small_tier(m1 in -127i64..=128, m2 in -127i64..=128, seed in 0u64..1000) {
        let params = Arc::new(tier_params(1024, 256).unwrap());
        let mut rng = RngHandle::new(seed);
        let keys = keygen(&params, &mut rng);
        let c1 = enc(&keys.pk, m1, &mut rng).unwrap();
        let c2 = enc(&keys.pk, m2, &mut rng).unwrap();
        prop_assert_eq!(dec(&keys.sk, &he_add(&c1, &c2).unwrap()).unwrap(), signed_residue(&BigInt::from(m1 + m2), 256));
        prop_assert_eq!(dec(&keys.sk, &he_mul(&c1, &c2, &keys.rlk).unwrap()).unwrap(), signed_residue(&BigInt::from(m1 * m2), 256));
    }
}

#[test]
fn helper_params_survive_their_depth() {
    let params = Arc::new(params_help(1, 7, 2).unwrap());
    assert_eq!(params.degree(), 1024);
    assert!(params.depth_bound() >= 2);
    let mut rng = RngHandle::new(14);
    let keys = keygen(&params, &mut rng);
    let ev = Evaluator::new(Arc::new(keys.rlk.clone()));
    let mut draw = RngHandle::new(15);
    for _ in 0..20 {
        let ms: Vec<i64> = (0..4).map(|_| rand::Rng::random_range(&mut draw, -7..=7)).collect();
        let cs: Vec<EncryptedValue> = ms.iter().map(|&m| EncryptedValue::from(m).encrypt(&keys.pk, &mut rng).unwrap()).collect();
        let prod = ev.product(&cs).unwrap();
        assert_eq!(prod.depth(), 2);
        let want = signed_residue(&BigInt::from(ms.iter().product::<i64>()), params.t());
        assert_eq!(prod.reveal(Some(&keys.sk)).unwrap(), BigInt::from(want));
    }
}
