use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cutmax::{cutmax, argmax, fixed_point_target, LogitVector};
use crate::hesim::HeContext;
use crate::polyapprox::ApproxConfig;

fn standardized(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    raw.iter().map(|v| sigma * (v - mean) / sd).collect()
}

fn he_cfg(alpha: u32) -> CutMaxHeConfig {
    CutMaxHeConfig::presets(alpha, Interval::new(0.25, 4.0)).unwrap()
}

#[test]
fn cutmax_he_matches_plaintext() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (n, s) in [(8, 8), (64, 64), (4096, 1024)] {
        let c = 3.0 * ((n - 1) as f64).sqrt();
        let params = CutMaxParams::new(3, c, 3);
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let x = LogitVector::new(standardized(&mut rng, n, 1.3)).unwrap();
            let ctx = HeContext::new(s).unwrap();
            let report = cutmax_he(&ctx, &x, &params, &he_cfg(11)).unwrap();
            let plain = cutmax(&x, &params).unwrap();
            assert_eq!(report.predicted_index, x.argmax());
            for (a, b) in report.output.values.iter().zip(&plain.values) {
                worst = worst.max((a - b).abs());
            }
        }
        eprintln!("n={n} worst={worst:e}");
        assert!(worst < 1e-6, "n={n} worst={worst:e}");
    }
}

#[test]
fn cutmax_he_cost_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 64;
    for t in [2, 3, 4] {
        for (p, q) in [(3u32, 1.0 / 3.0), (11, 0.1)] {
            let c = ((n - 1) as f64).sqrt() / q;
            let params = CutMaxParams::new(p, c, t);
            let cfg = he_cfg(7);
            let x = LogitVector::new(standardized(&mut rng, n, 1.0)).unwrap();
            let ctx = HeContext::new(n).unwrap();
            let report = cutmax_he(&ctx, &x, &params, &cfg).unwrap();
            let f = cutmax_he_formula(&params, &cfg.invsqrt, &cfg.inv);
            let l = report.ledger;
            eprintln!("t={t} p={p} ledger lev {}/{} ct {}/{} formula {}/{}", l.leveled_mults, l.leveled_depth, l.mults, l.depth, f.mults, f.depth);
            assert_eq!(l.leveled_depth, f.depth);
            assert!(l.leveled_mults.abs_diff(f.mults) <= 2 * t);
            assert_eq!(l.rotations, cutmax_he_rotations(t, n));
        }
    }
}

#[test]
fn baselines_small() {
    let cfg = CompareConfig::preset(11).unwrap();
    let ctx = HeContext::new(2).unwrap();
    assert_eq!(tournament_argmax(&ctx, &[3.0, 7.0], &cfg).unwrap().predicted_index, 1);
    let ctx = HeContext::new(8).unwrap();
    let r = league_argmax(&ctx, &[0.2, 0.9, 0.5], &cfg).unwrap();
    let mut scores = r.scores.clone().unwrap();
    eprintln!("{scores:?} {:?}", r.output.values);
    scores.iter_mut().for_each(|v| *v = v.round());
    assert_eq!(scores, vec![0.0, 2.0, 1.0]);
    assert_eq!(r.predicted_index, 1);
}

#[test]
fn baselines_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = CompareConfig::preset(11).unwrap();
    let mut warn = 0;
    for trial in 0..200 {
        let n = [2, 3, 5, 8, 13, 32, 64][trial % 7];
        let mut x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            x.swap(i, j);
        }
        let x: Vec<f64> = x.iter().map(|v| v + 0.3 * rng.random::<f64>()).collect();
        let ctx = HeContext::new(64).unwrap();
        let t = tournament_argmax(&ctx, &x, &cfg).unwrap();
        assert_eq!(t.predicted_index, argmax(&x), "tournament {x:?}");
        assert_eq!(t.ledger.sign_stages, n.next_power_of_two().trailing_zeros() as usize);
        warn += t.warnings.len();
        let ctx = HeContext::new(64).unwrap();
        let l = league_argmax(&ctx, &x, &cfg).unwrap();
        assert_eq!(l.predicted_index, argmax(&x), "league {x:?}");
        assert_eq!(l.ledger.sign_stages, n.next_power_of_two());
    }
    eprintln!("warnings {warn}");
}

#[test]
fn tournament_multi_ciphertext() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = CompareConfig::preset(11).unwrap();
    let mut x: Vec<f64> = (0..100).map(f64::from).collect();
    for i in (1..x.len()).rev() {
        let j = rng.random_range(0..=i);
        x.swap(i, j);
    }
    let ctx = HeContext::new(16).unwrap();
    let r = tournament_argmax(&ctx, &x, &cfg).unwrap();
    assert_eq!(r.predicted_index, argmax(&x));
    assert_eq!(r.ledger.sign_stages, 7);
}

#[test]
fn range_proof_two_level() {
    let (n, p, c) = (10, 3, 5.0);
    let params = CutMaxParams::new(p, c, 3);
    let x = fixed_point_target(n, p, c).unwrap();
    let cfg = CutMaxHeConfig::presets(11, Interval::new(1e-3, 1.0)).unwrap();
    let trace = cutmax_he_range(&LogitVector::new(x.values).unwrap(), &params, &cfg);
    let q = 3.0 / 5.0;
    let shifted = trace.step(Some(0), "shifted").unwrap();
    let sharp = Interval::new(1.0 - q - 1e-12, 1.0 + q + 1e-12);
    assert!(shifted.interval.is_subset_of(&sharp));
    assert!(shifted.interval.is_inside_open(0.0, 2.0));
    eprintln!("{:#?}", trace.violations().collect::<Vec<_>>());
}

#[test]
fn zero_variance_bound_flags() {
    let params = CutMaxParams::new(3, 5.0, 2);
    let cfg = CutMaxHeConfig::presets(7, Interval::new(0.0, 1.0)).unwrap();
    let x = LogitVector::new(vec![0.0, 1.0, 0.5, 0.2]).unwrap();
    let trace = cutmax_he_range(&x, &params, &cfg);
    let step = trace.step(Some(0), "invsqrt-input").unwrap();
    assert_eq!(step.violation, Some(Violation::InvSqrtDomain));
    let ctx = HeContext::new(4).unwrap();
    assert!(matches!(cutmax_he(&ctx, &x, &params, &cfg), Err(crate::Error::RangeProofViolation { .. })));
    let _ = ApproxConfig::inv_preset(7).unwrap();
}

#[test]
fn calibrated_scaling_runs_an_unguaranteed_schedule() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 256;
    let xs: Vec<LogitVector> = (0..8)
        .map(|_| {
            let mut v = standardized(&mut rng, n, 1.0);
            let top = rng.random_range(0..n);
            v[top] += 3.0;
            LogitVector::new(v).unwrap()
        })
        .collect();
    let params = CutMaxParams::schedule(vec![16, 4, 4, 6], vec![5.0, 3.0, 3.0, 3.0]);
    let mut cfg = he_cfg(11);
    cfg.scaling = calibrate(&xs, &params, 1.5).unwrap();
    let cfg = cfg.fit_domains(&xs[0], &params).unwrap();
    assert!(cfg.invsqrt.input_range.0 < 2f64.powi(-8));
    for x in &xs {
        let ctx = HeContext::new(n).unwrap();
        let r = cutmax_he(&ctx, x, &params, &cfg).unwrap();
        let plain = crate::cutmax::cutmax_run(x, &params, &crate::cutmax::CutMaxConfig::unchecked()).unwrap().scores;
        let err = r.output.values.iter().zip(&plain.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err:e}");
        assert_eq!(r.predicted_index, x.argmax());
    }
    assert!(calibrate(&[], &params, 1.5).is_err());
}
