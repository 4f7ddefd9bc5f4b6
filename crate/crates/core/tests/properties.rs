use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal};

use polyargmax::cutmax::{
    argmax, contraction_factor, cutmax, cutmax_run, cutmax_step, residual_stats, step_dispersion, CutMaxConfig,
    CutMaxParams, LogitVector,
};
use polyargmax::encargmax::{cutmax_he, league_argmax, tournament_argmax, CompareConfig, CutMaxHeConfig, Interval};
use polyargmax::grad::cutmax_jvp;
use polyargmax::hesim::{Arith, HeContext};
use polyargmax::polyapprox::{goldschmidt_inv, goldschmidt_inv_sqrt, sign_approx, ApproxConfig};
use polyargmax::sampling::{nucleus_one_shot_sample_rng, SamplerConfig};

fn root(n: usize) -> f64 {
    ((n - 1) as f64).sqrt()
}

fn guaranteed(n: usize, p: u32, t: usize) -> CutMaxParams {
    CutMaxParams::new(p, 1.5 * root(n).max(1.0), t)
}

fn logits(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    (2..=max_n).prop_flat_map(|n| vec(-20.0f64..20.0, n))
}

fn has_unique_max(x: &[f64]) -> bool {
    polyargmax::cutmax::top_two_gap(x) > 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn argmax_survives_affine_maps(x in logits(64), a in 0.01f64..100.0, b in -100.0f64..100.0, t in 1usize..5) {
        prop_assume!(has_unique_max(&x));
        let params = guaranteed(x.len(), 3, t);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let zx = cutmax(&LogitVector::new(x.clone()).unwrap(), &params).unwrap();
        let zy = cutmax(&LogitVector::new(y).unwrap(), &params).unwrap();
        prop_assert_eq!(zx.argmax(), argmax(&x));
        prop_assert_eq!(zy.argmax(), argmax(&x));
    }

    #[test]
    fn output_is_a_distribution(x in logits(128), half_p in 1u32..6, t in 1usize..6) {
        prop_assume!(has_unique_max(&x));
        let params = guaranteed(x.len(), 2 * half_p + 1, t);
        let z = cutmax(&LogitVector::new(x).unwrap(), &params).unwrap();
        prop_assert!((z.values.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(z.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn one_step_is_positive(x in logits(128), half_p in 1u32..6) {
        let n = x.len();
        if let Ok((next, stats)) = cutmax_step(&x, 2 * half_p + 1, 1.01 * root(n).max(1.0)) {
            prop_assert!(next.iter().all(|v| *v > 0.0));
            let sum: f64 = stats.residuals.iter().sum();
            let sq = stats.residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
            prop_assert!(sum.abs() <= 1e-9);
            prop_assert!((sq - 1.0).abs() <= 1e-9);
            prop_assert!(stats.residuals.iter().all(|r| r.abs() <= root(n) + 1e-9));
        }
    }

    #[test]
    fn dispersion_contracts(x in logits(64), p in prop::sample::select(vec![3u32, 5, 7]), factor in 1.2f64..4.0) {
        let n = x.len();
        prop_assume!(n >= 3 && has_unique_max(&x));
        let c = factor * root(n);
        let d = step_dispersion(&x, p, c).unwrap();
        prop_assert!(d.after_normalized <= contraction_factor(n, p, c).unwrap() * d.before);
    }

    #[test]
    fn jvp_is_linear(x in vec(-3.0f64..3.0, 3..24), s in -3.0f64..3.0) {
        let n = x.len();
        let lv = LogitVector::new(x).unwrap();
        let params = guaranteed(n, 3, 2);
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let w: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + s * b).collect();
        let (jv, jw, jvw) = (
            cutmax_jvp(&lv, &v, &params).unwrap(),
            cutmax_jvp(&lv, &w, &params).unwrap(),
            cutmax_jvp(&lv, &vw, &params).unwrap(),
        );
        for i in 0..n {
            prop_assert!((jvw[i] - jv[i] - s * jw[i]).abs() <= 1e-9 * (1.0 + jvw[i].abs()));
        }
    }

    #[test]
    fn slots_match_plain_program(xs in vec(0.1f64..1.9, 8), k in -3.0f64..3.0) {
        let ctx = HeContext::new(8).unwrap();
        let enc = ctx.encrypt(&xs).unwrap();
        let y = enc.mul(&enc).unwrap().scalar_mul(k).add(&enc).unwrap();
        let he = Arith::pow(&y.scalar_add(0.5), 3);
        let he = he.slots();
        for (i, &x) in xs.iter().enumerate() {
            let plain = (k * x * x + x + 0.5).powi(3);
            prop_assert!((he[i] - plain).abs() <= 1e-12 * plain.abs().max(1.0));
        }
    }
}

#[test]
fn argmax_invariance_mixed_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let normal = Normal::new(0.0, 3.0).unwrap();
    let cauchy: Cauchy<f64> = Cauchy::new(0.0, 1.0).unwrap();
    for k in 0..10_000 {
        let n = if k % 100 == 0 { rng.random_range(1024..=4096) } else { rng.random_range(2..=256) };
        let mut x: Vec<f64> = match k % 3 {
            0 => (0..n).map(|_| normal.sample(&mut rng)).collect(),
            1 => (0..n).map(|_| cauchy.sample(&mut rng).clamp(-1e6, 1e6)).collect(),
            _ => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        if k % 3 == 2 {
            // Near tie: the runner-up sits 1e-6 below the maximum.
            let top = argmax(&x);
            let second = (top + 1) % n;
            x[second] = x[top] - 1e-6;
        }
        if !has_unique_max(&x) {
            continue;
        }
        let params = guaranteed(n, [3, 5, 7][k % 3], 1 + k % 4);
        let z = cutmax(&LogitVector::new(x.clone()).unwrap(), &params).unwrap();
        assert_eq!(z.argmax(), argmax(&x), "case {k}, n={n}");
    }
}

#[test]
fn approximations_within_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for alpha in [7, 9, 11] {
        let bound = 2f64.powi(-(alpha as i32));
        let inv = ApproxConfig::inv_preset(alpha).unwrap();
        let isq = ApproxConfig::invsqrt_preset(alpha).unwrap();
        let sign = ApproxConfig::sign_preset(alpha).unwrap();
        for _ in 0..10_000 {
            let x = rng.random_range(inv.input_range.0..=inv.input_range.1);
            let e = (goldschmidt_inv(&x, &inv).unwrap() * x - 1.0).abs();
            assert!(e <= bound, "inv alpha={alpha} x={x} rel {e:e}");
            let x = rng.random_range(isq.input_range.0..=isq.input_range.1);
            let e = (goldschmidt_inv_sqrt(&x, &isq).unwrap() * x.sqrt() - 1.0).abs();
            assert!(e <= bound, "invsqrt alpha={alpha} x={x} rel {e:e}");
            let x = rng.random_range(sign.input_range.0..=1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let e = (sign_approx(&x, &sign).unwrap() - x.signum()).abs();
            assert!(e <= bound, "sign alpha={alpha} x={x} err {e:e}");
        }
    }
}

#[test]
fn three_argmax_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let he_cfg = CutMaxHeConfig::presets(11, Interval::new(0.25, 4.0)).unwrap();
    for trial in 0..1000 {
        let n: usize = rng.random_range(2..=64);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let x: Vec<f64> = raw.iter().map(|v| (v - mean) / sd).collect();
        let expected = argmax(&x);

        // Sign accuracy sized to the smallest gap in this input.
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let width = sorted[n - 1] - sorted[0];
        let cfg = CompareConfig {
            sign: ApproxConfig::sign_for_range(0.9 * gap / (2.0 * width), 20).unwrap(),
            ..CompareConfig::preset(11).unwrap()
        };
        let ctx = HeContext::new(64).unwrap();
        assert_eq!(tournament_argmax(&ctx, &x, &cfg).unwrap().predicted_index, expected, "tournament {trial}");
        let ctx = HeContext::new(64).unwrap();
        assert_eq!(league_argmax(&ctx, &x, &cfg).unwrap().predicted_index, expected, "league {trial}");
        if n >= 3 {
            let params = CutMaxParams::new(3, 3.0 * root(n), 3);
            let ctx = HeContext::new(64).unwrap();
            let lv = LogitVector::new(x.clone()).unwrap();
            assert_eq!(cutmax_he(&ctx, &lv, &params, &he_cfg).unwrap().predicted_index, expected, "cutmax-he {trial}");
        }
    }
}

#[test]
fn beta_cut_never_picks_far_tokens() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = SamplerConfig::nucleus(0.9, 0).unwrap();
    for _ in 0..50 {
        let n = rng.random_range(2..=64);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let top = x.iter().copied().fold(f64::MIN, f64::max);
        let lv = LogitVector::new(x.clone()).unwrap();
        let params = guaranteed(n, 3, 2);
        for _ in 0..200 {
            let s = nucleus_one_shot_sample_rng(&lv, &cfg, &params, None, &mut rng).unwrap();
            assert!(x[s.token_index] >= top - 1.0);
        }
    }
}

#[test]
fn ledgers_are_deterministic() {
    let x = LogitVector::new((0..16).map(|i| ((i * 7) % 16) as f64 / 4.0 - 2.0).collect()).unwrap();
    let cfg = CutMaxHeConfig::presets(9, Interval::new(0.25, 4.0)).unwrap();
    let params = CutMaxParams::new(3, 3.0 * root(16), 3);
    let run = || {
        let ctx = HeContext::new(16).unwrap();
        cutmax_he(&ctx, &x, &params, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.ledger, b.ledger);
    assert_eq!(a.output, b.output);
}

#[test]
fn tie_warning_and_config() {
    let x = LogitVector::new(vec![1.0, 1.0, 0.0]).unwrap();
    let run = cutmax_run(&x, &CutMaxParams::new(3, 3.0, 2), &CutMaxConfig::default()).unwrap();
    assert!(!run.warnings.is_empty());
    assert!(residual_stats(&[2.0, 2.0]).is_err());
}
