//! Polynomial-only approximations of `1/x`, `1/sqrt(x)` and `sign(x)`.
//!
//! Each routine is written once against [`Arith`], so it runs on plain `f64`
//! (with a range check) or on a [`SlotVector`](crate::hesim::SlotVector)
//! (unchecked, metered). [`ApproxConfig::cost`] advertises exactly what the
//! slot version charges to the ledger.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hesim::Arith;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproxKind {
    Inv,
    InvSqrt,
    Sign,
}

impl ApproxKind {
    pub fn name(self) -> &'static str {
        match self {
            ApproxKind::Inv => "inv",
            ApproxKind::InvSqrt => "invsqrt",
            ApproxKind::Sign => "sign",
        }
    }
}

/// Multiplications and depth of one approximation call. The `leveled_*`
/// fields also count products with non-integer plaintext constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApproxCost {
    pub name: ApproxKind,
    pub mults: usize,
    pub depth: usize,
    pub leveled_mults: usize,
    pub leveled_depth: usize,
}

/// Iteration count and guaranteed input range of one approximation.
///
/// For `Sign` the range is the magnitude range `[lo, hi]`; negative inputs are
/// covered by oddness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApproxConfig {
    pub kind: ApproxKind,
    pub iterations: usize,
    pub input_range: (f64, f64),
    pub alpha_bits: u32,
    /// Value at `x = 0` of the affine start `y0(x)` used by the inverse square
    /// root; `y0(hi) = 1/sqrt(hi)` fixes the slope.
    pub init_intercept: f64,
}

/// `(alpha, range bits k, iterations, intercept)` for the inverse square root
/// on `[2^-k, 1]`. Intercepts minimize the sup error for the given count.
const INVSQRT_PRESETS: [(u32, i32, usize, f64); 4] = [
    (7, 6, 5, 3.2989),
    (9, 7, 6, 3.4656),
    (11, 8, 7, 3.5850),
    (13, 9, 8, 3.6683),
];

/// `(alpha, range bits k)` for the Goldschmidt inverse on `[2^-k, 1]`.
const INV_PRESETS: [(u32, i32); 4] = [(7, 6), (9, 7), (11, 8), (13, 9)];

/// `(alpha, iterations)` of the sign iteration.
const SIGN_PRESETS: [(u32, usize); 4] = [(7, 7), (9, 9), (11, 11), (13, 12)];

fn bound(alpha_bits: u32) -> f64 {
    2f64.powi(-(alpha_bits as i32))
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "input range [{lo}, {hi}] must satisfy 0 < lo < hi"
        )));
    }
    Ok(())
}

impl ApproxConfig {
    /// Explicit configuration; no accuracy claim is verified.
    pub fn new(kind: ApproxKind, iterations: usize, input_range: (f64, f64), alpha_bits: u32) -> Result<Self> {
        check_range(input_range.0, input_range.1)?;
        if iterations == 0 {
            return Err(Error::InvalidParams("iterations must be >= 1".into()));
        }
        let init_intercept = match kind {
            ApproxKind::InvSqrt => best_invsqrt_intercept(input_range.0, input_range.1, iterations).0,
            _ => 0.0,
        };
        Ok(Self {
            kind,
            iterations,
            input_range,
            alpha_bits,
            init_intercept,
        })
    }

    pub fn inv_preset(alpha_bits: u32) -> Result<Self> {
        let &(_, k) = INV_PRESETS
            .iter()
            .find(|p| p.0 == alpha_bits)
            .ok_or_else(|| no_preset("inv", alpha_bits))?;
        Self::inv_for_range(2f64.powi(-k), 1.0, alpha_bits)
    }

    /// Fewest Goldschmidt steps whose error `(1-x)^(2^(d+1)) / x` stays within
    /// `2^-alpha` on `[lo, hi]`, with `0 < lo < hi < 2`.
    pub fn inv_for_range(lo: f64, hi: f64, alpha_bits: u32) -> Result<Self> {
        check_range(lo, hi)?;
        if hi >= 2.0 {
            return Err(Error::InvalidParams(format!("inverse range must lie in (0, 2), got hi = {hi}")));
        }
        let target = bound(alpha_bits);
        let worst = |d: usize| {
            let e = 2f64.powi(d as i32 + 1);
            [lo, hi].iter().map(|&x| (1.0 - x).abs().powf(e) / x).fold(0.0, f64::max)
        };
        let d = (1..=64)
            .find(|&d| worst(d) <= target)
            .ok_or_else(|| Error::InvalidParams(format!("inverse on [{lo}, {hi}] does not reach 2^-{alpha_bits}")))?;
        Ok(Self {
            kind: ApproxKind::Inv,
            iterations: d,
            input_range: (lo, hi),
            alpha_bits,
            init_intercept: 0.0,
        })
    }

    pub fn invsqrt_preset(alpha_bits: u32) -> Result<Self> {
        let &(_, k, iterations, a) = INVSQRT_PRESETS
            .iter()
            .find(|p| p.0 == alpha_bits)
            .ok_or_else(|| no_preset("invsqrt", alpha_bits))?;
        Ok(Self {
            kind: ApproxKind::InvSqrt,
            iterations,
            input_range: (2f64.powi(-k), 1.0),
            alpha_bits,
            init_intercept: a,
        })
    }

    /// Searches the iteration count and start line so Newton's inverse square
    /// root is within `2^-alpha` on `[lo, hi]`. The sampled error must clear
    /// half the bound to leave room between grid points.
    pub fn invsqrt_for_range(lo: f64, hi: f64, alpha_bits: u32) -> Result<Self> {
        check_range(lo, hi)?;
        let target = bound(alpha_bits) / 2.0;
        for iterations in 1..=40 {
            let (a, err) = best_invsqrt_intercept(lo, hi, iterations);
            if err <= target {
                return Ok(Self {
                    kind: ApproxKind::InvSqrt,
                    iterations,
                    input_range: (lo, hi),
                    alpha_bits,
                    init_intercept: a,
                });
            }
        }
        Err(Error::InvalidParams(format!(
            "no inverse square root configuration for [{lo}, {hi}] at 2^-{alpha_bits}"
        )))
    }

    pub fn sign_preset(alpha_bits: u32) -> Result<Self> {
        let &(_, iterations) = SIGN_PRESETS
            .iter()
            .find(|p| p.0 == alpha_bits)
            .ok_or_else(|| no_preset("sign", alpha_bits))?;
        Ok(Self {
            kind: ApproxKind::Sign,
            iterations,
            input_range: (sign_domain_floor(iterations, alpha_bits), 1.0),
            alpha_bits,
            init_intercept: 0.0,
        })
    }

    /// Fewest sign iterations that are within `2^-alpha` for `|x| in [lo, 1]`.
    pub fn sign_for_range(lo: f64, alpha_bits: u32) -> Result<Self> {
        check_range(lo, 1.0)?;
        let target = bound(alpha_bits);
        let mut s = lo;
        for iterations in 1..=200 {
            s = sign_step(s);
            if 1.0 - s <= target {
                return Ok(Self {
                    kind: ApproxKind::Sign,
                    iterations,
                    input_range: (lo, 1.0),
                    alpha_bits,
                    init_intercept: 0.0,
                });
            }
        }
        Err(Error::InvalidParams(format!("sign cannot resolve |x| >= {lo}")))
    }

    /// Same iteration count, and so the same cost, restricted to a
    /// sub-range. The inverse square root re-fits its start line, which can
    /// cut the error by orders of magnitude.
    pub fn narrowed(&self, lo: f64, hi: f64) -> Result<Self> {
        check_range(lo, hi)?;
        let (old_lo, old_hi) = self.input_range;
        if lo < old_lo || hi > old_hi {
            return Err(Error::InvalidParams(format!(
                "[{lo}, {hi}] is not inside [{old_lo}, {old_hi}]"
            )));
        }
        let mut out = Self {
            input_range: (lo, hi),
            ..*self
        };
        if self.kind == ApproxKind::InvSqrt {
            let (a, err) = best_invsqrt_intercept(lo, hi, self.iterations);
            let current = invsqrt_sup_error(lo, hi, self.init_intercept, self.iterations);
            if err < current {
                out.init_intercept = a;
            } else {
                // Keep the original start, re-anchored to the new upper end.
                out.input_range = self.input_range;
            }
        }
        Ok(out)
    }

    pub fn error_bound(&self) -> f64 {
        bound(self.alpha_bits)
    }

    /// Width of the input range in bits, `log2(hi / lo)`.
    pub fn range_bits(&self) -> f64 {
        (self.input_range.1 / self.input_range.0).log2()
    }

    pub fn cost(&self) -> ApproxCost {
        let it = self.iterations;
        let (mults, depth, leveled_mults, leveled_depth) = match self.kind {
            ApproxKind::Inv => (2 * it, it + 1, 2 * it, it + 1),
            ApproxKind::InvSqrt => (3 * it, 2 * it, 4 * it + 2, 2 * it + 1),
            ApproxKind::Sign => (2 * it, 2 * it, 4 * it, 2 * it),
        };
        ApproxCost {
            name: self.kind,
            mults,
            depth,
            leveled_mults,
            leveled_depth,
        }
    }

    fn expect_kind(&self, kind: ApproxKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidParams(format!(
                "{} config passed to {}",
                self.kind.name(),
                kind.name()
            )));
        }
        Ok(())
    }

    fn init_slope(&self) -> f64 {
        let hi = self.input_range.1;
        (1.0 / hi.sqrt() - self.init_intercept) / hi
    }
}

fn no_preset(name: &str, alpha_bits: u32) -> Error {
    Error::InvalidParams(format!("no {name} preset for alpha = {alpha_bits}; presets exist for 7, 9, 11, 13"))
}

fn sign_step(s: f64) -> f64 {
    1.5 * s - 0.5 * s * s * s
}

/// Smallest `x` in `(0, 1]` whose sign estimate after `iterations` steps is
/// within `2^-alpha` of 1. The iterate is increasing in `x` on `[0, 1]`.
pub fn sign_domain_floor(iterations: usize, alpha_bits: u32) -> f64 {
    let target = 1.0 - bound(alpha_bits);
    let reach = |x: f64| (0..iterations).fold(x, |s, _| sign_step(s)) >= target;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reach(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn invsqrt_plain(x: f64, intercept: f64, slope: f64, iterations: usize) -> f64 {
    let mut y = intercept + slope * x;
    for _ in 0..iterations {
        y *= 1.5 - 0.5 * x * y * y;
    }
    y
}

/// Sup error of the inverse square root on a geometric grid of `[lo, hi]`.
pub(crate) fn invsqrt_sup_error(lo: f64, hi: f64, intercept: f64, iterations: usize) -> f64 {
    let slope = (1.0 / hi.sqrt() - intercept) / hi;
    let steps = 2048;
    let ratio = (hi / lo).ln();
    let mut worst: f64 = 0.0;
    for i in 0..=steps {
        let x = lo * (ratio * i as f64 / steps as f64).exp();
        let err = (invsqrt_plain(x, intercept, slope, iterations) - 1.0 / x.sqrt()).abs();
        if !err.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(err);
    }
    worst
}

fn best_invsqrt_intercept(lo: f64, hi: f64, iterations: usize) -> (f64, f64) {
    let (a_lo, a_hi) = (1.0 / hi.sqrt(), 1.0 / lo.sqrt());
    let grid = 200;
    let mut best = (a_lo, f64::INFINITY);
    for i in 0..=grid {
        let a = a_lo + (a_hi - a_lo) * i as f64 / grid as f64;
        let e = invsqrt_sup_error(lo, hi, a, iterations);
        if e < best.1 {
            best = (a, e);
        }
    }
    let mut width = (a_hi - a_lo) / grid as f64;
    for _ in 0..30 {
        for a in [best.0 - width, best.0 + width] {
            let e = invsqrt_sup_error(lo, hi, a, iterations);
            if e < best.1 {
                best = (a, e);
            }
        }
        width *= 0.5;
    }
    best
}

fn range_error(function: &'static str, value: f64, lo: f64, hi: f64) -> Error {
    Error::RangeError { function, value, lo, hi }
}

/// Goldschmidt inverse `prod_{i=0}^{d} (1 + (1 - x)^(2^i))`.
///
/// Plaintext inputs must lie in `(0, 2)`. Encrypted inputs are not checked;
/// keeping them in range is the caller's obligation.
pub fn goldschmidt_inv<A: Arith>(x: &A, cfg: &ApproxConfig) -> Result<A> {
    cfg.expect_kind(ApproxKind::Inv)?;
    if let Some(v) = x.plain() {
        if !(v > 0.0 && v < 2.0) {
            return Err(range_error("inv", v, 0.0, 2.0));
        }
    }
    let mut a = x.scale(-1.0).shift(1.0);
    let mut r = a.shift(1.0);
    for _ in 0..cfg.iterations {
        a = a.square();
        r = r.mul(&a.shift(1.0));
    }
    Ok(r)
}

/// Newton inverse square root `y <- y (1.5 - 0.5 x y^2)` from an affine start.
pub fn goldschmidt_inv_sqrt<A: Arith>(x: &A, cfg: &ApproxConfig) -> Result<A> {
    cfg.expect_kind(ApproxKind::InvSqrt)?;
    let (lo, hi) = cfg.input_range;
    if let Some(v) = x.plain() {
        if !(v >= lo && v <= hi) {
            return Err(range_error("invsqrt", v, lo, hi));
        }
    }
    let mut y = x.scale(cfg.init_slope()).shift(cfg.init_intercept);
    let half_x = x.scale(-0.5);
    for _ in 0..cfg.iterations {
        let cube = half_x.mul(&y).mul(&y.square());
        y = y.scale(1.5).add(&cube);
    }
    Ok(y)
}

/// Odd polynomial iteration `s <- 1.5 s - 0.5 s^3` converging to `sign(x)`
/// on `[-1, 1]`.
pub fn sign_approx<A: Arith>(x: &A, cfg: &ApproxConfig) -> Result<A> {
    cfg.expect_kind(ApproxKind::Sign)?;
    if let Some(v) = x.plain() {
        if !(-1.0..=1.0).contains(&v) {
            return Err(range_error("sign", v, -1.0, 1.0));
        }
    }
    let mut s = x.clone();
    for _ in 0..cfg.iterations {
        let cube = s.scale(-0.5).mul(&s.square());
        s = s.scale(1.5).add(&cube);
    }
    Ok(s)
}

/// Maps a sign value in `[-1, 1]` to an indicator in `[0, 1]`.
pub fn indicator_from_sign<A: Arith>(s: &A) -> A {
    s.shift(1.0).scale(0.5)
}

/// `1/x` for `x` in `b * input_range`: evaluates `inv(x / b) / b`.
pub fn inv_scaled<A: Arith>(x: &A, b: f64, cfg: &ApproxConfig) -> Result<A> {
    Ok(goldschmidt_inv(&x.scale(1.0 / b), cfg)?.scale(1.0 / b))
}

/// `1/sqrt(x)` for `x` in `b * input_range`: evaluates `invsqrt(x / b) / sqrt(b)`.
pub fn inv_sqrt_scaled<A: Arith>(x: &A, b: f64, cfg: &ApproxConfig) -> Result<A> {
    Ok(goldschmidt_inv_sqrt(&x.scale(1.0 / b), cfg)?.scale(1.0 / b.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hesim::HeContext;

    #[test]
    fn inv_examples() {
        let cfg = ApproxConfig::new(ApproxKind::Inv, 5, (0.01, 1.99), 7).unwrap();
        assert_eq!(goldschmidt_inv(&1.0, &cfg).unwrap(), 1.0);
        assert!((goldschmidt_inv(&0.5, &cfg).unwrap() - 2.0).abs() <= 2f64.powi(-7));
        assert!((goldschmidt_inv(&1.5, &cfg).unwrap() - 2.0 / 3.0).abs() <= 2f64.powi(-7));
        assert!(matches!(goldschmidt_inv(&2.0, &cfg), Err(Error::RangeError { .. })));
        assert!(matches!(goldschmidt_inv(&0.0, &cfg), Err(Error::RangeError { .. })));
    }

    #[test]
    fn inv_presets_iterations() {
        let its: Vec<usize> = [7, 9, 11, 13]
            .iter()
            .map(|&a| ApproxConfig::inv_preset(a).unwrap().iterations)
            .collect();
        assert_eq!(its, vec![9, 10, 11, 12]);
    }

    #[test]
    fn invsqrt_examples() {
        let cfg = ApproxConfig::invsqrt_preset(7).unwrap();
        assert_eq!((cfg.iterations, cfg.cost().depth), (5, 10));
        assert_eq!(goldschmidt_inv_sqrt(&1.0, &cfg).unwrap(), 1.0);
        assert!((goldschmidt_inv_sqrt(&0.25, &cfg).unwrap() - 2.0).abs() <= 2f64.powi(-7));
        assert!(goldschmidt_inv_sqrt(&1.5, &cfg).is_err());
        assert!(goldschmidt_inv_sqrt(&0.001, &cfg).is_err());
    }

    #[test]
    fn sign_examples() {
        let cfg = ApproxConfig::sign_preset(7).unwrap();
        assert_eq!((cfg.iterations, cfg.cost().depth), (7, 14));
        assert_eq!(sign_approx(&0.0, &cfg).unwrap(), 0.0);
        let pos = sign_approx(&0.5, &cfg).unwrap();
        assert!((pos - 1.0).abs() <= 2f64.powi(-7));
        assert_eq!(sign_approx(&-0.5, &cfg).unwrap(), -pos);
        assert!(sign_approx(&1.2, &cfg).is_err());
    }

    #[test]
    fn indicator() {
        assert_eq!(indicator_from_sign(&1.0), 1.0);
        assert_eq!(indicator_from_sign(&-1.0), 0.0);
        assert_eq!(indicator_from_sign(&0.0), 0.5);
    }

    #[test]
    fn wrong_kind_rejected() {
        let cfg = ApproxConfig::sign_preset(7).unwrap();
        assert!(goldschmidt_inv(&1.0, &cfg).is_err());
    }

    #[test]
    fn preset_tables_are_monotone() {
        let mut prev = (0, 0, 0, 0);
        for a in [7, 9, 11, 13] {
            let s = ApproxConfig::sign_preset(a).unwrap().cost();
            let q = ApproxConfig::invsqrt_preset(a).unwrap();
            let cur = (s.mults, s.depth, q.iterations, q.cost().depth);
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1 && cur.2 >= prev.2 && cur.3 >= prev.3);
            prev = cur;
        }
        let its: Vec<usize> = [7, 9, 11, 13]
            .iter()
            .map(|&a| ApproxConfig::sign_preset(a).unwrap().iterations)
            .collect();
        assert_eq!(its, vec![7, 9, 11, 12]);
        assert!(ApproxConfig::sign_preset(8).is_err());
    }

    #[test]
    fn scaled_helpers() {
        let inv = ApproxConfig::inv_preset(11).unwrap();
        assert!((inv_scaled(&40.0, 64.0, &inv).unwrap() - 1.0 / 40.0).abs() < 1e-5);
        let isq = ApproxConfig::invsqrt_preset(11).unwrap();
        assert!((inv_sqrt_scaled(&9.0, 16.0, &isq).unwrap() - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn custom_invsqrt_range() {
        let cfg = ApproxConfig::invsqrt_for_range(0.5, 4.0, 10).unwrap();
        for i in 0..=1000 {
            let x = 0.5 + 3.5 * i as f64 / 1000.0;
            let y = goldschmidt_inv_sqrt(&x, &cfg).unwrap();
            assert!((y - 1.0 / x.sqrt()).abs() <= 2f64.powi(-10), "x={x}");
        }
    }

    #[test]
    fn custom_sign_range() {
        let cfg = ApproxConfig::sign_for_range(0.01, 10).unwrap();
        let s = sign_approx(&0.01, &cfg).unwrap();
        assert!(1.0 - s <= 2f64.powi(-10));
        let fewer = ApproxConfig::new(ApproxKind::Sign, cfg.iterations - 1, (0.01, 1.0), 10).unwrap();
        assert!(1.0 - sign_approx(&0.01, &fewer).unwrap() > 2f64.powi(-10));
    }

    #[test]
    fn slot_cost_matches_advertised() {
        for cfg in [
            ApproxConfig::inv_preset(7).unwrap(),
            ApproxConfig::invsqrt_preset(9).unwrap(),
            ApproxConfig::sign_preset(11).unwrap(),
        ] {
            let ctx = HeContext::new(4).unwrap();
            let x = ctx.encrypt(&[0.3, 0.5, 0.7, 0.9]).unwrap();
            let y = match cfg.kind {
                ApproxKind::Inv => goldschmidt_inv(&x, &cfg),
                ApproxKind::InvSqrt => goldschmidt_inv_sqrt(&x, &cfg),
                ApproxKind::Sign => sign_approx(&x, &cfg),
            }
            .unwrap();
            let l = ctx.ledger();
            let c = cfg.cost();
            assert_eq!((l.mults, l.depth), (c.mults, c.depth), "{:?}", cfg.kind);
            assert_eq!((l.leveled_mults, l.leveled_depth), (c.leveled_mults, c.leveled_depth));
            assert_eq!(y.depth(), c.depth);
            for (i, &v) in x.slots().iter().enumerate() {
                let plain = match cfg.kind {
                    ApproxKind::Inv => goldschmidt_inv(&v, &cfg),
                    ApproxKind::InvSqrt => goldschmidt_inv_sqrt(&v, &cfg),
                    ApproxKind::Sign => sign_approx(&v, &cfg),
                }
                .unwrap();
                assert!((plain - y.slots()[i]).abs() <= 1e-12 * plain.abs().max(1.0));
            }
        }
    }
}
