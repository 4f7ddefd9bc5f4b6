//! Interval propagation through the encrypted CutMax circuit.
//!
//! Every ciphertext value in the circuit must stay below the scheme's
//! plaintext bound, and every input to an approximation must stay inside the
//! range the approximation is accurate on. Nothing can be checked after
//! encryption, so the check happens up front on intervals.

use serde::{Deserialize, Serialize};

use super::interval::Interval;
use crate::cutmax::{CutMaxParams, LogitVector};
use crate::error::{Error, Result};
use crate::polyapprox::ApproxConfig;

/// Default bound on the magnitude of any encrypted value.
pub const DEFAULT_B_CKKS: f64 = (1u64 << 30) as f64;

/// How the variance and sum intervals that fix the plaintext rescaling
/// constants are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalingPolicy {
    /// Only the input variance is promised by the caller. Later variances
    /// follow from the derivative bounds of `u -> (1 + u/c)^p` on the sharp
    /// residual range `|r| <= sqrt(n - 1)`, and the output sum from Jensen's
    /// inequality. Requires `c > sqrt(n - 1)`.
    Proven { input_variance: Interval },
    /// Intervals measured on calibration data, one per iteration for the
    /// variance entering it and for the standardized residuals, plus the sum
    /// of the last iterate. Nothing is proven; use when the schedule violates
    /// `c > sqrt(n - 1)`.
    Calibrated {
        variances: Vec<Interval>,
        residuals: Vec<Interval>,
        sum: Interval,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    /// Some encrypted value may exceed the plaintext bound.
    Overflow,
    /// The rescaled variance may leave the inverse square root's range.
    InvSqrtDomain,
    /// The rescaled final sum may leave the inverse's range.
    InvDomain,
    /// Shifted values may leave `(0, 2)`; order preservation is lost.
    ShiftedRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeStep {
    pub iteration: Option<usize>,
    pub name: String,
    pub interval: Interval,
    pub violation: Option<Violation>,
}

/// Per-step value intervals plus the rescaling constants they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTrace {
    pub steps: Vec<RangeStep>,
    /// Upper end of the variance interval entering each iteration; the
    /// circuit divides by it before the inverse square root.
    pub variance_scales: Vec<f64>,
    /// Upper end of the final sum interval.
    pub sum_scale: f64,
    /// Factor each iteration's powered output is multiplied by, folded into
    /// the iteration's affine map as its `p`-th root. Before the last
    /// iteration it brings the next iterate into [-1, 1], which keeps later
    /// sums of squares small; after the last it is `1 / sum_scale`, which puts the
    /// final sum inside the inverse's range.
    pub output_scales: Vec<f64>,
}

impl RangeTrace {
    pub fn violations(&self) -> impl Iterator<Item = &RangeStep> {
        self.steps.iter().filter(|s| s.violation.is_some())
    }

    pub fn is_clean(&self) -> bool {
        self.violations().next().is_none()
    }

    /// Error for the first violation that would corrupt the output.
    pub fn first_blocking(&self) -> Option<Error> {
        self.violations()
            .find(|s| s.violation != Some(Violation::ShiftedRange))
            .map(|s| Error::RangeProofViolation {
                step: match s.iteration {
                    Some(t) => format!("{} (iteration {t})", s.name),
                    None => s.name.clone(),
                },
                detail: format!("{:?}: interval {}", s.violation.expect("filtered"), s.interval),
            })
    }

    pub fn step(&self, iteration: Option<usize>, name: &str) -> Option<&RangeStep> {
        self.steps.iter().find(|s| s.iteration == iteration && s.name == name)
    }
}

/// Inputs to [`range_proof`].
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProofInput<'a> {
    /// Bounds on every input logit.
    pub bounds: Interval,
    pub n: usize,
    pub params: &'a CutMaxParams,
    pub invsqrt: &'a ApproxConfig,
    pub inv: &'a ApproxConfig,
    pub scaling: &'a ScalingPolicy,
    pub b_ckks: f64,
}

struct Tracer {
    steps: Vec<RangeStep>,
    b_ckks: f64,
}

impl Tracer {
    fn push(&mut self, iteration: Option<usize>, name: &str, interval: Interval, violation: Option<Violation>) {
        let violation = violation.or((interval.magnitude() > self.b_ckks).then_some(Violation::Overflow));
        self.steps.push(RangeStep {
            iteration,
            name: name.to_string(),
            interval,
            violation,
        });
    }
}

fn domain_check(normalized: &Interval, cfg: &ApproxConfig, v: Violation) -> Option<Violation> {
    let (lo, hi) = cfg.input_range;
    (!(normalized.lo > 0.0 && normalized.is_subset_of(&Interval::new(lo, hi)))).then_some(v)
}

/// Propagates intervals through every stage of the encrypted circuit and
/// flags overflow and approximation-domain exits. Never fails; the caller
/// decides what to do with the flags.
pub fn range_proof(input: &RangeProofInput<'_>) -> RangeTrace {
    let n = input.n as f64;
    let root = (n - 1.0).sqrt();
    let t_max = input.params.iterations();
    let mut tr = Tracer {
        steps: Vec::new(),
        b_ckks: input.b_ckks,
    };
    let mut variance_scales = Vec::with_capacity(t_max);
    let mut output_scales = Vec::with_capacity(t_max);

    // Population variance of values in [lo, hi] is at most width^2 / 4.
    let popoviciu = Interval::new(0.0, input.bounds.width().powi(2) / 4.0);
    let mut y_range = input.bounds;
    let mut variance = match input.scaling {
        ScalingPolicy::Proven { input_variance } => input_variance.intersect(&popoviciu).unwrap_or(*input_variance),
        ScalingPolicy::Calibrated { variances, .. } => variances.first().copied().unwrap_or(popoviciu),
    };
    tr.push(None, "input", y_range, None);

    let mut last = (0u32, 0.0f64, Interval::point(0.0));
    for (t, (&p, &c)) in input.params.powers.iter().zip(&input.params.scales).enumerate() {
        let it = Some(t);
        let sum = y_range.scale(n);
        tr.push(it, "sum", sum, None);
        let mu = y_range;
        tr.push(it, "mean", mu, None);
        let dev = y_range.sub(&mu);
        tr.push(it, "deviation", dev, None);
        let sq = dev.square();
        tr.push(it, "squared", sq, None);
        tr.push(it, "sum-squares", sq.scale(n), None);

        let b = variance.hi;
        variance_scales.push(b);
        let normalized = if b > 0.0 { variance.scale(1.0 / b) } else { variance };
        let flag = domain_check(&normalized, input.invsqrt, Violation::InvSqrtDomain);
        tr.push(it, "invsqrt-input", normalized, flag);
        if flag.is_some() {
            // No usable bound on 1/sigma; keep propagating what is still sound.
            tr.push(it, "invsqrt-output", Interval::new(0.0, f64::INFINITY), None);
        } else {
            tr.push(it, "invsqrt-output", normalized.sqrt().recip(), None);
        }

        let residual = match input.scaling {
            ScalingPolicy::Proven { .. } => Interval::new(-root, root),
            ScalingPolicy::Calibrated { residuals, .. } => residuals
                .get(t)
                .copied()
                .unwrap_or(Interval::new(-root, root))
                .intersect(&Interval::new(-root, root))
                .unwrap_or(Interval::new(-root, root)),
        };
        let shifted = residual.scale(1.0 / c).shift(1.0);
        let order = (!shifted.is_inside_open(0.0, 2.0) || p % 2 == 0).then_some(Violation::ShiftedRange);
        tr.push(it, "shifted", shifted, order);
        let powered = shifted.pow(p);
        tr.push(it, "powered", powered, None);
        last = (p, c, shifted);

        if t + 1 < t_max {
            variance = match input.scaling {
                ScalingPolicy::Proven { .. } => {
                    if shifted.lo > 0.0 {
                        // Var(phi(r)) lies between min phi'^2 and max phi'^2
                        // times Var(r) = 1, and phi' is monotone here.
                        let d = |u: f64| (p as f64 / c) * u.powi(p as i32 - 1);
                        Interval::new(d(shifted.lo).powi(2), d(shifted.hi).powi(2))
                    } else {
                        Interval::new(0.0, powered.width().powi(2) / 4.0)
                    }
                }
                ScalingPolicy::Calibrated { variances, .. } => variances
                    .get(t + 1)
                    .copied()
                    .unwrap_or(Interval::new(0.0, powered.width().powi(2) / 4.0)),
            };
            // Keep the next iterate inside [-1, 1] so its sums stay small.
            let g = 1.0 / powered.lo.abs().max(powered.hi.abs());
            if g.is_finite() && g > 0.0 {
                variance = variance.scale(g * g);
                y_range = powered.scale(g);
                output_scales.push(g);
            } else {
                y_range = powered;
                output_scales.push(1.0);
            }
            tr.push(it, "rescaled", y_range, None);
        }
    }

    let (p, _, shifted) = last;
    let total = match input.scaling {
        ScalingPolicy::Proven { .. } => {
            // mean(y^p) >= mean(y)^p = 1 by convexity of u^p on u > 0.
            if shifted.lo > 0.0 || p % 2 == 0 {
                Interval::new(n, n * shifted.pow(p).hi)
            } else {
                shifted.pow(p).scale(n)
            }
        }
        ScalingPolicy::Calibrated { sum, .. } => *sum,
    };
    tr.push(None, "final-sum", total, None);
    let sum_scale = total.hi;
    output_scales.push(1.0 / sum_scale);
    let normalized = total.scale(1.0 / sum_scale);
    let flag = domain_check(&normalized, input.inv, Violation::InvDomain);
    tr.push(None, "inv-input", normalized, flag);
    if flag.is_none() {
        tr.push(None, "inv-output", normalized.recip(), None);
    }
    tr.push(None, "output", Interval::new(0.0, 1.0), None);

    RangeTrace {
        steps: tr.steps,
        variance_scales,
        sum_scale,
        output_scales,
    }
}

/// Fails with the first blocking violation of `trace`.
pub fn require_clean(trace: &RangeTrace) -> Result<()> {
    match trace.first_blocking() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Measures the intervals [`ScalingPolicy::Calibrated`] needs on plaintext
/// calibration vectors: the variance entering each iteration, the
/// standardized residuals, and the sum of the last iterate. Variances and the
/// sum are widened by the factor `margin` on both sides, residual intervals
/// by `margin - 1` of their width.
pub fn calibrate(xs: &[LogitVector], params: &CutMaxParams, margin: f64) -> Result<ScalingPolicy> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("no calibration vectors".into()));
    }
    if !(margin >= 1.0) {
        return Err(Error::InvalidParams(format!("margin must be >= 1, got {margin}")));
    }
    let t_max = params.iterations();
    let mut variances: Vec<Option<Interval>> = vec![None; t_max];
    let mut residuals: Vec<Option<Interval>> = vec![None; t_max];
    let mut sum = None;
    let widen = |a: &mut Option<Interval>, lo: f64, hi: f64| {
        *a = Some(match *a {
            None => Interval::new(lo, hi),
            Some(i) => Interval::new(i.lo.min(lo), i.hi.max(hi)),
        });
    };
    for x in xs {
        let mut y = x.values().to_vec();
        let n = y.len() as f64;
        for (t, (&p, &c)) in params.powers.iter().zip(&params.scales).enumerate() {
            let mean = y.iter().sum::<f64>() / n;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(Error::DegenerateInput {
                    iteration: t,
                    variance: var,
                    eps: 0.0,
                });
            }
            widen(&mut variances[t], var, var);
            let sd = var.sqrt();
            let r: Vec<f64> = y.iter().map(|v| (v - mean) / sd).collect();
            let hull = Interval::hull(&r);
            widen(&mut residuals[t], hull.lo, hull.hi);
            y = r.iter().map(|r| (1.0 + r / c).powi(p as i32)).collect();
        }
        let total: f64 = y.iter().sum();
        widen(&mut sum, total, total);
    }
    let scale = |i: Option<Interval>| {
        let i = i.expect("every iteration measured");
        Interval::new(i.lo / margin, i.hi * margin)
    };
    let pad = |i: Option<Interval>| {
        let i = i.expect("every iteration measured");
        let d = (margin - 1.0) * i.width();
        Interval::new(i.lo - d, i.hi + d)
    };
    Ok(ScalingPolicy::Calibrated {
        variances: variances.into_iter().map(scale).collect(),
        residuals: residuals.into_iter().map(pad).collect(),
        sum: scale(sum),
    })
}
