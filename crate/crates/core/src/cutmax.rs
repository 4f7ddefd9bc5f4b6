//! Plaintext CutMax: iterated standardize, shift, odd power, then normalize.
//!
//! Every iteration maps `y` to `(1 + (y - mean) / (c * std))^p`. With `p` odd
//! and `c > sqrt(n - 1)` every shifted value lies in `(0, 2)`, the order of the
//! entries is preserved, and the normalized iterates are pulled onto the
//! two-level vector returned by [`fixed_point_target`]. The dispersion of the
//! non-top residuals shrinks by at least [`contraction_factor`] per step.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPS_VAR: f64 = 1e-24;
pub const DEFAULT_TIE_GAP: f64 = 1e-9;

/// Scalar type the kernel runs on: `f64` for evaluation, dual numbers for
/// forward-mode derivatives.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn powu(self, p: u32) -> Self;
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powu(self, p: u32) -> Self {
        self.powi(p as i32)
    }
}

/// A validated vector of model scores: at least two entries, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "logit vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite logit {} at index {i}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LogitVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LogitVector> for Vec<f64> {
    fn from(v: LogitVector) -> Self {
        v.0
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// How strictly [`CutMaxParams`] are validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamMode {
    /// Any power `p >= 1`, including even powers used by some HE schedules.
    Unchecked,
    /// Odd powers `p >= 3`, `c > 0`.
    #[default]
    Standard,
    /// Standard, plus `c > sqrt(n - 1)` for every iteration so argmax
    /// preservation and contraction are guaranteed.
    Guaranteed,
}

/// Per-iteration power and scale schedules. `T` is the schedule length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutMaxParams {
    pub powers: Vec<u32>,
    pub scales: Vec<f64>,
}

impl CutMaxParams {
    /// Scalar `p` and `c` broadcast over `iterations` steps.
    pub fn new(p: u32, c: f64, iterations: usize) -> Self {
        Self {
            powers: vec![p; iterations],
            scales: vec![c; iterations],
        }
    }

    pub fn schedule(powers: Vec<u32>, scales: Vec<f64>) -> Self {
        Self { powers, scales }
    }

    pub fn iterations(&self) -> usize {
        self.powers.len()
    }

    pub fn validate(&self, n: usize, mode: ParamMode) -> Result<()> {
        if self.powers.is_empty() {
            return Err(Error::InvalidParams("at least one iteration is required".into()));
        }
        if self.powers.len() != self.scales.len() {
            return Err(Error::InvalidParams(format!(
                "power schedule has {} entries but scale schedule has {}",
                self.powers.len(),
                self.scales.len()
            )));
        }
        let bound = ((n as f64) - 1.0).sqrt();
        for (t, (&p, &c)) in self.powers.iter().zip(&self.scales).enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidParams(format!("c[{t}] = {c} must be positive")));
            }
            match mode {
                ParamMode::Unchecked => {
                    if p == 0 {
                        return Err(Error::InvalidParams(format!("p[{t}] must be >= 1")));
                    }
                }
                ParamMode::Standard | ParamMode::Guaranteed => {
                    if p < 3 || p % 2 == 0 {
                        return Err(Error::InvalidParams(format!(
                            "p[{t}] = {p} must be odd and >= 3"
                        )));
                    }
                }
            }
            if mode == ParamMode::Guaranteed && c <= bound {
                return Err(Error::InvalidParams(format!(
                    "c[{t}] = {c} must exceed sqrt(n - 1) = {bound}"
                )));
            }
        }
        Ok(())
    }

    pub fn has_even_power(&self) -> bool {
        self.powers.iter().any(|p| p % 2 == 0)
    }

    /// True when every `c[t] > sqrt(n - 1)` and every power is odd.
    pub fn guarantees_convergence(&self, n: usize) -> bool {
        self.validate(n, ParamMode::Guaranteed).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutMaxConfig {
    pub eps_var: f64,
    /// Stop once the normalized top mass reaches `1 - eps_stop`.
    pub eps_stop: Option<f64>,
    /// Top-2 gap below which a [`Warning::Tie`] is reported.
    pub tie_gap: f64,
    pub mode: ParamMode,
}

impl Default for CutMaxConfig {
    fn default() -> Self {
        Self {
            eps_var: DEFAULT_EPS_VAR,
            eps_stop: None,
            tie_gap: DEFAULT_TIE_GAP,
            mode: ParamMode::Standard,
        }
    }
}

impl CutMaxConfig {
    pub fn unchecked() -> Self {
        Self {
            mode: ParamMode::Unchecked,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Warning {
    /// The two largest inputs are closer than the configured gap; mass will be
    /// split between them.
    Tie { gap: f64 },
    /// An even power was used; order preservation is not guaranteed.
    EvenPower { iteration: usize, power: u32 },
}

/// Non-negative scores; `normalized` means they sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl ScoreVector {
    pub fn normalized(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: true,
        }
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    pub fn top_mass(&self) -> f64 {
        self.values[self.argmax()]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutMaxRun {
    pub scores: ScoreVector,
    pub iterations: usize,
    pub warnings: Vec<Warning>,
}

/// Standardization diagnostics of one iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub mu: f64,
    pub s2: f64,
    pub residuals: Vec<f64>,
    /// Sum of squared deviations of the non-top residuals from their mean.
    pub dispersion: f64,
}

impl ResidualStats {
    pub fn top_index(&self) -> usize {
        argmax(&self.residuals)
    }
}

fn mean_var<T: Real>(y: &[T]) -> (T, T) {
    let inv_n = T::from_f64(1.0 / y.len() as f64);
    let mut sum = T::from_f64(0.0);
    for &v in y {
        sum = sum + v;
    }
    let mu = sum * inv_n;
    let mut acc = T::from_f64(0.0);
    for &v in y {
        let d = v - mu;
        acc = acc + d * d;
    }
    (mu, acc * inv_n)
}

pub(crate) enum StepFailure {
    Degenerate(f64),
}

/// One inner update `(1 + r / c)^p` without normalization.
pub(crate) fn step_generic<T: Real>(
    y: &[T],
    p: u32,
    c: f64,
    eps_var: f64,
) -> std::result::Result<Vec<T>, StepFailure> {
    let (mu, s2) = mean_var(y);
    if !(s2.value() >= eps_var) {
        return Err(StepFailure::Degenerate(s2.value()));
    }
    let denom = T::from_f64(c) * s2.sqrt();
    let one = T::from_f64(1.0);
    Ok(y.iter().map(|&v| ((v - mu) / denom + one).powu(p)).collect())
}

pub(crate) fn normalize<T: Real>(y: &[T]) -> Vec<T> {
    let mut sum = T::from_f64(0.0);
    for &v in y {
        sum = sum + v;
    }
    y.iter().map(|&v| v / sum).collect()
}

/// Runs the full schedule on any [`Real`] and returns the normalized output.
/// Errors carry the failing iteration and its variance.
pub(crate) fn cutmax_generic<T: Real>(
    x: &[T],
    params: &CutMaxParams,
    cfg: &CutMaxConfig,
) -> std::result::Result<(Vec<T>, usize), (usize, f64)> {
    let mut y = x.to_vec();
    let mut done = 0;
    for (t, (&p, &c)) in params.powers.iter().zip(&params.scales).enumerate() {
        y = match step_generic(&y, p, c, cfg.eps_var) {
            Ok(next) => next,
            Err(StepFailure::Degenerate(v)) => return Err((t, v)),
        };
        done = t + 1;
        if let Some(eps) = cfg.eps_stop {
            let total: f64 = y.iter().map(|v| v.value()).sum();
            let top = y.iter().map(|v| v.value()).fold(f64::MIN, f64::max);
            if top / total >= 1.0 - eps {
                break;
            }
        }
    }
    Ok((normalize(&y), done))
}

/// Gap between the two largest entries.
pub fn top_two_gap(values: &[f64]) -> f64 {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in values {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    first - second
}

/// CutMax with default configuration. See [`cutmax_run`].
pub fn cutmax(x: &LogitVector, params: &CutMaxParams) -> Result<ScoreVector> {
    cutmax_run(x, params, &CutMaxConfig::default()).map(|run| run.scores)
}

pub fn cutmax_run(x: &LogitVector, params: &CutMaxParams, cfg: &CutMaxConfig) -> Result<CutMaxRun> {
    params.validate(x.len(), cfg.mode)?;
    let mut warnings = Vec::new();
    let gap = top_two_gap(x.values());
    if gap < cfg.tie_gap {
        warnings.push(Warning::Tie { gap });
    }
    for (iteration, &power) in params.powers.iter().enumerate() {
        if power % 2 == 0 {
            warnings.push(Warning::EvenPower { iteration, power });
        }
    }
    let (values, iterations) =
        cutmax_generic(x.values(), params, cfg).map_err(|(iteration, variance)| {
            Error::DegenerateInput {
                iteration,
                variance,
                eps: cfg.eps_var,
            }
        })?;
    Ok(CutMaxRun {
        scores: ScoreVector::normalized(values),
        iterations,
        warnings,
    })
}

/// Mean, variance, standardized residuals and non-top dispersion of `y`.
pub fn residual_stats(y: &[f64]) -> Result<ResidualStats> {
    residual_stats_eps(y, DEFAULT_EPS_VAR)
}

fn residual_stats_eps(y: &[f64], eps_var: f64) -> Result<ResidualStats> {
    if y.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 entries".into()));
    }
    let (mu, s2) = mean_var(y);
    if !(s2 >= eps_var) {
        return Err(Error::DegenerateInput {
            iteration: 0,
            variance: s2,
            eps: eps_var,
        });
    }
    let s = s2.sqrt();
    let residuals: Vec<f64> = y.iter().map(|v| (v - mu) / s).collect();
    let dispersion = non_top_dispersion(&residuals, argmax(y));
    Ok(ResidualStats {
        mu,
        s2,
        residuals,
        dispersion,
    })
}

/// `sum_{j != top} (v_j - mean_{j != top} v)^2`.
pub fn non_top_dispersion(values: &[f64], top: usize) -> f64 {
    let m = values.len() - 1;
    let mean = values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .map(|(_, v)| v)
        .sum::<f64>()
        / m as f64;
    values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .map(|(_, v)| (v - mean).powi(2))
        .sum()
}

/// One inner update (no normalization) with the stats of its input.
pub fn cutmax_step(y: &[f64], p: u32, c: f64) -> Result<(Vec<f64>, ResidualStats)> {
    if p == 0 || !(c > 0.0) {
        return Err(Error::InvalidParams(format!("p = {p}, c = {c}")));
    }
    let stats = residual_stats(y)?;
    let next = stats
        .residuals
        .iter()
        .map(|r| (1.0 + r / c).powi(p as i32))
        .collect();
    Ok((next, stats))
}

fn check_contraction_domain(n: usize, c: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("n = {n} must be >= 2")));
    }
    let root = ((n - 1) as f64).sqrt();
    if !(c > root) {
        return Err(Error::InvalidParams(format!(
            "c = {c} must exceed sqrt(n - 1) = {root}"
        )));
    }
    Ok(root)
}

/// Top mass of the two-level vector every two-level input is mapped to in a
/// single normalized step.
pub fn fixed_point_top_mass(n: usize, p: u32, c: f64) -> Result<f64> {
    let root = check_contraction_domain(n, c)?;
    let top = (1.0 + root / c).powi(p as i32);
    let rest = (1.0 - 1.0 / (c * root)).powi(p as i32);
    Ok(top / (top + (n - 1) as f64 * rest))
}

/// The two-level fixed point with the top mass at index 0.
pub fn fixed_point_target(n: usize, p: u32, c: f64) -> Result<ScoreVector> {
    let s = fixed_point_top_mass(n, p, c)?;
    Ok(ScoreVector::normalized(two_level(n, 0, s)))
}

/// `s` at `top`, `(1 - s) / (n - 1)` elsewhere.
pub fn two_level(n: usize, top: usize, s: f64) -> Vec<f64> {
    let rest = (1.0 - s) / (n - 1) as f64;
    (0..n).map(|i| if i == top { s } else { rest }).collect()
}

/// Per-step bound on the non-top dispersion.
pub fn contraction_factor(n: usize, p: u32, c: f64) -> Result<f64> {
    let root = check_contraction_domain(n, c)?;
    let q = root / c;
    let p = p as i32;
    let num = (p as f64 / c).powi(2) * (1.0 + q).powi(2 * (p - 1));
    let den = (n as f64).powi(2) * (1.0 - q).powi(2 * p);
    Ok(num / den)
}

/// Dispersion before and after one normalized step.
///
/// `before` is the non-top residual dispersion of `y`. `after_normalized` is
/// the spread of the non-top entries of the normalized image itself, which
/// is what [`contraction_factor`] bounds. `after_residual` re-standardizes the
/// image first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDispersion {
    pub before: f64,
    pub after_normalized: f64,
    pub after_residual: f64,
}

pub fn step_dispersion(y: &[f64], p: u32, c: f64) -> Result<StepDispersion> {
    let (next, stats) = cutmax_step(y, p, c)?;
    let image = normalize(&next);
    let top = argmax(y);
    let after_normalized = non_top_dispersion(&image, top);
    let after = residual_stats(&image)?;
    Ok(StepDispersion {
        before: stats.dispersion,
        after_normalized,
        after_residual: non_top_dispersion(&after.residuals, top),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Stats of the iterate entering this step.
    pub stats: ResidualStats,
    /// Fraction of the step's output entries strictly below their mean.
    pub fraction_below_mean: f64,
    /// Top mass of the normalized output of this step.
    pub top_mass: f64,
}

/// Per-iteration diagnostics along the CutMax trajectory of `x`.
pub fn convergence_trace(x: &LogitVector, params: &CutMaxParams) -> Result<Vec<TraceEntry>> {
    convergence_trace_with(x, params, &CutMaxConfig::default())
}

pub fn convergence_trace_with(
    x: &LogitVector,
    params: &CutMaxParams,
    cfg: &CutMaxConfig,
) -> Result<Vec<TraceEntry>> {
    params.validate(x.len(), cfg.mode)?;
    let mut y = x.values().to_vec();
    let mut out = Vec::with_capacity(params.iterations());
    for (t, (&p, &c)) in params.powers.iter().zip(&params.scales).enumerate() {
        let stats = residual_stats_eps(&y, cfg.eps_var).map_err(|e| match e {
            Error::DegenerateInput { variance, eps, .. } => Error::DegenerateInput {
                iteration: t,
                variance,
                eps,
            },
            other => other,
        })?;
        let next: Vec<f64> = stats
            .residuals
            .iter()
            .map(|r| (1.0 + r / c).powi(p as i32))
            .collect();
        let mean = next.iter().sum::<f64>() / next.len() as f64;
        let below = next.iter().filter(|&&v| v < mean).count();
        let image = normalize(&next);
        out.push(TraceEntry {
            iteration: t,
            stats,
            fraction_below_mean: below as f64 / next.len() as f64,
            top_mass: image[argmax(&image)],
        });
        y = next;
    }
    Ok(out)
}
