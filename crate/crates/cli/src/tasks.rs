//! Experiment runners. Each returns plain rows; [`crate::report`] writes them.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use polyargmax::cutmax::{convergence_trace_with, cutmax_run, CutMaxConfig, CutMaxParams, LogitVector};
use polyargmax::encargmax::{
    calibrate, cutmax_he, league_argmax, tournament_argmax, ArgmaxReport, CompareConfig, CutMaxHeConfig, Interval,
};
use polyargmax::grad::{cutmax_jacobian, cutmax_jvp};
use polyargmax::hesim::HeContext;
use polyargmax::sampling::{violation_experiment, SamplerConfig, ViolationReport};

use crate::error::{CliError, Result};
use crate::grid::{Cell, Grid};

fn require_input(vectors: &[LogitVector]) -> Result<()> {
    if vectors.is_empty() {
        return Err(CliError::BadSpec("no input vectors".into()));
    }
    Ok(())
}

fn common_length(vectors: &[LogitVector]) -> Result<usize> {
    require_input(vectors)?;
    let n = vectors[0].len();
    if vectors.iter().any(|v| v.len() != n) {
        return Err(CliError::BadSpec("all vectors must have the same length".into()));
    }
    Ok(n)
}

fn root(n: usize) -> f64 {
    ((n - 1) as f64).sqrt()
}

/// `p = 3` and `c = factor * sqrt(n - 1)` for `t` iterations.
pub fn default_params(n: usize, factor: f64, t: usize) -> CutMaxParams {
    CutMaxParams::new(3, factor * root(n).max(1.0), t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub t: usize,
    pub p: u32,
    pub c: f64,
    pub vectors: usize,
    pub recovered: usize,
    pub recovery_rate: f64,
    pub mean_top_mass: f64,
    pub min_top_mass: f64,
    pub max_top_mass: f64,
}

/// Recovery and top mass per grid cell, cells sorted by `(T, p, c)`.
/// Schedules outside the convergence guarantee are allowed.
pub fn argmax_sweep(vectors: &[LogitVector], grid: &Grid) -> Result<Vec<SweepRow>> {
    require_input(vectors)?;
    let cfg = CutMaxConfig::unchecked();
    grid.cells()
        .par_iter()
        .map(|cell: &Cell| {
            let params = cell.params();
            let (mut recovered, mut sum) = (0, 0.0);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for x in vectors {
                let z = cutmax_run(x, &params, &cfg)?.scores;
                recovered += usize::from(z.argmax() == x.argmax());
                let m = z.top_mass();
                sum += m;
                lo = lo.min(m);
                hi = hi.max(m);
            }
            Ok(SweepRow {
                t: cell.t,
                p: cell.p,
                c: cell.c,
                vectors: vectors.len(),
                recovered,
                recovery_rate: recovered as f64 / vectors.len() as f64,
                mean_top_mass: sum / vectors.len() as f64,
                min_top_mass: lo,
                max_top_mass: hi,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeBenchOptions {
    pub alpha_bits: u32,
    /// Slot count; defaults to `min(next_pow2(n), 2^15)`.
    pub slots: Option<usize>,
    /// Defaults to `p = 3`, `c = 3 sqrt(n - 1)`, `T = 3`.
    pub schedule: Option<CutMaxParams>,
    /// League runs `next_pow2(n)` sign stages; skip it above this `n`.
    pub league_max: usize,
    /// Widening of measured intervals when the schedule needs calibration.
    pub margin: f64,
}

impl Default for HeBenchOptions {
    fn default() -> Self {
        Self {
            alpha_bits: 11,
            slots: None,
            schedule: None,
            league_max: 256,
            margin: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeBenchRow {
    pub algorithm: String,
    pub vectors: usize,
    /// Share of vectors whose predicted index is the plaintext argmax.
    pub accuracy: f64,
    pub mean_top_mass: f64,
    pub ciphertexts: usize,
    pub mults: usize,
    pub depth: usize,
    pub rotations: usize,
    pub leveled_mults: usize,
    pub leveled_depth: usize,
    pub sign_stages: usize,
    pub formula_mults: Option<usize>,
    pub formula_depth: Option<usize>,
    pub quality_warnings: usize,
    /// Simulator time. Not a model of encrypted latency.
    pub wall_clock_secs: f64,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HeBenchReport {
    pub n: usize,
    pub slots: usize,
    pub schedule: CutMaxParams,
    /// `proven` when the schedule meets the convergence guarantee,
    /// `calibrated` when scaling intervals were measured on the input batch.
    pub scaling: String,
    pub rows: Vec<HeBenchRow>,
}

fn he_row(algorithm: &str, vectors: &[LogitVector], runs: &[ArgmaxReport], secs: f64) -> HeBenchRow {
    let hits = vectors.iter().zip(runs).filter(|(x, r)| r.predicted_index == x.argmax()).count();
    // The circuit is data-independent, so every run has the same ledger.
    let first = &runs[0];
    let l = first.ledger;
    HeBenchRow {
        algorithm: algorithm.into(),
        vectors: vectors.len(),
        accuracy: hits as f64 / vectors.len() as f64,
        mean_top_mass: runs.iter().map(|r| r.top_mass).sum::<f64>() / runs.len() as f64,
        ciphertexts: first.ciphertexts,
        mults: l.mults,
        depth: l.depth,
        rotations: l.rotations,
        leveled_mults: l.leveled_mults,
        leveled_depth: l.leveled_depth,
        sign_stages: l.sign_stages,
        formula_mults: first.formula_mults,
        formula_depth: first.formula_depth,
        quality_warnings: runs.iter().map(|r| r.warnings.len()).sum(),
        wall_clock_secs: secs,
        skipped: None,
    }
}

fn skipped(algorithm: &str, vectors: usize, why: String) -> HeBenchRow {
    HeBenchRow {
        algorithm: algorithm.into(),
        vectors,
        accuracy: f64::NAN,
        mean_top_mass: f64::NAN,
        ciphertexts: 0,
        mults: 0,
        depth: 0,
        rotations: 0,
        leveled_mults: 0,
        leveled_depth: 0,
        sign_stages: 0,
        formula_mults: None,
        formula_depth: None,
        quality_warnings: 0,
        wall_clock_secs: 0.0,
        skipped: Some(why),
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Encrypted CutMax, tournament and league on the slot simulator.
pub fn he_bench(vectors: &[LogitVector], opts: &HeBenchOptions) -> Result<HeBenchReport> {
    let n = common_length(vectors)?;
    let slots = opts.slots.unwrap_or_else(|| n.next_power_of_two().min(1 << 15));
    let params = opts.schedule.clone().unwrap_or_else(|| default_params(n, 3.0, 3));
    let proven = params.guarantees_convergence(n) && !params.has_even_power();
    let mut cfg = if proven {
        let vars: Vec<f64> = vectors
            .iter()
            .map(|x| {
                let m = x.values().iter().sum::<f64>() / n as f64;
                x.values().iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64
            })
            .collect();
        let hull = Interval::hull(&vars);
        CutMaxHeConfig::presets(opts.alpha_bits, Interval::new(hull.lo / opts.margin, hull.hi * opts.margin))?
    } else {
        let mut cfg = CutMaxHeConfig::presets(opts.alpha_bits, Interval::new(1.0, 1.0))?;
        cfg.scaling = calibrate(vectors, &params, opts.margin)?;
        cfg
    };
    cfg = cfg.fit_domains(&vectors[0], &params)?;

    let mut rows = Vec::new();
    let (runs, secs) = timed(|| {
        vectors
            .iter()
            .map(|x| Ok(cutmax_he(&HeContext::new(slots)?, x, &params, &cfg)?))
            .collect::<Result<Vec<_>>>()
    })?;
    rows.push(he_row("cutmax-he", vectors, &runs, secs));

    let compare = CompareConfig::preset(opts.alpha_bits)?;
    let (runs, secs) = timed(|| {
        vectors
            .iter()
            .map(|x| Ok(tournament_argmax(&HeContext::new(slots)?, x.values(), &compare)?))
            .collect::<Result<Vec<_>>>()
    })?;
    rows.push(he_row("tournament", vectors, &runs, secs));

    if n > slots {
        rows.push(skipped("league", vectors.len(), format!("n = {n} exceeds {slots} slots")));
    } else if n > opts.league_max {
        rows.push(skipped("league", vectors.len(), format!("n = {n} above league limit {}", opts.league_max)));
    } else {
        let (runs, secs) = timed(|| {
            vectors
                .iter()
                .map(|x| Ok(league_argmax(&HeContext::new(slots)?, x.values(), &compare)?))
                .collect::<Result<Vec<_>>>()
        })?;
        rows.push(he_row("league", vectors, &runs, secs));
    }
    Ok(HeBenchReport {
        n,
        slots,
        schedule: params,
        scaling: if proven { "proven" } else { "calibrated" }.into(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NucleusOptions {
    pub p: f64,
    /// Defaults to `p`.
    pub q: Option<f64>,
    pub draws: usize,
    /// Defaults to `p = 3`, `c = 2 sqrt(n - 1)`, `T = 2`.
    pub params: Option<Cell>,
}

/// Per-prompt violation rates of both samplers against the top-p nucleus.
pub fn nucleus_violation(vectors: &[LogitVector], opts: &NucleusOptions, seed: u64) -> Result<ViolationReport> {
    let n = common_length(vectors)?;
    let cfg = SamplerConfig::new(opts.p, opts.q.unwrap_or(opts.p), seed)?;
    let params = opts.params.map_or_else(|| default_params(n, 2.0, 2), |c| c.params());
    Ok(violation_experiment(vectors, &cfg, &params, opts.draws)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub vector: usize,
    pub iteration: usize,
    pub mu: f64,
    pub s2: f64,
    pub dispersion: f64,
    pub fraction_below_mean: f64,
    pub top_mass: f64,
}

/// Per-iteration residual diagnostics. Without `cell`, uses `p = 3`,
/// `c = 2 sqrt(n - 1)`, `T = 6`.
pub fn converge_trace(vectors: &[LogitVector], cell: Option<Cell>) -> Result<Vec<TraceRow>> {
    require_input(vectors)?;
    let cfg = CutMaxConfig::unchecked();
    let mut rows = Vec::new();
    for (k, x) in vectors.iter().enumerate() {
        let params = cell.map_or_else(|| default_params(x.len(), 2.0, 6), |c| c.params());
        for e in convergence_trace_with(x, &params, &cfg)? {
            rows.push(TraceRow {
                vector: k,
                iteration: e.iteration,
                mu: e.stats.mu,
                s2: e.stats.s2,
                dispersion: e.stats.dispersion,
                fraction_below_mean: e.fraction_below_mean,
                top_mass: e.top_mass,
            });
        }
    }
    Ok(rows)
}

pub const GRAD_REL_TOL: f64 = 1e-4;
pub const GRAD_ROW_TOL: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradRow {
    pub vector: usize,
    pub n: usize,
    /// `|jvp - fd| / max(|jvp|, |fd|)`, or 0 when both are below the
    /// central difference's rounding floor `eps / h`.
    pub jvp_rel_error: f64,
    pub max_row_sum: f64,
    pub pass: bool,
}

/// JVP against central differences along a seeded random direction, and
/// Jacobian row sums. Direction `k` uses seed `seed ^ k`. Without `cell`,
/// uses `p = 3`, `c = 2 sqrt(n - 1)`, `T = 2`.
pub fn grad_check(vectors: &[LogitVector], cell: Option<Cell>, seed: u64) -> Result<Vec<GradRow>> {
    require_input(vectors)?;
    vectors
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let n = x.len();
            let params = cell.map_or_else(|| default_params(n, 2.0, 2), |c| c.params());
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k as u64);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jvp = cutmax_jvp(x, &v, &params)?;
            let cfg = CutMaxConfig::unchecked();
            let at = |sgn: f64| -> Result<Vec<f64>> {
                let y: Vec<f64> = x.values().iter().zip(&v).map(|(a, d)| a + sgn * FD_STEP * d).collect();
                Ok(cutmax_run(&LogitVector::new(y)?, &params, &cfg)?.scores.values)
            };
            let (plus, minus) = (at(1.0)?, at(-1.0)?);
            let fd: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * FD_STEP)).collect();
            let norm = |w: &[f64]| w.iter().map(|b| b * b).sum::<f64>().sqrt();
            let err = norm(&jvp.iter().zip(&fd).map(|(a, b)| a - b).collect::<Vec<_>>());
            let floor = f64::EPSILON / FD_STEP;
            let scale = norm(&jvp).max(norm(&fd));
            let rel = if scale < floor { 0.0 } else { err / scale };
            let rows = cutmax_jacobian(x, &params)?.row_sums();
            let max_row_sum = rows.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            Ok(GradRow {
                vector: k,
                n,
                jvp_rel_error: rel,
                max_row_sum,
                pass: rel <= GRAD_REL_TOL && max_row_sum <= GRAD_ROW_TOL,
            })
        })
        .collect()
}
