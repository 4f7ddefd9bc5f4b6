//! Sampling through an argmax: Gumbel-max and one-shot Beta-cut nucleus
//! sampling, plus the plaintext nucleus oracle used to score violations.
//!
//! Noise is drawn by the client in plaintext and added to the logits; the
//! argmax itself is CutMax, so the same code path works encrypted.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutmax::{cutmax, CutMaxParams, LogitVector, ScoreVector};
use crate::error::{Error, Result};

/// Mass slack when deciding whether a prefix reaches the nucleus mass.
pub const NUCLEUS_MASS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SamplerConfig {
    /// Nucleus mass `p`.
    pub nucleus_mass: f64,
    /// Target `P(G > p)` for the Beta noise `G`.
    pub tail_mass: f64,
    /// Beta(alpha, 1) shape.
    pub alpha: f64,
    pub seed: u64,
    pub ties: TiePolicy,
}

impl SamplerConfig {
    /// `alpha` derived from `(p, q)`.
    pub fn new(nucleus_mass: f64, tail_mass: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            nucleus_mass,
            tail_mass,
            alpha: nucleus_alpha(nucleus_mass, tail_mass)?,
            seed,
            ties: TiePolicy::default(),
        })
    }

    /// The `q = p` case.
    pub fn nucleus(p: f64, seed: u64) -> Result<Self> {
        Self::new(p, p, seed)
    }
}

/// Whether tokens tied with the last token of the nucleus prefix belong to
/// the nucleus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    #[default]
    Include,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleOutcome {
    pub onehot: ScoreVector,
    pub token_index: usize,
    /// Against the plaintext nucleus, when one was requested.
    pub inside_nucleus: Option<bool>,
}

/// `-ln(-ln u)`, a standard Gumbel variate for uniform `u`.
pub fn gumbel_from_uniform(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::DomainError(format!("gumbel needs 0 < u < 1, got {u}")));
    }
    Ok(-(-u.ln()).ln())
}

/// Inverse CDF of Beta(alpha, 1), whose CDF is `x^alpha`.
pub fn beta_inverse_cdf(u: f64, alpha: f64) -> f64 {
    u.powf(1.0 / alpha)
}

/// Shape `alpha` with `P(G > p) = q` for `G ~ Beta(alpha, 1)`, i.e.
/// `1 - p^alpha = q`.
pub fn nucleus_alpha(p: f64, q: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
        return Err(Error::DomainError(format!("need p, q in (0, 1), got p = {p}, q = {q}")));
    }
    Ok((1.0 - q).ln() / p.ln())
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Indices of the top-p nucleus: the shortest prefix of tokens sorted by
/// descending probability whose mass reaches `p`, ties at the boundary
/// handled per `ties`. Sorted by descending probability.
pub fn nucleus_set(x: &[f64], p: f64, ties: TiePolicy) -> Vec<usize> {
    let probs = softmax(x);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut mass = 0.0;
    let mut cut = order.len();
    for (k, &i) in order.iter().enumerate() {
        mass += probs[i];
        if mass >= p - NUCLEUS_MASS_EPS {
            cut = k + 1;
            break;
        }
    }
    if ties == TiePolicy::Include {
        let last = probs[order[cut - 1]];
        while cut < order.len() && probs[order[cut]] == last {
            cut += 1;
        }
    }
    order.truncate(cut);
    order
}

fn uniform<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

fn argmax_sample(x: &LogitVector, noise: impl Iterator<Item = f64>, params: &CutMaxParams) -> Result<(ScoreVector, usize)> {
    let perturbed = LogitVector::new(x.values().iter().zip(noise).map(|(a, g)| a + g).collect())?;
    let z = cutmax(&perturbed, params)?;
    let idx = z.argmax();
    Ok((z, idx))
}

/// Gumbel-max draw with an explicit generator.
pub fn gumbel_max_sample_rng<R: Rng>(x: &LogitVector, params: &CutMaxParams, rng: &mut R) -> Result<SampleOutcome> {
    let noise: Vec<f64> = (0..x.len())
        .map(|_| gumbel_from_uniform(uniform(rng)))
        .collect::<Result<_>>()?;
    let (onehot, token_index) = argmax_sample(x, noise.into_iter(), params)?;
    Ok(SampleOutcome {
        onehot,
        token_index,
        inside_nucleus: None,
    })
}

/// CutMax of `x + G` with i.i.d. Gumbel noise `G`; the index is distributed
/// as `softmax(x)` when CutMax preserves the argmax.
pub fn gumbel_max_sample(x: &LogitVector, params: &CutMaxParams, seed: u64) -> Result<SampleOutcome> {
    gumbel_max_sample_rng(x, params, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// One-shot nucleus draw with an explicit generator. `nucleus` is the
/// plaintext nucleus to score against, if any.
pub fn nucleus_one_shot_sample_rng<R: Rng>(
    x: &LogitVector,
    cfg: &SamplerConfig,
    params: &CutMaxParams,
    nucleus: Option<&[usize]>,
    rng: &mut R,
) -> Result<SampleOutcome> {
    let noise: Vec<f64> = (0..x.len()).map(|_| beta_inverse_cdf(uniform(rng), cfg.alpha)).collect();
    let (onehot, token_index) = argmax_sample(x, noise.into_iter(), params)?;
    Ok(SampleOutcome {
        onehot,
        token_index,
        inside_nucleus: nucleus.map(|s| s.contains(&token_index)),
    })
}

/// CutMax of `x + G` with i.i.d. `G ~ Beta(alpha, 1)` in `[0, 1]`, scored
/// against the plaintext top-p nucleus.
pub fn nucleus_one_shot_sample(x: &LogitVector, cfg: &SamplerConfig, params: &CutMaxParams) -> Result<SampleOutcome> {
    let nucleus = nucleus_set(x.values(), cfg.nucleus_mass, cfg.ties);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    nucleus_one_shot_sample_rng(x, cfg, params, Some(&nucleus), &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gumbel,
    BetaCut,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gumbel => "gumbel",
            Method::BetaCut => "beta-cut",
        }
    }
}

/// One CSV row of the violation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptViolations {
    pub prompt_id: usize,
    pub method: Method,
    pub draws: usize,
    pub violations: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub mean: f64,
    /// Sample standard deviation across prompts.
    pub std: f64,
}

impl RateSummary {
    fn of(rates: &[f64]) -> Self {
        let n = rates.len() as f64;
        let mean = rates.iter().sum::<f64>() / n;
        let std = if rates.len() > 1 {
            (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViolationReport {
    pub gumbel_rate: RateSummary,
    pub beta_cut_rate: RateSummary,
    pub rows: Vec<PromptViolations>,
}

/// Per-prompt violation rates of Gumbel-max and Beta-cut sampling against
/// the plaintext nucleus. Prompt `i` uses seed `cfg.seed ^ i`, with separate
/// generator streams for the two methods, so results do not depend on
/// thread scheduling.
pub fn violation_experiment(
    prompts: &[LogitVector],
    cfg: &SamplerConfig,
    params: &CutMaxParams,
    draws: usize,
) -> Result<ViolationReport> {
    if draws == 0 {
        return Err(Error::InvalidParams("draws must be >= 1".into()));
    }
    if prompts.is_empty() {
        return Err(Error::InvalidInput("no prompts".into()));
    }
    let per_prompt: Vec<[PromptViolations; 2]> = prompts
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<[PromptViolations; 2]> {
            let nucleus = nucleus_set(x.values(), cfg.nucleus_mass, cfg.ties);
            let seed = cfg.seed ^ i as u64;
            let mut g_rng = ChaCha8Rng::seed_from_u64(seed);
            g_rng.set_stream(0);
            let mut b_rng = ChaCha8Rng::seed_from_u64(seed);
            b_rng.set_stream(1);
            let (mut g_bad, mut b_bad) = (0, 0);
            for _ in 0..draws {
                let g = gumbel_max_sample_rng(x, params, &mut g_rng)?;
                g_bad += usize::from(!nucleus.contains(&g.token_index));
                let b = nucleus_one_shot_sample_rng(x, cfg, params, Some(&nucleus), &mut b_rng)?;
                b_bad += usize::from(b.inside_nucleus == Some(false));
            }
            let row = |method, violations: usize| PromptViolations {
                prompt_id: i,
                method,
                draws,
                violations,
                rate: violations as f64 / draws as f64,
            };
            Ok([row(Method::Gumbel, g_bad), row(Method::BetaCut, b_bad)])
        })
        .collect::<Result<_>>()?;
    let gumbel: Vec<f64> = per_prompt.iter().map(|r| r[0].rate).collect();
    let beta: Vec<f64> = per_prompt.iter().map(|r| r[1].rate).collect();
    Ok(ViolationReport {
        gumbel_rate: RateSummary::of(&gumbel),
        beta_cut_rate: RateSummary::of(&beta),
        rows: per_prompt.into_iter().flatten().collect(),
    })
}
