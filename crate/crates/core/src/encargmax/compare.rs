//! Comparison-based baselines: pairwise knockout (tournament) and all-pairs
//! scoring (league). Both use the polynomial sign to build comparison masks.

use serde::{Deserialize, Serialize};

use super::interval::Interval;
use super::{ArgmaxReport, QualityWarning};
use crate::cutmax::{argmax, ScoreVector};
use crate::error::{Error, Result};
use crate::hesim::{HeContext, SlotVector};
use crate::polyapprox::{indicator_from_sign, sign_approx, ApproxConfig, ApproxKind};

pub const DEFAULT_MASK_TOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompareConfig {
    pub sign: ApproxConfig,
    /// Bounds on the inputs. `None` takes the plaintext hull.
    pub bounds: Option<Interval>,
    /// Mask entries farther than this from both 0 and 1 raise a
    /// [`QualityWarning`].
    pub mask_tol: f64,
}

impl CompareConfig {
    pub fn preset(alpha_bits: u32) -> Result<Self> {
        Ok(Self {
            sign: ApproxConfig::sign_preset(alpha_bits)?,
            bounds: None,
            mask_tol: DEFAULT_MASK_TOL,
        })
    }
}

/// Padding value and difference scale: every difference of two values in
/// `[sentinel, hi]` divided by `scale` lies in `[-1, 1]`, and a real value
/// always beats the sentinel by at least half the scale.
fn layout_constants(values: &[f64], bounds: Option<Interval>) -> Result<(f64, f64)> {
    let b = bounds.unwrap_or_else(|| Interval::hull(values));
    if let Some(v) = values.iter().find(|v| !b.contains(**v)) {
        return Err(Error::InvalidInput(format!("value {v} outside declared bounds {b}")));
    }
    let width = if b.width() > 0.0 { b.width() } else { 1.0 };
    Ok((b.lo - width, 2.0 * width))
}

fn check_sign(cfg: &CompareConfig, n: usize) -> Result<()> {
    if cfg.sign.kind != ApproxKind::Sign {
        return Err(Error::InvalidParams("comparison needs a sign configuration".into()));
    }
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 values".into()));
    }
    Ok(())
}

struct MaskAudit {
    tol: f64,
    stage: usize,
    warnings: Vec<QualityWarning>,
}

impl MaskAudit {
    /// Inspects a mask in simulation. Lanes comparing padding with padding
    /// are skipped; they carry no candidate.
    fn check(&mut self, mask: &SlotVector<'_>, a: &SlotVector<'_>, b: &SlotVector<'_>, sentinel: f64) {
        let worst = mask
            .slots()
            .iter()
            .zip(a.slots().iter().zip(b.slots()))
            .filter(|(_, (&u, &v))| !(u == sentinel && v == sentinel))
            .map(|(m, _)| m.abs().min((1.0 - m).abs()))
            .fold(0.0, f64::max);
        if worst > self.tol {
            self.warnings.push(QualityWarning {
                stage: self.stage,
                distance: worst,
            });
        }
        self.stage += 1;
    }
}

fn compare_mask<'c>(diff: &SlotVector<'c>, scale: f64, cfg: &CompareConfig) -> Result<SlotVector<'c>> {
    let s = sign_approx(&diff.scalar_mul(1.0 / scale), &cfg.sign)?;
    Ok(indicator_from_sign(&s))
}

/// Pairwise knockout over `log2 N` sequential stages, `N` the padded length.
///
/// A one-hot tracker `W` is multiplied by every stage's mask, so `W_i` stays
/// near 1 only for the lane that wins all its comparisons. When `n <= s` the
/// input is replicated with period `N`, which makes the rotated comparison of
/// lane `i + h` the complement of lane `i` and lets the tracker update
/// lane-wise. When `n > s` the first stages pair whole ciphertexts and need
/// no rotation.
pub fn tournament_argmax(ctx: &HeContext, x: &[f64], cfg: &CompareConfig) -> Result<ArgmaxReport> {
    check_sign(cfg, x.len())?;
    let n = x.len();
    let s = ctx.slots();
    let (sentinel, scale) = layout_constants(x, cfg.bounds)?;
    let mut audit = MaskAudit {
        tol: cfg.mask_tol,
        stage: 0,
        warnings: Vec::new(),
    };

    let (mut parts, period) = if n <= s {
        let period = n.next_power_of_two();
        let lanes: Vec<f64> = (0..s)
            .map(|i| x.get(i % period).copied().unwrap_or(sentinel))
            .collect();
        (vec![ctx.encrypt(&lanes)?], period)
    } else {
        let count = n.div_ceil(s).next_power_of_two();
        let mut padded = x.to_vec();
        padded.resize(count * s, sentinel);
        let parts = padded.chunks(s).map(|c| ctx.encrypt(c)).collect::<Result<Vec<_>>>()?;
        (parts, s)
    };
    let ones = vec![1.0; s];
    let mut trackers: Vec<SlotVector<'_>> = (0..parts.len()).map(|_| ctx.encrypt(&ones)).collect::<Result<_>>()?;
    // trackers[k] belongs to original part k; owner[j] lists parts whose
    // candidates currently live in surviving slot j.
    let mut owners: Vec<Vec<usize>> = (0..parts.len()).map(|k| vec![k]).collect();

    while parts.len() > 1 {
        let half = parts.len() / 2;
        let mut next = Vec::with_capacity(half);
        let mut next_owners = Vec::with_capacity(half);
        let mut masks = Vec::with_capacity(half);
        // One sequential stage, however many ciphertext pairs it holds.
        ctx.mark_sign_stage();
        for j in 0..half {
            let (a, b) = (&parts[j], &parts[j + half]);
            let diff = a.sub(b)?;
            masks.push(compare_mask(&diff, scale, cfg)?);
            let m = masks.last().expect("pushed");
            next.push(b.add(&m.mul(&diff)?)?);
        }
        for (j, m) in masks.iter().enumerate() {
            audit.check(m, &parts[j], &parts[j + half], sentinel);
            let lose = m.scalar_mul(-1.0).scalar_add(1.0);
            for &k in &owners[j] {
                trackers[k] = trackers[k].mul(m)?;
            }
            for &k in &owners[j + half] {
                trackers[k] = trackers[k].mul(&lose)?;
            }
            let mut merged = owners[j].clone();
            merged.extend(&owners[j + half]);
            next_owners.push(merged);
        }
        parts = next;
        owners = next_owners;
    }

    let mut a = parts.pop().expect("one part left");
    let mut h = period / 2;
    while h >= 1 {
        let rotated = a.rotate(h)?;
        let diff = a.sub(&rotated)?;
        ctx.mark_sign_stage();
        let m = compare_mask(&diff, scale, cfg)?;
        audit.check(&m, &a, &rotated, sentinel);
        a = rotated.add(&m.mul(&diff)?)?;
        for w in trackers.iter_mut() {
            *w = w.mul(&m)?;
        }
        h /= 2;
    }

    let output: Vec<f64> = if n <= s {
        trackers[0].slots()[..n].to_vec()
    } else {
        trackers.iter().flat_map(|w| w.slots().iter().copied()).take(n).collect()
    };
    finish("tournament", ctx, x, output, None, audit.warnings, parts_len(n, s))
}

fn parts_len(n: usize, s: usize) -> usize {
    if n <= s {
        1
    } else {
        n.div_ceil(s).next_power_of_two()
    }
}

/// All-pairs scoring in one ciphertext.
///
/// The input is laid out with period `L = next_pow2(n)`, replicated across
/// the slots and padded with a sentinel that loses every comparison. Round
/// `l = 1..L-1` compares every lane with the lane `l` to its right and adds
/// the indicator to the lane's score. Subtracting the `L - n` sentinel wins
/// leaves the real scores a permutation of `{n-1, ..., 0}`. One more sign on
/// `(score - (n - 1.5)) / n` extracts the lane whose score is `n - 1`.
/// Requires `n <= s`.
pub fn league_argmax(ctx: &HeContext, x: &[f64], cfg: &CompareConfig) -> Result<ArgmaxReport> {
    check_sign(cfg, x.len())?;
    let n = x.len();
    let s = ctx.slots();
    if n > s {
        return Err(Error::InvalidInput(format!("league needs n <= s, got n = {n}, s = {s}")));
    }
    let (sentinel, scale) = layout_constants(x, cfg.bounds)?;
    let period = n.next_power_of_two();
    let lanes: Vec<f64> = (0..s).map(|i| x.get(i % period).copied().unwrap_or(sentinel)).collect();
    let valid: Vec<f64> = (0..s).map(|i| if i % period < n { 1.0 } else { 0.0 }).collect();
    let a = ctx.encrypt(&lanes)?;
    let mut audit = MaskAudit {
        tol: cfg.mask_tol,
        stage: 0,
        warnings: Vec::new(),
    };

    let mut score: Option<SlotVector<'_>> = None;
    for l in 1..period {
        let rotated = a.rotate(l)?;
        let diff = a.sub(&rotated)?;
        ctx.mark_sign_stage();
        let m = compare_mask(&diff, scale, cfg)?;
        audit.check(&m, &a, &rotated, sentinel);
        score = Some(match score {
            None => m,
            Some(acc) => acc.add(&m)?,
        });
    }
    let score = score
        .expect("period >= 2")
        .scalar_add(-((period - n) as f64))
        .mul_plain(&valid)?;
    let scores = score.slots()[..n].to_vec();
    let centered = score.scalar_add(-(n as f64 - 1.5)).scalar_mul(1.0 / n as f64);
    ctx.mark_sign_stage();
    let out = indicator_from_sign(&sign_approx(&centered, &cfg.sign)?);
    let output: Vec<f64> = out.slots()[..n].to_vec();
    finish("league", ctx, x, output, Some(scores), audit.warnings, 1)
}

fn finish(
    algorithm: &str,
    ctx: &HeContext,
    x: &[f64],
    output: Vec<f64>,
    scores: Option<Vec<f64>>,
    warnings: Vec<QualityWarning>,
    ciphertexts: usize,
) -> Result<ArgmaxReport> {
    let predicted_index = argmax(&output);
    let total: f64 = output.iter().sum();
    // Share of the decoded indicator mass on the predicted lane.
    let top_mass = if total > 0.0 { output[predicted_index] / total } else { 0.0 };
    Ok(ArgmaxReport {
        algorithm: algorithm.into(),
        n: x.len(),
        s: ctx.slots(),
        ciphertexts,
        params: None,
        output: ScoreVector {
            values: output,
            normalized: false,
        },
        predicted_index,
        top_mass,
        ledger: ctx.ledger(),
        formula_mults: None,
        formula_depth: None,
        scores,
        warnings,
    })
}
