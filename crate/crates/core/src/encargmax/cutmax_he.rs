use serde::{Deserialize, Serialize};

use super::interval::Interval;
use super::range::{range_proof, require_clean, RangeProofInput, RangeTrace, ScalingPolicy, DEFAULT_B_CKKS};
use super::{ArgmaxReport, FormulaCost};
use crate::cutmax::{argmax, CutMaxParams, LogitVector, ParamMode, ScoreVector, DEFAULT_EPS_VAR};
use crate::error::{Error, Result};
use crate::hesim::{Arith, HeContext, Packed, SlotVector};
use crate::polyapprox::{goldschmidt_inv, goldschmidt_inv_sqrt, ApproxConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CutMaxHeConfig {
    pub invsqrt: ApproxConfig,
    pub inv: ApproxConfig,
    pub scaling: ScalingPolicy,
    pub b_ckks: f64,
    /// Bounds on the input logits used by the range proof. `None` takes the
    /// plaintext hull, which the encrypting client knows.
    pub bounds: Option<Interval>,
    /// Re-fit the inverse square root's start line to the variance range the
    /// range proof actually needs. Same iterations and cost, smaller error.
    pub refit_invsqrt: bool,
}

impl CutMaxHeConfig {
    /// Presets for `alpha` with a promised input-variance interval.
    pub fn presets(alpha_bits: u32, input_variance: Interval) -> Result<Self> {
        Ok(Self {
            invsqrt: ApproxConfig::invsqrt_preset(alpha_bits)?,
            inv: ApproxConfig::inv_preset(alpha_bits)?,
            scaling: ScalingPolicy::Proven { input_variance },
            b_ckks: DEFAULT_B_CKKS,
            bounds: None,
            refit_invsqrt: true,
        })
    }
}

impl CutMaxHeConfig {
    /// Replaces each approximation whose range does not cover what the range
    /// proof for `x` requires with one fitted to the required range, at the
    /// same accuracy. Costs grow accordingly. Leaves covered ones alone.
    pub fn fit_domains(&self, x: &LogitVector, params: &CutMaxParams) -> Result<Self> {
        let trace = cutmax_he_range(x, params, self);
        let lowest = |name: &str| {
            trace
                .steps
                .iter()
                .filter(|s| s.name == name)
                .map(|s| s.interval.lo)
                .fold(f64::INFINITY, f64::min)
        };
        let mut out = self.clone();
        let need = lowest("invsqrt-input");
        if need > 0.0 && need < self.invsqrt.input_range.0 {
            out.invsqrt = ApproxConfig::invsqrt_for_range(need, self.invsqrt.input_range.1, self.invsqrt.alpha_bits)?;
        }
        let need = lowest("inv-input");
        if need > 0.0 && need < self.inv.input_range.0 {
            out.inv = ApproxConfig::inv_for_range(need, self.inv.input_range.1, self.inv.alpha_bits)?;
        }
        Ok(out)
    }
}

/// The closed-form cost `sum_t (M + 5 + ceil(log2 p_t)) + M_inv + 1`, and
/// its depth analogue, in the leveled view.
pub fn cutmax_he_formula(params: &CutMaxParams, invsqrt: &ApproxConfig, inv: &ApproxConfig) -> FormulaCost {
    let (isq, iv) = (invsqrt.cost(), inv.cost());
    let log_p = |p: u32| (p as f64).log2().ceil() as usize;
    let mults = params.powers.iter().map(|&p| isq.leveled_mults + 5 + log_p(p)).sum::<usize>() + iv.leveled_mults + 1;
    let depth = params.powers.iter().map(|&p| isq.leveled_depth + 5 + log_p(p)).sum::<usize>() + iv.leveled_depth + 1;
    FormulaCost { mults, depth }
}

/// Rotations the circuit performs: two rotate-and-sums per iteration and
/// one for the final normalization.
pub fn cutmax_he_rotations(iterations: usize, slots: usize) -> usize {
    let log_s = slots.trailing_zeros() as usize;
    iterations * 2 * log_s + log_s
}

/// Runs the range proof the circuit relies on, for the given input.
pub fn cutmax_he_range(x: &LogitVector, params: &CutMaxParams, cfg: &CutMaxHeConfig) -> RangeTrace {
    range_proof(&RangeProofInput {
        bounds: cfg.bounds.unwrap_or_else(|| Interval::hull(x.values())),
        n: x.len(),
        params,
        invsqrt: &cfg.invsqrt,
        inv: &cfg.inv,
        scaling: &cfg.scaling,
        b_ckks: cfg.b_ckks,
    })
}

/// Encrypted CutMax.
///
/// Per iteration, with `m` the 0/1 mask of real lanes and `b` the variance
/// scale from the range proof:
///
/// ```text
/// mu = sum(Y) / n                       1 rotate-and-sum
/// d  = (Y - mu) * m
/// v  = sum(d^2) / (n b)                 1 mult, 1 rotate-and-sum
/// g  = invsqrt(v) / (c sqrt(b))         ~ 1 / (c sigma)
/// Y  = (g d + m)^p                      1 mult, pow
/// ```
///
/// Each iteration also multiplies `g` and `m` by `k^(1/p)`, which scales its
/// output by a plaintext constant `k` from the range proof: before the last
/// iteration `k` brings the next iterate into [-1, 1], and on the last it is
/// `1 / B` with `B` the bound on the final sum, so the sum lands in the
/// inverse's range and `Z = Y * inv(sum(Y))` needs no further rescale. The
/// constants ride on multiplications the circuit already does. Padding lanes
/// hold 0 and stay 0.
///
/// In the leveled view this costs exactly the closed-form depth, and
/// `pow(p) - ceil(log2 p)` extra mults per iteration (0 for p = 3).
pub fn cutmax_he(ctx: &HeContext, x: &LogitVector, params: &CutMaxParams, cfg: &CutMaxHeConfig) -> Result<ArgmaxReport> {
    params.validate(x.len(), ParamMode::Unchecked)?;
    let n = x.len() as f64;
    let mean = x.values().iter().sum::<f64>() / n;
    let var = x.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var >= DEFAULT_EPS_VAR) {
        return Err(Error::DegenerateInput {
            iteration: 0,
            variance: var,
            eps: DEFAULT_EPS_VAR,
        });
    }
    if let ScalingPolicy::Proven { input_variance } = &cfg.scaling {
        if !input_variance.contains(var) {
            return Err(Error::RangeProofViolation {
                step: "input".into(),
                detail: format!("input variance {var:e} outside promised {input_variance}"),
            });
        }
    }
    let trace = cutmax_he_range(x, params, cfg);
    require_clean(&trace)?;
    let mut cfg = cfg.clone();
    if cfg.refit_invsqrt {
        let needed = trace
            .steps
            .iter()
            .filter(|s| s.name == "invsqrt-input")
            .map(|s| s.interval.lo)
            .fold(f64::INFINITY, f64::min);
        cfg.invsqrt = cfg.invsqrt.narrowed(needed, cfg.invsqrt.input_range.1)?;
    }
    let cfg = &cfg;

    let packed = ctx.pack(x.values(), 0.0)?;
    let z = cutmax_he_packed(&packed, params, cfg, &trace)?;
    let output = z.decode();
    let predicted_index = argmax(&output);
    let top_mass = output[predicted_index];
    let formula = cutmax_he_formula(params, &cfg.invsqrt, &cfg.inv);
    Ok(ArgmaxReport {
        algorithm: "cutmax-he".into(),
        n: x.len(),
        s: ctx.slots(),
        ciphertexts: packed.parts.len(),
        params: Some(params.clone()),
        output: ScoreVector::normalized(output),
        predicted_index,
        top_mass,
        ledger: ctx.ledger(),
        formula_mults: Some(formula.mults),
        formula_depth: Some(formula.depth),
        scores: None,
        warnings: Vec::new(),
    })
}

/// The circuit on an already packed, zero-padded input. `trace` supplies
/// the rescaling constants and must come from a clean range proof.
pub fn cutmax_he_packed<'c>(
    y: &Packed<'c>,
    params: &CutMaxParams,
    cfg: &CutMaxHeConfig,
    trace: &RangeTrace,
) -> Result<Packed<'c>> {
    let ctx = y.context();
    let n = y.len as f64;
    let masks = ctx.valid_mask(y.len, y.parts.len());
    let t_max = params.iterations();
    if trace.variance_scales.len() != t_max || trace.output_scales.len() != t_max {
        return Err(Error::InvalidParams("range trace does not match the schedule".into()));
    }
    let mut y = y.clone();
    for (t, (&p, &c)) in params.powers.iter().zip(&params.scales).enumerate() {
        let b = trace.variance_scales[t];
        let mu = y.total().scalar_mul(1.0 / n);
        let d = y.map_indexed(|k, part| part.sub(&mu).expect("same context").mul_plain(&masks[k]).expect("mask width"));
        let sq = d.map(|part| part.square());
        let v = sq.total().scalar_mul(1.0 / (n * b));
        let g = goldschmidt_inv_sqrt(&v, &cfg.invsqrt)?;
        let beta = trace.output_scales[t].powf(1.0 / p as f64);
        let gs = g.scalar_mul(beta / (c * b.sqrt()));
        y = d.map_indexed(|k, part| {
            let shift: Vec<f64> = masks[k].iter().map(|m| m * beta).collect();
            let lin = gs.mul(part).expect("same context").add_plain(&shift).expect("mask width");
            Arith::pow(&lin, p)
        });
    }
    let inv = goldschmidt_inv(&y.total(), &cfg.inv)?;
    Ok(y.map(|part: &SlotVector<'c>| part.mul(&inv).expect("same context")))
}
