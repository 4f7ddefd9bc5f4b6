//! Encrypted-form argmax over the slot simulator: CutMax, the tournament
//! and league baselines, and the interval analysis CutMax's rescaling
//! constants come from.

mod compare;
mod cutmax_he;
mod interval;
mod range;

use serde::{Deserialize, Serialize};

pub use compare::{league_argmax, tournament_argmax, CompareConfig, DEFAULT_MASK_TOL};
pub use cutmax_he::{
    cutmax_he, cutmax_he_formula, cutmax_he_packed, cutmax_he_range, cutmax_he_rotations, CutMaxHeConfig,
};
pub use interval::Interval;
pub use range::{
    calibrate, range_proof, require_clean, RangeProofInput, RangeStep, RangeTrace, ScalingPolicy, Violation, DEFAULT_B_CKKS,
};

use crate::cutmax::{CutMaxParams, ScoreVector};
use crate::hesim::CostLedger;

/// Closed-form multiplication count and depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaCost {
    pub mults: usize,
    pub depth: usize,
}

/// A comparison mask lane ended far from both 0 and 1, so the selected
/// index may be unreliable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityWarning {
    /// Sequential comparison stage, counted from 0.
    pub stage: usize,
    /// Largest distance from {0, 1} among the stage's lanes.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ArgmaxReport {
    pub algorithm: String,
    pub n: usize,
    pub s: usize,
    pub ciphertexts: usize,
    pub params: Option<CutMaxParams>,
    #[serde(skip)]
    pub output: ScoreVector,
    pub predicted_index: usize,
    pub top_mass: f64,
    pub ledger: CostLedger,
    /// Closed-form cost in the leveled view; CutMax only.
    pub formula_mults: Option<usize>,
    pub formula_depth: Option<usize>,
    /// League scores before the final indicator.
    #[serde(skip)]
    pub scores: Option<Vec<f64>>,
    pub warnings: Vec<QualityWarning>,
}

impl ArgmaxReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests;
