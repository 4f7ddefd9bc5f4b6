//! Argmax, sampling and normalization kernels built only from additions,
//! multiplications and slot rotations, so they can run under approximate
//! homomorphic encryption.
//!
//! The plaintext kernel lives in [`cutmax`]. [`hesim`] is a metered stand-in
//! for a packed ciphertext, and [`encargmax`] runs the encrypted forms of
//! CutMax and the comparison baselines on it.

pub mod cutmax;
pub mod encargmax;
pub mod error;
pub mod grad;
pub mod hesim;
pub mod polyapprox;
pub mod sampling;
pub mod synth;

pub use cutmax::{
    contraction_factor, convergence_trace, cutmax, cutmax_run, cutmax_step, fixed_point_target,
    CutMaxConfig, CutMaxParams, LogitVector, ParamMode, ResidualStats, ScoreVector,
};
pub use error::{Error, Result};
