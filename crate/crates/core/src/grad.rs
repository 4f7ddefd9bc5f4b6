//! Exact derivatives of plaintext CutMax by forward-mode dual numbers.
//!
//! Every stage (mean, variance, inverse square root, odd power,
//! normalization) is smooth while the variance stays positive, so the
//! surrogate can be dropped into a differentiable pipeline as is.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::cutmax::{cutmax_generic, CutMaxConfig, CutMaxParams, LogitVector, ParamMode, Real};
use crate::error::{Error, Result};

/// `value + deriv * eps` with `eps^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub deriv: f64,
}

impl Dual {
    pub fn new(value: f64, deriv: f64) -> Self {
        Self { value, deriv }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.value + o.value, self.deriv + o.deriv)
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.value - o.value, self.deriv - o.deriv)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.value * o.value, self.deriv * o.value + self.value * o.deriv)
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.value / o.value;
        Self::new(q, (self.deriv - q * o.deriv) / o.value)
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.deriv)
    }
}

impl Real for Dual {
    fn from_f64(v: f64) -> Self {
        Self::new(v, 0.0)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        Self::new(r, self.deriv / (2.0 * r))
    }
    fn powu(self, p: u32) -> Self {
        if p == 0 {
            return Self::from_f64(1.0);
        }
        let lower = self.value.powi(p as i32 - 1);
        Self::new(lower * self.value, p as f64 * lower * self.deriv)
    }
}

/// `matrix[i][j] = dZ_i / dx_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jacobian {
    pub matrix: Vec<Vec<f64>>,
}

impl Jacobian {
    /// Derivatives along the all-ones direction; zero by shift invariance.
    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.iter().map(|r| r.iter().sum()).collect()
    }

    /// Derivatives of `sum(Z)`; zero because the output always sums to one.
    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.matrix.len();
        (0..n).map(|j| self.matrix.iter().map(|r| r[j]).sum()).collect()
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        self.matrix
            .iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn run_dual(x: &LogitVector, v: &[f64], params: &CutMaxParams) -> Result<Vec<Dual>> {
    if v.len() != x.len() {
        return Err(Error::InvalidInput(format!("direction has length {}, input {}", v.len(), x.len())));
    }
    params.validate(x.len(), ParamMode::Unchecked)?;
    let duals: Vec<Dual> = x.values().iter().zip(v).map(|(&a, &d)| Dual::new(a, d)).collect();
    cutmax_generic(&duals, params, &CutMaxConfig::unchecked())
        .map(|(z, _)| z)
        .map_err(|(iteration, variance)| Error::SingularityError { iteration, variance })
}

/// Directional derivative of `cutmax(x)` along `v`.
pub fn cutmax_jvp(x: &LogitVector, v: &[f64], params: &CutMaxParams) -> Result<Vec<f64>> {
    Ok(run_dual(x, v, params)?.into_iter().map(|d| d.deriv).collect())
}

/// Full Jacobian from one JVP per basis direction.
pub fn cutmax_jacobian(x: &LogitVector, params: &CutMaxParams) -> Result<Jacobian> {
    let n = x.len();
    let mut matrix = vec![vec![0.0; n]; n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = cutmax_jvp(x, &e, params)?;
        e[j] = 0.0;
        for (i, d) in col.into_iter().enumerate() {
            matrix[i][j] = d;
        }
    }
    Ok(Jacobian { matrix })
}
