//! Allen–Stein test: a Riccati equation maps to one with constant
//! coefficients `c₀, c₁, c₂` under `η̄ = G(x)η`, `dx̄ = D(x)dx` exactly when
//! `T(x) = (b₁ + ½(b₂′/b₂ − b₀′/b₀))/√|b₀b₂|` is constant.

use serde::Serialize;

use super::RiccatiCoefficients;
use crate::error::{PassageError, Result};
use crate::passage::DriftSpec;

/// Relative tolerance on the constancy of `T`.
pub const CONSTANCY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AllenSteinParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Sign of `D`.
    pub kappa: f64,
}

impl AllenSteinParams {
    /// `D(x) = κ√|b₀b₂|`, so that `D²c₀c₂ = b₀b₂`.
    pub fn d(&self, coeffs: &RiccatiCoefficients, x: f64) -> f64 {
        self.kappa * (coeffs.b0(x) * coeffs.b2(x)).abs().sqrt()
    }

    /// `G(x) = √(b₂c₀/(b₀c₂))`, the factor in `η̄ = Gη`.
    pub fn g(&self, coeffs: &RiccatiCoefficients, x: f64) -> f64 {
        (coeffs.b2(x) * self.c0 / (coeffs.b0(x) * self.c2)).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AllenSteinWitness {
    /// Grid point of maximal deviation from the mean of `T`.
    pub x: f64,
    pub t_value: f64,
    pub t_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AllenSteinReport {
    pub integrable: bool,
    pub params: Option<AllenSteinParams>,
    pub witness: Option<AllenSteinWitness>,
    pub t_mean: f64,
    pub max_deviation: f64,
    /// Magnitude the deviation is compared against.
    pub scale: f64,
    pub grid_points: usize,
}

pub fn allen_stein_test(coeffs: &RiccatiCoefficients, grid: &[f64]) -> Result<AllenSteinReport> {
    allen_stein_test_with(coeffs, grid, CONSTANCY_TOL)
}

pub fn allen_stein_test_with(coeffs: &RiccatiCoefficients, grid: &[f64], tol: f64) -> Result<AllenSteinReport> {
    if grid.is_empty() {
        return Err(PassageError::Domain("empty grid".into()));
    }
    let mut t = Vec::with_capacity(grid.len());
    let mut scale: f64 = 0.0;
    let mut product_sign = 0.0;
    for &x in grid {
        let (b0, b1, b2) = (coeffs.b0(x), coeffs.b1(x), coeffs.b2(x));
        let prod = b0 * b2;
        if !(prod != 0.0 && prod.is_finite()) {
            return Err(PassageError::Domain(format!("b₀b₂ vanishes or is not finite at x = {x}")));
        }
        if product_sign != 0.0 && prod.signum() != product_sign {
            return Err(PassageError::Domain(format!("b₀b₂ changes sign at x = {x}")));
        }
        product_sign = prod.signum();
        let l0 = coeffs.b0_prime(x) / b0;
        let l2 = coeffs.b2_prime(x) / b2;
        let root = prod.abs().sqrt();
        t.push((b1 + 0.5 * (l2 - l0)) / root);
        scale = scale.max((b1.abs() + 0.5 * l2.abs() + 0.5 * l0.abs()) / root);
    }
    let t_mean = t.iter().sum::<f64>() / t.len() as f64;
    let (arg, max_deviation) = t
        .iter()
        .map(|v| (v - t_mean).abs())
        .enumerate()
        .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
    let integrable = max_deviation <= tol * scale.max(f64::MIN_POSITIVE);
    let (params, witness) = if integrable {
        let kappa = coeffs.b0(grid[0]).signum();
        // report an exact zero when T vanishes to tolerance
        let c1 = if t_mean.abs() <= tol * scale { 0.0 } else { kappa * t_mean };
        (Some(AllenSteinParams { c0: 1.0, c1, c2: product_sign, kappa }), None)
    } else {
        (None, Some(AllenSteinWitness { x: grid[arg], t_value: t[arg], t_mean }))
    };
    Ok(AllenSteinReport { integrable, params, witness, t_mean, max_deviation, scale, grid_points: grid.len() })
}

/// The two signs of the drift form of the integrability condition,
/// `φ′/2 + (λ+q) ± μφ = const·√|φ|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriftConditionSign {
    /// Follows from substituting the Segerdahl coefficients into `T`.
    Plus,
    /// The variant with `−μφ`, which `φ_K` does not satisfy.
    Minus,
}

/// `φ′(x)/2 + (λ+q) ± μφ(x)`.
pub fn drift_condition(drift: &DriftSpec, lambda: f64, q: f64, mu: f64, sign: DriftConditionSign, x: f64) -> f64 {
    let s = match sign {
        DriftConditionSign::Plus => 1.0,
        DriftConditionSign::Minus => -1.0,
    };
    0.5 * drift.derivative(x) + (lambda + q) + s * mu * drift.value(x)
}

/// Whether `drift_condition/√|φ|` is constant on `grid`. With
/// [`DriftConditionSign::Plus`] this equals `√(λμ)·|T|`, so the verdict
/// coincides with [`allen_stein_test`] on the Segerdahl coefficients.
pub fn satisfies_drift_condition(
    drift: &DriftSpec,
    lambda: f64,
    q: f64,
    mu: f64,
    sign: DriftConditionSign,
    grid: &[f64],
) -> bool {
    let mut values = Vec::with_capacity(grid.len());
    let mut scale: f64 = 0.0;
    for &x in grid {
        let phi = drift.value(x);
        let root = phi.abs().sqrt();
        values.push(drift_condition(drift, lambda, q, mu, sign, x) / root);
        scale = scale.max((0.5 * drift.derivative(x).abs() + lambda + q + mu * phi.abs()) / root);
    }
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    values.iter().all(|v| (v - mean).abs() <= CONSTANCY_TOL * scale)
}
