//! The first-passage problem: model and problem types, the linear ODE system
//! for `(Ψ, M₁, …, Mₙ)`, closed forms for exponential jumps and a numerical
//! boundary-value solver for any number of phases.

mod bvp;
mod closed_form;
mod drift;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PassageError, Result};
use crate::phase_type::PhaseType;

pub use bvp::{solve_bvp, solve_bvp_with, BvpOptions};
pub use closed_form::{constant_drift_solution, segerdahl_q0_solution, ConstantDriftSolution, SegerdahlQ0Solution};
pub use drift::{DriftKind, DriftSpec, Interpolation, Interval};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpDirection {
    #[default]
    Downward,
    Upward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub drift: DriftSpec,
    /// λ, jumps per unit time.
    pub jump_rate: f64,
    /// q, killing rate per unit time.
    pub kill_rate: f64,
    pub jumps: PhaseType,
    #[serde(default)]
    pub jump_direction: JumpDirection,
}

impl ModelSpec {
    pub fn new(drift: DriftSpec, jump_rate: f64, kill_rate: f64, jumps: PhaseType, jump_direction: JumpDirection) -> Result<Self> {
        let m = ModelSpec { drift, jump_rate, kill_rate, jumps, jump_direction };
        m.validate()?;
        Ok(m)
    }

    /// Downward exponential(μ) jumps.
    pub fn exponential(drift: DriftSpec, jump_rate: f64, kill_rate: f64, mu: f64) -> Result<Self> {
        Self::new(drift, jump_rate, kill_rate, PhaseType::exponential(mu)?, JumpDirection::Downward)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jump_rate > 0.0 && self.jump_rate.is_finite()) {
            return Err(PassageError::InvalidModel(format!("jump rate must be positive and finite, got {}", self.jump_rate)));
        }
        if !(self.kill_rate >= 0.0 && self.kill_rate.is_finite()) {
            return Err(PassageError::InvalidModel(format!("kill rate must be nonnegative and finite, got {}", self.kill_rate)));
        }
        let report = self.jumps.validate();
        if !report.is_valid() {
            return Err(PassageError::InvalidPhaseType(report));
        }
        Ok(())
    }

    /// Number of phases n.
    pub fn phases(&self) -> usize {
        self.jumps.dim()
    }

    /// μ for single-phase (exponential) jumps.
    pub fn exponential_rate(&self) -> Option<f64> {
        (self.jumps.dim() == 1).then(|| -self.jumps.sub_generator()[(0, 0)])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// τ_l before τ_L and before the killing time.
    RuinBelow,
    /// τ_L before τ_l and before the killing time.
    ExitAbove,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageProblem {
    pub lower: f64,
    /// `None` is +∞.
    #[serde(default)]
    pub upper: Option<f64>,
    pub estimand: Estimand,
    /// ξ of the overshoot penalty `e^{−ξ·overshoot}`; Monte Carlo only.
    #[serde(default)]
    pub overshoot_xi: f64,
}

impl PassageProblem {
    pub fn ruin_below(lower: f64) -> Self {
        PassageProblem { lower, upper: None, estimand: Estimand::RuinBelow, overshoot_xi: 0.0 }
    }

    pub fn two_sided(lower: f64, upper: f64, estimand: Estimand) -> Self {
        PassageProblem { lower, upper: Some(upper), estimand, overshoot_xi: 0.0 }
    }

    pub fn upper_level(&self) -> f64 {
        self.upper.unwrap_or(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lower.is_finite() {
            return Err(PassageError::InvalidModel(format!("lower level must be finite, got {}", self.lower)));
        }
        if !(self.lower < self.upper_level()) {
            return Err(PassageError::InvalidModel(format!(
                "lower level {} must be below upper level {}",
                self.lower,
                self.upper_level()
            )));
        }
        if !(self.overshoot_xi >= 0.0 && self.overshoot_xi.is_finite()) {
            return Err(PassageError::InvalidModel(format!("overshoot_xi must be ≥ 0, got {}", self.overshoot_xi)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    OdeBvp,
    RiccatiNumeric,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::OdeBvp => "ode_bvp",
            Method::RiccatiNumeric => "riccati_numeric",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionCurve {
    pub grid: Vec<f64>,
    pub psi: Vec<f64>,
    /// `m[j][i]` is `M_{i+1}(grid[j])`.
    pub m: Vec<Vec<f64>>,
    pub method: Method,
    /// Per-point bound on `|ΔΨ|`.
    pub error_estimate: Vec<f64>,
}

impl SolutionCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `M_{phase+1}` along the grid.
    pub fn m_phase(&self, phase: usize) -> Vec<f64> {
        self.m.iter().map(|row| row[phase]).collect()
    }

    /// Columns `x, psi, m_1..m_n, method`; numbers carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.m.first().map_or(0, Vec::len);
        let mut out = String::from("x,psi");
        for i in 1..=n {
            let _ = write!(out, ",m_{i}");
        }
        out.push_str(",method\n");
        for (j, x) in self.grid.iter().enumerate() {
            out.push_str(&fmt_num(*x));
            out.push(',');
            out.push_str(&fmt_num(self.psi[j]));
            for v in &self.m[j] {
                out.push(',');
                out.push_str(&fmt_num(*v));
            }
            out.push(',');
            out.push_str(self.method.as_str());
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// The system `y′ = A(x)y` for `y = (Ψ, M₁, …, Mₙ)`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    lambda: f64,
    kill: f64,
    beta: DVector<f64>,
    /// `±(b | B)`, n × (n+1).
    lower: DMatrix<f64>,
    drift: DriftSpec,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.beta.len() + 1
    }

    pub fn drift(&self) -> &DriftSpec {
        &self.drift
    }

    /// `A(x)`; errors outside the drift's sign domain.
    pub fn matrix(&self, x: f64) -> Result<DMatrix<f64>> {
        if !self.drift.sign_domain().contains(x) {
            return Err(PassageError::Domain(format!("x = {x} lies outside the drift sign domain")));
        }
        let d = self.dim();
        let phi = self.drift.value(x);
        let mut a = DMatrix::zeros(d, d);
        a[(0, 0)] = (self.lambda + self.kill) / phi;
        for j in 0..d - 1 {
            a[(0, j + 1)] = -self.lambda * self.beta[j] / phi;
        }
        a.view_mut((1, 0), (d - 1, d)).copy_from(&self.lower);
        Ok(a)
    }

    /// `dy = A(x)y` without domain checks or allocation.
    pub fn apply(&self, x: f64, y: &[f64], dy: &mut [f64]) {
        let phi = self.drift.value(x);
        let n = self.beta.len();
        let mut top = (self.lambda + self.kill) * y[0];
        for j in 0..n {
            top -= self.lambda * self.beta[j] * y[j + 1];
        }
        dy[0] = top / phi;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..=n {
                s += self.lower[(i, j)] * y[j];
            }
            dy[i + 1] = s;
        }
    }
}

/// Build `x ↦ A(x)` with top row `((λ+q)/φ, −λβ/φ)` and lower block
/// `(b | B)`, negated for upward jumps.
pub fn assemble_system(model: &ModelSpec) -> Result<LinearSystem> {
    model.validate()?;
    let n = model.phases();
    let sign = match model.jump_direction {
        JumpDirection::Downward => 1.0,
        JumpDirection::Upward => -1.0,
    };
    let mut lower = DMatrix::zeros(n, n + 1);
    lower.column_mut(0).copy_from(model.jumps.exit_rates());
    lower.view_mut((0, 1), (n, n)).copy_from(model.jumps.sub_generator());
    lower *= sign;
    Ok(LinearSystem {
        lambda: model.jump_rate,
        kill: model.kill_rate,
        beta: model.jumps.beta().clone(),
        lower,
        drift: model.drift.clone(),
    })
}

/// Pointwise `‖y′(x) − A(x)y(x)‖_∞` for a candidate solution `f`, with `y′`
/// from fourth-order finite differences (one-sided within `4h` of
/// `domain_lo`). The step shrinks with `‖A(x)‖`, which bounds how fast
/// solutions vary.
pub fn linear_system_residual<F>(system: &LinearSystem, f: F, grid: &[f64], domain_lo: f64) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let d = system.dim();
    let mut out = Vec::with_capacity(grid.len());
    let mut ay = vec![0.0; d];
    for &x in grid {
        let rate = system.matrix(x).map(|a| a.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max)).unwrap_or(1.0);
        let h = 1e-3 * x.abs().max(1.0) / rate.max(1.0);
        let deriv: Vec<f64> = if x - 2.0 * h >= domain_lo {
            let (p2, p1, m1, m2) = (f(x + 2.0 * h)?, f(x + h)?, f(x - h)?, f(x - 2.0 * h)?);
            (0..d).map(|i| (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h)).collect()
        } else {
            let s: Vec<Vec<f64>> = (0..5).map(|k| f(x + k as f64 * h)).collect::<Result<_>>()?;
            (0..d)
                .map(|i| (-25.0 * s[0][i] + 48.0 * s[1][i] - 36.0 * s[2][i] + 16.0 * s[3][i] - 3.0 * s[4][i]) / (12.0 * h))
                .collect()
        };
        let y = f(x)?;
        system.apply(x, &y, &mut ay);
        out.push((0..d).map(|i| (deriv[i] - ay[i]).abs()).fold(0.0, f64::max));
    }
    Ok(out)
}
