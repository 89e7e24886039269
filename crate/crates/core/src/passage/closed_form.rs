//! Closed forms for single-phase (exponential) downward jumps.

use serde::Serialize;

use super::{DriftKind, DriftSpec, JumpDirection, Method, ModelSpec, SolutionCurve};
use crate::error::{PassageError, Result};
use crate::numeric::integrate_adaptive;

const QUAD_ABS_TOL: f64 = 1e-10;
const QUAD_REL_TOL: f64 = 1e-12;
const QUAD_MAX_INTERVALS: usize = 2000;

fn exponential_downward(model: &ModelSpec, what: &str) -> Result<f64> {
    model.validate()?;
    if model.jump_direction != JumpDirection::Downward {
        return Err(PassageError::NotApplicable(format!("{what} requires downward jumps")));
    }
    model
        .exponential_rate()
        .ok_or_else(|| PassageError::NotApplicable(format!("{what} requires exponential (single-phase) jumps")))
}

/// Ruin below 0 with constant drift `c > 0`: `M(x) = e^{−(1−η)μx}`,
/// `Ψ = ηM`, with η the smallest positive root of
/// `cμη² − (cμ + λ + q)η + λ = 0`.
#[derive(Clone, Debug, Serialize)]
pub struct ConstantDriftSolution {
    pub c: f64,
    pub lambda: f64,
    pub q: f64,
    pub mu: f64,
    pub eta: f64,
    pub other_root: f64,
    /// Both roots coincide (the critical case `q = 0, cμ = λ`).
    pub double_root: bool,
}

pub fn constant_drift_solution(model: &ModelSpec) -> Result<ConstantDriftSolution> {
    let mu = exponential_downward(model, "the constant-drift closed form")?;
    let c = match model.drift.kind() {
        DriftKind::Constant { c } => *c,
        _ => return Err(PassageError::NotApplicable("the constant-drift closed form needs a constant drift".into())),
    };
    if c <= 0.0 {
        return Err(PassageError::NotApplicable(format!(
            "the constant-drift closed form needs c > 0 (got {c}); with c < 0 ruin below the start is certain"
        )));
    }
    let (lambda, q) = (model.jump_rate, model.kill_rate);
    let s = c * mu + lambda + q;
    let disc = (s * s - 4.0 * c * mu * lambda).max(0.0);
    let root = disc.sqrt();
    // stable forms of (s ∓ √disc)/(2cμ)
    let eta = 2.0 * lambda / (s + root);
    let other_root = (s + root) / (2.0 * c * mu);
    let double_root = root <= 1e-12 * s;
    if !(eta > 0.0 && eta <= 1.0 + 1e-14) {
        return Err(PassageError::Misposed(format!("no root of the η-quadratic in (0, 1] (smallest root {eta})")));
    }
    Ok(ConstantDriftSolution { c, lambda, q, mu, eta: eta.min(1.0), other_root, double_root })
}

impl ConstantDriftSolution {
    /// `(Ψ(x), M(x))` for `x ≥ 0` above the ruin level 0.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if !(x >= 0.0) {
            return Err(PassageError::Domain(format!("x = {x} is below the ruin level 0")));
        }
        let m = (-(1.0 - self.eta) * self.mu * x).exp();
        Ok((self.eta * m, m))
    }

    /// Curve for ruin below `lower`, evaluated at `x − lower`.
    pub fn curve(&self, grid: &[f64], lower: f64) -> Result<SolutionCurve> {
        let mut psi = Vec::with_capacity(grid.len());
        let mut m = Vec::with_capacity(grid.len());
        for &x in grid {
            let (p, mm) = self.eval(x - lower)?;
            psi.push(p);
            m.push(vec![mm]);
        }
        Ok(SolutionCurve { grid: grid.to_vec(), psi, m, method: Method::ClosedForm, error_estimate: vec![0.0; grid.len()] })
    }
}

/// Ruin below `lower` with `q = 0` and a drift positive on `[lower, ∞)`:
/// with `Z(x) = ∫_l^x (λ/φ(v) − μ) dv`,
/// `M(x) = μ(1−Ψ(l))∫_x^∞ e^Z` and `Ψ(x) = (1−Ψ(l))(μ∫_x^∞ e^Z − e^{Z(x)})`.
///
/// Beyond the last breakpoint the drift is constant, so `Z` is linear there
/// and the tail of the improper integral is exact.
#[derive(Clone, Debug)]
pub struct SegerdahlQ0Solution {
    lambda: f64,
    mu: f64,
    drift: DriftSpec,
    lower: f64,
    /// Breakpoints `lower = k₀ < … < k_m`, the last one starting the tail.
    knots: Vec<f64>,
    z_at: Vec<f64>,
    /// `∫_{k_i}^∞ e^Z`.
    tail_at: Vec<f64>,
    /// Slope of `Z` beyond the last knot (negative).
    z_inf: f64,
    psi_lower: f64,
    quad_error: f64,
}

pub fn segerdahl_q0_solution(model: &ModelSpec, lower: f64) -> Result<SegerdahlQ0Solution> {
    let mu = exponential_downward(model, "the q = 0 closed form")?;
    if model.kill_rate != 0.0 {
        return Err(PassageError::NotApplicable(format!("the q = 0 closed form needs q = 0 (got {})", model.kill_rate)));
    }
    let drift = model.drift.clone();
    let sign = drift.sign_on(lower, f64::INFINITY).map_err(|e| {
        PassageError::NotApplicable(format!("the q = 0 closed form needs a sign-constant drift on [{lower}, ∞): {e}"))
    })?;
    if sign < 0.0 {
        return Err(PassageError::NotApplicable(
            "the q = 0 closed form needs a positive drift; with negative drift ruin is certain".into(),
        ));
    }
    let lambda = model.jump_rate;
    let mut knots = vec![lower];
    let tail_start = match drift.kind() {
        DriftKind::Constant { .. } => lower,
        DriftKind::Tabulated { points, .. } => {
            knots.extend(points.iter().map(|p| p.0).filter(|&x| x > lower));
            *knots.last().unwrap()
        }
        DriftKind::SegerdahlFamily { .. } => {
            return Err(PassageError::NotApplicable("φ_K is not positive on a half-line".into()));
        }
    };
    let z_inf = lambda / drift.value(tail_start + 1.0) - mu;
    if !(z_inf < 0.0) {
        return Err(PassageError::NotApplicable(format!(
            "∫e^Z diverges: Z grows like ({z_inf})·x at infinity (net profit condition λ/φ < μ fails)"
        )));
    }
    let z = |v: f64| lambda / drift.value(v) - mu;
    let mut z_at = vec![0.0];
    let mut quad_error = 0.0;
    for w in knots.windows(2) {
        let r = integrate_adaptive(z, w[0], w[1], QUAD_ABS_TOL, QUAD_REL_TOL, QUAD_MAX_INTERVALS);
        if !r.converged {
            return Err(PassageError::Quadrature(format!("∫z on [{}, {}]", w[0], w[1])));
        }
        quad_error += r.abs_error;
        z_at.push(z_at.last().unwrap() + r.value);
    }
    let m = knots.len() - 1;
    let mut tail_at = vec![0.0; m + 1];
    tail_at[m] = z_at[m].exp() / (-z_inf);
    for i in (0..m).rev() {
        let (a, b, za) = (knots[i], knots[i + 1], z_at[i]);
        let r = integrate_adaptive(
            |v| (za + integrate_adaptive(z, a, v, QUAD_ABS_TOL, QUAD_REL_TOL, QUAD_MAX_INTERVALS).value).exp(),
            a,
            b,
            QUAD_ABS_TOL,
            QUAD_REL_TOL,
            QUAD_MAX_INTERVALS,
        );
        if !r.converged {
            return Err(PassageError::Quadrature(format!("∫e^Z on [{a}, {b}]")));
        }
        quad_error += r.abs_error;
        tail_at[i] = tail_at[i + 1] + r.value;
    }
    let psi_lower = 1.0 - 1.0 / (mu * tail_at[0]);
    if !(-1e-12..=1.0).contains(&psi_lower) {
        return Err(PassageError::Misposed(format!("Ψ({lower}) = {psi_lower} is not a probability")));
    }
    Ok(SegerdahlQ0Solution { lambda, mu, drift, lower, knots, z_at, tail_at, z_inf, psi_lower, quad_error })
}

impl SegerdahlQ0Solution {
    pub fn psi_at_lower(&self) -> f64 {
        self.psi_lower
    }

    fn z(&self, v: f64) -> f64 {
        self.lambda / self.drift.value(v) - self.mu
    }

    /// `(Z(x), ∫_x^∞ e^Z)`.
    fn z_and_tail(&self, x: f64) -> (f64, f64) {
        let m = self.knots.len() - 1;
        if x >= self.knots[m] {
            let zx = self.z_at[m] + self.z_inf * (x - self.knots[m]);
            return (zx, zx.exp() / (-self.z_inf));
        }
        let i = self.knots.partition_point(|&k| k <= x) - 1;
        let (a, b, za) = (self.knots[i], self.knots[i + 1], self.z_at[i]);
        let z = |v: f64| self.z(v);
        let zx = za + integrate_adaptive(z, a, x, QUAD_ABS_TOL, QUAD_REL_TOL, QUAD_MAX_INTERVALS).value;
        let piece = integrate_adaptive(
            |v| (zx + integrate_adaptive(z, x, v, QUAD_ABS_TOL, QUAD_REL_TOL, QUAD_MAX_INTERVALS).value).exp(),
            x,
            b,
            QUAD_ABS_TOL,
            QUAD_REL_TOL,
            QUAD_MAX_INTERVALS,
        )
        .value;
        (zx, self.tail_at[i + 1] + piece)
    }

    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if !(x >= self.lower) {
            return Err(PassageError::Domain(format!("x = {x} is below the ruin level {}", self.lower)));
        }
        let (zx, tail) = self.z_and_tail(x);
        let k = 1.0 - self.psi_lower;
        Ok((k * (self.mu * tail - zx.exp()), k * self.mu * tail))
    }

    pub fn curve(&self, grid: &[f64]) -> Result<SolutionCurve> {
        let mut psi = Vec::with_capacity(grid.len());
        let mut m = Vec::with_capacity(grid.len());
        for &x in grid {
            let (p, mm) = self.eval(x)?;
            psi.push(p);
            m.push(vec![mm]);
        }
        let err = self.quad_error.max(QUAD_ABS_TOL) * self.mu;
        Ok(SolutionCurve { grid: grid.to_vec(), psi, m, method: Method::ClosedForm, error_estimate: vec![err; grid.len()] })
    }
}
