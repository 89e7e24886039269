//! Numerical integration of the Riccati equation and reconstruction of
//! `(Ψ, M)` from `η`.

use super::RiccatiCoefficients;
use crate::error::{PassageError, Result};
use crate::numeric::{integrate, OdeFailure, OdeFailureKind, OdeOptions};
use crate::passage::{Method, SolutionCurve};

const RTOL: f64 = 1e-12;
const ATOL: f64 = 1e-12;
const BLOW_UP: f64 = 1e8;

fn map_failure(e: OdeFailure) -> PassageError {
    match e.kind {
        OdeFailureKind::BlowUp | OdeFailureKind::StepTooSmall => PassageError::BlowUp { x: e.x },
        _ => PassageError::Integration { x: e.x, reason: e.to_string() },
    }
}

fn options(rtol: f64, atol: f64, eta0: f64) -> OdeOptions {
    OdeOptions { blow_up: Some(BLOW_UP * eta0.abs().max(1.0)), ..OdeOptions::with_tolerances(rtol, atol) }
}

/// `η` at each point of `grid` (monotone away from `x0`), from `η(x0) = eta0`.
/// A pole of the solution is reported as [`PassageError::BlowUp`] near its
/// location.
pub fn riccati_numeric(coeffs: &RiccatiCoefficients, eta0: f64, x0: f64, grid: &[f64]) -> Result<Vec<f64>> {
    let out = integrate(|x, y, dy| dy[0] = coeffs.rhs(x, y[0]), x0, &[eta0], grid, &options(RTOL, ATOL, eta0))
        .map_err(map_failure)?;
    Ok(out.into_iter().map(|y| y[0]).collect())
}

fn integrate_pair(
    coeffs: &RiccatiCoefficients,
    mu: f64,
    eta0: f64,
    m0: f64,
    x0: f64,
    grid: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<(f64, f64)>> {
    // (η, ln M) with (ln M)′ = μ(η − 1)
    let out = integrate(
        |x, y, dy| {
            dy[0] = coeffs.rhs(x, y[0]);
            dy[1] = mu * (y[0] - 1.0);
        },
        x0,
        &[eta0, m0.ln()],
        grid,
        opts,
    )
    .map_err(map_failure)?;
    Ok(out.into_iter().map(|y| (y[0] * y[1].exp(), y[1].exp())).collect())
}

/// `(Ψ, M)` on `grid` from `η(x0) = eta0` and `M(x0) = m0 > 0`, using
/// `M(x) = M(x0)·exp(μ∫(η − 1))` and `Ψ = ηM`.
pub fn riccati_solution(coeffs: &RiccatiCoefficients, eta0: f64, m0: f64, x0: f64, grid: &[f64]) -> Result<SolutionCurve> {
    let p = coeffs
        .segerdahl_params()
        .ok_or_else(|| PassageError::NotApplicable("reconstruction needs coefficients built from a model".into()))?;
    if !(m0 > 0.0) {
        return Err(PassageError::Domain(format!("M(x0) must be positive, got {m0}")));
    }
    let fine = integrate_pair(coeffs, p.mu, eta0, m0, x0, grid, &options(RTOL, ATOL, eta0))?;
    let coarse = integrate_pair(coeffs, p.mu, eta0, m0, x0, grid, &options(RTOL * 1e3, ATOL * 1e3, eta0))?;
    Ok(SolutionCurve {
        grid: grid.to_vec(),
        psi: fine.iter().map(|v| v.0).collect(),
        m: fine.iter().map(|v| vec![v.1]).collect(),
        method: Method::RiccatiNumeric,
        error_estimate: fine.iter().zip(&coarse).map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs())).collect(),
    })
}
