//! Closed-form ruin probabilities for the drift
//! `φ_K(x) = ((λ+q)/μ)(K·e^{−2μx} − 1)`, `K < 1`.
//!
//! With `s = √(λ/(λ+q))` and `v(x) = √(1 − K·e^{−2μx})`, the scaling
//! `η̄ = √(−μφ_K/λ)·η`, `dx̄ = √(−λμ/φ_K)dx` turns Segerdahl's equation into
//! `dη̄/dx̄ = 1 − η̄²`, and
//! `x̄(x) = s·(μx + ln((1+v(x))/(1+v(0))))`.

use crate::error::{PassageError, Result};
use crate::passage::DriftSpec;

fn check_params(k: f64, lambda: f64, q: f64, mu: f64) -> Result<()> {
    if !(lambda > 0.0 && q >= 0.0 && mu > 0.0) || !(lambda + q + mu).is_finite() {
        return Err(PassageError::Domain(format!("need λ > 0, q ≥ 0, μ > 0 (got λ={lambda}, q={q}, μ={mu})")));
    }
    if !(k < 1.0) {
        return Err(PassageError::Domain(format!("the closed form needs K < 1 (got K = {k})")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct PhiKDrift {
    pub drift: DriftSpec,
    /// Set when `K = 0` collapsed the family to a constant drift.
    pub note: Option<String>,
}

pub fn phi_k_drift(k: f64, lambda: f64, q: f64, mu: f64) -> Result<PhiKDrift> {
    if k == 0.0 {
        let c = -(lambda + q) / mu;
        return Ok(PhiKDrift {
            drift: DriftSpec::constant(c)?,
            note: Some(format!("K = 0 makes φ_K the constant drift {c}; use the constant-drift case")),
        });
    }
    Ok(PhiKDrift { drift: DriftSpec::segerdahl_family(k, lambda, q, mu)?, note: None })
}

fn s_of(lambda: f64, q: f64) -> f64 {
    (lambda / (lambda + q)).sqrt()
}

fn v_of(k: f64, mu: f64, x: f64) -> f64 {
    let w = 1.0 - k * (-2.0 * mu * x).exp();
    assert!(w > 0.0, "1 − K·e^{{−2μx}} must be positive for K < 1, x ≥ 0");
    w.sqrt()
}

/// `x̄(x)`, with `x̄(0) = 0` and `dx̄/dx = √(−λμ/φ_K(x))`.
pub fn xbar(x: f64, k: f64, lambda: f64, q: f64, mu: f64) -> Result<f64> {
    check_params(k, lambda, q, mu)?;
    if !(x >= 0.0) {
        return Err(PassageError::Domain(format!("x̄ is defined for x ≥ 0 (got {x})")));
    }
    let v = v_of(k, mu, x);
    let v0 = (1.0 - k).sqrt();
    Ok(s_of(lambda, q) * (mu * x + ((1.0 + v) / (1.0 + v0)).ln()))
}

/// `K₁ = (s − √(1−K))/(s + √(1−K))`, the normalization imposed by
/// `Ψ(0) = M(0) = 1`.
pub fn k1(k: f64, lambda: f64, q: f64) -> f64 {
    let s = s_of(lambda, q);
    let v0 = (1.0 - k).sqrt();
    (s - v0) / (s + v0)
}

/// `(Ψ(x), M(x))` for ruin below 0, started at `x ≥ 0`:
/// `Ψ = s/(1+K₁)·(e^{2μx} − K)^{−1/2}(e^{x̄} − K₁e^{−x̄})`,
/// `M = 1/(1+K₁)·e^{−μx}(e^{x̄} + K₁e^{−x̄})`.
pub fn phi_k_closed_form(k: f64, lambda: f64, q: f64, mu: f64, x: f64) -> Result<(f64, f64)> {
    let xb = xbar(x, k, lambda, q, mu)?;
    if x == 0.0 {
        return Ok((1.0, 1.0));
    }
    let kk = k1(k, lambda, q);
    if (1.0 + kk).abs() < 1e-300 {
        return Err(PassageError::Domain("K₁ = −1 makes the normalization singular".into()));
    }
    let s = s_of(lambda, q);
    let v = v_of(k, mu, x);
    let up = (xb - mu * x).exp();
    let down = (-xb - mu * x).exp();
    let psi = s / (1.0 + kk) / v * (up - kk * down);
    let m = (up + kk * down) / (1.0 + kk);
    Ok((psi, m))
}

/// `η = Ψ/M` from the closed form.
pub fn phi_k_eta(k: f64, lambda: f64, q: f64, mu: f64, x: f64) -> Result<f64> {
    let (p, m) = phi_k_closed_form(k, lambda, q, mu, x)?;
    Ok(p / m)
}

/// `μ(√(λ/(λ+q)) − 1)`, the exponential rate of Ψ and M at infinity.
pub fn asymptotic_rate(lambda: f64, q: f64, mu: f64) -> f64 {
    mu * (s_of(lambda, q) - 1.0)
}
