//! Segerdahl's Riccati equation for exponential jumps: the reduction
//! `η = Ψ/M`, its canonical form, the Allen–Stein integrability test and the
//! closed-form solutions for the `φ_K` drift family.

mod allen_stein;
mod phi_k;
mod solve;

use std::sync::Arc;

use crate::error::{PassageError, Result};
use crate::passage::{DriftSpec, JumpDirection, ModelSpec};

pub use allen_stein::{
    allen_stein_test, allen_stein_test_with, drift_condition, satisfies_drift_condition, AllenSteinParams,
    AllenSteinReport, AllenSteinWitness, DriftConditionSign, CONSTANCY_TOL,
};
pub use phi_k::{asymptotic_rate, k1, phi_k_closed_form, phi_k_drift, phi_k_eta, xbar, PhiKDrift};
pub use solve::{riccati_numeric, riccati_solution};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `dη/dx = b₀(x) + b₁(x)η + b₂(x)η²` together with `b₀′` and `b₂′`.
#[derive(Clone)]
pub struct RiccatiCoefficients {
    b0: ScalarFn,
    b0_prime: ScalarFn,
    b1: ScalarFn,
    b2: ScalarFn,
    b2_prime: ScalarFn,
    segerdahl: Option<SegerdahlParams>,
}

impl std::fmt::Debug for RiccatiCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RiccatiCoefficients").field("segerdahl", &self.segerdahl).finish_non_exhaustive()
    }
}

/// Parameters of a coefficient set built from a model, kept for
/// reconstructing `M` from `η`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegerdahlParams {
    pub lambda: f64,
    pub q: f64,
    pub mu: f64,
}

impl RiccatiCoefficients {
    pub fn from_functions<F0, F0p, F1, F2, F2p>(b0: F0, b0_prime: F0p, b1: F1, b2: F2, b2_prime: F2p) -> Self
    where
        F0: Fn(f64) -> f64 + Send + Sync + 'static,
        F0p: Fn(f64) -> f64 + Send + Sync + 'static,
        F1: Fn(f64) -> f64 + Send + Sync + 'static,
        F2: Fn(f64) -> f64 + Send + Sync + 'static,
        F2p: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        RiccatiCoefficients {
            b0: Arc::new(b0),
            b0_prime: Arc::new(b0_prime),
            b1: Arc::new(b1),
            b2: Arc::new(b2),
            b2_prime: Arc::new(b2_prime),
            segerdahl: None,
        }
    }

    pub fn constant(b0: f64, b1: f64, b2: f64) -> Self {
        Self::from_functions(move |_| b0, |_| 0.0, move |_| b1, move |_| b2, |_| 0.0)
    }

    /// Segerdahl coefficients `b₀ = −λ/φ`, `b₁ = μ + (λ+q)/φ`, `b₂ = −μ` for
    /// a drift given by `φ` and `φ′`.
    pub fn segerdahl<P, Pp>(phi: P, phi_prime: Pp, lambda: f64, q: f64, mu: f64) -> Self
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        Pp: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let phi = Arc::new(phi);
        let (p0, p1, p2) = (phi.clone(), phi.clone(), phi);
        RiccatiCoefficients {
            b0: Arc::new(move |x| -lambda / p0(x)),
            b0_prime: Arc::new(move |x| {
                let f = p1(x);
                lambda * phi_prime(x) / (f * f)
            }),
            b1: Arc::new(move |x| mu + (lambda + q) / p2(x)),
            b2: Arc::new(move |_| -mu),
            b2_prime: Arc::new(|_| 0.0),
            segerdahl: Some(SegerdahlParams { lambda, q, mu }),
        }
    }

    pub fn b0(&self, x: f64) -> f64 {
        (self.b0)(x)
    }
    pub fn b0_prime(&self, x: f64) -> f64 {
        (self.b0_prime)(x)
    }
    pub fn b1(&self, x: f64) -> f64 {
        (self.b1)(x)
    }
    pub fn b2(&self, x: f64) -> f64 {
        (self.b2)(x)
    }
    pub fn b2_prime(&self, x: f64) -> f64 {
        (self.b2_prime)(x)
    }

    pub fn segerdahl_params(&self) -> Option<SegerdahlParams> {
        self.segerdahl
    }

    /// Right-hand side `b₀ + b₁η + b₂η²`.
    pub fn rhs(&self, x: f64, eta: f64) -> f64 {
        self.b0(x) + eta * (self.b1(x) + eta * self.b2(x))
    }
}

/// Coefficients of the Riccati equation for `η = Ψ/M`; `M` itself follows
/// from `M′ = μ(η − 1)M`.
pub fn to_riccati(model: &ModelSpec) -> Result<RiccatiCoefficients> {
    model.validate()?;
    let mu = model.exponential_rate().ok_or_else(|| {
        PassageError::NotApplicable(format!(
            "the scalar Riccati reduction needs exponential jumps (got {} phases)",
            model.phases()
        ))
    })?;
    if model.jump_direction != JumpDirection::Downward {
        return Err(PassageError::NotApplicable("the scalar Riccati reduction is for downward jumps".into()));
    }
    let (d0, d1) = (model.drift.clone(), model.drift.clone());
    Ok(RiccatiCoefficients::segerdahl(
        move |x| d0.value(x),
        move |x| d1.derivative(x),
        model.jump_rate,
        model.kill_rate,
        mu,
    ))
}

/// `y′ = −y² + z(x)y + u(x)` for `y = μ(η − 1)`, equivalently
/// `g″ − z g′ − u g = 0` with `y = −g′/g`.
#[derive(Clone, Debug)]
pub struct CanonicalForm {
    lambda: f64,
    q: f64,
    mu: f64,
    drift: DriftSpec,
}

impl CanonicalForm {
    /// `z(x) = (λ+q)/φ(x) − μ`.
    pub fn z(&self, x: f64) -> f64 {
        (self.lambda + self.q) / self.drift.value(x) - self.mu
    }

    /// `u(x) = qμ(z(x) + μ)/(λ+q) = qμ/φ(x)`.
    pub fn u(&self, x: f64) -> f64 {
        self.q * self.mu * (self.z(x) + self.mu) / (self.lambda + self.q)
    }

    pub fn rhs(&self, x: f64, y: f64) -> f64 {
        -y * y + self.z(x) * y + self.u(x)
    }

    pub fn y_from_eta(&self, eta: f64) -> f64 {
        self.mu * (eta - 1.0)
    }

    /// With `q = 0`, `u ≡ 0` and the equation is first order in `g′`.
    pub fn is_first_order(&self) -> bool {
        self.q == 0.0
    }
}

pub fn canonical_form(coeffs: &RiccatiCoefficients, model: &ModelSpec) -> Result<CanonicalForm> {
    let reference = to_riccati(model)?;
    let p = reference.segerdahl_params().expect("built from a model");
    let x0 = model.drift.sign_domain().lo.max(0.0);
    for x in [x0, x0 + 0.5, x0 + 1.0] {
        let scale = 1.0 + reference.b1(x).abs();
        let mismatch = (coeffs.b0(x) - reference.b0(x)).abs()
            + (coeffs.b1(x) - reference.b1(x)).abs()
            + (coeffs.b2(x) - reference.b2(x)).abs();
        if mismatch > 1e-12 * scale {
            return Err(PassageError::NotApplicable("coefficients do not belong to the given model".into()));
        }
    }
    Ok(CanonicalForm { lambda: p.lambda, q: p.q, mu: p.mu, drift: model.drift.clone() })
}
