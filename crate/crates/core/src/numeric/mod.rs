//! Small numerical kernels shared by the solvers: an adaptive Dormand–Prince
//! integrator, Gauss–Kronrod quadrature and cubic-spline interpolation.

pub mod ode;
pub mod quad;
pub mod spline;

pub use ode::{integrate, OdeFailure, OdeFailureKind, OdeOptions};
pub use quad::{integrate_adaptive, QuadResult};
pub use spline::CubicSpline;

/// `n` Chebyshev–Lobatto points on `[a, b]`, increasing.
pub fn chebyshev_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|k| {
                let theta = std::f64::consts::PI * (n - 1 - k) as f64 / (n - 1) as f64;
                0.5 * (a + b) + 0.5 * (b - a) * theta.cos()
            })
            .collect(),
    }
}

/// `n` evenly spaced points on `[a, b]` including both ends.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    b
                } else {
                    a + (b - a) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}
