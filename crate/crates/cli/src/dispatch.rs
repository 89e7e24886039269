//! Which solvers apply to a model and problem, and why the others do not.

use lieruin_core::passage::{DriftKind, Estimand, JumpDirection};
use lieruin_core::riccati::{allen_stein_test, phi_k_closed_form, riccati_solution, to_riccati};
use lieruin_core::{
    constant_drift_solution, segerdahl_q0_solution, solve_bvp, Method, ModelSpec, PassageError, PassageProblem,
    SolutionCurve,
};

use crate::error::CliError;

pub enum Gate {
    Applies(SolutionCurve),
    Skipped(String),
}

pub struct Attempt {
    pub name: &'static str,
    pub gate: Gate,
}

/// Failures that mean "this method does not fit", as opposed to a method
/// that fits but broke.
fn skip_or_fail(e: PassageError) -> Result<Gate, CliError> {
    match e {
        PassageError::NotApplicable(m) | PassageError::Misposed(m) => Ok(Gate::Skipped(m)),
        other => Err(CliError::Numerical(other)),
    }
}

/// Shared preconditions of the exponential-jump closed forms.
fn exponential_one_sided(model: &ModelSpec, problem: &PassageProblem) -> Result<f64, String> {
    let mu = model
        .exponential_rate()
        .ok_or_else(|| format!("needs exponential jumps (model has {} phases)", model.phases()))?;
    if model.jump_direction != JumpDirection::Downward {
        return Err("needs downward jumps".into());
    }
    if problem.upper.is_some() || problem.estimand != Estimand::RuinBelow {
        return Err("covers one-sided ruin only".into());
    }
    if problem.overshoot_xi != 0.0 {
        return Err("the overshoot penalty is only estimated by simulation".into());
    }
    Ok(mu)
}

fn constant_drift_gate(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<Gate, CliError> {
    if let Err(why) = exponential_one_sided(model, problem) {
        return Ok(Gate::Skipped(why));
    }
    if !matches!(model.drift.kind(), DriftKind::Constant { .. }) {
        return Ok(Gate::Skipped("needs a constant drift".into()));
    }
    let sol = match constant_drift_solution(model) {
        Ok(s) => s,
        Err(e) => return skip_or_fail(e),
    };
    Ok(Gate::Applies(sol.curve(grid, problem.lower)?))
}

fn q0_quadrature_gate(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<Gate, CliError> {
    if let Err(why) = exponential_one_sided(model, problem) {
        return Ok(Gate::Skipped(why));
    }
    if matches!(model.drift.kind(), DriftKind::Constant { .. }) {
        return Ok(Gate::Skipped("constant drift is covered by its own closed form".into()));
    }
    match segerdahl_q0_solution(model, problem.lower) {
        Ok(sol) => Ok(Gate::Applies(sol.curve(grid)?)),
        Err(e) => skip_or_fail(e),
    }
}

fn phi_k_gate(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<Gate, CliError> {
    let mu = match exponential_one_sided(model, problem) {
        Ok(mu) => mu,
        Err(why) => return Ok(Gate::Skipped(why)),
    };
    let DriftKind::SegerdahlFamily { k, lambda, q, mu: drift_mu } = *model.drift.kind() else {
        return Ok(Gate::Skipped("needs the φ_K drift family".into()));
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    if !(close(lambda, model.jump_rate) && close(q, model.kill_rate) && close(drift_mu, mu)) {
        return Ok(Gate::Skipped("the φ_K drift parameters differ from the model's λ, q, μ".into()));
    }
    if problem.lower != 0.0 {
        return Ok(Gate::Skipped(format!("anchored at the ruin level 0 (got {})", problem.lower)));
    }
    if k >= 1.0 {
        return Ok(Gate::Skipped(format!("needs K < 1 (got {k})")));
    }
    let report = allen_stein_test(&to_riccati(model)?, grid)?;
    if !report.integrable {
        return Ok(Gate::Skipped(format!(
            "Allen–Stein test fails: T deviates by {:.3e} (scale {:.3e})",
            report.max_deviation, report.scale
        )));
    }
    let mut psi = Vec::with_capacity(grid.len());
    let mut m = Vec::with_capacity(grid.len());
    for &x in grid {
        let (p, mm) = phi_k_closed_form(k, lambda, q, mu, x)?;
        psi.push(p);
        m.push(vec![mm]);
    }
    Ok(Gate::Applies(SolutionCurve {
        grid: grid.to_vec(),
        psi,
        m,
        method: Method::ClosedForm,
        error_estimate: vec![0.0; grid.len()],
    }))
}

/// One-sided ruin with a drift negative on `[l, ∞)` starts from
/// `Ψ(l) = M(l) = 1`, so `η(l) = 1` and the Riccati equation is an IVP.
fn riccati_gate(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<Gate, CliError> {
    if let Err(why) = exponential_one_sided(model, problem) {
        return Ok(Gate::Skipped(why));
    }
    match model.drift.sign_on(problem.lower, f64::INFINITY) {
        Ok(s) if s < 0.0 => {}
        _ => return Ok(Gate::Skipped("needs a drift negative on [l, ∞) to pin η(l) = 1".into())),
    }
    let coeffs = to_riccati(model)?;
    match riccati_solution(&coeffs, 1.0, 1.0, problem.lower, grid) {
        Ok(c) => Ok(Gate::Applies(c)),
        Err(e) => skip_or_fail(e),
    }
}

fn bvp_gate(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<Gate, CliError> {
    match solve_bvp(model, problem, grid) {
        Ok(c) => Ok(Gate::Applies(c)),
        Err(e) => skip_or_fail(e),
    }
}

type GateFn = fn(&ModelSpec, &PassageProblem, &[f64]) -> Result<Gate, CliError>;

const CLOSED_FORMS: [(&str, GateFn); 3] = [
    ("constant-drift closed form", constant_drift_gate),
    ("q = 0 quadrature closed form", q0_quadrature_gate),
    ("φ_K closed form", phi_k_gate),
];

/// Closed forms stop at the first that applies.
pub fn closed_form(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<Vec<Attempt>, CliError> {
    let mut out = Vec::new();
    for (name, gate) in CLOSED_FORMS {
        let g = gate(model, problem, grid)?;
        let done = matches!(g, Gate::Applies(_));
        out.push(Attempt { name, gate: g });
        if done {
            break;
        }
    }
    Ok(out)
}

pub fn riccati(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<Attempt, CliError> {
    Ok(Attempt { name: "numerical Riccati", gate: riccati_gate(model, problem, grid)? })
}

pub fn bvp(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<Attempt, CliError> {
    Ok(Attempt { name: "ODE boundary-value solver", gate: bvp_gate(model, problem, grid)? })
}

pub fn reasons(attempts: &[Attempt]) -> String {
    attempts
        .iter()
        .filter_map(|a| match &a.gate {
            Gate::Skipped(why) => Some(format!("  {}: {why}", a.name)),
            Gate::Applies(_) => None,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Closed form if one applies, else the boundary-value solver.
pub fn solve(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<(SolutionCurve, Vec<Attempt>), CliError> {
    let mut attempts = closed_form(model, problem, grid)?;
    if !matches!(attempts.last().map(|a| &a.gate), Some(Gate::Applies(_))) {
        attempts.push(bvp(model, problem, grid)?);
    }
    match attempts.last().map(|a| &a.gate) {
        Some(Gate::Applies(c)) => {
            let c = c.clone();
            Ok((c, attempts))
        }
        _ => Err(CliError::NoMethod(reasons(&attempts))),
    }
}
