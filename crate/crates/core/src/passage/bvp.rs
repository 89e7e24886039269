//! Numerical boundary-value solver for the first-passage system with any
//! number of phases.
//!
//! Conditions pinned at one end only are an initial-value problem integrated
//! away from that end. Mixed problems start at the upper end from
//! `p + V·c` (a particular vector plus a basis of the free directions),
//! integrate backward with the free block re-orthonormalized after every
//! segment, and solve the lower-end conditions for `c`. On a half-line the
//! free directions are the decaying eigenspace of `A(X_max)`, with `X_max`
//! far enough out that the slowest decaying mode has shrunk below the tail
//! tolerance.

use nalgebra::{DMatrix, DVector};

use super::{Estimand, JumpDirection, LinearSystem, Method, ModelSpec, PassageProblem, SolutionCurve};
use crate::error::{PassageError, Result};
use crate::numeric::{integrate, OdeOptions};

type Snapshot = (usize, DVector<f64>, DMatrix<f64>);

#[derive(Clone, Debug)]
pub struct BvpOptions {
    pub rtol: f64,
    pub atol: f64,
    /// The error estimate compares against a run with tolerances multiplied
    /// by this factor.
    pub check_factor: f64,
    pub bc_tol: f64,
    /// Bound on the neglected remainder beyond the truncation point.
    pub tail_tol: f64,
    /// Longest stretch integrated before re-orthonormalizing.
    pub max_segment: f64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions { rtol: 1e-12, atol: 1e-14, check_factor: 1e3, bc_tol: 1e-8, tail_tol: 1e-8, max_segment: 0.5 }
    }
}

pub fn solve_bvp(model: &ModelSpec, problem: &PassageProblem, grid: &[f64]) -> Result<SolutionCurve> {
    solve_bvp_with(model, problem, grid, &BvpOptions::default())
}

pub fn solve_bvp_with(model: &ModelSpec, problem: &PassageProblem, grid: &[f64], opts: &BvpOptions) -> Result<SolutionCurve> {
    problem.validate()?;
    if problem.overshoot_xi != 0.0 {
        return Err(PassageError::NotApplicable("the overshoot penalty is only estimated by simulation".into()));
    }
    let sys = super::assemble_system(model)?;
    check_grid(grid, problem)?;
    let plan = plan(model, problem, &sys, grid, opts)?;

    let fine = OdeOptions::with_tolerances(opts.rtol, opts.atol);
    let coarse = OdeOptions::with_tolerances(opts.rtol * opts.check_factor, opts.atol * opts.check_factor);
    let ys = run(&sys, &plan, problem.lower, grid, &fine, opts)?;
    let check = run(&sys, &plan, problem.lower, grid, &coarse, opts)?;

    let tail = if plan.truncated_with_variable_drift { opts.tail_tol } else { 0.0 };
    let mut psi = Vec::with_capacity(grid.len());
    let mut m = Vec::with_capacity(grid.len());
    let mut err = Vec::with_capacity(grid.len());
    for (y, yc) in ys.iter().zip(&check) {
        psi.push(y[0]);
        m.push(y[1..].to_vec());
        let diff = y.iter().zip(yc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        err.push(diff + tail * y[0].abs());
    }
    Ok(SolutionCurve { grid: grid.to_vec(), psi, m, method: Method::OdeBvp, error_estimate: err })
}

fn check_grid(grid: &[f64], problem: &PassageProblem) -> Result<()> {
    if grid.is_empty() {
        return Err(PassageError::Domain("empty grid".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PassageError::Domain("grid must be finite and strictly increasing".into()));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if lo < problem.lower || hi > problem.upper_level() {
        return Err(PassageError::Domain(format!(
            "grid [{lo}, {hi}] leaves [{}, {}]",
            problem.lower,
            problem.upper_level()
        )));
    }
    Ok(())
}

enum Start {
    /// All components pinned at `x`.
    Pinned { x: f64, y: Vec<f64> },
    /// `y(x) = p + V·c` with `c` fixed by `y_i(lower) = v` for each condition.
    Shoot { x: f64, particular: Vec<f64>, free: DMatrix<f64>, conditions: Vec<(usize, f64)> },
}

struct Plan {
    start: Start,
    truncated_with_variable_drift: bool,
}

fn plan(model: &ModelSpec, problem: &PassageProblem, sys: &LinearSystem, grid: &[f64], opts: &BvpOptions) -> Result<Plan> {
    let d = sys.dim();
    let n = d - 1;
    let l = problem.lower;
    let upper = problem.upper;
    let drift = &model.drift;
    let grid_end = grid[grid.len() - 1];
    let s = drift.value(l);
    if s == 0.0 || !s.is_finite() {
        return Err(PassageError::Misposed(format!("drift vanishes at the lower level {l}")));
    }
    let positive = s > 0.0;
    let sign_on = |hi: f64| {
        drift.sign_on(l, hi).map_err(|e| PassageError::Misposed(format!("drift must keep one sign on the problem interval: {e}")))
    };
    let ones = vec![1.0; d];
    let unit = |i: usize| {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    };
    let m_block = || {
        let mut v = DMatrix::zeros(d, n);
        for i in 0..n {
            v[(i + 1, i)] = 1.0;
        }
        v
    };
    let psi_column = || {
        let mut v = DMatrix::zeros(d, 1);
        v[(0, 0)] = 1.0;
        v
    };
    let m_conditions = |value: f64| (1..d).map(|i| (i, value)).collect::<Vec<_>>();
    let need_upper = |what: &str| {
        upper.ok_or_else(|| PassageError::Misposed(format!("{what} needs a finite upper level")))
    };

    let pinned = |x: f64, y: Vec<f64>| Ok(Plan { start: Start::Pinned { x, y }, truncated_with_variable_drift: false });
    let shoot = |x: f64, particular: Vec<f64>, free: DMatrix<f64>, conditions: Vec<(usize, f64)>| {
        Ok(Plan { start: Start::Shoot { x, particular, free, conditions }, truncated_with_variable_drift: false })
    };

    match (model.jump_direction, problem.estimand, positive) {
        (JumpDirection::Downward, Estimand::RuinBelow, false) => {
            // the path never rises, so the upper level is irrelevant
            sign_on(grid_end)?;
            pinned(l, ones)
        }
        (JumpDirection::Downward, Estimand::RuinBelow, true) => match upper {
            Some(big_l) => {
                sign_on(big_l)?;
                shoot(big_l, vec![0.0; d], m_block(), m_conditions(1.0))
            }
            None => {
                sign_on(f64::INFINITY)?;
                truncated(sys, drift, l, grid_end, n, m_conditions(1.0), opts)
            }
        },
        (JumpDirection::Downward, Estimand::ExitAbove, true) => {
            let big_l = need_upper("exit above")?;
            sign_on(big_l)?;
            shoot(big_l, unit(0), m_block(), m_conditions(0.0))
        }
        (JumpDirection::Downward, Estimand::ExitAbove, false) => Err(PassageError::Misposed(
            "exit above with negative drift and downward jumps: the upper level is never reached".into(),
        )),
        (JumpDirection::Upward, Estimand::RuinBelow, true) => Err(PassageError::Misposed(
            "ruin below with positive drift and upward jumps: the lower level is never reached".into(),
        )),
        (JumpDirection::Upward, Estimand::RuinBelow, false) => match upper {
            Some(big_l) => {
                sign_on(big_l)?;
                shoot(big_l, vec![0.0; d], psi_column(), vec![(0, 1.0)])
            }
            None => {
                sign_on(f64::INFINITY)?;
                truncated(sys, drift, l, grid_end, 1, vec![(0, 1.0)], opts)
            }
        },
        (JumpDirection::Upward, Estimand::ExitAbove, false) => {
            let big_l = need_upper("exit above")?;
            sign_on(big_l)?;
            let mut p = vec![1.0; d];
            p[0] = 0.0;
            shoot(big_l, p, psi_column(), vec![(0, 0.0)])
        }
        (JumpDirection::Upward, Estimand::ExitAbove, true) => {
            let big_l = need_upper("exit above")?;
            sign_on(big_l)?;
            pinned(big_l, ones)
        }
    }
}

fn truncated(
    sys: &LinearSystem,
    drift: &super::DriftSpec,
    l: f64,
    grid_end: f64,
    expected: usize,
    conditions: Vec<(usize, f64)>,
    opts: &BvpOptions,
) -> Result<Plan> {
    let x_ref = match drift.kind() {
        super::DriftKind::Tabulated { points, .. } => grid_end.max(points[points.len() - 1].0),
        _ => grid_end,
    }
    .max(l);
    let (_, slowest) = decaying_subspace(&sys.matrix(x_ref)?)?;
    let rate = slowest.ok_or_else(|| PassageError::Truncation("no decaying mode at infinity".into()))?;
    if rate.abs() < 1e-8 {
        return Err(PassageError::Truncation(format!("slowest decay rate {rate:.3e} is too close to zero")));
    }
    let x_max = x_ref + (1.0 / opts.tail_tol).ln() / rate.abs();
    let (basis, _) = decaying_subspace(&sys.matrix(x_max)?)?;
    if basis.ncols() != expected {
        return Err(PassageError::Misposed(format!(
            "the decaying subspace at infinity has dimension {}, but {expected} lower-end conditions are imposed",
            basis.ncols()
        )));
    }
    let variable = !matches!(drift.kind(), super::DriftKind::Constant { .. });
    Ok(Plan {
        start: Start::Shoot { x: x_max, particular: vec![0.0; sys.dim()], free: basis, conditions },
        truncated_with_variable_drift: variable,
    })
}

/// Orthonormal basis of the span of generalized eigenvectors with negative
/// real part, and the slowest such rate.
fn decaying_subspace(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Option<f64>)> {
    let d = a.nrows();
    let eig = a.complex_eigenvalues();
    let delta = 1e-9 * a.norm().max(1.0);
    let id = DMatrix::<f64>::identity(d, d);
    let mut annihilator = id.clone();
    let mut stable = 0usize;
    let mut slowest: Option<f64> = None;
    for e in eig.iter() {
        if e.re < -delta {
            stable += 1;
            slowest = Some(slowest.map_or(e.re, |s: f64| s.max(e.re)));
        } else if e.im.abs() <= delta {
            annihilator = &annihilator * (a - &id * e.re);
        } else if e.im > 0.0 {
            let factor = a * a - a * (2.0 * e.re) + &id * e.norm_sqr();
            annihilator = &annihilator * factor;
        }
    }
    if stable == 0 {
        return Ok((DMatrix::zeros(d, 0), None));
    }
    let svd = annihilator.svd(true, false);
    let u = svd.u.ok_or_else(|| PassageError::Truncation("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let top = svd.singular_values[order[0]];
    if svd.singular_values[order[stable - 1]] <= 1e-12 * top {
        return Err(PassageError::Truncation("decaying subspace is numerically rank deficient".into()));
    }
    let cols: Vec<_> = order[..stable].iter().map(|&i| u.column(i).into_owned()).collect();
    Ok((DMatrix::from_columns(&cols), slowest))
}

fn ode_err(e: crate::numeric::OdeFailure) -> PassageError {
    PassageError::Integration { x: e.x, reason: e.to_string() }
}

/// State at each grid point.
fn run(sys: &LinearSystem, plan: &Plan, lower: f64, grid: &[f64], ode: &OdeOptions, opts: &BvpOptions) -> Result<Vec<Vec<f64>>> {
    match &plan.start {
        Start::Pinned { x, y } => {
            let rhs = |t: f64, y: &[f64], dy: &mut [f64]| sys.apply(t, y, dy);
            if *x <= grid[0] {
                integrate(rhs, *x, y, grid, ode).map_err(ode_err)
            } else {
                let desc: Vec<f64> = grid.iter().rev().copied().collect();
                let mut out = integrate(rhs, *x, y, &desc, ode).map_err(ode_err)?;
                out.reverse();
                Ok(out)
            }
        }
        Start::Shoot { x, particular, free, conditions } => {
            shoot(sys, *x, particular, free, conditions, lower, grid, ode, opts)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn shoot(
    sys: &LinearSystem,
    start: f64,
    particular: &[f64],
    free: &DMatrix<f64>,
    conditions: &[(usize, f64)],
    lower: f64,
    grid: &[f64],
    ode: &OdeOptions,
    opts: &BvpOptions,
) -> Result<Vec<Vec<f64>>> {
    let d = sys.dim();
    let k = free.ncols();
    if k != conditions.len() {
        return Err(PassageError::Misposed(format!("{k} free directions for {} conditions", conditions.len())));
    }

    // descending breakpoints from `start` to `lower`, every grid point included
    let mut stops: Vec<(f64, Option<usize>)> = Vec::new();
    let mut x = start;
    let mut targets: Vec<(f64, Option<usize>)> = grid.iter().enumerate().rev().map(|(i, &g)| (g, Some(i))).collect();
    if grid[0] > lower {
        targets.push((lower, None));
    }
    for (t, idx) in targets {
        while x - t > opts.max_segment {
            x -= opts.max_segment;
            stops.push((x, None));
        }
        stops.push((t, idx));
        x = t;
    }

    let mut p = DVector::from_column_slice(particular);
    let mut v = free.clone();
    let mut steps: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
    // (step index, particular, free block) at each grid point
    let mut snaps: Vec<Option<Snapshot>> = vec![None; grid.len()];
    let mut state = vec![0.0; d * (k + 1)];
    let mut x = start;
    for (target, idx) in stops {
        if target < x {
            state[..d].copy_from_slice(p.as_slice());
            state[d..].copy_from_slice(v.as_slice());
            let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
                for (yb, db) in y.chunks(d).zip(dy.chunks_mut(d)) {
                    sys.apply(t, yb, db);
                }
            };
            let out = integrate(rhs, x, &state, &[target], ode).map_err(ode_err)?;
            let s = &out[0];
            p = DVector::from_column_slice(&s[..d]);
            v = DMatrix::from_column_slice(d, k, &s[d..]);
            if k > 0 {
                let qr = v.clone().qr();
                let q = qr.q();
                let r = qr.r();
                let shift = q.transpose() * &p;
                p -= &q * &shift;
                v = q;
                steps.push((r, shift));
            }
            x = target;
        }
        if let Some(i) = idx {
            snaps[i] = Some((steps.len(), p.clone(), v.clone()));
        }
    }

    // conditions at the lower end
    let mut lhs = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (row, &(comp, value)) in conditions.iter().enumerate() {
        for j in 0..k {
            lhs[(row, j)] = v[(comp, j)];
        }
        rhs[row] = value - p[comp];
    }
    let c = if k > 0 {
        lhs.clone().lu().solve(&rhs).ok_or(PassageError::ShootingNonConvergence { residual: f64::INFINITY })?
    } else {
        DVector::zeros(0)
    };
    let residual = (&lhs * &c - &rhs).amax();
    if !(residual < opts.bc_tol) {
        return Err(PassageError::ShootingNonConvergence { residual });
    }

    // coefficients in each earlier basis
    let mut coeffs = vec![c];
    for (r, shift) in steps.iter().rev() {
        let cur = coeffs.last().unwrap() - shift;
        let prev = r.solve_upper_triangular(&cur).ok_or(PassageError::ShootingNonConvergence { residual: f64::INFINITY })?;
        coeffs.push(prev);
    }
    coeffs.reverse(); // coeffs[t] applies after t steps

    snaps
        .into_iter()
        .map(|snap| {
            let (t, p, v) = snap.expect("every grid point is a stop");
            let y = p + v * &coeffs[t];
            Ok(y.iter().copied().collect())
        })
        .collect()
}
