//! Numerical Lie-algebra closure of matrix generators and the derived-series
//! solvability test.
//!
//! Matrices are flattened to vectors of length `n²` and an orthonormal basis
//! (Frobenius inner product) is maintained by modified Gram–Schmidt with one
//! re-orthogonalization pass. Rank decisions use a threshold relative to the
//! generator norms, so rescaling the generators does not change the verdict.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PassageError, Result};
use crate::passage::{JumpDirection, ModelSpec};
use crate::serde_util::matrix_list;

pub const DEFAULT_TOL: f64 = 1e-9;

// ‖[A,B]‖_F ≤ 2‖A‖_F‖B‖_F; commutators of unit basis elements are compared
// against this scale.
const COMMUTATOR_SCALE: f64 = 2.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosureReport {
    /// Orthonormal under the Frobenius inner product.
    #[serde(with = "matrix_list")]
    pub basis: Vec<DMatrix<f64>>,
    pub dimension: usize,
    pub closed: bool,
    pub solvable: bool,
    /// Dimensions of g ⊇ [g,g] ⊇ …, ending at 0 or at the first repeated value.
    pub derived_series_dims: Vec<usize>,
    /// Commutator depth reached before no new directions appeared.
    pub generations: usize,
    /// The basis reached the dimension cap before closure was confirmed.
    pub cap_reached: bool,
    /// Largest commutator residual outside the span, relative to the scale.
    pub closure_residual: f64,
    pub notes: Vec<String>,
}

impl ClosureReport {
    /// Whether the algebra is all of gl(n).
    pub fn is_full_gl(&self) -> bool {
        self.basis.first().is_some_and(|b| self.dimension == b.nrows() * b.nrows())
    }
}

/// `[A, B] = AB − BA`.
pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(PassageError::ShapeMismatch(format!(
            "commutator of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a * b - b * a)
}

#[derive(Clone, Debug)]
struct Span {
    vecs: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}

fn unflatten(v: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v)
}

impl Span {
    fn new() -> Self {
        Span { vecs: Vec::new() }
    }

    fn dim(&self) -> usize {
        self.vecs.len()
    }

    /// Component of `v` orthogonal to the span (two MGS passes).
    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for q in &self.vecs {
                let c = dot(q, &r);
                r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
            }
        }
        r
    }

    /// Add the normalized residual of `v` if it exceeds `threshold`.
    fn try_insert(&mut self, v: &[f64], threshold: f64) -> bool {
        let mut r = self.residual(v);
        let rn = norm(&r);
        if rn > threshold && rn > 0.0 {
            r.iter_mut().for_each(|x| *x /= rn);
            self.vecs.push(r);
            true
        } else {
            false
        }
    }

    fn matrices(&self, n: usize) -> Vec<DMatrix<f64>> {
        self.vecs.iter().map(|v| unflatten(v, n)).collect()
    }

    /// Largest norm of a pairwise commutator residual outside the span.
    fn closure_residual(&self, n: usize) -> f64 {
        let mats = self.matrices(n);
        let mut worst: f64 = 0.0;
        for i in 0..mats.len() {
            for j in i + 1..mats.len() {
                let c = &mats[i] * &mats[j] - &mats[j] * &mats[i];
                worst = worst.max(norm(&self.residual(&flatten(&c))));
            }
        }
        worst
    }

    /// Span of all pairwise commutators.
    fn derived(&self, n: usize, tol: f64) -> Span {
        let mats = self.matrices(n);
        let mut out = Span::new();
        for i in 0..mats.len() {
            for j in i + 1..mats.len() {
                let c = &mats[i] * &mats[j] - &mats[j] * &mats[i];
                out.try_insert(&flatten(&c), tol * COMMUTATOR_SCALE);
            }
        }
        out
    }
}

fn check_shapes(mats: &[DMatrix<f64>]) -> Result<usize> {
    let first = mats
        .first()
        .ok_or_else(|| PassageError::Domain("at least one matrix is required".into()))?;
    let n = first.nrows();
    if mats.iter().any(|m| !m.is_square() || m.nrows() != n) {
        return Err(PassageError::ShapeMismatch("all matrices must be square of equal size".into()));
    }
    Ok(n)
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(PassageError::Domain(format!("tolerance must be positive, got {tol}")))
    }
}

/// Smallest matrix Lie algebra containing `generators`.
///
/// The span is seeded with the generators; every round forms the commutators
/// of the newest basis elements with the whole basis and keeps residuals above
/// `tol` (relative). Stops when a round adds nothing or the dimension reaches
/// `min(max_dim, n²)`.
pub fn closure(generators: &[DMatrix<f64>], tol: f64, max_dim: usize) -> Result<ClosureReport> {
    let n = check_shapes(generators)?;
    check_tol(tol)?;
    let cap = max_dim.min(n * n);
    let scale = generators.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let mut notes = Vec::new();
    let mut span = Span::new();
    let mut frontier = Vec::new();
    for (k, g) in generators.iter().enumerate() {
        if span.dim() >= cap {
            notes.push(format!("generator {k} not examined: dimension cap {cap} reached"));
            continue;
        }
        if span.try_insert(&flatten(g), tol * scale) {
            frontier.push(span.dim() - 1);
        } else {
            notes.push(format!("generator {k} is numerically dependent on earlier generators; dropped"));
        }
    }

    let mut generations = 0;
    let mut cap_reached = span.dim() >= cap;
    while !frontier.is_empty() && !cap_reached {
        let mut fresh = Vec::new();
        let frontier_start = frontier[0];
        'pairs: for &i in &frontier {
            for j in 0..span.dim() {
                // pairs inside the frontier are visited once
                if j == i || (j >= frontier_start && j < i && frontier.contains(&j)) {
                    continue;
                }
                let a = unflatten(&span.vecs[i], n);
                let b = unflatten(&span.vecs[j], n);
                let c = &a * &b - &b * &a;
                if span.try_insert(&flatten(&c), tol * COMMUTATOR_SCALE) {
                    fresh.push(span.dim() - 1);
                    if span.dim() >= cap {
                        cap_reached = true;
                        break 'pairs;
                    }
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        generations += 1;
        frontier = fresh;
    }

    let closure_residual = span.closure_residual(n) / COMMUTATOR_SCALE;
    let closed = closure_residual <= tol;
    if cap_reached && span.dim() == n * n {
        notes.push("dimension cap n² reached: the algebra is all of gl(n)".into());
    } else if cap_reached && !closed {
        notes.push(format!("dimension cap {cap} reached before closure was confirmed"));
    }
    let (solvable, derived_series_dims) = if closed && span.dim() > 0 {
        derived_series(&span, n, tol)
    } else if span.dim() == 0 {
        (true, vec![0])
    } else {
        (false, Vec::new())
    };
    Ok(ClosureReport {
        dimension: span.dim(),
        basis: span.matrices(n),
        closed,
        solvable,
        derived_series_dims,
        generations,
        cap_reached,
        closure_residual,
        notes,
    })
}

fn derived_series(span: &Span, n: usize, tol: f64) -> (bool, Vec<usize>) {
    let mut dims = vec![span.dim()];
    let mut current = span.clone();
    loop {
        let next = current.derived(n, tol);
        dims.push(next.dim());
        if next.dim() == 0 {
            return (true, dims);
        }
        if next.dim() >= current.dim() {
            return (false, dims);
        }
        current = next;
    }
}

/// Derived-series solvability of the algebra spanned by `basis`, which must
/// already be closed under commutators.
pub fn is_solvable(basis: &[DMatrix<f64>], tol: f64) -> Result<(bool, Vec<usize>)> {
    let n = check_shapes(basis)?;
    check_tol(tol)?;
    let scale = basis.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let mut span = Span::new();
    for b in basis {
        span.try_insert(&flatten(b), tol * scale);
    }
    if span.dim() == 0 {
        return Ok((true, vec![0]));
    }
    let residual = span.closure_residual(n) / COMMUTATOR_SCALE;
    if residual > tol {
        return Err(PassageError::NotClosed { residual });
    }
    Ok(derived_series(&span, n, tol))
}

/// Whether two families of matrices span the same subspace: every element of
/// each projects onto the other's span with relative residual below `tol`.
pub fn same_span(a: &[DMatrix<f64>], b: &[DMatrix<f64>], tol: f64) -> bool {
    let build = |ms: &[DMatrix<f64>]| {
        let scale = ms.iter().map(|m| m.norm()).fold(0.0, f64::max);
        let mut s = Span::new();
        for m in ms {
            s.try_insert(&flatten(m), tol * scale);
        }
        s
    };
    let (sa, sb) = (build(a), build(b));
    let inside = |s: &Span, ms: &[DMatrix<f64>]| {
        ms.iter().all(|m| {
            let nm = m.norm();
            nm == 0.0 || norm(&s.residual(&flatten(m))) <= tol * nm.max(1.0)
        })
    };
    sa.dim() == sb.dim() && inside(&sa, b) && inside(&sb, a)
}

/// The pair `(T̄₁, T̄₂)` with `A(x) = (λ/φ(x))·T̄₁ + T̄₂`.
///
/// `T̄₁` has top row `((λ+q)/λ, −β)` and zeros elsewhere; `T̄₂` has a zero
/// top row and lower block `(b | B)`, negated for upward jumps.
pub fn build_generators(model: &ModelSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let lambda = model.jump_rate;
    if !(lambda > 0.0) {
        return Err(PassageError::InvalidModel(format!("jump rate must be positive, got {lambda}")));
    }
    let pt = &model.jumps;
    let n = pt.dim();
    let mut t1 = DMatrix::zeros(n + 1, n + 1);
    t1[(0, 0)] = (lambda + model.kill_rate) / lambda;
    for j in 0..n {
        t1[(0, j + 1)] = -pt.beta()[j];
    }
    let sign = match model.jump_direction {
        JumpDirection::Downward => 1.0,
        JumpDirection::Upward => -1.0,
    };
    let mut t2 = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        t2[(i + 1, 0)] = sign * pt.exit_rates()[i];
        for j in 0..n {
            t2[(i + 1, j + 1)] = sign * pt.sub_generator()[(i, j)];
        }
    }
    Ok((t1, t2))
}
