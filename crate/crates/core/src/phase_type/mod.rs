//! Phase-type jump-size laws: the absorption time of a finite Markov chain
//! with subgenerator `B`, started from the probability row vector `β`.
//!
//! Tail `β·exp(Bx)·1`, density `β·exp(Bx)·b` with `b = −B·1`.

mod expm;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{PassageError, Result};
use crate::serde_util::{matrix_to_rows, rows_to_matrix};

pub use expm::matrix_exp;

/// Tolerance on `Σβ = 1` and on the sign of exit rates.
pub const VALIDATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub invariant: String,
    pub passed: bool,
    /// Offending entry (row, or row and column) of the first violation.
    pub index: Option<Vec<usize>>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, invariant: &str, violation: Option<(Vec<usize>, String)>) {
        let (passed, index, detail) = match violation {
            None => (true, None, String::new()),
            Some((idx, detail)) => (false, Some(idx), detail),
        };
        self.checks.push(InvariantCheck { invariant: invariant.to_string(), passed, index, detail });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for c in self.failures() {
            if !first {
                write!(f, "; ")?;
            }
            first = false;
            write!(f, "{}", c.invariant)?;
            if let Some(idx) = &c.index {
                write!(f, " at {idx:?}")?;
            }
            if !c.detail.is_empty() {
                write!(f, " ({})", c.detail)?;
            }
        }
        if first {
            write!(f, "all invariants hold")?;
        }
        Ok(())
    }
}

/// Per-phase transition table for the absorbing chain: cumulative
/// probabilities over successor phases, the last target being absorption.
#[derive(Clone, Debug, PartialEq)]
struct Transitions {
    rate: f64,
    cumulative: Vec<f64>,
    targets: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhaseTypeRepr", into = "PhaseTypeRepr")]
pub struct PhaseType {
    beta: DVector<f64>,
    sub: DMatrix<f64>,
    exit: DVector<f64>,
    beta_cumulative: Vec<f64>,
    transitions: Vec<Transitions>,
}

/// Wire format: `{"beta": [...], "B": [[...], ...]}`. The exit vector is
/// always recomputed.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseTypeRepr {
    beta: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
}

impl TryFrom<PhaseTypeRepr> for PhaseType {
    type Error = PassageError;

    fn try_from(r: PhaseTypeRepr) -> Result<Self> {
        let sub = rows_to_matrix(&r.b).ok_or_else(|| PassageError::ShapeMismatch("ragged rows in B".into()))?;
        PhaseType::new(r.beta, sub)
    }
}

impl From<PhaseType> for PhaseTypeRepr {
    fn from(p: PhaseType) -> Self {
        PhaseTypeRepr { beta: p.beta.iter().copied().collect(), b: matrix_to_rows(&p.sub) }
    }
}

impl PhaseType {
    /// Build and validate.
    pub fn new(beta: Vec<f64>, sub: DMatrix<f64>) -> Result<Self> {
        let pt = Self::new_unchecked(beta, sub);
        let report = pt.validate();
        if report.is_valid() {
            Ok(pt)
        } else {
            Err(PassageError::InvalidPhaseType(report))
        }
    }

    /// Build without checking the subgenerator invariants; use
    /// [`PhaseType::validate`] to inspect them.
    pub fn new_unchecked(beta: Vec<f64>, sub: DMatrix<f64>) -> Self {
        let beta = DVector::from_vec(beta);
        let exit = if sub.ncols() == 0 {
            DVector::zeros(sub.nrows())
        } else {
            -(&sub * DVector::from_element(sub.ncols(), 1.0))
        };
        let mut acc = 0.0;
        let beta_cumulative = beta
            .iter()
            .map(|b| {
                acc += b.max(0.0);
                acc
            })
            .collect();
        let transitions = transition_tables(&sub, &exit);
        PhaseType { beta, sub, exit, beta_cumulative, transitions }
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(vec![1.0], DMatrix::from_element(1, 1, -rate))
    }

    /// Erlang with `k` phases of rate `rate`.
    pub fn erlang(k: usize, rate: f64) -> Result<Self> {
        let mut sub = DMatrix::zeros(k, k);
        for i in 0..k {
            sub[(i, i)] = -rate;
            if i + 1 < k {
                sub[(i, i + 1)] = rate;
            }
        }
        let mut beta = vec![0.0; k];
        if k > 0 {
            beta[0] = 1.0;
        }
        Self::new(beta, sub)
    }

    /// Coxian: phase `i` has rate `rates[i]` and moves on to phase `i+1` with
    /// probability `proceed[i]`, otherwise absorbs.
    pub fn coxian(rates: &[f64], proceed: &[f64]) -> Result<Self> {
        let k = rates.len();
        if proceed.len() + 1 != k {
            return Err(PassageError::ShapeMismatch(format!(
                "coxian needs {} continuation probabilities, got {}",
                k.saturating_sub(1),
                proceed.len()
            )));
        }
        let mut sub = DMatrix::zeros(k, k);
        for i in 0..k {
            sub[(i, i)] = -rates[i];
            if i + 1 < k {
                sub[(i, i + 1)] = rates[i] * proceed[i];
            }
        }
        let mut beta = vec![0.0; k];
        if k > 0 {
            beta[0] = 1.0;
        }
        Self::new(beta, sub)
    }

    pub fn dim(&self) -> usize {
        self.sub.nrows()
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn sub_generator(&self) -> &DMatrix<f64> {
        &self.sub
    }

    /// `b = −B·1`.
    pub fn exit_rates(&self) -> &DVector<f64> {
        &self.exit
    }

    /// Check every subgenerator invariant and report each one.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let n = self.sub.nrows();
        let shape_ok = n >= 1 && self.sub.ncols() == n && self.beta.len() == n;
        r.push(
            "dimensions must agree",
            (!shape_ok).then(|| {
                (
                    vec![self.beta.len(), self.sub.nrows(), self.sub.ncols()],
                    "beta length, B rows and B columns must be equal and positive".to_string(),
                )
            }),
        );
        if !shape_ok {
            return r;
        }
        let finite = self.sub.iter().chain(self.beta.iter()).all(|v| v.is_finite());
        r.push("entries must be finite", (!finite).then(|| (vec![], String::new())));
        if !finite {
            return r;
        }

        let first = |pred: &dyn Fn(usize, usize) -> bool| -> Option<(usize, usize)> {
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).find(|&(i, j)| pred(i, j))
        };
        r.push(
            "diagonal must be negative",
            first(&|i, j| i == j && self.sub[(i, j)] >= 0.0)
                .map(|(i, j)| (vec![i, j], format!("B[{i},{j}] = {}", self.sub[(i, j)]))),
        );
        r.push(
            "off-diagonal entries must be nonnegative",
            first(&|i, j| i != j && self.sub[(i, j)] < 0.0)
                .map(|(i, j)| (vec![i, j], format!("B[{i},{j}] = {}", self.sub[(i, j)]))),
        );

        let row_scale = |i: usize| self.sub.row(i).iter().map(|v| v.abs()).fold(0.0, f64::max);
        let row_sum = |i: usize| -self.exit[i];
        r.push(
            "row sums must be nonpositive",
            (0..n)
                .find(|&i| row_sum(i) > VALIDATION_TOL * row_scale(i))
                .map(|i| (vec![i], format!("row sum {}", row_sum(i)))),
        );
        r.push(
            "at least one row sum must be strictly negative",
            (!(0..n).any(|i| row_sum(i) < -VALIDATION_TOL * row_scale(i)))
                .then(|| (vec![], "no exit from any phase".to_string())),
        );
        r.push(
            "beta entries must be nonnegative",
            (0..n).find(|&i| self.beta[i] < 0.0).map(|i| (vec![i], format!("beta[{i}] = {}", self.beta[i]))),
        );
        let total: f64 = self.beta.iter().sum();
        r.push(
            "beta must sum to one",
            ((total - 1.0).abs() > VALIDATION_TOL).then(|| (vec![], format!("sum = {total}"))),
        );
        r.push(
            "exit vector must be nonnegative",
            (0..n)
                .find(|&i| self.exit[i] < -VALIDATION_TOL * row_scale(i))
                .map(|i| (vec![i], format!("b[{i}] = {}", self.exit[i]))),
        );

        let scale = row_scale_max(&self.sub);
        let max_re = self
            .sub
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        r.push(
            "eigenvalues must have negative real part",
            (max_re >= -VALIDATION_TOL * scale).then(|| (vec![], format!("max real part {max_re}"))),
        );
        r
    }

    fn check_x(x: f64) -> Result<()> {
        if x.is_nan() || x < 0.0 {
            Err(PassageError::Domain(format!("jump-size argument must be >= 0, got {x}")))
        } else {
            Ok(())
        }
    }

    fn propagated_beta(&self, x: f64) -> Result<DVector<f64>> {
        let e = matrix_exp(&self.sub, x)?;
        Ok((self.beta.transpose() * e).transpose())
    }

    /// `P[C > x] = β·exp(Bx)·1`.
    pub fn tail(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        if x == 0.0 {
            return Ok(self.beta.sum().clamp(0.0, 1.0));
        }
        Ok(self.propagated_beta(x)?.sum().clamp(0.0, 1.0))
    }

    /// `β·exp(Bx)·b`.
    pub fn density(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(self.propagated_beta(x)?.dot(&self.exit).max(0.0))
    }

    /// `β·(−B)^{-1}·1`.
    pub fn mean(&self) -> f64 {
        let ones = DVector::from_element(self.dim(), 1.0);
        let neg = -&self.sub;
        let m = neg.lu().solve(&ones).expect("validated subgenerator is invertible");
        self.beta.dot(&m)
    }

    /// Draw one jump size by simulating the absorbing chain: exponential
    /// holding times, then a discrete move to another phase or absorption.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = self.dim();
        let u: f64 = rng.random::<f64>() * self.beta_cumulative[n - 1];
        let mut phase = self.beta_cumulative.partition_point(|&c| c <= u).min(n - 1);
        let mut t = 0.0;
        loop {
            let tr = &self.transitions[phase];
            let e: f64 = rng.sample(Exp1);
            t += e / tr.rate;
            let u: f64 = rng.random::<f64>();
            let k = tr.cumulative.partition_point(|&c| c <= u).min(tr.targets.len() - 1);
            let next = tr.targets[k];
            if next == n {
                return t;
            }
            phase = next;
        }
    }
}

fn row_scale_max(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

fn transition_tables(sub: &DMatrix<f64>, exit: &DVector<f64>) -> Vec<Transitions> {
    let n = sub.nrows();
    if sub.ncols() != n || exit.len() != n {
        return Vec::new();
    }
    (0..n)
        .map(|i| {
            let rate = -sub[(i, i)];
            let mut targets = Vec::new();
            let mut weights = Vec::new();
            for j in 0..n {
                if j != i && sub[(i, j)] > 0.0 {
                    targets.push(j);
                    weights.push(sub[(i, j)]);
                }
            }
            targets.push(n);
            weights.push(exit[i].max(0.0));
            let total: f64 = weights.iter().sum();
            let mut acc = 0.0;
            let cumulative = weights
                .iter()
                .map(|w| {
                    acc += w / total;
                    acc
                })
                .collect();
            Transitions { rate, cumulative, targets }
        })
        .collect()
}
