//! Monte Carlo oracle: simulate the piecewise deterministic process and
//! estimate killed first-passage probabilities.
//!
//! Jump epochs are Poisson(λ); between jumps the state follows the drift flow
//! (exact for constant and `φ_K` drifts). Crossing a level by drift is
//! located exactly (or by bisection for tabulated drifts); crossing by a jump
//! records the overshoot. Paths are simulated in fixed-size chunks, each on
//! its own ChaCha stream, and chunk statistics are merged in chunk order, so
//! results depend only on `(seed, n_paths)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PassageError, Result};
use crate::passage::{DriftSpec, Estimand, JumpDirection, ModelSpec, PassageProblem};

const CHUNK: usize = 4096;
/// Default horizon in multiples of the crossing time scale.
const HORIZON_SCALES: f64 = 50.0;
/// In weight mode a path is dropped once `e^{−qt}` falls below `e^{−37}`.
const NEGLIGIBLE_LOG_WEIGHT: f64 = 37.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KillingMode {
    /// Weight each passage by `e^{−qτ}`.
    #[default]
    Weight,
    /// Draw the killing time `e_q` and count passages before it.
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub problem: PassageProblem,
    pub x0: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// `None` picks 50 × the crossing time scale.
    #[serde(default)]
    pub max_time: Option<f64>,
    #[serde(default = "default_flow_tolerance")]
    pub flow_tolerance: f64,
    #[serde(default)]
    pub killing: KillingMode,
}

fn default_flow_tolerance() -> f64 {
    1e-10
}

impl SimConfig {
    pub fn new(model: ModelSpec, problem: PassageProblem, x0: f64, n_paths: usize, seed: u64) -> Self {
        SimConfig {
            model,
            problem,
            x0,
            n_paths,
            seed,
            max_time: None,
            flow_tolerance: default_flow_tolerance(),
            killing: KillingMode::Weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.problem.validate()?;
        if self.n_paths == 0 {
            return Err(PassageError::InvalidModel("n_paths must be at least 1".into()));
        }
        if let Some(t) = self.max_time {
            if !(t > 0.0) {
                return Err(PassageError::InvalidModel(format!("max_time must be positive, got {t}")));
            }
        }
        if !(self.flow_tolerance > 0.0) {
            return Err(PassageError::InvalidModel("flow_tolerance must be positive".into()));
        }
        if !(self.x0 >= self.problem.lower && self.x0 <= self.problem.upper_level()) {
            return Err(PassageError::InvalidModel(format!(
                "x0 = {} lies outside [{}, {}]",
                self.x0,
                self.problem.lower,
                self.problem.upper_level()
            )));
        }
        Ok(())
    }

    /// Time for the drift to carry the start to the nearer relevant level,
    /// plus one mean jump, or the mean inter-jump time if larger.
    pub fn time_scale(&self) -> f64 {
        let phi = self.model.drift.value(self.x0).abs().max(1e-12);
        let gap = if self.model.drift.value(self.x0) < 0.0 {
            self.x0 - self.problem.lower
        } else if self.problem.upper.is_some() {
            self.problem.upper_level() - self.x0
        } else {
            0.0
        };
        (1.0 / self.model.jump_rate).max((gap + self.model.jumps.mean()) / phi)
    }

    pub fn horizon(&self) -> f64 {
        self.max_time.unwrap_or(HORIZON_SCALES * self.time_scale())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum PathOutcome {
    /// Fell below the lower level at `tau`, by `overshoot ≥ 0`.
    Ruined { tau: f64, overshoot: f64 },
    /// Reached the upper level at `tau`.
    Escaped { tau: f64 },
    /// Killed at `tau` before either passage (explicit killing only).
    Killed { tau: f64 },
    Censored,
}

/// Deterministic motion for time `dt`.
pub fn flow(drift: &DriftSpec, x0: f64, dt: f64, tol: f64) -> Result<f64> {
    if drift.value(x0) == 0.0 {
        return Ok(x0);
    }
    drift.flow(x0, dt, tol)
}

pub fn simulate_path<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<PathOutcome> {
    let model = &cfg.model;
    let drift = &model.drift;
    let (l, big_l) = (cfg.problem.lower, cfg.problem.upper_level());
    let q = model.kill_rate;
    let tol = cfg.flow_tolerance;

    let mut horizon = cfg.horizon();
    let mut kill_time = f64::INFINITY;
    match cfg.killing {
        KillingMode::Explicit if q > 0.0 => {
            kill_time = rng.sample::<f64, _>(Exp1) / q;
            horizon = horizon.min(kill_time);
        }
        KillingMode::Weight if q > 0.0 => horizon = horizon.min(NEGLIGIBLE_LOG_WEIGHT / q),
        _ => {}
    }
    let end = |t: f64| if kill_time <= t { PathOutcome::Killed { tau: kill_time } } else { PathOutcome::Censored };

    let mut t = 0.0;
    let mut x = cfg.x0;
    loop {
        let dt: f64 = rng.sample::<f64, _>(Exp1) / model.jump_rate;
        let span = dt.min(horizon - t);
        let phi = drift.value(x);
        let level = if phi < 0.0 { Some(l) } else if phi > 0.0 && big_l.is_finite() { Some(big_l) } else { None };
        if let Some(level) = level {
            if let Some(h) = drift.hit_time(x, level, span, tol)? {
                let tau = t + h;
                return Ok(if level == l {
                    PathOutcome::Ruined { tau, overshoot: 0.0 }
                } else {
                    PathOutcome::Escaped { tau }
                });
            }
        }
        if t + dt >= horizon {
            return Ok(end(horizon));
        }
        x = flow(drift, x, dt, tol)?;
        t += dt;
        let c = model.jumps.sample(rng);
        match model.jump_direction {
            JumpDirection::Downward => {
                x -= c;
                if x < l {
                    return Ok(PathOutcome::Ruined { tau: t, overshoot: l - x });
                }
            }
            JumpDirection::Upward => {
                x += c;
                if x > big_l {
                    return Ok(PathOutcome::Escaped { tau: t });
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateTarget {
    /// `E[e^{−qτ_l}; τ_l < ∞]`.
    KilledRuin,
    /// `E[e^{−qτ_l − ξ·overshoot}; τ_l < ∞]`.
    PenalizedRuin,
    /// Killed probability that one level is passed before the other.
    TwoSided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_ruined: usize,
    pub n_escaped: usize,
    pub n_censored: usize,
    pub n_killed: usize,
    pub target: EstimateTarget,
}

impl PassageEstimate {
    /// `[mean − kσ, mean + kσ]`.
    pub fn band(&self, k: f64) -> (f64, f64) {
        (self.mean - k * self.std_error, self.mean + k * self.std_error)
    }

    pub fn censored_fraction(&self) -> f64 {
        self.n_censored as f64 / self.n_paths as f64
    }
}

fn weight(cfg: &SimConfig, outcome: &PathOutcome) -> f64 {
    let q = cfg.model.kill_rate;
    let discount = |tau: f64| match cfg.killing {
        KillingMode::Weight => (-q * tau).exp(),
        KillingMode::Explicit => 1.0,
    };
    match (cfg.problem.estimand, outcome) {
        (Estimand::RuinBelow, PathOutcome::Ruined { tau, overshoot }) => {
            discount(*tau) * (-cfg.problem.overshoot_xi * overshoot).exp()
        }
        (Estimand::ExitAbove, PathOutcome::Escaped { tau }) => discount(*tau),
        _ => 0.0,
    }
}

#[derive(Clone, Copy, Default)]
struct Tally {
    n: usize,
    mean: f64,
    m2: f64,
    ruined: usize,
    escaped: usize,
    censored: usize,
    killed: usize,
}

impl Tally {
    fn push(&mut self, w: f64, outcome: &PathOutcome) {
        self.n += 1;
        let delta = w - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (w - self.mean);
        match outcome {
            PathOutcome::Ruined { .. } => self.ruined += 1,
            PathOutcome::Escaped { .. } => self.escaped += 1,
            PathOutcome::Censored => self.censored += 1,
            PathOutcome::Killed { .. } => self.killed += 1,
        }
    }

    fn merge(self, other: Tally) -> Tally {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Tally {
            n,
            mean: self.mean + delta * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64,
            ruined: self.ruined + other.ruined,
            escaped: self.escaped + other.escaped,
            censored: self.censored + other.censored,
            killed: self.killed + other.killed,
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunks(n_paths: usize) -> impl IndexedParallelIterator<Item = (usize, usize)> {
    let n_chunks = n_paths.div_ceil(CHUNK);
    (0..n_chunks).into_par_iter().map(move |c| (c, CHUNK.min(n_paths - c * CHUNK)))
}

/// Every path outcome, in path order.
pub fn simulate_outcomes(cfg: &SimConfig) -> Result<Vec<PathOutcome>> {
    cfg.validate()?;
    let per_chunk: Vec<Result<Vec<PathOutcome>>> = chunks(cfg.n_paths)
        .map(|(c, len)| {
            let mut rng = chunk_rng(cfg.seed, c);
            (0..len).map(|_| simulate_path(cfg, &mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(cfg.n_paths);
    for chunk in per_chunk {
        out.extend(chunk?);
    }
    Ok(out)
}

pub fn estimate(cfg: &SimConfig) -> Result<PassageEstimate> {
    cfg.validate()?;
    let tallies: Vec<Result<Tally>> = chunks(cfg.n_paths)
        .map(|(c, len)| {
            let mut rng = chunk_rng(cfg.seed, c);
            let mut tally = Tally::default();
            for _ in 0..len {
                let outcome = simulate_path(cfg, &mut rng)?;
                tally.push(weight(cfg, &outcome), &outcome);
            }
            Ok(tally)
        })
        .collect();
    let mut total = Tally::default();
    for t in tallies {
        total = total.merge(t?);
    }
    if total.censored == total.n {
        return Err(PassageError::AllCensored);
    }
    let variance = if total.n > 1 { total.m2 / (total.n - 1) as f64 } else { 0.0 };
    let target = if cfg.problem.upper.is_some() {
        EstimateTarget::TwoSided
    } else if cfg.problem.overshoot_xi > 0.0 {
        EstimateTarget::PenalizedRuin
    } else {
        EstimateTarget::KilledRuin
    };
    Ok(PassageEstimate {
        mean: total.mean,
        std_error: (variance / total.n as f64).sqrt(),
        n_paths: total.n,
        n_ruined: total.ruined,
        n_escaped: total.escaped,
        n_censored: total.censored,
        n_killed: total.killed,
        target,
    })
}
