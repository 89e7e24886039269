//! The JSON run configuration.

use std::path::PathBuf;

use lieruin_core::mc_sim::KillingMode;
use lieruin_core::numeric::linspace;
use lieruin_core::{ModelSpec, PassageProblem};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    CheckSolvability,
    CheckIntegrability,
    Solve,
    Simulate,
    Compare,
    Figure1,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::CheckSolvability => "check-solvability",
            Subcommand::CheckIntegrability => "check-integrability",
            Subcommand::Solve => "solve",
            Subcommand::Simulate => "simulate",
            Subcommand::Compare => "compare",
            Subcommand::Figure1 => "figure1",
        }
    }

    fn default_stem(self) -> String {
        self.name().replace('-', "_")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            vec![self.start]
        } else {
            linspace(self.start, self.end, self.points)
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.start.is_finite() && self.end.is_finite()) {
            return Err(CliError::Config("grid: start and end must be finite".into()));
        }
        match self.points {
            0 => Err(CliError::Config("grid: points must be at least 1".into())),
            1 if self.start != self.end => {
                Err(CliError::Config("grid: a single point needs start = end".into()))
            }
            n if n > 1 && !(self.end > self.start) => {
                Err(CliError::Config(format!("grid: end {} must exceed start {}", self.end, self.start)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: Format,
    /// File name stem; defaults to the subcommand name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
    /// Never written back, so an emitted config reruns anywhere.
    #[serde(default, skip_serializing)]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Grid point `j` is simulated with seed `seed + j`.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
    #[serde(default = "default_flow_tolerance")]
    pub flow_tolerance: f64,
    #[serde(default)]
    pub killing: KillingMode,
}

fn default_paths() -> usize {
    100_000
}

fn default_seed() -> u64 {
    1
}

fn default_flow_tolerance() -> f64 {
    1e-10
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            n_paths: default_paths(),
            seed: default_seed(),
            max_time: None,
            flow_tolerance: default_flow_tolerance(),
            killing: KillingMode::Weight,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure1Spec {
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_half")]
    pub lambda: f64,
    #[serde(default = "default_half")]
    pub q: f64,
    #[serde(default = "default_k")]
    pub k: f64,
}

fn default_mu() -> f64 {
    1.5
}

fn default_half() -> f64 {
    0.5
}

fn default_k() -> f64 {
    0.75
}

impl Default for Figure1Spec {
    fn default() -> Self {
        Figure1Spec { mu: default_mu(), lambda: default_half(), q: default_half(), k: default_k() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    /// Largest tolerated gap between two deterministic methods.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Largest tolerated share of points where the reference leaves the
    /// simulation's 3σ band.
    #[serde(default = "default_outside_fraction")]
    pub max_outside_fraction: f64,
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_outside_fraction() -> f64 {
    0.01
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec { tolerance: default_tolerance(), max_outside_fraction: default_outside_fraction() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub subcommand: Subcommand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<PassageProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure1: Option<Figure1Spec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
}

impl RunConfig {
    pub fn new(subcommand: Subcommand) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            subcommand,
            model: None,
            problem: None,
            grid: None,
            output: OutputSpec::default(),
            simulation: None,
            figure1: None,
            compare: None,
        }
    }

    /// Parse and check a config document. Errors name the offending field
    /// and the line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." || path.is_empty() {
                CliError::Config(e.into_inner().to_string())
            } else {
                CliError::Config(format!("{path}: {}", e.into_inner()))
            }
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| self.subcommand.default_stem())
    }

    /// Fill defaults so the emitted config pins every choice.
    pub fn resolve(&mut self) {
        match self.subcommand {
            Subcommand::Simulate => {
                self.simulation.get_or_insert_with(SimulationSpec::default);
            }
            Subcommand::Compare => {
                self.compare.get_or_insert_with(CompareSpec::default);
            }
            Subcommand::Figure1 => {
                self.figure1.get_or_insert_with(Figure1Spec::default);
                self.grid.get_or_insert(GridSpec { start: 0.0, end: 5.0, points: 101 });
            }
            _ => {}
        }
    }

    /// Subcommand-specific required fields and their consistency.
    pub fn validate(&self) -> Result<(), CliError> {
        let need = |present: bool, field: &str| {
            if present {
                Ok(())
            } else {
                Err(CliError::Config(format!("{} needs a \"{field}\" section", self.subcommand.name())))
            }
        };
        let sub = self.subcommand;
        let needs_problem = matches!(sub, Subcommand::Solve | Subcommand::Simulate | Subcommand::Compare);
        if sub == Subcommand::Figure1 {
            if self.model.is_some() || self.problem.is_some() {
                return Err(CliError::Config("figure1 builds its own model; use the \"figure1\" section".into()));
            }
        } else {
            need(self.model.is_some(), "model")?;
        }
        if sub != Subcommand::CheckSolvability {
            need(self.grid.is_some(), "grid")?;
        }
        if needs_problem {
            need(self.problem.is_some(), "problem")?;
        }
        if let Some(stem) = &self.output.stem {
            if stem.is_empty() || stem.contains(['/', '\\']) {
                return Err(CliError::Config(format!("output.stem {stem:?} must be a plain file name")));
            }
        }
        if let Some(model) = &self.model {
            model.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        }
        if let Some(grid) = &self.grid {
            grid.validate()?;
        }
        if let (Some(problem), Some(grid)) = (&self.problem, &self.grid) {
            problem.validate().map_err(|e| CliError::Config(format!("problem: {e}")))?;
            if grid.start < problem.lower || grid.end > problem.upper_level() {
                return Err(CliError::Config(format!(
                    "grid [{}, {}] leaves [{}, {}]",
                    grid.start,
                    grid.end,
                    problem.lower,
                    problem.upper_level()
                )));
            }
        }
        if let Some(sim) = &self.simulation {
            if sim.n_paths == 0 {
                return Err(CliError::Config("simulation.n_paths must be at least 1".into()));
            }
            if sim.max_time.is_some_and(|t| !(t > 0.0)) {
                return Err(CliError::Config("simulation.max_time must be positive".into()));
            }
            if !(sim.flow_tolerance > 0.0) {
                return Err(CliError::Config("simulation.flow_tolerance must be positive".into()));
            }
        }
        if let Some(c) = &self.compare {
            if !(c.tolerance > 0.0) || !(0.0..=1.0).contains(&c.max_outside_fraction) {
                return Err(CliError::Config("compare: tolerance must be positive and the fraction in [0, 1]".into()));
            }
        }
        Ok(())
    }
}
