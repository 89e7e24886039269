//! The `lieruin` command-line front end.
//!
//! Every run reads (or, for `figure1`, may synthesize) a JSON [`RunConfig`],
//! applies command-line overrides, writes its outputs plus the resolved config
//! to the output directory, and mirrors a summary to stdout.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod dispatch;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser};

pub use commands::{execute, Outcome, OutputFile};
pub use config::{Format, RunConfig, Subcommand};
pub use error::CliError;

/// Default output directory when neither the flag nor the config sets one.
pub const OUTPUT_DIR_ENV: &str = "LIERUIN_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "lieruin", version, about = "First-passage probabilities for jump processes with drift")]
pub struct Cli {
    /// Suppress the stdout summary.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    /// Directory for output files [env: LIERUIN_OUTPUT_DIR; default: .]
    #[arg(long, short, global = true)]
    pub output_dir: Option<PathBuf>,

    /// Output format for curves and tables.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SimFlags {
    /// Paths per grid point.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Base seed; grid point j uses seed + j.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Censoring time for each path.
    #[arg(long)]
    pub max_time: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Figure1Flags {
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    /// Number of grid points on [0, 5].
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Lie closure of the system generators and its solvability.
    CheckSolvability { config: PathBuf },
    /// Allen–Stein integrability of the scalar Riccati reduction.
    CheckIntegrability { config: PathBuf },
    /// Ψ and M on the grid, by closed form when one applies.
    Solve { config: PathBuf },
    /// Monte Carlo estimates at each grid point.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// All applicable methods side by side.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// The φ_K ruin and drift curves.
    Figure1 {
        config: Option<PathBuf>,
        #[command(flatten)]
        params: Figure1Flags,
    },
}

impl Command {
    fn subcommand(&self) -> Subcommand {
        match self {
            Command::CheckSolvability { .. } => Subcommand::CheckSolvability,
            Command::CheckIntegrability { .. } => Subcommand::CheckIntegrability,
            Command::Solve { .. } => Subcommand::Solve,
            Command::Simulate { .. } => Subcommand::Simulate,
            Command::Compare { .. } => Subcommand::Compare,
            Command::Figure1 { .. } => Subcommand::Figure1,
        }
    }

    fn config_path(&self) -> Option<&Path> {
        match self {
            Command::CheckSolvability { config }
            | Command::CheckIntegrability { config }
            | Command::Solve { config }
            | Command::Simulate { config, .. }
            | Command::Compare { config, .. } => Some(config),
            Command::Figure1 { config, .. } => config.as_deref(),
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    RunConfig::parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// The config the command line describes: file contents, flag overrides,
/// then defaults.
pub fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let sub = cli.command.subcommand();
    let mut cfg = match cli.command.config_path() {
        Some(p) => load_config(p)?,
        None => RunConfig::new(sub),
    };
    if cfg.subcommand != sub {
        return Err(CliError::Config(format!(
            "config is for \"{}\" but the command is \"{}\"",
            cfg.subcommand.name(),
            sub.name()
        )));
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    cfg.resolve();
    match &cli.command {
        Command::Simulate { sim, .. } | Command::Compare { sim, .. } => {
            if sim.paths.is_some() || sim.seed.is_some() || sim.max_time.is_some() {
                let s = cfg.simulation.get_or_insert_with(Default::default);
                if let Some(n) = sim.paths {
                    s.n_paths = n;
                }
                if let Some(seed) = sim.seed {
                    s.seed = seed;
                }
                if let Some(t) = sim.max_time {
                    s.max_time = Some(t);
                }
            }
        }
        Command::Figure1 { params, .. } => {
            let f = cfg.figure1.get_or_insert_with(Default::default);
            if let Some(v) = params.mu {
                f.mu = v;
            }
            if let Some(v) = params.lambda {
                f.lambda = v;
            }
            if let Some(v) = params.q {
                f.q = v;
            }
            if let Some(v) = params.k {
                f.k = v;
            }
            if let Some(n) = params.points {
                if let Some(g) = cfg.grid.as_mut() {
                    g.points = n;
                }
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Flag, then config, then environment, then the working directory.
pub fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.output_dir
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn write_outputs(dir: &Path, files: &[OutputFile]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    files
        .iter()
        .map(|f| {
            let path = dir.join(&f.name);
            std::fs::write(&path, &f.contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
            Ok(path)
        })
        .collect()
}

fn run_parsed(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    let outcome = execute(&cfg)?;
    let written = write_outputs(&output_dir(cli, &cfg), &outcome.files)?;
    if !cli.quiet {
        // A closed pipe on stdout is not an error worth failing the run for.
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(outcome.text.as_bytes());
        for p in &written {
            let _ = writeln!(out, "wrote {}", p.display());
        }
    }
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_parsed(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lieruin: {e}");
            e.exit_code()
        }
    }
}
