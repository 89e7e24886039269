//! Subcommand bodies. Each produces its output files in memory plus a
//! human-readable summary; writing is left to the caller.

use std::fmt::Write as _;

use lieruin_core::lie_algebra::DEFAULT_TOL;
use lieruin_core::mc_sim::{estimate, PassageEstimate, SimConfig};
use lieruin_core::passage::{fmt_num, DriftKind};
use lieruin_core::riccati::{
    allen_stein_test, asymptotic_rate, phi_k_closed_form, phi_k_drift, satisfies_drift_condition, to_riccati,
    AllenSteinReport, DriftConditionSign,
};
use lieruin_core::{build_generators, closure, ClosureReport, Method, ModelSpec, PassageError, PassageProblem, SolutionCurve};
use serde::Serialize;

use crate::config::{CompareSpec, Figure1Spec, Format, RunConfig, SimulationSpec, Subcommand};
use crate::dispatch::{self, Attempt, Gate};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<OutputFile>,
    pub text: String,
    /// Set when the outputs were produced but a check failed.
    pub failure: Option<CliError>,
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

/// Run a validated, resolved config.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let stem = cfg.stem();
    let mut out = match cfg.subcommand {
        Subcommand::CheckSolvability => check_solvability(cfg, &stem)?,
        Subcommand::CheckIntegrability => check_integrability(cfg, &stem)?,
        Subcommand::Solve => solve(cfg, &stem)?,
        Subcommand::Simulate => simulate(cfg, &stem)?,
        Subcommand::Compare => compare(cfg, &stem)?,
        Subcommand::Figure1 => figure1(cfg, &stem)?,
    };
    out.files.push(OutputFile { name: format!("{stem}.config.json"), contents: cfg.to_json() });
    Ok(out)
}

fn model(cfg: &RunConfig) -> &ModelSpec {
    cfg.model.as_ref().expect("validated config has a model")
}

fn problem(cfg: &RunConfig) -> &PassageProblem {
    cfg.problem.as_ref().expect("validated config has a problem")
}

fn grid(cfg: &RunConfig) -> Vec<f64> {
    cfg.grid.as_ref().expect("validated config has a grid").values()
}

#[derive(Serialize)]
struct SolvabilityOutput {
    verdict: String,
    classification: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift_note: Option<String>,
    closure: ClosureReport,
}

pub fn solvability_verdict(report: &ClosureReport) -> String {
    let n = report.basis.first().map_or(0, |b| b.nrows());
    if report.solvable {
        format!("dimension {}, solvable", report.dimension)
    } else if report.is_full_gl() {
        format!("dimension {}, non-solvable (gl({n},R))", report.dimension)
    } else {
        format!("dimension {}, non-solvable", report.dimension)
    }
}

fn check_solvability(cfg: &RunConfig, stem: &str) -> Result<Outcome, CliError> {
    let m = model(cfg);
    let (t1, t2) = build_generators(m)?;
    let dim = t1.nrows();
    let report = closure(&[t1, t2], DEFAULT_TOL, dim * dim)?;
    let verdict = solvability_verdict(&report);
    let classification = match m.exponential_rate() {
        Some(_) if m.kill_rate == 0.0 => "exponential jumps, q = 0: the solvable two-dimensional case".to_string(),
        Some(_) => "exponential jumps, q ≠ 0: the non-solvable gl(2,R) case".to_string(),
        None => format!("{} phases: no reference classification", m.phases()),
    };
    let drift_note = matches!(m.drift.kind(), DriftKind::Constant { .. }).then(|| {
        "constant drift: A(x) is a single matrix, so the algebra it generates is one-dimensional and \
         integrability is trivial; the report above closes the drift-independent pair (T̄₁, T̄₂)"
            .to_string()
    });
    let mut text = format!("{verdict}\n{classification}\nderived series dimensions: {:?}\n", report.derived_series_dims);
    if let Some(n) = &drift_note {
        let _ = writeln!(text, "{n}");
    }
    for (i, b) in report.basis.iter().enumerate() {
        let _ = writeln!(text, "basis[{i}] = {:?}", b.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>());
    }
    for note in &report.notes {
        let _ = writeln!(text, "note: {note}");
    }
    let body = SolvabilityOutput { verdict, classification, drift_note, closure: report };
    Ok(Outcome { files: vec![OutputFile { name: format!("{stem}.json"), contents: json(&body) }], text, failure: None })
}

#[derive(Serialize)]
struct DriftConditionOutput {
    plus: bool,
    minus: bool,
}

#[derive(Serialize)]
struct IntegrabilityOutput {
    integrable: bool,
    verdict: String,
    allen_stein: AllenSteinReport,
    drift_condition: DriftConditionOutput,
    phi_k_family: bool,
}

fn check_integrability(cfg: &RunConfig, stem: &str) -> Result<Outcome, CliError> {
    let m = model(cfg);
    let grid = grid(cfg);
    let coeffs = to_riccati(m).map_err(|e| match e {
        PassageError::NotApplicable(msg) => CliError::Config(msg),
        other => CliError::Numerical(other),
    })?;
    let domain = m.drift.sign_domain();
    if !grid.iter().all(|&x| domain.contains(x)) {
        return Err(CliError::Config(format!(
            "grid leaves the drift's sign domain [{}, {}]",
            domain.lo, domain.hi
        )));
    }
    let report = allen_stein_test(&coeffs, &grid)?;
    let mu = m.exponential_rate().expect("checked by the Riccati reduction");
    let cond = |sign| satisfies_drift_condition(&m.drift, m.jump_rate, m.kill_rate, mu, sign, &grid);
    let drift_condition = DriftConditionOutput { plus: cond(DriftConditionSign::Plus), minus: cond(DriftConditionSign::Minus) };
    let verdict = match (&report.params, &report.witness) {
        (Some(p), _) => format!(
            "integrable: c0 = {}, c1 = {}, c2 = {}, kappa = {}",
            p.c0, p.c1, p.c2, p.kappa
        ),
        (None, Some(w)) => format!(
            "not integrable: T = {} at x = {} against mean {} (deviation {:.3e}, scale {:.3e})",
            w.t_value, w.x, w.t_mean, report.max_deviation, report.scale
        ),
        (None, None) => "not integrable".to_string(),
    };
    let text = format!(
        "{verdict}\ndrift condition φ′/2 + (λ+q) + μφ ∝ √|φ|: {}\n",
        if drift_condition.plus { "holds" } else { "fails" }
    );
    let body = IntegrabilityOutput {
        integrable: report.integrable,
        verdict,
        allen_stein: report,
        drift_condition,
        phi_k_family: matches!(m.drift.kind(), DriftKind::SegerdahlFamily { .. }),
    };
    Ok(Outcome { files: vec![OutputFile { name: format!("{stem}.json"), contents: json(&body) }], text, failure: None })
}

fn curve_text(curve: &SolutionCurve) -> String {
    let mut s = format!("{:>14} {:>24} {:>24}\n", "x", "psi", "m_1");
    for (j, x) in curve.grid.iter().enumerate() {
        let _ = writeln!(s, "{x:>14.6} {:>24.16e} {:>24.16e}", curve.psi[j], curve.m[j].first().copied().unwrap_or(f64::NAN));
    }
    s
}

fn curve_file(stem: &str, format: Format, curve: &SolutionCurve) -> OutputFile {
    match format {
        Format::Csv => OutputFile { name: format!("{stem}.csv"), contents: curve.to_csv() },
        Format::Json => OutputFile { name: format!("{stem}.json"), contents: json(curve) },
    }
}

fn solve(cfg: &RunConfig, stem: &str) -> Result<Outcome, CliError> {
    let (curve, attempts) = dispatch::solve(model(cfg), problem(cfg), &grid(cfg))?;
    let used = attempts.last().expect("dispatch records the method used").name;
    let mut text = format!("method: {} ({used})\n", curve.method);
    let skipped = dispatch::reasons(&attempts);
    if !skipped.is_empty() {
        let _ = writeln!(text, "not applicable:\n{skipped}");
    }
    text.push_str(&curve_text(&curve));
    Ok(Outcome { files: vec![curve_file(stem, cfg.output.format, &curve)], text, failure: None })
}

fn sim_config(model: &ModelSpec, problem: &PassageProblem, spec: &SimulationSpec, x0: f64, j: usize) -> SimConfig {
    let mut c = SimConfig::new(model.clone(), problem.clone(), x0, spec.n_paths, spec.seed.wrapping_add(j as u64));
    c.max_time = spec.max_time;
    c.flow_tolerance = spec.flow_tolerance;
    c.killing = spec.killing;
    c
}

fn simulate_grid(cfg: &RunConfig, spec: &SimulationSpec) -> Result<Vec<PassageEstimate>, CliError> {
    grid(cfg)
        .iter()
        .enumerate()
        .map(|(j, &x0)| Ok(estimate(&sim_config(model(cfg), problem(cfg), spec, x0, j))?))
        .collect()
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    x0: f64,
    #[serde(flatten)]
    estimate: &'a PassageEstimate,
}

fn simulate(cfg: &RunConfig, stem: &str) -> Result<Outcome, CliError> {
    let spec = cfg.simulation.as_ref().expect("resolved config has a simulation section");
    let xs = grid(cfg);
    let est = simulate_grid(cfg, spec)?;
    let file = match cfg.output.format {
        Format::Csv => {
            let mut s = String::from("x0,mean,std_error,n_paths,n_ruined,n_escaped,n_killed,n_censored\n");
            for (x, e) in xs.iter().zip(&est) {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    fmt_num(*x),
                    fmt_num(e.mean),
                    fmt_num(e.std_error),
                    e.n_paths,
                    e.n_ruined,
                    e.n_escaped,
                    e.n_killed,
                    e.n_censored
                );
            }
            OutputFile { name: format!("{stem}.csv"), contents: s }
        }
        Format::Json => {
            let rows: Vec<EstimateRow> = xs.iter().zip(&est).map(|(&x0, estimate)| EstimateRow { x0, estimate }).collect();
            OutputFile { name: format!("{stem}.json"), contents: json(&rows) }
        }
    };
    let mut text = format!("{:>14} {:>22} {:>12} {:>10}\n", "x0", "mean", "std_error", "censored");
    for (x, e) in xs.iter().zip(&est) {
        let _ = writeln!(text, "{x:>14.6} {:>22.16e} {:>12.4e} {:>10}", e.mean, e.std_error, e.n_censored);
    }
    Ok(Outcome { files: vec![file], text, failure: None })
}

#[derive(Serialize)]
struct CompareSummary {
    methods: Vec<&'static str>,
    max_abs_discrepancy: f64,
    discrepancy_pair: Option<(&'static str, &'static str)>,
    discrepancy_x: Option<f64>,
    reference: Option<&'static str>,
    mc_points_outside_3sigma: usize,
    mc_outside_fraction: f64,
    tolerance: f64,
    passed: bool,
    not_applicable: Vec<String>,
}

#[derive(Serialize)]
struct CompareRow {
    x: f64,
    values: Vec<f64>,
    mc_mean: Option<f64>,
    mc_std_error: Option<f64>,
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    summary: &'a CompareSummary,
    rows: Vec<CompareRow>,
}

fn compare(cfg: &RunConfig, stem: &str) -> Result<Outcome, CliError> {
    let (m, p, xs) = (model(cfg), problem(cfg), grid(cfg));
    let limits = cfg.compare.clone().unwrap_or_default();
    let mut attempts: Vec<Attempt> = dispatch::closed_form(m, p, &xs)?;
    attempts.push(dispatch::riccati(m, p, &xs)?);
    attempts.push(dispatch::bvp(m, p, &xs)?);
    let mut curves: Vec<SolutionCurve> = Vec::new();
    for a in &attempts {
        if let Gate::Applies(c) = &a.gate {
            curves.push(c.clone());
        }
    }
    let mc = match &cfg.simulation {
        Some(spec) => Some(simulate_grid(cfg, spec)?),
        None => None,
    };
    let n_methods = curves.len() + usize::from(mc.is_some());
    if n_methods < 2 {
        let mut why = format!("only {n_methods} method(s) apply");
        let skipped = dispatch::reasons(&attempts);
        if !skipped.is_empty() {
            why.push('\n');
            why.push_str(&skipped);
        }
        if cfg.simulation.is_none() {
            why.push_str("\n  Monte Carlo: no \"simulation\" section");
        }
        return Err(CliError::NothingToCompare(why));
    }
    let summary = summarize(&curves, mc.as_deref(), &limits, &xs, &attempts);
    let methods: Vec<&'static str> = curves.iter().map(|c| c.method.as_str()).collect();

    let mut csv = String::from("x");
    for name in &methods {
        let _ = write!(csv, ",{name}");
    }
    if mc.is_some() {
        csv.push_str(",mc_mean,mc_std_error,mc_lo_3sigma,mc_hi_3sigma");
    }
    csv.push('\n');
    let mut rows = Vec::with_capacity(xs.len());
    for (j, x) in xs.iter().enumerate() {
        csv.push_str(&fmt_num(*x));
        for c in &curves {
            let _ = write!(csv, ",{}", fmt_num(c.psi[j]));
        }
        let est = mc.as_ref().map(|e| &e[j]);
        if let Some(e) = est {
            let (lo, hi) = e.band(3.0);
            let _ = write!(csv, ",{},{},{},{}", fmt_num(e.mean), fmt_num(e.std_error), fmt_num(lo), fmt_num(hi));
        }
        csv.push('\n');
        rows.push(CompareRow {
            x: *x,
            values: curves.iter().map(|c| c.psi[j]).collect(),
            mc_mean: est.map(|e| e.mean),
            mc_std_error: est.map(|e| e.std_error),
        });
    }

    let mut text = format!("methods: {}", methods.join(", "));
    if mc.is_some() {
        text.push_str(", monte_carlo");
    }
    text.push('\n');
    let _ = writeln!(text, "max |difference| between deterministic methods: {:.3e}", summary.max_abs_discrepancy);
    if let Some(r) = summary.reference {
        let _ = writeln!(
            text,
            "{r} outside the Monte Carlo 3σ band at {} of {} points",
            summary.mc_points_outside_3sigma,
            xs.len()
        );
    }
    let _ = writeln!(text, "{}", if summary.passed { "comparison passed" } else { "comparison FAILED" });

    let files = match cfg.output.format {
        Format::Csv => vec![
            OutputFile { name: format!("{stem}.csv"), contents: csv },
            OutputFile { name: format!("{stem}.summary.json"), contents: json(&summary) },
        ],
        Format::Json => {
            vec![OutputFile { name: format!("{stem}.json"), contents: json(&CompareOutput { summary: &summary, rows }) }]
        }
    };
    let failure = (!summary.passed).then(|| {
        CliError::Comparison(format!(
            "max discrepancy {:.3e} (tolerance {:.1e}), {} point(s) outside the 3σ band",
            summary.max_abs_discrepancy, summary.tolerance, summary.mc_points_outside_3sigma
        ))
    });
    Ok(Outcome { files, text, failure })
}

fn summarize(
    curves: &[SolutionCurve],
    mc: Option<&[PassageEstimate]>,
    limits: &CompareSpec,
    xs: &[f64],
    attempts: &[Attempt],
) -> CompareSummary {
    let mut worst = (0.0, None, None);
    for (a, ca) in curves.iter().enumerate() {
        for cb in &curves[a + 1..] {
            for (j, x) in xs.iter().enumerate() {
                let d = (ca.psi[j] - cb.psi[j]).abs();
                if d > worst.0 || worst.1.is_none() {
                    worst = (d, Some((ca.method.as_str(), cb.method.as_str())), Some(*x));
                }
            }
        }
    }
    // The closed form is the reference when present.
    let reference = curves.iter().find(|c| c.method == Method::ClosedForm).or(curves.first());
    let mut outside = 0;
    if let (Some(r), Some(est)) = (reference, mc) {
        for (j, e) in est.iter().enumerate() {
            if (r.psi[j] - e.mean).abs() > 3.0 * e.std_error + 1e-12 {
                outside += 1;
            }
        }
    }
    let fraction = outside as f64 / xs.len() as f64;
    let passed = worst.0 <= limits.tolerance && fraction <= limits.max_outside_fraction;
    CompareSummary {
        methods: curves.iter().map(|c| c.method.as_str()).collect(),
        max_abs_discrepancy: worst.0,
        discrepancy_pair: worst.1,
        discrepancy_x: worst.2,
        reference: mc.and(reference).map(|r| r.method.as_str()),
        mc_points_outside_3sigma: outside,
        mc_outside_fraction: fraction,
        tolerance: limits.tolerance,
        passed,
        not_applicable: attempts
            .iter()
            .filter_map(|a| match &a.gate {
                Gate::Skipped(why) => Some(format!("{}: {why}", a.name)),
                Gate::Applies(_) => None,
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct DriftCurve {
    x: Vec<f64>,
    phi: Vec<f64>,
}

#[derive(Serialize)]
struct Figure1Output<'a> {
    ruin: &'a SolutionCurve,
    drift: DriftCurve,
}

fn figure1(cfg: &RunConfig, stem: &str) -> Result<Outcome, CliError> {
    let f: &Figure1Spec = cfg.figure1.as_ref().expect("resolved config has a figure1 section");
    let xs = grid(cfg);
    if xs[0] < 0.0 {
        return Err(CliError::Config("figure1: the grid must start at x ≥ 0".into()));
    }
    let drift = phi_k_drift(f.k, f.lambda, f.q, f.mu).map_err(|e| CliError::Config(format!("figure1: {e}")))?;
    let mut psi = Vec::with_capacity(xs.len());
    let mut m = Vec::with_capacity(xs.len());
    for &x in &xs {
        let (p, mm) = phi_k_closed_form(f.k, f.lambda, f.q, f.mu, x).map_err(|e| match e {
            PassageError::Domain(msg) => CliError::Config(format!("figure1: {msg}")),
            other => CliError::Numerical(other),
        })?;
        psi.push(p);
        m.push(vec![mm]);
    }
    let ruin = SolutionCurve {
        grid: xs.clone(),
        psi,
        m,
        method: Method::ClosedForm,
        error_estimate: vec![0.0; xs.len()],
    };
    let phi: Vec<f64> = xs.iter().map(|&x| drift.drift.value(x)).collect();

    let files = match cfg.output.format {
        Format::Csv => {
            let mut d = String::from("x,phi\n");
            for (x, v) in xs.iter().zip(&phi) {
                let _ = writeln!(d, "{},{}", fmt_num(*x), fmt_num(*v));
            }
            vec![
                OutputFile { name: format!("{stem}_ruin.csv"), contents: ruin.to_csv() },
                OutputFile { name: format!("{stem}_drift.csv"), contents: d },
            ]
        }
        Format::Json => vec![OutputFile {
            name: format!("{stem}.json"),
            contents: json(&Figure1Output { ruin: &ruin, drift: DriftCurve { x: xs.clone(), phi: phi.clone() } }),
        }],
    };
    let mut text = format!(
        "μ = {}, λ = {}, q = {}, K = {}\nφ_K(0) = {}\nasymptotic log-slope of Ψ: {}\n",
        f.mu,
        f.lambda,
        f.q,
        f.k,
        drift.drift.value(0.0),
        asymptotic_rate(f.lambda, f.q, f.mu)
    );
    if let Some(note) = &drift.note {
        let _ = writeln!(text, "note: {note}");
    }
    text.push_str(&curve_text(&ruin));
    Ok(Outcome { files, text, failure: None })
}
