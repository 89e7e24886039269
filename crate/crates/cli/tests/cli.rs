use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn lieruin(args: &[&str], env_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lieruin"));
    cmd.args(args).env_remove("LIERUIN_OUTPUT_DIR");
    if let Some(d) = env_dir {
        cmd.env("LIERUIN_OUTPUT_DIR", d);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn exp_model(drift: Value, lambda: f64, q: f64, mu: f64) -> Value {
    json!({"drift": drift, "jump_rate": lambda, "kill_rate": q, "jumps": {"beta": [1.0], "B": [[-mu]]}})
}

fn constant(c: f64) -> Value {
    json!({"kind": "constant", "c": c})
}

fn phi_k() -> Value {
    json!({"kind": "segerdahl_family", "k": 0.75, "lambda": 0.5, "q": 0.5, "mu": 1.5})
}

fn ruin() -> Value {
    json!({"lower": 0.0, "estimand": "ruin_below"})
}

fn grid(end: f64, points: usize) -> Value {
    json!({"start": 0.0, "end": end, "points": points})
}

fn write_config(dir: &TempDir, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn config(sub: &str, model: Value) -> Value {
    json!({"schema_version": 1, "subcommand": sub, "model": model})
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full = vec!["-o", dir.to_str().unwrap()];
    full.extend_from_slice(args);
    lieruin(&full, None)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn solvability_verdicts() {
    let tmp = TempDir::new().unwrap();
    for (q, expected) in [(0.0, "dimension 2, solvable"), (0.5, "dimension 4, non-solvable (gl(2,R))")] {
        let p = write_config(&tmp, "s.json", &config("check-solvability", exp_model(constant(1.0), 1.0, q, 2.0)));
        let o = run_in(tmp.path(), &["check-solvability", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).starts_with(expected), "{}", stdout(&o));
        let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("check_solvability.json")).unwrap()).unwrap();
        assert_eq!(report["verdict"], expected);
    }
    let mut erlang = exp_model(constant(1.0), 1.0, 0.0, 2.0);
    erlang["jumps"] = json!({"beta": [1.0, 0.0], "B": [[-4.0, 4.0], [0.0, -4.0]]});
    let p = write_config(&tmp, "e.json", &config("check-solvability", erlang));
    let o = run_in(tmp.path(), &["check-solvability", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("dimension") && stdout(&o).contains("2 phases"));
}

#[test]
fn integrability_of_phi_k_and_a_perturbed_table() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = config("check-integrability", exp_model(phi_k(), 0.5, 0.5, 1.5));
    cfg["grid"] = grid(5.0, 41);
    let p = write_config(&tmp, "i.json", &cfg);
    let o = run_in(tmp.path(), &["check-integrability", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("check_integrability.json")).unwrap()).unwrap();
    assert_eq!(r["integrable"], true);
    assert_eq!(r["allen_stein"]["params"]["c1"], 0.0);
    assert_eq!(r["drift_condition"]["plus"], true);
    assert_eq!(r["drift_condition"]["minus"], false);

    let points: Vec<Value> = (0..=10).map(|i| json!([i as f64 * 0.5, -1.0 - 0.05 * (i as f64).sin()])).collect();
    let table = json!({"kind": "tabulated", "points": points, "interpolation": "cubic"});
    let mut cfg = config("check-integrability", exp_model(table, 0.5, 0.5, 1.5));
    cfg["grid"] = grid(5.0, 41);
    let p = write_config(&tmp, "t.json", &cfg);
    let o = run_in(tmp.path(), &["check-integrability", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("not integrable"), "{}", stdout(&o));
}

#[test]
fn solve_dispatch() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (exp_model(constant(1.0), 1.0, 0.0, 2.0), "closed_form"),
        (exp_model(phi_k(), 0.5, 0.5, 1.5), "closed_form"),
        (
            exp_model(
                json!({"kind": "tabulated", "points": [[0.0, 1.0], [1.0, 1.4], [2.0, 1.2], [3.0, 2.0]], "interpolation": "cubic"}),
                1.0,
                0.4,
                2.0,
            ),
            "ode_bvp",
        ),
    ];
    for (model, method) in cases {
        let mut cfg = config("solve", model);
        cfg["problem"] = ruin();
        cfg["grid"] = grid(5.0, 11);
        let p = write_config(&tmp, "solve.json", &cfg);
        let o = run_in(tmp.path(), &["solve", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let rows = csv_rows(&tmp.path().join("solve.csv"));
        assert_eq!(rows.len(), 11);
        assert!(rows.iter().all(|r| r.last().unwrap() == method), "{method}: {rows:?}");
    }
}

#[test]
fn constant_drift_closed_form_value() {
    // λ = 1, μ = 2, c = 1, q = 0: Ψ(0) = λ/(cμ) = 0.5
    let tmp = TempDir::new().unwrap();
    let mut cfg = config("solve", exp_model(constant(1.0), 1.0, 0.0, 2.0));
    cfg["problem"] = ruin();
    cfg["grid"] = grid(1.0, 2);
    let p = write_config(&tmp, "c.json", &cfg);
    assert_eq!(code(&run_in(tmp.path(), &["solve", "--format", "json", p.to_str().unwrap()])), 0);
    let curve: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("solve.json")).unwrap()).unwrap();
    assert!((curve["psi"][0].as_f64().unwrap() - 0.5).abs() < 1e-15);
    assert!((curve["psi"][1].as_f64().unwrap() - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn compare_constant_and_phi_k() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = json!({"schema_version": 1, "subcommand": "compare", "model": exp_model(constant(1.0), 1.0, 0.0, 2.0),
        "problem": ruin(), "grid": grid(5.0, 11)});
    let p = write_config(&tmp, "c.json", &cfg);
    let o = run_in(tmp.path(), &["compare", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("compare.summary.json")).unwrap()).unwrap();
    assert!(s["max_abs_discrepancy"].as_f64().unwrap() < 1e-7);

    cfg["model"] = exp_model(phi_k(), 0.5, 0.5, 1.5);
    cfg["simulation"] = json!({"n_paths": 50000, "seed": 3});
    let p = write_config(&tmp, "k.json", &cfg);
    let o = run_in(tmp.path(), &["compare", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let s: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("compare.summary.json")).unwrap()).unwrap();
    assert_eq!(s["mc_points_outside_3sigma"], 0);
    assert_eq!(s["reference"], "closed_form");
}

#[test]
fn compare_needs_two_methods() {
    let tmp = TempDir::new().unwrap();
    let mut model = exp_model(constant(1.0), 1.0, 0.2, 2.0);
    model["jumps"] = json!({"beta": [1.0, 0.0], "B": [[-4.0, 4.0], [0.0, -4.0]]});
    let cfg = json!({"schema_version": 1, "subcommand": "compare", "model": model, "problem": ruin(), "grid": grid(2.0, 3)});
    let p = write_config(&tmp, "one.json", &cfg);
    let o = run_in(tmp.path(), &["compare", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nothing to compare"), "{}", stderr(&o));
}

#[test]
fn comparison_failure_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({"schema_version": 1, "subcommand": "compare", "model": exp_model(constant(1.0), 1.0, 0.3, 2.0),
        "problem": ruin(), "grid": grid(5.0, 11), "compare": {"tolerance": 1e-30}});
    let p = write_config(&tmp, "f.json", &cfg);
    let o = run_in(tmp.path(), &["compare", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(tmp.path().join("compare.csv").exists());
}

#[test]
fn figure1_defaults() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), &["figure1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ruin = csv_rows(&tmp.path().join("figure1_ruin.csv"));
    let drift = csv_rows(&tmp.path().join("figure1_drift.csv"));
    assert_eq!(ruin.len(), 101);
    assert_eq!(ruin[0][1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(ruin[0][2].parse::<f64>().unwrap(), 1.0);
    assert_eq!(ruin[100][0].parse::<f64>().unwrap(), 5.0);
    assert!((drift[0][1].parse::<f64>().unwrap() + 1.0 / 6.0).abs() < 1e-15);
    let at = |j: usize| ruin[j][1].parse::<f64>().unwrap().ln();
    let slope = (at(100) - at(90)) / 0.5;
    assert!((slope + 0.43934).abs() < 0.01, "slope {slope}");
    // 17 significant digits
    assert!(ruin[1][1].split('e').next().unwrap().len() == 18);
}

#[test]
fn figure1_overrides_reach_the_config() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), &["figure1", "--k", "0.5", "--points", "11", "--quiet"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty());
    let cfg: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("figure1.config.json")).unwrap()).unwrap();
    assert_eq!(cfg["figure1"]["k"], 0.5);
    assert_eq!(cfg["grid"]["points"], 11);
    assert_eq!(csv_rows(&tmp.path().join("figure1_ruin.csv")).len(), 11);
}

#[test]
fn emitted_configs_reproduce_outputs_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let configs = [
        json!({"schema_version": 1, "subcommand": "simulate", "model": exp_model(phi_k(), 0.5, 0.5, 1.5),
            "problem": ruin(), "grid": grid(2.0, 3)}),
        json!({"schema_version": 1, "subcommand": "solve", "model": exp_model(constant(0.5), 1.0, 0.2, 2.0),
            "problem": {"lower": 0.0, "upper": 3.0, "estimand": "exit_above"}, "grid": grid(3.0, 7),
            "output": {"format": "json", "stem": "two"}}),
        json!({"schema_version": 1, "subcommand": "compare", "model": exp_model(constant(1.0), 1.0, 0.0, 2.0),
            "problem": ruin(), "grid": grid(2.0, 3), "simulation": {"n_paths": 5000, "seed": 9}}),
        json!({"schema_version": 1, "subcommand": "figure1"}),
    ];
    for (i, cfg) in configs.iter().enumerate() {
        let sub = cfg["subcommand"].as_str().unwrap();
        let first = tmp.path().join(format!("a{i}"));
        let p = write_config(&tmp, &format!("c{i}.json"), cfg);
        let mut args = vec![sub, p.to_str().unwrap()];
        if sub == "simulate" {
            args.extend(["--paths", "4000", "--seed", "21"]);
        }
        let o = run_in(&first, &args);
        assert_eq!(code(&o), 0, "{sub}: {}", stderr(&o));
        let emitted = fs::read_dir(&first)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.to_str().unwrap().ends_with(".config.json"))
            .unwrap();
        let second = tmp.path().join(format!("b{i}"));
        let o = run_in(&second, &[sub, emitted.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{sub} rerun: {}", stderr(&o));
        let mut names: Vec<_> = fs::read_dir(&first).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() >= 2);
        for n in names {
            assert_eq!(fs::read(first.join(&n)).unwrap(), fs::read(second.join(&n)).unwrap(), "{sub}: {n:?}");
        }
    }
}

#[test]
fn simulate_flags_override_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({"schema_version": 1, "subcommand": "simulate", "model": exp_model(constant(1.0), 1.0, 0.0, 2.0),
        "problem": ruin(), "grid": grid(1.0, 2), "simulation": {"n_paths": 10, "seed": 1}});
    let p = write_config(&tmp, "s.json", &cfg);
    let o = run_in(tmp.path(), &["simulate", p.to_str().unwrap(), "--paths", "20000", "--seed", "5", "--max-time", "400"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let emitted: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("simulate.config.json")).unwrap()).unwrap();
    assert_eq!(emitted["simulation"]["n_paths"], 20000);
    assert_eq!(emitted["simulation"]["seed"], 5);
    assert_eq!(emitted["simulation"]["max_time"], 400.0);
    let rows = csv_rows(&tmp.path().join("simulate.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][3], "20000");
    let (mean, se) = (rows[0][1].parse::<f64>().unwrap(), rows[0][2].parse::<f64>().unwrap());
    assert!((mean - 0.5).abs() < 3.0 * se, "{mean} ± {se}");
}

#[test]
fn output_directory_from_environment() {
    let tmp = TempDir::new().unwrap();
    let o = lieruin(&["figure1", "--quiet"], Some(tmp.path()));
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("figure1_ruin.csv").exists());
}

#[test]
fn usage_and_config_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&lieruin(&["solve"], None)), 1);
    assert_eq!(code(&lieruin(&["frobnicate"], None)), 1);
    assert_eq!(code(&lieruin(&["--help"], None)), 0);
    let missing = tmp.path().join("nope.json");
    assert_eq!(code(&run_in(tmp.path(), &["solve", missing.to_str().unwrap()])), 1);

    let mut cfg = config("solve", exp_model(constant(1.0), 1.0, 0.0, 2.0));
    cfg["problem"] = ruin();
    cfg["grid"] = grid(1.0, 3);
    cfg["model"]["jump_rte"] = json!(1.0);
    let p = write_config(&tmp, "bad.json", &cfg);
    let o = run_in(tmp.path(), &["solve", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("jump_rte") && stderr(&o).contains("line"), "{}", stderr(&o));

    let mut cfg = config("solve", exp_model(constant(1.0), 1.0, 0.0, 2.0));
    cfg["grid"] = grid(1.0, 3);
    let p = write_config(&tmp, "noproblem.json", &cfg);
    let o = run_in(tmp.path(), &["solve", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("\"problem\""));
    let o = run_in(tmp.path(), &["simulate", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("config is for \"solve\""));
}

#[test]
fn no_applicable_method_exits_2_with_reasons() {
    // Negative drift and downward jumps never reach the upper level.
    let tmp = TempDir::new().unwrap();
    let mut cfg = config("solve", exp_model(constant(-1.0), 1.0, 0.0, 2.0));
    cfg["problem"] = json!({"lower": 0.0, "upper": 2.0, "estimand": "exit_above"});
    cfg["grid"] = grid(2.0, 3);
    let p = write_config(&tmp, "m.json", &cfg);
    let o = run_in(tmp.path(), &["solve", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("constant-drift closed form") && err.contains("ODE boundary-value solver"), "{err}");
}
