use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use consensus_pd::cli::{SweepRow, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INFEASIBLE, EXIT_OK, EXIT_VIOLATION};
use consensus_pd::diagnostics::metric_p;
use consensus_pd::run::{records_from_csv, Summary};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_consensus-pd"))
}

fn preset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// Copies a preset into `dir` with `edits` applied as plain text replacements.
fn edited(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut s = fs::read_to_string(preset(name)).unwrap();
    for (from, to) in edits {
        assert!(s.contains(from), "{from} not in {name}");
        s = s.replace(from, to);
    }
    let path = dir.join(name);
    fs::write(&path, s).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn params_reports_kappa1_on_two_node_path() {
    let o = exec(&["params", "--config", p(&preset("two_node_quadratic.toml"))]);
    assert_eq!(code(&o), EXIT_OK, "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("kappa1 = 1.25\n"), "{}", text(&o.stdout));
}

#[test]
fn params_writes_machine_readable_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = exec(&[
        "params",
        "--config",
        p(&preset("two_node_quadratic.toml")),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), EXIT_OK);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("constants.json")).unwrap()).unwrap();
    assert_eq!(v["first_order"]["kappa1"], 1.25);
    assert!(dir.path().join("constants.txt").exists());
}

#[test]
fn infeasible_eta_lists_window_and_exits_distinctly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "two_node_quadratic.toml",
        &[(
            "select = \"auto\"",
            "select = \"explicit\"\nalpha = 40.0\nbeta = 20.0\neta = 10.0",
        )],
    );
    let o = exec(&["params", "--config", p(&cfg)]);
    assert_eq!(code(&o), EXIT_INFEASIBLE);
    assert_ne!(EXIT_INFEASIBLE, EXIT_OK);
    let err = text(&o.stderr);
    assert!(err.contains("eta upper bound"), "{err}");
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "quadratic_ring.toml",
        &[("iterations = 10000", "iteratons = 10000")],
    );
    let o = exec(&["run", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(text(&o.stderr).contains("iteratons"), "{}", text(&o.stderr));

    let cfg = edited(dir.path(), "quadratic_ring.toml", &[("p = 2", "p = \"two\"")]);
    let o = exec(&["params", "--config", p(&cfg)]);
    assert_eq!(code(&o), EXIT_CONFIG);
    let err = text(&o.stderr);
    assert!(err.contains("line") && err.contains("`p`"), "{err}");
}

#[test]
fn zero_iterations_writes_initial_row_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "quadratic_ring.toml",
        &[("iterations = 10000", "iterations = 0")],
    );
    let o = exec(&["run", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code(&o), EXIT_OK, "{}", text(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let rows = records_from_csv(&csv).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].k, 0);
}

#[test]
fn summary_matches_metric_recomputed_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "sine_ring.toml",
        &[("iterations = 10000", "iterations = 400")],
    );
    let o = exec(&["run", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code(&o), EXIT_OK, "{}", text(&o.stderr));
    let rows = records_from_csv(&fs::read_to_string(dir.path().join("trace.csv")).unwrap()).unwrap();
    let summary: Summary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.p_final, metric_p(&rows, rows.len() - 1, summary.n));
    assert_eq!(summary.p_initial, metric_p(&rows, 0, summary.n));
    for f in ["summary.txt", "constants.txt", "config.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn runs_are_deterministic_and_seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "quadratic_ring.toml",
        &[("iterations = 10000", "iterations = 50")],
    );
    let outs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("o{i}"))).collect();
    exec(&["run", "--config", p(&cfg), "--out", p(&outs[0])]);
    exec(&["run", "--config", p(&cfg), "--out", p(&outs[1])]);
    exec(&["run", "--config", p(&cfg), "--out", p(&outs[2]), "--seed", "99"]);
    let read = |d: &Path| fs::read_to_string(d.join("trace.csv")).unwrap();
    assert_eq!(read(&outs[0]), read(&outs[1]));
    assert_ne!(read(&outs[0]), read(&outs[2]));
    let echo = fs::read_to_string(outs[2].join("config.toml")).unwrap();
    assert!(echo.contains("seed = 99"), "{echo}");
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "variant_practical.toml", &[("eta = 0.1", "eta = 5.0")]);
    let o = exec(&["run", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code(&o), EXIT_DIVERGED);
    assert!(text(&o.stderr).contains("diverged at iteration"), "{}", text(&o.stderr));
}

#[test]
fn monitor_violation_has_its_own_exit_code() {
    // the geometric schedule drives delta far below double precision, where
    // forward differences vanish and the descent inequality stops holding
    let dir = tempfile::tempdir().unwrap();
    let o = exec(&[
        "run",
        "--config",
        p(&preset("sine_ring_zeroth.toml")),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), EXIT_VIOLATION);
    let s: Summary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(s.descent_violations > 0);
}

#[test]
fn practical_preset_runs_without_monitors() {
    let dir = tempfile::tempdir().unwrap();
    let o = exec(&[
        "run",
        "--config",
        p(&preset("variant_practical.toml")),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", text(&o.stderr));
    let s: Summary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(!s.monitors_active);
    assert!(s.p_final < s.p_initial);
}

#[test]
fn compare_against_itself_and_reference_recursion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("quadratic_ring.toml");
    let o = exec(&[
        "compare",
        "--config",
        p(&cfg),
        "--against",
        p(&cfg),
        "--window",
        "30",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), EXIT_OK);
    assert!(
        text(&o.stdout).contains("max abs deviation = 0e0"),
        "{}",
        text(&o.stdout)
    );
    let o = exec(&["compare", "--config", p(&cfg), "--window", "100"]);
    assert_eq!(code(&o), EXIT_OK, "{}", text(&o.stderr));
}

#[test]
fn compare_rejects_different_problems() {
    let o = exec(&[
        "compare",
        "--config",
        p(&preset("quadratic_ring.toml")),
        "--against",
        p(&preset("sine_ring.toml")),
    ]);
    assert_eq!(code(&o), EXIT_CONFIG);
}

// Auto selection picks different steps per algorithm, so both sides pin the
// same explicit ones.
#[test]
fn zeroth_order_tracks_first_order_at_small_delta() {
    let dir = tempfile::tempdir().unwrap();
    let steps = "mode = \"practical\"\nselect = \"explicit\"\nalpha = 2.0\nbeta = 1.0\neta = 0.05";
    let params = ("mode = \"theorem\"\nselect = \"auto\"", steps);
    let iters = ("iterations = 10000", "iterations = 100");
    let a = edited(dir.path(), "sine_ring.toml", &[params, iters]);
    let b = edited(
        dir.path(),
        "sine_ring_zeroth.toml",
        &[params, iters, ("delta0 = 1e-2", "delta0 = 1e-6")],
    );
    let o = exec(&[
        "compare",
        "--config",
        p(&a),
        "--against",
        p(&b),
        "--window",
        "100",
        "--out",
        p(&dir.path().join("cmp")),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    let rel: f64 = out
        .rsplit("max rel deviation = ")
        .next()
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(rel > 0.0 && rel <= 1e-3, "{out}");
}

#[test]
fn single_point_sweep_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "sine_ring.toml",
        &[("iterations = 10000", "iterations = 300")],
    );
    let run_dir = dir.path().join("run");
    let sweep_dir = dir.path().join("sweep");
    exec(&["run", "--config", p(&cfg), "--out", p(&run_dir)]);
    let o = exec(&[
        "sweep",
        "--config",
        p(&cfg),
        "--grid",
        "run.iterations=300",
        "--out",
        p(&sweep_dir),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", text(&o.stderr));
    let rows: Vec<SweepRow> = serde_json::from_str(&fs::read_to_string(sweep_dir.join("sweep.json")).unwrap()).unwrap();
    let single: Summary = serde_json::from_str(&fs::read_to_string(run_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].summary.as_ref().unwrap(), &single);
}

#[test]
fn empty_grid_is_an_error() {
    let o = exec(&["sweep", "--config", p(&preset("quadratic_ring.toml"))]);
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(text(&o.stderr).contains("empty"), "{}", text(&o.stderr));
    let o = exec(&[
        "sweep",
        "--config",
        p(&preset("quadratic_ring.toml")),
        "--grid",
        "params.eta=",
    ]);
    assert_eq!(code(&o), EXIT_CONFIG);
}

#[test]
fn sweep_keeps_order_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "quadratic_ring.toml",
        &[("iterations = 10000", "iterations = 20")],
    );
    let o = exec(&[
        "sweep",
        "--config",
        p(&cfg),
        "--grid",
        "run.iterations=5,10",
        "--grid",
        "params.kappa2=2.0,0.5",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", text(&o.stderr));
    let rows: Vec<SweepRow> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.index, i);
    }
    assert_eq!(rows[0].summary.as_ref().unwrap().iterations_completed, 5);
    assert!(rows[1].error.as_ref().unwrap().contains("kappa2"));
    assert_eq!(rows[2].summary.as_ref().unwrap().iterations_completed, 10);
}

#[test]
fn eta_sweep_across_window_flips_feasibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "two_node_quadratic.toml",
        &[("iterations = 1000", "iterations = 200")],
    );
    let o = exec(&["params", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code(&o), EXIT_OK);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("constants.json")).unwrap()).unwrap();
    let c = &v["first_order"];
    let (a, b, up) = (
        c["step"]["alpha"].as_f64().unwrap(),
        c["step"]["beta"].as_f64().unwrap(),
        c["eta_upper"].as_f64().unwrap(),
    );
    let etas: Vec<String> = [0.25, 0.5, 0.99, 1.01, 2.0, 10.0]
        .iter()
        .map(|f| (f * up).to_string())
        .collect();
    let o = exec(&[
        "sweep",
        "--config",
        p(&cfg),
        "--grid",
        "params.select=\"explicit\"",
        "--grid",
        &format!("params.alpha={a}"),
        "--grid",
        &format!("params.beta={b}"),
        "--grid",
        &format!("params.eta={}", etas.join(",")),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", text(&o.stderr));
    let rows: Vec<SweepRow> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    let feasible: Vec<bool> = rows
        .iter()
        .map(|r| r.summary.as_ref().unwrap().feasible.unwrap())
        .collect();
    assert_eq!(feasible, vec![true, true, true, false, false, false]);
    assert!(rows.iter().all(|r| r.summary.as_ref().unwrap().descent_violations == 0));
}
