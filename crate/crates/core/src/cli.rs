//! Command implementations behind the `consensus-pd` binary.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{grid_points, set_dotted, ConfigError, Experiment, ExperimentConfig};
use crate::diagnostics::TheoremConstants;
use crate::engine::Algorithm;
use crate::params::{FeasibilityReport, FirstOrderConstants, ProblemConstants, StepParams, ZerothOrderConstants};
use crate::run::{compare_runs, compare_with_extra, run, theorem_constants, CompareReport, Mode, RunError, Summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(#[from] RunError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Io { .. } => EXIT_IO,
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Run(RunError::Engine(crate::engine::EngineError::Diverged { .. })) => EXIT_DIVERGED,
            CliError::Run(_) => EXIT_IO,
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.into(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.into(),
        source: e,
    })
}

/// Loaded config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    /// Raw document, kept for sweeps.
    pub document: toml::Value,
}

/// Reads a config and applies `--seed` / `--mode` overrides.
pub fn load_config(path: &Path, seed: Option<u64>, mode: Option<Mode>) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.into(),
        source: e,
    })?;
    let mut config = ExperimentConfig::load(path)?;
    let mut document: toml::Value =
        toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        config.override_seed(s);
    }
    if let Some(m) = mode {
        config.params.mode = m;
    }
    if seed.is_some() || mode.is_some() {
        document = toml::Value::try_from(&config).expect("config serializes");
    }
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(LoadedConfig {
        config,
        base_dir,
        document,
    })
}

/// Everything the `params` command reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub step: StepParams,
    pub kappa2: f64,
    pub problem: ProblemConstants,
    pub feasible: bool,
    pub feasibility: FeasibilityReport,
    pub first_order: Option<FirstOrderConstants>,
    pub zeroth_order: Option<ZerothOrderConstants>,
    /// Resolved config, seeds included.
    pub config: ExperimentConfig,
}

pub fn constants_report(cfg: &ExperimentConfig, exp: &Experiment) -> Result<ConstantsReport, CliError> {
    let pc = ProblemConstants::from_problem(&exp.problem, &exp.spectral).map_err(ConfigError::from)?;
    let tc = theorem_constants(
        &exp.problem,
        &exp.spectral,
        exp.spec.algorithm,
        exp.spec.kappa2,
        exp.spec.step,
    )
    .expect("problem constants were valid");
    let (first_order, zeroth_order, feasibility) = match tc {
        TheoremConstants::First(c) => {
            let f = c.feasibility.clone();
            (Some(c), None, f)
        }
        TheoremConstants::Zeroth(c) => {
            let f = c.feasibility.clone();
            (None, Some(c), f)
        }
    };
    Ok(ConstantsReport {
        algorithm: exp.spec.algorithm,
        mode: exp.spec.mode,
        step: exp.spec.step,
        kappa2: exp.spec.kappa2,
        problem: pc,
        feasible: feasibility.is_feasible(),
        feasibility,
        first_order,
        zeroth_order,
        config: cfg.clone(),
    })
}

fn constants_text(r: &ConstantsReport) -> String {
    toml::to_string(r).expect("report serializes")
}

fn out_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Prints the constants report; writes `constants.txt` / `constants.json`
/// when an output directory is given. Exit status flags infeasibility.
pub fn cmd_params(loaded: &LoadedConfig, out: Option<&Path>) -> Result<i32, CliError> {
    let exp = loaded.config.resolve(&loaded.base_dir)?;
    let report = constants_report(&loaded.config, &exp)?;
    let text = constants_text(&report);
    print!("{text}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write(&dir.join("constants.txt"), &text)?;
        write(
            &dir.join("constants.json"),
            &serde_json::to_string_pretty(&report).unwrap(),
        )?;
    }
    if !report.feasible {
        eprintln!("parameters violate the certificate window:");
        for v in &report.feasibility.violations {
            eprintln!("  {}: {}", v.condition, v.detail);
        }
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_OK)
}

fn summary_exit(s: &Summary) -> i32 {
    if s.diverged_at.is_some() {
        EXIT_DIVERGED
    } else if s.mode == Mode::Theorem && s.theorem_violated() {
        EXIT_VIOLATION
    } else if s.mode == Mode::Theorem && s.feasible == Some(false) {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    }
}

/// Runs one experiment and writes `trace.csv`, `summary.txt`,
/// `summary.json`, `constants.txt` and the resolved `config.toml`.
pub fn cmd_run(loaded: &LoadedConfig, out: Option<&Path>) -> Result<i32, CliError> {
    let dir = out_dir(&loaded.config, out);
    let exp = loaded.config.resolve(&loaded.base_dir)?;
    let trace = run(&exp.problem, &exp.spectral, &exp.spec)?;
    ensure_dir(&dir)?;
    write(&dir.join("trace.csv"), &trace.to_csv())?;
    write(&dir.join("summary.txt"), &trace.summary.to_text())?;
    write(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(&trace.summary).unwrap(),
    )?;
    write(&dir.join("config.toml"), &loaded.config.to_toml())?;
    if let Ok(report) = constants_report(&loaded.config, &exp) {
        write(&dir.join("constants.txt"), &constants_text(&report))?;
    }
    let s = &trace.summary;
    println!(
        "{} iterations, P(T) = {:e}, fitted ratio = {}, descent violations = {}, envelope violations = {}",
        s.iterations_completed,
        s.p_final,
        s.fitted_ratio.map(|r| r.to_string()).unwrap_or_else(|| "n/a".into()),
        s.descent_violations,
        s.envelope_violations()
    );
    if let (Some(k), Some(reason)) = (s.diverged_at, &s.divergence) {
        eprintln!("diverged at iteration {k}: {reason}");
    }
    if s.feasible == Some(false) && s.mode == Mode::Theorem {
        eprintln!("warning: theorem mode with parameters outside the certificate window");
    }
    Ok(summary_exit(s))
}

/// Lockstep comparison of two configs, or of one config against the
/// equivalent two-term recursion when `b` is `None`.
pub fn cmd_compare(
    a: &LoadedConfig,
    b: Option<&LoadedConfig>,
    window: usize,
    out: Option<&Path>,
) -> Result<(i32, CompareReport), CliError> {
    let ea = a.config.resolve(&a.base_dir)?;
    let report = match b {
        Some(b) => {
            if a.config.problem != b.config.problem || a.config.graph != b.config.graph {
                return Err(CliError::Usage(
                    "compare needs the same problem and graph in both configs".into(),
                ));
            }
            let eb = b.config.resolve(&b.base_dir)?;
            compare_runs(&ea.problem, &ea.spectral, &ea.spec, &eb.spec, window)?
        }
        None => compare_with_extra(&ea.problem, &ea.spectral, &ea.spec, window)?,
    };
    println!(
        "max abs deviation = {:e}, max rel deviation = {:e}",
        report.max_abs, report.max_rel
    );
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write(&dir.join("compare.csv"), &report.to_csv())?;
    }
    Ok((EXIT_OK, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub assignments: Vec<(String, String)>,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: &str = "index,assignments,status,feasible,iterations_completed,p_initial,p_final,fitted_ratio,descent_violations,first_violation,sandwich_violations,envelope_violations,diverged_at,error";

fn sweep_csv(rows: &[SweepRow]) -> String {
    fn o<T: ToString>(v: Option<T>) -> String {
        v.map(|t| t.to_string()).unwrap_or_default()
    }
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let assign: Vec<String> = r.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let assign = assign.join(";").replace(',', ";");
        match (&r.summary, &r.error) {
            (Some(m), _) => s.push_str(&format!(
                "{},{},ok,{},{},{},{},{},{},{},{},{},{},\n",
                r.index,
                assign,
                o(m.feasible),
                m.iterations_completed,
                m.p_initial,
                m.p_final,
                o(m.fitted_ratio),
                m.descent_violations,
                o(m.first_violation),
                m.sandwich_violations,
                m.envelope_violations(),
                o(m.diverged_at),
            )),
            (None, e) => s.push_str(&format!(
                "{},{},error,,,,,,,,,,,{}\n",
                r.index,
                assign,
                o(e.as_ref()).replace([',', '\n'], " ")
            )),
        }
    }
    s
}

/// Runs every point of the grid (in parallel) and writes one row per
/// point, in grid order, to `sweep.csv` and `sweep.json`. Per-point failures
/// are recorded and do not stop the sweep.
pub fn cmd_sweep(
    base: &LoadedConfig,
    axes: &[(String, Vec<String>)],
    out: Option<&Path>,
) -> Result<(i32, Vec<SweepRow>), CliError> {
    let points = grid_points(axes);
    if points.is_empty() {
        return Err(CliError::Usage("sweep grid is empty".into()));
    }
    let rows: Vec<SweepRow> = points
        .into_par_iter()
        .enumerate()
        .map(|(index, assignments)| {
            let result = (|| -> Result<Summary, CliError> {
                let mut doc = base.document.clone();
                for (k, v) in &assignments {
                    set_dotted(&mut doc, k, v)?;
                }
                let cfg = ExperimentConfig::from_toml_value(doc)?;
                let exp = cfg.resolve(&base.base_dir)?;
                Ok(run(&exp.problem, &exp.spectral, &exp.spec)?.summary)
            })();
            match result {
                Ok(s) => SweepRow {
                    index,
                    assignments,
                    summary: Some(s),
                    error: None,
                },
                Err(e) => SweepRow {
                    index,
                    assignments,
                    summary: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let csv = sweep_csv(&rows);
    print!("{csv}");
    let dir = out_dir(&base.config, out);
    ensure_dir(&dir)?;
    write(&dir.join("sweep.csv"), &csv)?;
    write(&dir.join("sweep.json"), &serde_json::to_string_pretty(&rows).unwrap())?;
    Ok((EXIT_OK, rows))
}
