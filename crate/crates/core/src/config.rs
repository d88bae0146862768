//! TOML experiment configuration.
//!
//! ```toml
//! [problem]
//! kind = "sine_pl"
//! n = 4
//! shifts = [0.5, -0.25, 0.25, -0.5]
//!
//! [graph]
//! kind = "ring"
//!
//! [algorithm]
//! kind = "first_order"
//! x0 = { mode = "random", seed = 7, scale = 1.0 }
//!
//! [params]
//! mode = "theorem"
//! select = "auto"
//!
//! [run]
//! iterations = 10000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::EnvelopeKind;
use crate::engine::{Algorithm, V0Init, X0Init};
use crate::graph::{Graph, GraphError, SpectralData};
use crate::params::{
    select_first_order_params, select_zeroth_order_params, ParamsError, ProblemConstants, SelectionOptions, StepParams,
};
use crate::problems::{ProblemError, ProblemInstance, ProblemSpec};
use crate::run::{Mode, RunSpec};
use crate::tagged;
use crate::zeroth::DeltaSchedule;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error("problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("params: {0}")]
    Params(#[from] ParamsError),
}

fn invalid(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        msg: msg.into(),
    }
}

/// Communication graph; the node count comes from the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Path,
    Ring,
    Complete,
    RandomGeometric {
        radius: f64,
        seed: u64,
    },
    /// Relative paths resolve against the config file's directory.
    EdgeList {
        path: PathBuf,
    },
}

impl GraphSpec {
    pub fn build(&self, n: usize, base_dir: &Path) -> Result<Graph, GraphError> {
        match self {
            GraphSpec::Path => Graph::path(n),
            GraphSpec::Ring => Graph::ring(n),
            GraphSpec::Complete => Graph::complete(n),
            GraphSpec::RandomGeometric { radius, seed } => Graph::random_geometric(n, *radius, *seed),
            GraphSpec::EdgeList { path } => {
                let g = Graph::read_edge_list(&base_dir.join(path))?;
                if g.n() != n {
                    return Err(GraphError::Invalid(format!(
                        "edge list has {} nodes, problem has {n}",
                        g.n()
                    )));
                }
                Ok(g)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub kind: Algorithm,
    #[serde(default = "default_x0", with = "tagged::mode")]
    pub x0: X0Init,
    #[serde(default = "default_v0", with = "tagged::mode")]
    pub v0: V0Init,
}

fn default_x0() -> X0Init {
    X0Init::Random { seed: 0, scale: 1.0 }
}
fn default_v0() -> V0Init {
    V0Init::Zeros
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        AlgorithmSection {
            kind: Algorithm::FirstOrder,
            x0: default_x0(),
            v0: default_v0(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Select {
    Auto,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_select")]
    pub select: Select,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub kappa2: Option<f64>,
    pub beta_margin: Option<f64>,
    pub alpha_frac: Option<f64>,
    pub eta_safety: Option<f64>,
}

fn default_mode() -> Mode {
    Mode::Theorem
}
fn default_select() -> Select {
    Select::Auto
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection {
            mode: Mode::Theorem,
            select: Select::Auto,
            alpha: None,
            beta: None,
            eta: None,
            kappa2: None,
            beta_margin: None,
            alpha_frac: None,
            eta_safety: None,
        }
    }
}

impl ParamsSection {
    pub fn selection_options(&self) -> SelectionOptions {
        let d = SelectionOptions::default();
        SelectionOptions {
            kappa2: self.kappa2.unwrap_or(d.kappa2),
            beta_margin: self.beta_margin.unwrap_or(d.beta_margin),
            alpha_frac: self.alpha_frac.unwrap_or(d.alpha_frac),
            eta_safety: self.eta_safety.unwrap_or(d.eta_safety),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "yes")]
    pub monitors: bool,
    #[serde(default = "yes")]
    pub invariants: bool,
    pub envelopes: Option<Vec<EnvelopeKind>>,
    pub f_reference: Option<f64>,
    pub eps_breve: Option<f64>,
}

fn yes() -> bool {
    true
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            monitors: true,
            invariants: true,
            envelopes: None,
            f_reference: None,
            eps_breve: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(with = "tagged::kind")]
    pub problem: ProblemSpec,
    #[serde(with = "tagged::kind")]
    pub graph: GraphSpec,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub params: ParamsSection,
    pub schedule: Option<DeltaSchedule>,
    pub run: RunSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_value(value: toml::Value) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.into(),
            source: e,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.problem.n() == 0 {
            return Err(invalid("problem.n", "must be at least 1"));
        }
        let p = &self.params;
        match p.select {
            Select::Explicit => {
                for (name, v) in [("alpha", p.alpha), ("beta", p.beta), ("eta", p.eta)] {
                    match v {
                        None => {
                            return Err(invalid(
                                &format!("params.{name}"),
                                "required when select = \"explicit\"",
                            ))
                        }
                        Some(t) if !(t.is_finite() && t >= 0.0) => {
                            return Err(invalid(
                                &format!("params.{name}"),
                                format!("must be finite and >= 0, got {t}"),
                            ))
                        }
                        _ => {}
                    }
                }
                if p.eta.unwrap() <= 0.0 {
                    return Err(invalid("params.eta", "must be positive"));
                }
            }
            Select::Auto => {
                for (name, v) in [("alpha", p.alpha), ("beta", p.beta), ("eta", p.eta)] {
                    if v.is_some() {
                        return Err(invalid(
                            &format!("params.{name}"),
                            "only allowed with select = \"explicit\"",
                        ));
                    }
                }
            }
        }
        if self.algorithm.kind == Algorithm::ZerothOrder {
            let s = self
                .schedule
                .ok_or_else(|| invalid("schedule", "required for the zeroth-order method"))?;
            s.validate().map_err(|e| invalid("schedule", e.to_string()))?;
        }
        if self.algorithm.kind != Algorithm::FirstOrderVariant {
            if let V0Init::Arbitrary { .. } = self.algorithm.v0 {
                return Err(invalid(
                    "algorithm.v0",
                    "arbitrary dual initialization is only allowed for the variant",
                ));
            }
        }
        if let X0Init::Random { scale, .. } = self.algorithm.x0 {
            if !(scale.is_finite() && scale >= 0.0) {
                return Err(invalid(
                    "algorithm.x0.scale",
                    format!("must be finite and >= 0, got {scale}"),
                ));
            }
        }
        Ok(())
    }

    /// Replaces every seed in the config with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        match &mut self.problem {
            ProblemSpec::Quadratic { seed: s, .. }
            | ProblemSpec::SinePl { seed: s, .. }
            | ProblemSpec::RankDeficientLs { seed: s, .. }
            | ProblemSpec::Logistic { seed: s, .. } => *s = seed,
        }
        if let GraphSpec::RandomGeometric { seed: s, .. } = &mut self.graph {
            *s = seed;
        }
        if let X0Init::Random { seed: s, .. } = &mut self.algorithm.x0 {
            *s = seed;
        }
        if let V0Init::Arbitrary { seed: s, .. } = &mut self.algorithm.v0 {
            *s = seed;
        }
    }

    /// Builds the problem, graph and step sizes.
    pub fn resolve(&self, base_dir: &Path) -> Result<Experiment, ConfigError> {
        let problem = self.problem.build()?;
        let graph = self.graph.build(problem.n(), base_dir)?;
        let spectral = SpectralData::new(&graph)?;
        let options = self.params.selection_options();
        let step = match self.params.select {
            Select::Explicit => StepParams {
                alpha: self.params.alpha.unwrap(),
                beta: self.params.beta.unwrap(),
                eta: self.params.eta.unwrap(),
            },
            Select::Auto => {
                let pc = ProblemConstants::from_problem(&problem, &spectral)?;
                match self.algorithm.kind {
                    Algorithm::ZerothOrder => select_zeroth_order_params(&pc, &options)?.step,
                    _ => select_first_order_params(&pc, &options)?.step,
                }
            }
        };
        let spec = RunSpec {
            algorithm: self.algorithm.kind,
            step,
            kappa2: options.kappa2,
            schedule: self.schedule,
            iterations: self.run.iterations,
            x0: self.algorithm.x0,
            v0: self.algorithm.v0,
            mode: self.params.mode,
            monitors: self.diagnostics.monitors,
            invariants: self.diagnostics.invariants,
            envelopes: self.diagnostics.envelopes.clone(),
            f_reference: self.diagnostics.f_reference,
            eps_breve: self.diagnostics.eps_breve,
        };
        Ok(Experiment {
            problem,
            graph,
            spectral,
            spec,
        })
    }
}

/// A resolved configuration, ready to run.
#[derive(Debug)]
pub struct Experiment {
    pub problem: ProblemInstance,
    pub graph: Graph,
    pub spectral: SpectralData,
    pub spec: RunSpec,
}

/// Sets a dotted key (`params.eta`) in a TOML document. `raw` is parsed as
/// a TOML value, falling back to a string.
pub fn set_dotted(doc: &mut toml::Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    let value = parse_value(raw);
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(key, "malformed key"));
    }
    let mut cur = doc;
    for part in &parts[..parts.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| invalid(key, format!("`{part}` is not inside a table")))?;
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| invalid(key, "parent is not a table"))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// `key=v1,v2,...`
pub fn parse_grid_axis(arg: &str) -> Result<(String, Vec<String>), ConfigError> {
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| invalid("--grid", format!("expected key=v1,v2 in `{arg}`")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(invalid("--grid", format!("empty key in `{arg}`")));
    }
    let values: Vec<String> = values
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if values.is_empty() {
        return Err(invalid("--grid", format!("no values for `{key}`")));
    }
    Ok((key.to_string(), values))
}

/// Cartesian product of the axes; the last axis varies fastest.
pub fn grid_points(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    if axes.is_empty() {
        return Vec::new();
    }
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in axes {
        points = points
            .into_iter()
            .flat_map(|pt| {
                values.iter().map(move |v| {
                    let mut q = pt.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}
