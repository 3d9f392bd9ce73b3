use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CliError, Task};
use crate::error::Error;
use crate::examples::{builtin_model, MODEL_IDS};
use crate::flow::{NoiseCoefficient, VERIFICATION_STEPS};
use crate::fpe::{Axis, Grid, QuadratureParams, SolveOptions};
use crate::levy::{product_triplet, DriftConvention, JumpKind, JumpSizes, ScalarLevy, Truncation};
use crate::model::{Drift, InitialCondition, ModelSpec};
use crate::sde::SimulationParams;

/// The JSON document as written by the user, with defaults filled in.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Built-in model id or an inline model object.
    pub model: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Monte Carlo step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Fokker-Planck step; the stability bound when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpe_dt: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    /// RK4 steps per jump map.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub small_jump_gaussian: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_times: Vec<f64>,
    #[serde(default = "default_true")]
    pub renormalize: bool,
    #[serde(default = "default_nodes")]
    pub nodes_per_decade: usize,
    #[serde(default = "default_nodes")]
    pub cp_nodes: usize,
    #[serde(default = "default_true")]
    pub closed_form: bool,
    #[serde(default)]
    pub flow_check: FlowCheckConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: PerAxis<f64>,
    pub upper: PerAxis<f64>,
    pub cells: PerAxis<usize>,
}

/// A value shared by every axis or one per axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Copy> PerAxis<T> {
    fn get(&self, d: usize, key: &str) -> Result<Vec<T>, CliError> {
        match self {
            PerAxis::All(v) => Ok(vec![*v; d]),
            PerAxis::Each(v) if v.len() == d => Ok(v.clone()),
            PerAxis::Each(v) => Err(CliError::Config(format!(
                "grid.{key}: expected {d} entries, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowCheckConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_verification_steps")]
    pub steps: usize,
    #[serde(default = "default_u_range")]
    pub u_range: f64,
    #[serde(default = "default_v_range")]
    pub v_range: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for FlowCheckConfig {
    fn default() -> Self {
        FlowCheckConfig {
            samples: default_samples(),
            steps: default_verification_steps(),
            u_range: default_u_range(),
            v_range: default_v_range(),
            tolerance: default_tolerance(),
        }
    }
}

fn default_t_final() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_eps() -> f64 {
    1e-2
}
fn default_r_max() -> f64 {
    100.0
}
fn default_steps() -> usize {
    50
}
fn default_true() -> bool {
    true
}
fn default_nodes() -> usize {
    32
}
fn default_samples() -> usize {
    100
}
fn default_verification_steps() -> usize {
    VERIFICATION_STEPS
}
fn default_u_range() -> f64 {
    2.0
}
fn default_v_range() -> f64 {
    1.5
}
fn default_tolerance() -> f64 {
    1e-8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineModel {
    /// Built-in whose noise (and closed form) and defaults are reused.
    id: Option<String>,
    d: Option<usize>,
    n: Option<usize>,
    noise: Option<NoiseConfig>,
    drift: Option<DriftConfig>,
    driver: Option<Vec<DriverConfig>>,
    initial: Option<InitialConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum NoiseConfig {
    /// `σ(x) = matrix` (row-major d×n).
    Constant { matrix: Vec<f64> },
    /// `σ_ij(x) = constant_ij + Σ_m slopes_ijm x_m`.
    Affine { constant: Vec<f64>, slopes: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum DriftConfig {
    // braces so unknown keys are rejected here too
    Zero {},
    Linear {
        matrix: Vec<f64>,
    },
    Affine {
        matrix: Vec<f64>,
        offset: Vec<f64>,
    },
    Cubic {
        matrix: Vec<f64>,
        offset: Vec<f64>,
        cubic: Vec<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriverConfig {
    #[serde(default)]
    b: f64,
    #[serde(default)]
    a: f64,
    #[serde(default)]
    convention: Convention,
    #[serde(default)]
    jumps: Vec<JumpConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Convention {
    #[default]
    Canonical,
    Uncompensated,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum JumpConfig {
    Stable { alpha: f64 },
    CompoundPoisson { lambda: f64, rho: SizeConfig },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum SizeConfig {
    Dirac { value: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum InitialConfig {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

/// Validated run: the parsed file plus the assembled model.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: Task,
    pub file: FileConfig,
    pub model: ModelSpec,
    /// Built-in id, or `inline`.
    pub model_id: String,
    /// Effective seed after any command-line override.
    pub seed: u64,
}

/// Parses and validates a JSON config. `task` and `seed` come from the
/// command line and take precedence over the document.
pub fn parse_config(text: &str, task: Option<Task>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut file: FileConfig = deserialize_at("", &mut serde_json::Deserializer::from_str(text))?;
    let task = match (task, file.task) {
        (Some(t), Some(f)) if t != f => {
            return Err(CliError::Config(format!(
                "task: config says {} but {} was requested",
                f.name(),
                t.name()
            )))
        }
        (Some(t), _) | (None, Some(t)) => t,
        (None, None) => return Err(CliError::Config("task: missing".into())),
    };
    file.task = Some(task);
    if let Some(s) = seed {
        file.seed = s;
    }
    let (model, model_id) = parse_model(&file.model)?;
    let cfg = RunConfig {
        task,
        seed: file.seed,
        file,
        model,
        model_id,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn deserialize_at<'de, T, D>(prefix: &str, de: D) -> Result<T, CliError>
where
    T: DeserializeOwned,
    D: serde::Deserializer<'de, Error = serde_json::Error>,
{
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = match (prefix, path.as_str()) {
            (p, ".") => p.trim_end_matches('.').to_string(),
            (p, rest) => format!("{p}{rest}"),
        };
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            CliError::Config(format!("parse error: {inner}"))
        } else if path.is_empty() {
            CliError::Config(inner.to_string())
        } else {
            CliError::Config(format!("{path}: {inner}"))
        }
    })
}

/// Rewrites paths of core validation errors to config key paths.
fn model_error(e: Error) -> CliError {
    match e {
        Error::Validation { path, reason } => {
            let path = match path.strip_prefix("scalars") {
                Some(rest) => format!("model.driver{rest}"),
                None => format!("model.{path}"),
            };
            CliError::Config(format!("{path}: {reason}"))
        }
        other => CliError::Config(format!("model: {other}")),
    }
}

fn unknown_model(id: &str) -> CliError {
    CliError::Config(format!("unknown model `{id}` (built-ins: {})", MODEL_IDS.join(", ")))
}

fn parse_model(value: &Value) -> Result<(ModelSpec, String), CliError> {
    if let Value::String(id) = value {
        let model = builtin_model(id, None, None, None).ok_or_else(|| unknown_model(id))?;
        return Ok((model.map_err(model_error)?, id.clone()));
    }
    let inline: InlineModel = deserialize_at("model.", value.clone())?;
    let drift = inline.drift.map(drift_from);
    let driver = inline.driver.map(|blocks| blocks.into_iter().map(driver_from).collect::<Vec<_>>());
    let initial = inline.initial.map(|i| match i {
        InitialConfig::Point(x) => InitialCondition::Point(x),
        InitialConfig::Gaussian { mean, std } => InitialCondition::Gaussian { mean, std },
    });
    if let Some(id) = inline.id {
        if inline.noise.is_some() || inline.d.is_some() || inline.n.is_some() {
            return Err(CliError::Config(
                "model: `noise`, `d` and `n` are fixed by a built-in `id`".into(),
            ));
        }
        let model = builtin_model(&id, drift, driver, initial).ok_or_else(|| unknown_model(&id))?;
        return Ok((model.map_err(model_error)?, id));
    }
    let missing = |key: &str| CliError::Config(format!("model.{key}: required for an inline model"));
    let d = inline.d.ok_or_else(|| missing("d"))?;
    let n = inline.n.ok_or_else(|| missing("n"))?;
    let noise = match inline.noise.ok_or_else(|| missing("noise"))? {
        NoiseConfig::Constant { matrix } => NoiseCoefficient::constant(d, n, matrix),
        NoiseConfig::Affine { constant, slopes } => NoiseCoefficient::affine(d, n, constant, slopes),
    }
    .map_err(model_error)?;
    let driver = driver.ok_or_else(|| missing("driver"))?;
    if driver.len() != n {
        return Err(CliError::Config(format!(
            "model.driver: expected {n} scalar drivers, got {}",
            driver.len()
        )));
    }
    let triplet = product_triplet(&driver).map_err(model_error)?;
    let initial = initial.unwrap_or_else(|| InitialCondition::Point(vec![0.0; d]));
    let model = ModelSpec::new(noise, drift.unwrap_or(Drift::Zero), triplet, initial).map_err(model_error)?;
    Ok((model, "inline".into()))
}

fn drift_from(c: DriftConfig) -> Drift {
    match c {
        DriftConfig::Zero {} => Drift::Zero,
        DriftConfig::Linear { matrix } => Drift::linear(matrix),
        DriftConfig::Affine { matrix, offset } => Drift::Affine { matrix, offset },
        DriftConfig::Cubic { matrix, offset, cubic } => Drift::Cubic { matrix, offset, cubic },
    }
}

fn driver_from(c: DriverConfig) -> ScalarLevy {
    let jumps = c
        .jumps
        .into_iter()
        .map(|j| match j {
            JumpConfig::Stable { alpha } => JumpKind::AlphaStable { alpha },
            JumpConfig::CompoundPoisson { lambda, rho } => JumpKind::CompoundPoisson {
                rate: lambda,
                sizes: match rho {
                    SizeConfig::Dirac { value } => JumpSizes::dirac(value),
                    SizeConfig::Discrete { values, probs } => JumpSizes::Discrete { values, probs },
                    SizeConfig::Normal { mean, std } => JumpSizes::Normal { mean, std },
                    SizeConfig::Uniform { low, high } => JumpSizes::Uniform { low, high },
                },
            },
        })
        .collect();
    ScalarLevy::new(c.b, c.a, jumps).with_convention(match c.convention {
        Convention::Canonical => DriftConvention::Canonical,
        Convention::Uncompensated => DriftConvention::Uncompensated,
    })
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        let f = &self.file;
        let bad = |key: &str, why: &str| Err(CliError::Config(format!("{key}: {why}")));
        if !(f.t_final >= 0.0 && f.t_final.is_finite()) {
            return bad("t_final", "must be finite and non-negative");
        }
        if !(f.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if f.fpe_dt.is_some_and(|v| !(v > 0.0)) {
            return bad("fpe_dt", "must be positive");
        }
        if !(f.eps > 0.0 && f.eps < 1.0) {
            return bad("eps", "must lie in (0, 1)");
        }
        if !(f.r_max > 1.0 && f.r_max.is_finite()) {
            return bad("r_max", "must be finite and exceed 1");
        }
        if f.steps == 0 {
            return bad("steps", "must be positive");
        }
        if f.output_times.iter().any(|t| !(*t > 0.0 && *t < f.t_final)) {
            return bad("output_times", "times must lie in (0, t_final)");
        }
        let needs_grid = matches!(self.task, Task::Solve | Task::Compare);
        if needs_grid {
            self.grid()?;
        }
        if matches!(self.task, Task::Simulate | Task::Compare) && f.n_paths.is_none() {
            return Err(CliError::Config(format!("n_paths required for {}", self.task.name())));
        }
        if f.n_paths == Some(0) {
            return bad("n_paths", "must be positive");
        }
        let fc = &f.flow_check;
        if fc.samples == 0 || fc.steps == 0 {
            return bad("flow_check", "samples and steps must be positive");
        }
        Ok(())
    }

    /// Effective config as pretty JSON, for the manifest.
    pub fn echo(&self) -> String {
        let mut file = self.file.clone();
        file.seed = self.seed;
        serde_json::to_string_pretty(&file).expect("config serialises")
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let g = self
            .file
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("grid required for {}", self.task.name())))?;
        let d = self.model.d();
        let (lo, hi, cells) = (g.lower.get(d, "lower")?, g.upper.get(d, "upper")?, g.cells.get(d, "cells")?);
        let axes = (0..d).map(|k| Axis::new(lo[k], hi[k], cells[k])).collect();
        Grid::new(axes).map_err(|e| match e {
            Error::Validation { path, reason } => CliError::Config(format!("grid.{path}: {reason}")),
            other => CliError::Config(format!("grid: {other}")),
        })
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            small_jump_gaussian: self.file.small_jump_gaussian,
            ..Truncation::new(self.file.eps).with_outer(self.file.r_max)
        }
    }

    pub fn simulation(&self) -> SimulationParams {
        SimulationParams {
            flow_steps: self.file.steps,
            use_closed_form: self.file.closed_form,
            ..SimulationParams::new(self.file.t_final, self.file.dt).with_truncation(self.truncation())
        }
    }

    pub fn quadrature(&self) -> QuadratureParams {
        QuadratureParams {
            truncation: self.truncation(),
            nodes_per_decade: self.file.nodes_per_decade,
            cp_nodes: self.file.cp_nodes,
            flow_steps: self.file.steps,
            use_closed_form: self.file.closed_form,
            ..Default::default()
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            dt: self.file.fpe_dt,
            renormalize: self.file.renormalize,
            output_times: self.file.output_times.clone(),
        }
    }
}
