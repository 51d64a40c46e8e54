//! Experiment configuration: parsing with path diagnostics, shorthands,
//! defaults and sweep expansion.

use std::collections::BTreeMap;
use std::path::PathBuf;

use inrbench::activation::Activation;
use inrbench::basis::{BasisFamily, BasisSpec};
use inrbench::encoding::EncodingSpec;
use inrbench::network::{Arch, NetworkConfig};
use inrbench::tasks::generate::SignalSpec;
use inrbench::tasks::io::{self, SignalFormat};
use inrbench::tasks::{self, SignalGrid, TaskInstance, TaskKind};
use inrbench::train::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::BenchError;

/// Where a task's clean signal comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSource {
    Generate(SignalSpec),
    File(PathBuf),
}

impl SignalSource {
    pub fn load(&self, seed: u64) -> inrbench::Result<SignalGrid> {
        match self {
            SignalSource::Generate(spec) => spec.generate(seed),
            SignalSource::File(path) => {
                let format = SignalFormat::from_path(path).ok_or_else(|| {
                    inrbench::Error::Unsupported(format!("cannot infer signal format of {}", path.display()))
                })?;
                io::ingest(path, format)
            }
        }
    }
}

fn d_photons() -> f64 {
    tasks::DEFAULT_PHOTONS
}
fn d_read_noise() -> f64 {
    tasks::DEFAULT_READ_NOISE
}
fn d_angles() -> usize {
    60
}
fn d_bins() -> usize {
    91
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Label for reports; defaults to the kind name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Defaults to a procedural signal suited to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalSource>,
    #[serde(default = "d_photons")]
    pub photons: f64,
    #[serde(default = "d_read_noise")]
    pub read_noise: f64,
    #[serde(default = "d_angles")]
    pub angles: usize,
    #[serde(default = "d_bins")]
    pub bins: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            name: None,
            signal: None,
            photons: d_photons(),
            read_noise: d_read_noise(),
            angles: d_angles(),
            bins: d_bins(),
        }
    }

    pub fn with_signal(mut self, spec: SignalSpec) -> Self {
        self.signal = Some(SignalSource::Generate(spec));
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn default_signal(kind: TaskKind) -> SignalSpec {
        let name = match kind {
            TaskKind::AudioReg => "chirp",
            TaskKind::SdfReg => "sphere",
            TaskKind::CtRecon => "phantom",
            _ => "checker_gradient",
        };
        SignalSpec::default_for(name).expect("built-in signal kind")
    }

    /// Materialises the task; `seed` drives signal noise, masks and corruption.
    pub fn build(&self, seed: u64) -> inrbench::Result<TaskInstance> {
        let source = self.signal.clone().unwrap_or_else(|| SignalSource::Generate(Self::default_signal(self.kind)));
        let signal = source.load(seed)?;
        match self.kind {
            TaskKind::AudioReg | TaskKind::ImageReg | TaskKind::SdfReg => {
                tasks::make_regression_task(signal, self.kind)
            }
            TaskKind::Inpaint => tasks::split_inpaint(signal, seed),
            TaskKind::SuperRes => tasks::make_superres_task(signal),
            TaskKind::Denoise => tasks::corrupt_denoise(signal, self.photons, self.read_noise, seed),
            TaskKind::PoissonGrad | TaskKind::PoissonLap => tasks::make_poisson_task(signal, self.kind),
            TaskKind::CtRecon => tasks::make_ct_task(signal, self.angles, self.bins),
        }
    }
}

fn d_points() -> usize {
    64
}
fn d_gd_steps() -> usize {
    500
}
fn d_probe() -> usize {
    25
}
fn d_lr_scale() -> f64 {
    0.5
}

/// Settings for the `ntk` verb.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtkSettings {
    /// Evenly spaced training coordinates used for the kernel.
    #[serde(default = "d_points")]
    pub points: usize,
    #[serde(default = "d_gd_steps")]
    pub gd_steps: usize,
    #[serde(default = "d_probe")]
    pub probe_every: usize,
    /// Gradient-descent step as a multiple of `1/λ_max`.
    #[serde(default = "d_lr_scale")]
    pub lr_scale: f64,
}

impl Default for NtkSettings {
    fn default() -> Self {
        Self { points: d_points(), gd_steps: d_gd_steps(), probe_every: d_probe(), lr_scale: d_lr_scale() }
    }
}

fn d_seeds() -> usize {
    3
}
fn d_jobs() -> usize {
    1
}
fn d_output() -> PathBuf {
    PathBuf::from("results")
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tasks: Vec<TaskSpec>,
    pub models: Vec<NetworkConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Sweep axes: dotted config path to the list of values it takes.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Vec<Value>>,
    /// Repetitions per (task, model) cell.
    #[serde(default = "d_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_jobs")]
    pub jobs: usize,
    #[serde(default = "d_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub ntk: NtkSettings,
}

/// Input form: tasks and models may be single entries or lists, and each
/// entry may be a shorthand string.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(alias = "task")]
    tasks: Value,
    #[serde(alias = "model")]
    models: Value,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    sweep: BTreeMap<String, Vec<Value>>,
    #[serde(default = "d_seeds")]
    seeds: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "d_jobs")]
    jobs: usize,
    #[serde(default = "d_output")]
    output: PathBuf,
    #[serde(default)]
    ntk: NtkSettings,
}

/// Values taken by each sweep axis at one grid point.
pub type Assignment = Vec<(String, Value)>;

fn config_err(path: impl Into<String>, message: impl Into<String>) -> BenchError {
    BenchError::Config { path: path.into(), message: message.into() }
}

fn typed<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, BenchError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { prefix.to_string() } else { format!("{prefix}.{inner}") };
        config_err(path, e.into_inner().to_string())
    })
}

fn entries(value: Value) -> Vec<Value> {
    match value {
        Value::Array(items) => items,
        other => vec![other],
    }
}

fn parse_task(value: Value, path: &str) -> Result<TaskSpec, BenchError> {
    match value {
        Value::String(s) => {
            let kind: TaskKind = typed(Value::String(s), path)?;
            Ok(TaskSpec::new(kind))
        }
        other => typed(other, path),
    }
}

/// `mlp/<activation>[/<encoding>]` or `kan/<basis>`.
pub fn parse_model_shorthand(text: &str, path: &str) -> Result<NetworkConfig, BenchError> {
    let parts: Vec<&str> = text.split('/').collect();
    match parts.as_slice() {
        ["mlp", act, rest @ ..] if rest.len() <= 1 => {
            let activation = Activation::from_family(act).ok_or_else(|| {
                config_err(
                    format!("{path}.activation"),
                    format!("unknown activation `{act}`, expected one of: {}", Activation::FAMILIES.join(", ")),
                )
            })?;
            let encoding = match rest.first() {
                None => EncodingSpec::Identity,
                Some(e) => EncodingSpec::from_name(e).ok_or_else(|| {
                    config_err(
                        format!("{path}.encoding"),
                        format!("unknown encoding `{e}`, expected one of: identity, nerf, rff, fkan"),
                    )
                })?,
            };
            Ok(NetworkConfig::mlp(activation, encoding))
        }
        ["kan", basis] => {
            let family: BasisFamily = typed(Value::String(basis.to_string()), &format!("{path}.basis"))?;
            Ok(NetworkConfig::kan(BasisSpec::new(family)))
        }
        _ => Err(config_err(
            path,
            format!("cannot read model shorthand `{text}`; use mlp/<activation>[/<encoding>] or kan/<basis>"),
        )),
    }
}

fn parse_model(value: Value, path: &str) -> Result<NetworkConfig, BenchError> {
    let cfg = match value {
        Value::String(s) => parse_model_shorthand(&s, path)?,
        other => typed(other, path)?,
    };
    cfg.validate().map_err(|e| config_err(path, e.to_string()))?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let value: Value = serde_json::from_str(text).map_err(|e| config_err(".", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, BenchError> {
        let raw: RawConfig = typed(value, "config")?;
        let tasks = entries(raw.tasks)
            .into_iter()
            .enumerate()
            .map(|(i, v)| parse_task(v, &format!("tasks[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let models = entries(raw.models)
            .into_iter()
            .enumerate()
            .map(|(i, v)| parse_model(v, &format!("models[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = Self {
            tasks,
            models,
            train: raw.train,
            sweep: raw.sweep,
            seeds: raw.seeds,
            seed: raw.seed,
            jobs: raw.jobs,
            output: raw.output,
            ntk: raw.ntk,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.tasks.is_empty() || self.models.is_empty() {
            return Err(config_err("config", "at least one task and one model are required"));
        }
        if self.seeds == 0 || self.jobs == 0 {
            return Err(config_err("config", "seeds and jobs must be >= 1"));
        }
        self.train.validate().map_err(|e| config_err("train", e.to_string()))?;
        for (i, m) in self.models.iter().enumerate() {
            if m.arch == Arch::Kan && m.encoding != EncodingSpec::Identity {
                return Err(config_err(format!("models[{i}].encoding"), "kan models take no encoding"));
            }
        }
        for (key, values) in &self.sweep {
            if values.is_empty() {
                return Err(config_err(format!("sweep.{key}"), "sweep axis has no values"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Number of grid points spanned by the sweep axes.
    pub fn sweep_points(&self) -> usize {
        self.sweep.values().map(Vec::len).product()
    }

    /// Total runs: sweep points × tasks × models × seeds.
    pub fn run_count(&self) -> usize {
        self.sweep_points() * self.tasks.len() * self.models.len() * self.seeds
    }

    /// One configuration per sweep grid point, axes varying last-key fastest.
    /// Each point is the base config with the axis paths overwritten.
    pub fn expand_sweep(&self) -> Result<Vec<(Assignment, ExperimentConfig)>, BenchError> {
        let mut base = serde_json::to_value(self).expect("config serialises");
        if let Value::Object(map) = &mut base {
            map.remove("sweep");
        }
        let axes: Vec<(&String, &Vec<Value>)> = self.sweep.iter().collect();
        let mut out = Vec::with_capacity(self.sweep_points());
        for point in 0..self.sweep_points() {
            let mut rem = point;
            let mut assignment = Vec::with_capacity(axes.len());
            for (key, values) in axes.iter().rev() {
                assignment.push(((*key).clone(), values[rem % values.len()].clone()));
                rem /= values.len();
            }
            assignment.reverse();
            let mut v = base.clone();
            for (key, value) in &assignment {
                set_path(&mut v, key, value.clone())?;
            }
            let cfg: ExperimentConfig = typed(v, "config").map_err(|e| match e {
                BenchError::Config { path, message } => config_err(path, format!("{message} (sweep point {point})")),
                other => other,
            })?;
            cfg.validate()?;
            out.push((assignment, cfg));
        }
        Ok(out)
    }
}

/// Sets a dotted path such as `models.0.activation.omega`. Intermediate
/// containers must exist; the final key may be new, in which case the
/// re-parse rejects it if the schema does not know it.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), BenchError> {
    let keys: Vec<&str> = path.split('.').collect();
    let missing = || config_err(format!("sweep.{path}"), "path does not name an existing config entry");
    let mut cur = root;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert((*key).to_string(), value);
                    return Ok(());
                }
                map.get_mut(*key).ok_or_else(missing)?
            }
            Value::Array(items) => {
                let idx: usize = key.parse().map_err(|_| missing())?;
                let slot = items.get_mut(idx).ok_or_else(missing)?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(missing()),
        };
    }
    Err(missing())
}
