//! Planning and executing the (sweep × task × model × seed) grid.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use inrbench::network::{Network, NetworkConfig};
use inrbench::train::{evaluate, train, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ExperimentConfig, TaskSpec};
use crate::error::BenchError;
use crate::report;

/// SplitMix64 finaliser over the pair; stable across platforms and releases.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TASK_SALT: u64 = 0x7461_736b;
const BATCH_SALT: u64 = 0x6261_7463;

/// One planned run.
#[derive(Clone, Debug)]
pub struct RunPlan {
    pub index: usize,
    pub id: String,
    pub sweep: Vec<(String, Value)>,
    pub task: TaskSpec,
    pub model: NetworkConfig,
    pub train: TrainConfig,
    pub replicate: usize,
    /// Seeds network initialisation and batch sampling.
    pub seed: u64,
    /// Seeds task data (masks, noise); shared by every model in a replicate.
    pub task_seed: u64,
}

/// Expands the configuration into runs in a fixed order: sweep point, task,
/// model, replicate.
pub fn plan(cfg: &ExperimentConfig) -> Result<Vec<RunPlan>, BenchError> {
    let mut plans = Vec::with_capacity(cfg.run_count());
    for (assignment, point) in cfg.expand_sweep()? {
        for (ti, task) in point.tasks.iter().enumerate() {
            for model in &point.models {
                for replicate in 0..point.seeds {
                    let index = plans.len();
                    plans.push(RunPlan {
                        index,
                        id: format!("run-{index:05}"),
                        sweep: assignment.clone(),
                        task: task.clone(),
                        model: model.clone(),
                        train: point.train.clone(),
                        replicate,
                        seed: mix_seed(cfg.seed, index as u64),
                        task_seed: mix_seed(mix_seed(cfg.seed, TASK_SALT), (replicate * 1_000_003 + ti) as u64),
                    });
                }
            }
        }
    }
    Ok(plans)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub index: usize,
    pub task: String,
    pub arch: String,
    pub nonlinearity: String,
    pub encoding: String,
    /// Model as configured, before task-dependent defaults are filled in.
    pub model: String,
    pub seed: u64,
    pub replicate: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Value>,
    pub steps: usize,
    pub metric_name: String,
    /// Absent when the run diverged or failed.
    pub metric_value: Option<f64>,
    #[serde(default)]
    pub secondary: BTreeMap<String, f64>,
    pub wall_time_s: f64,
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub loss_curve_path: String,
    pub metric_curve_path: String,
    #[serde(skip)]
    pub loss_curve: Vec<(usize, f64)>,
    #[serde(skip)]
    pub metric_curve: Vec<(usize, f64)>,
}

impl RunResult {
    /// Pivot column key: model description plus any sweep assignment.
    pub fn model_key(&self) -> String {
        let mut key = self.model.clone();
        if !self.sweep.is_empty() {
            let parts: Vec<String> = self.sweep.iter().map(|(k, v)| format!("{k}={v}")).collect();
            key.push_str(&format!(" {{{}}}", parts.join(" ")));
        }
        key
    }
}

pub fn model_label(m: &NetworkConfig) -> String {
    format!("{}/{}/{}", m.arch.name(), m.nonlinearity_label(), m.encoding.label())
}

/// Trains and scores one run. Failures are captured in the result.
pub fn execute(plan: &RunPlan) -> RunResult {
    let start = Instant::now();
    let mut result = RunResult {
        run_id: plan.id.clone(),
        index: plan.index,
        task: plan.task.label(),
        arch: plan.model.arch.name().to_string(),
        nonlinearity: plan.model.nonlinearity_label(),
        encoding: plan.model.encoding.label(),
        model: model_label(&plan.model),
        seed: plan.seed,
        replicate: plan.replicate,
        sweep: plan.sweep.iter().cloned().collect(),
        steps: 0,
        metric_name: String::new(),
        metric_value: None,
        secondary: BTreeMap::new(),
        wall_time_s: 0.0,
        diverged: false,
        error: None,
        loss_curve_path: format!("curves/{}.loss.txt", plan.id),
        metric_curve_path: format!("curves/{}.metric.txt", plan.id),
        loss_curve: Vec::new(),
        metric_curve: Vec::new(),
    };
    let outcome = (|| -> inrbench::Result<()> {
        let task = plan.task.build(plan.task_seed)?;
        let mut model = plan.model.clone();
        model.activation = model.activation.resolved(task.kind.is_audio());
        result.nonlinearity = model.nonlinearity_label();
        result.metric_name = task.metric.name().to_string();
        let (net, params) = Network::build(&model, task.in_dim(), task.out_dim(), plan.seed)?;
        let cfg = TrainConfig { seed: mix_seed(plan.seed, BATCH_SALT), ..plan.train.clone() };
        let out = train(&net, params, &task, &cfg)?;
        result.steps = out.steps_run;
        result.loss_curve = out.loss_curve;
        result.metric_curve = out.metric_curve;
        result.diverged = out.diverged;
        if !out.diverged {
            let ev = evaluate(&net, &out.params, &task)?;
            if ev.value.is_finite() {
                result.metric_value = Some(ev.value);
                result.secondary = ev.secondary.into_iter().collect();
            } else {
                result.diverged = true;
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
    }
    result.wall_time_s = start.elapsed().as_secs_f64();
    result
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BenchError> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("out")));
    fs::write(&tmp, bytes).map_err(|e| BenchError::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| BenchError::io(format!("renaming to {}", path.display()), e))
}

fn run_file(dir: &Path, id: &str) -> PathBuf {
    dir.join("runs").join(format!("{id}.json"))
}

/// Persists one result: curves first, then the run record that marks it done.
pub fn save_result(dir: &Path, r: &RunResult) -> Result<(), BenchError> {
    write_atomic(&dir.join(&r.loss_curve_path), report::curve_text(&r.loss_curve).as_bytes())?;
    write_atomic(&dir.join(&r.metric_curve_path), report::curve_text(&r.metric_curve).as_bytes())?;
    let json = serde_json::to_string_pretty(r).expect("result serialises");
    write_atomic(&run_file(dir, &r.run_id), json.as_bytes())
}

pub fn load_result(dir: &Path, path: &Path) -> Result<RunResult, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(format!("reading {}", path.display()), e))?;
    let bad = |m: String| BenchError::Result { path: path.display().to_string(), message: m };
    let mut r: RunResult = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    r.loss_curve = report::read_curve(&dir.join(&r.loss_curve_path)).map_err(|e| bad(e.to_string()))?;
    r.metric_curve = report::read_curve(&dir.join(&r.metric_curve_path)).map_err(|e| bad(e.to_string()))?;
    Ok(r)
}

/// All run records under `dir/runs`, ordered by run index.
pub fn load_results(dir: &Path) -> Result<Vec<RunResult>, BenchError> {
    let runs = dir.join("runs");
    let entries = fs::read_dir(&runs).map_err(|e| BenchError::io(format!("listing {}", runs.display()), e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| BenchError::io("listing runs", e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            out.push(load_result(dir, &path)?);
        }
    }
    out.sort_by_key(|r| r.index);
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the configured parallelism.
    pub jobs: Option<usize>,
    /// Skip runs whose result file already exists.
    pub resume: bool,
    /// Overrides the configured output directory.
    pub output: Option<PathBuf>,
    /// Stop after this many new runs (used to simulate interruption).
    pub limit: Option<usize>,
}

/// Executes every planned run, flushing each result as it completes, then
/// writes the leaderboard and summary. Returns results in run order.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<RunResult>, BenchError> {
    let dir = opts.output.clone().unwrap_or_else(|| cfg.output.clone());
    for sub in ["runs", "curves"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| BenchError::io(format!("creating {}", p.display()), e))?;
    }
    write_atomic(&dir.join("config.json"), cfg.to_json().as_bytes())?;
    let plans = plan(cfg)?;
    let mut done: BTreeMap<usize, RunResult> = BTreeMap::new();
    let mut pending = Vec::new();
    for p in plans {
        let file = run_file(&dir, &p.id);
        if opts.resume && file.exists() {
            if let Ok(r) = load_result(&dir, &file) {
                done.insert(p.index, r);
                continue;
            }
        }
        pending.push(p);
    }
    if let Some(limit) = opts.limit {
        pending.truncate(limit);
    }
    let jobs = opts.jobs.unwrap_or(cfg.jobs).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| BenchError::io("starting worker pool", std::io::Error::other(e)))?;
    let fresh: Vec<Result<RunResult, BenchError>> = pool.install(|| {
        pending
            .par_iter()
            .map(|p| {
                let r = execute(p);
                save_result(&dir, &r)?;
                Ok(r)
            })
            .collect()
    });
    for r in fresh {
        let r = r?;
        done.insert(r.index, r);
    }
    let results: Vec<RunResult> = done.into_values().collect();
    report::write_reports(&dir, &results)?;
    Ok(results)
}
