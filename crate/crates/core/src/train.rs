//! Adam with cosine annealing, and task evaluation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::network::{Network, ParameterSet};
use crate::tasks::{metrics, ops, Constraint, TaskInstance, TaskKind};
use crate::tensor::Tensor;

fn d_steps() -> usize {
    2000
}
fn d_lr() -> f64 {
    4e-4
}
fn d_batch() -> usize {
    8192
}
fn d_log() -> usize {
    100
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default)]
    pub lr_min: f64,
    /// Batch size; when it covers the training set every step uses all of it.
    #[serde(default = "d_batch")]
    pub batch: usize,
    /// Loss is recorded at every step divisible by this.
    #[serde(default = "d_log")]
    pub log_every: usize,
    /// Metric is evaluated at every step divisible by this and after the
    /// last step; 0 disables the metric curve.
    #[serde(default)]
    pub metric_every: usize,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: d_steps(),
            lr: d_lr(),
            lr_min: 0.0,
            batch: d_batch(),
            log_every: d_log(),
            metric_every: 0,
            beta1: d_beta1(),
            beta2: d_beta2(),
            eps: d_eps(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Cosine-annealed learning rate at step `t` of `steps`.
    pub fn lr_at(&self, t: usize) -> f64 {
        let frac = if self.steps == 0 { 1.0 } else { t as f64 / self.steps as f64 };
        self.lr_min + (self.lr - self.lr_min) * (1.0 + (PI * frac).cos()) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.log_every == 0 {
            return Err(Error::InvalidParam("batch and log_every must be >= 1".into()));
        }
        if !(self.lr > 0.0) || self.lr_min < 0.0 || self.lr_min > self.lr {
            return Err(Error::InvalidParam("learning rates need 0 <= lr_min <= lr, lr > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::InvalidParam("Adam needs betas in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &ParameterSet, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps }
    }

    /// One bias-corrected update; parameters with no gradient are skipped.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &[Option<&Tensor>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, p) in params.params.iter_mut().enumerate() {
            let Some(g) = grads[k] else { continue };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metric_name: &'static str,
    pub value: f64,
    pub secondary: Vec<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParameterSet,
    pub loss_curve: Vec<(usize, f64)>,
    pub metric_curve: Vec<(usize, f64)>,
    pub diverged: bool,
    /// Updates actually applied.
    pub steps_run: usize,
}

fn gather(t: &Tensor, rows: &[usize]) -> Tensor {
    let cols = t.shape()[1];
    let mut data = Vec::with_capacity(rows.len() * cols);
    for &r in rows {
        data.extend_from_slice(t.row(r));
    }
    Tensor::matrix(rows.len(), cols, data)
}

/// Loss of the task objective on one batch, recorded on `tape`.
pub fn task_loss(
    tape: &mut Tape,
    net: &Network,
    params: &ParameterSet,
    task: &TaskInstance,
    coords: Tensor,
    targets: Tensor,
) -> Result<crate::autodiff::Var> {
    let x = tape.constant(coords);
    let out = net.forward(tape, params, x)?;
    let pred = match &task.constraint {
        Constraint::Pointwise => out,
        Constraint::Linear(op) => tape.sparse_linear(op, out)?,
    };
    let y = tape.constant(targets);
    tape.mse(pred, y)
}

/// Minimises the task loss with Adam. Pointwise tasks draw batches with
/// replacement; operator-constrained tasks always use the full grid.
pub fn train(net: &Network, params: ParameterSet, task: &TaskInstance, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if task.in_dim() != net.in_dim() || task.out_dim() != net.out_dim() {
        return Err(Error::Shape(format!(
            "network maps {} -> {} but task needs {} -> {}",
            net.in_dim(),
            net.out_dim(),
            task.in_dim(),
            task.out_dim()
        )));
    }
    let mut params = params;
    let mut adam = Adam::new(&params, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = task.train_len();
    let full = matches!(task.constraint, Constraint::Linear(_)) || cfg.batch >= n;
    let mut out = TrainOutcome {
        params: ParameterSet::default(),
        loss_curve: Vec::new(),
        metric_curve: Vec::new(),
        diverged: false,
        steps_run: 0,
    };
    let mut idx = vec![0usize; cfg.batch];
    for t in 0..cfg.steps {
        if cfg.metric_every > 0 && t % cfg.metric_every == 0 {
            out.metric_curve.push((t, evaluate(net, &params, task)?.value));
        }
        let (x, y) = if full {
            (task.coords_train.clone(), task.targets_train.clone())
        } else {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
            (gather(&task.coords_train, &idx), gather(&task.targets_train, &idx))
        };
        let mut tape = Tape::new();
        let loss = task_loss(&mut tape, net, &params, task, x, y)?;
        let value = tape.value(loss).item();
        if t % cfg.log_every == 0 || !value.is_finite() {
            out.loss_curve.push((t, value));
        }
        if !value.is_finite() {
            out.diverged = true;
            break;
        }
        let grads = tape.backward(loss)?;
        let refs: Vec<Option<&Tensor>> = (0..params.len()).map(|k| grads.param(k)).collect();
        adam.step(&mut params, &refs, cfg.lr_at(t));
        out.steps_run = t + 1;
    }
    if !out.diverged && cfg.metric_every > 0 {
        out.metric_curve.push((cfg.steps, evaluate(net, &params, task)?.value));
    }
    out.params = params;
    Ok(out)
}

/// Scores the network on the task's evaluation set. Secondary scores
/// include LSD for audio and whole-image PSNR for inpainting.
pub fn evaluate(net: &Network, params: &ParameterSet, task: &TaskInstance) -> Result<Evaluation> {
    let pred = net.predict(params, &task.coords_eval)?;
    let metric_name = task.metric.name();
    if !pred.all_finite() {
        return Ok(Evaluation { metric_name, value: f64::NAN, secondary: Vec::new() });
    }
    let value = task.metric.compute(pred.data(), task.targets_eval.data())?;
    let mut secondary = Vec::new();
    match task.kind {
        TaskKind::AudioReg => {
            let lsd = metrics::lsd(pred.data(), task.targets_eval.data(), metrics::LSD_FRAME)?;
            secondary.push(("lsd".to_string(), lsd.value));
            if lsd.frame_shrunk {
                secondary.push(("lsd_frame".to_string(), lsd.frame as f64));
            }
        }
        TaskKind::Inpaint => {
            let full = net.predict(params, &ops::grid_coords(task.grid()))?;
            secondary.push(("psnr_full_db".to_string(), metrics::psnr(full.data(), task.signal.values())?));
        }
        _ => {}
    }
    secondary.extend(task.reference.iter().cloned());
    Ok(Evaluation { metric_name, value, secondary })
}
