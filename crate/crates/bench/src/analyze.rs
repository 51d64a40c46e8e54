//! The `ntk` verb: kernel, spectrum and residual decay for the first
//! configured model on the first configured task.

use std::path::Path;

use inrbench::network::Network;
use inrbench::ntk::{empirical_ntk_channel, residual_spectrum, GdConfig, NtkReport, NTK_CAP};
use inrbench::tensor::Tensor;

use crate::config::ExperimentConfig;
use crate::error::BenchError;
use crate::runner::mix_seed;

/// Evenly spaced row indices, `count` of `len`.
pub fn spaced_indices(len: usize, count: usize) -> Vec<usize> {
    let count = count.min(len);
    (0..count).map(|k| k * len / count).collect()
}

pub fn run_ntk(cfg: &ExperimentConfig, out_dir: &Path) -> Result<NtkReport, BenchError> {
    let task = cfg.tasks[0].build(mix_seed(cfg.seed, 0))?;
    let mut model = cfg.models[0].clone();
    model.activation = model.activation.resolved(task.kind.is_audio());
    let (net, params) = Network::build(&model, task.in_dim(), task.out_dim(), cfg.seed)?;
    let idx = spaced_indices(task.train_len(), cfg.ntk.points);
    let d = task.in_dim();
    let mut xs = Vec::with_capacity(idx.len() * d);
    let mut ys = Vec::with_capacity(idx.len());
    for &i in &idx {
        xs.extend_from_slice(task.coords_train.row(i));
        ys.push(task.targets_train.row(i)[0]);
    }
    let x = Tensor::matrix(idx.len(), d, xs);
    let k = empirical_ntk_channel(&net, &params, &x, 0, NTK_CAP)?;
    let mut report = NtkReport::new(k)?;
    let lmax = report.eigenvalues.first().copied().unwrap_or(0.0);
    report.metadata.push(("task".into(), cfg.tasks[0].label()));
    report.metadata.push(("model".into(), crate::runner::model_label(&model)));
    report.metadata.push(("parameters".into(), params.scalar_count().to_string()));
    if task.out_dim() == 1 && lmax > 0.0 && matches!(task.constraint, inrbench::tasks::Constraint::Pointwise) {
        let gd = GdConfig { lr: cfg.ntk.lr_scale / lmax, steps: cfg.ntk.gd_steps, probe_every: cfg.ntk.probe_every };
        report.metadata.push(("gd_lr".into(), format!("{:e}", gd.lr)));
        report.residual = Some(residual_spectrum(&net, &params, &x, &ys, &gd)?);
    }
    report.write(out_dir)?;
    Ok(report)
}
