//! Forward and inverse reconstruction tasks, their measurement operators,
//! signal sources and metrics.

pub mod generate;
pub mod io;
pub mod metrics;
pub mod ops;

use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tensor::Tensor;
use ops::CtGeometry;

/// Sampled signal on a row-major grid, channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalGrid {
    shape: Vec<usize>,
    channels: usize,
    values: Vec<f64>,
    range: (f64, f64),
    pub sample_rate: Option<u32>,
}

impl SignalGrid {
    pub fn new(shape: Vec<usize>, channels: usize, values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product::<usize>() * channels;
        if shape.is_empty() || n == 0 {
            return Err(Error::InvalidParam("empty signal".into()));
        }
        if values.len() != n {
            return Err(Error::Shape(format!("grid {shape:?}x{channels} needs {n} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("signal contains non-finite values".into()));
        }
        let mut g = Self { shape, channels, values, range: (0.0, 0.0), sample_rate: None };
        g.refresh_range();
        Ok(g)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn points(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(min, max)` over all values.
    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub(crate) fn refresh_range(&mut self) {
        self.range = self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    }

    /// Values as a `[points, channels]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.points(), self.channels, self.values.clone())
    }

    /// Rescales into `[0, 1]` if any value falls outside it.
    fn unit_interval(mut self) -> Self {
        let (lo, hi) = self.range;
        if lo < 0.0 || hi > 1.0 {
            let span = if hi > lo { hi - lo } else { 1.0 };
            self.values.iter_mut().for_each(|v| *v = (*v - lo) / span);
            self.refresh_range();
        }
        self
    }

    /// Scales by the peak magnitude if it exceeds one.
    fn symmetric_unit(mut self) -> Self {
        let peak = self.range.0.abs().max(self.range.1.abs());
        if peak > 1.0 {
            self.values.iter_mut().for_each(|v| *v /= peak);
            self.refresh_range();
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    AudioReg,
    ImageReg,
    SdfReg,
    Inpaint,
    SuperRes,
    Denoise,
    PoissonGrad,
    PoissonLap,
    CtRecon,
}

impl TaskKind {
    pub const ALL: [TaskKind; 9] = [
        TaskKind::AudioReg,
        TaskKind::ImageReg,
        TaskKind::SdfReg,
        TaskKind::Inpaint,
        TaskKind::SuperRes,
        TaskKind::Denoise,
        TaskKind::PoissonGrad,
        TaskKind::PoissonLap,
        TaskKind::CtRecon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::AudioReg => "audio_reg",
            TaskKind::ImageReg => "image_reg",
            TaskKind::SdfReg => "sdf_reg",
            TaskKind::Inpaint => "inpaint",
            TaskKind::SuperRes => "super_res",
            TaskKind::Denoise => "denoise",
            TaskKind::PoissonGrad => "poisson_grad",
            TaskKind::PoissonLap => "poisson_lap",
            TaskKind::CtRecon => "ct_recon",
        }
    }

    pub fn is_audio(self) -> bool {
        self == TaskKind::AudioReg
    }
}

/// How network outputs relate to training targets.
#[derive(Clone, Debug)]
pub enum Constraint {
    /// Targets are network values at the training coordinates.
    Pointwise,
    /// Targets are `A·Φ(coords_train)` for a fixed linear operator `A`.
    Linear(Arc<SparseMatrix>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Snr,
    Psnr,
    /// PSNR after a least-squares gain/offset fit.
    PsnrAffine,
    Iou,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Snr => "snr_db",
            MetricKind::Psnr => "psnr_db",
            MetricKind::PsnrAffine => "psnr_affine_db",
            MetricKind::Iou => "iou",
        }
    }

    pub fn compute(self, pred: &[f64], target: &[f64]) -> Result<f64> {
        match self {
            MetricKind::Snr => metrics::snr(pred, target),
            MetricKind::Psnr => metrics::psnr(pred, target),
            MetricKind::PsnrAffine => metrics::psnr_affine(pred, target),
            MetricKind::Iou => metrics::iou(pred, target, 0.5),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TaskInstance {
    pub kind: TaskKind,
    /// Clean full-resolution signal.
    pub signal: SignalGrid,
    pub coords_train: Tensor,
    pub targets_train: Tensor,
    pub constraint: Constraint,
    pub coords_eval: Tensor,
    pub targets_eval: Tensor,
    pub metric: MetricKind,
    /// Scores fixed at construction, such as the noisy input's PSNR.
    pub reference: Vec<(String, f64)>,
}

impl TaskInstance {
    pub fn grid(&self) -> &[usize] {
        self.signal.shape()
    }

    pub fn in_dim(&self) -> usize {
        self.signal.rank()
    }

    pub fn out_dim(&self) -> usize {
        self.signal.channels()
    }

    pub fn train_len(&self) -> usize {
        self.coords_train.shape()[0]
    }
}

fn expect_rank(signal: &SignalGrid, rank: usize, what: &str) -> Result<()> {
    if signal.rank() != rank {
        return Err(Error::Shape(format!("{what} needs a {rank}-D signal, got shape {:?}", signal.shape())));
    }
    Ok(())
}

fn pointwise(kind: TaskKind, signal: SignalGrid, metric: MetricKind) -> TaskInstance {
    let coords = ops::grid_coords(signal.shape());
    let targets = signal.to_tensor();
    TaskInstance {
        kind,
        coords_train: coords.clone(),
        targets_train: targets.clone(),
        constraint: Constraint::Pointwise,
        coords_eval: coords,
        targets_eval: targets,
        metric,
        reference: Vec::new(),
        signal,
    }
}

/// Fits the full grid directly: audio (SNR), image (PSNR) or occupancy (IoU).
pub fn make_regression_task(signal: SignalGrid, kind: TaskKind) -> Result<TaskInstance> {
    let (rank, metric, signal) = match kind {
        TaskKind::AudioReg => (1, MetricKind::Snr, signal.symmetric_unit()),
        TaskKind::ImageReg => (2, MetricKind::Psnr, signal.unit_interval()),
        TaskKind::SdfReg => (3, MetricKind::Iou, signal),
        other => return Err(Error::InvalidParam(format!("{} is not a regression task", other.name()))),
    };
    expect_rank(&signal, rank, kind.name())?;
    Ok(pointwise(kind, signal, metric))
}

/// Fraction of pixels observed when inpainting.
pub const INPAINT_FRACTION: f64 = 0.2;

/// Flat pixel indices `(train, eval)` for an inpainting split.
pub fn inpaint_split(pixels: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if pixels < 5 {
        return Err(Error::InvalidParam(format!("inpainting needs at least 5 pixels, got {pixels}")));
    }
    let count = (INPAINT_FRACTION * pixels as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = index::sample(&mut rng, pixels, count).into_vec();
    train.sort_unstable();
    let mut taken = vec![false; pixels];
    train.iter().for_each(|&i| taken[i] = true);
    let eval = (0..pixels).filter(|&i| !taken[i]).collect();
    Ok((train, eval))
}

fn gather_rows(t: &Tensor, rows: &[usize]) -> Tensor {
    let cols = t.shape()[1];
    let data = rows.iter().flat_map(|&r| t.row(r).iter().copied()).collect();
    Tensor::matrix(rows.len(), cols, data)
}

/// Trains on a seeded 20% of pixels and scores PSNR on the rest.
pub fn split_inpaint(image: SignalGrid, seed: u64) -> Result<TaskInstance> {
    expect_rank(&image, 2, "inpainting")?;
    let image = image.unit_interval();
    let (train, eval) = inpaint_split(image.points(), seed)?;
    let coords = ops::grid_coords(image.shape());
    let targets = image.to_tensor();
    Ok(TaskInstance {
        kind: TaskKind::Inpaint,
        coords_train: gather_rows(&coords, &train),
        targets_train: gather_rows(&targets, &train),
        constraint: Constraint::Pointwise,
        coords_eval: gather_rows(&coords, &eval),
        targets_eval: gather_rows(&targets, &eval),
        metric: MetricKind::Psnr,
        reference: Vec::new(),
        signal: image,
    })
}

/// Downsampling factor for super-resolution.
pub const SUPERRES_FACTOR: usize = 4;

/// Trains on 4×4 block means placed at the pooled cell centres and scores
/// PSNR on the full-resolution grid.
pub fn make_superres_task(image: SignalGrid) -> Result<TaskInstance> {
    expect_rank(&image, 2, "super-resolution")?;
    let image = image.unit_interval();
    let (h, w, c) = (image.shape()[0], image.shape()[1], image.channels());
    let pool = ops::pool_operator(h, w, SUPERRES_FACTOR)?;
    let pooled = pool.apply(image.values(), c);
    let (ph, pw) = (h / SUPERRES_FACTOR, w / SUPERRES_FACTOR);
    let mut task = pointwise(TaskKind::SuperRes, image, MetricKind::Psnr);
    task.coords_train = ops::grid_coords(&[ph, pw]);
    task.targets_train = Tensor::matrix(ph * pw, c, pooled);
    Ok(task)
}

pub const DEFAULT_PHOTONS: f64 = 30.0;
pub const DEFAULT_READ_NOISE: f64 = 0.01;

/// `Poisson(x·P)/P + N(0, σ²)` per value, seeded.
pub fn corrupt(values: &[f64], photons: f64, read_noise: f64, seed: u64) -> Result<Vec<f64>> {
    if !(photons > 0.0) || !(read_noise >= 0.0) {
        return Err(Error::InvalidParam("photons must be > 0 and read noise >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let read = Normal::new(0.0, read_noise).map_err(|e| Error::InvalidParam(e.to_string()))?;
    values
        .iter()
        .map(|&x| {
            let rate = x.max(0.0) * photons;
            let shot = if rate > 0.0 {
                Poisson::new(rate).map_err(|e| Error::InvalidParam(e.to_string()))?.sample(&mut rng)
            } else {
                0.0
            };
            let noise = if read_noise > 0.0 { read.sample(&mut rng) } else { 0.0 };
            Ok(shot / photons + noise)
        })
        .collect()
}

/// Trains on a photon- and read-noise-corrupted image, scores PSNR against
/// the clean one. The noisy image's own PSNR is kept as `noisy_psnr_db`.
pub fn corrupt_denoise(image: SignalGrid, photons: f64, read_noise: f64, seed: u64) -> Result<TaskInstance> {
    expect_rank(&image, 2, "denoising")?;
    let image = image.unit_interval();
    let noisy = corrupt(image.values(), photons, read_noise, seed)?;
    let noisy_psnr = metrics::psnr(&noisy, image.values())?;
    let c = image.channels();
    let mut task = pointwise(TaskKind::Denoise, image, MetricKind::Psnr);
    task.targets_train = Tensor::matrix(noisy.len() / c, c, noisy);
    task.reference.push(("noisy_psnr_db".into(), noisy_psnr));
    Ok(task)
}

/// Supervises the discrete gradient or Laplacian of the full-grid output.
pub fn make_poisson_task(image: SignalGrid, kind: TaskKind) -> Result<TaskInstance> {
    expect_rank(&image, 2, "poisson reconstruction")?;
    let image = image.unit_interval();
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let op = match kind {
        TaskKind::PoissonGrad => ops::gradient_operator(h, w)?,
        TaskKind::PoissonLap => ops::laplacian_operator(h, w)?,
        other => return Err(Error::InvalidParam(format!("{} is not a poisson task", other.name()))),
    };
    Ok(linear_task(kind, image, op, MetricKind::PsnrAffine))
}

/// Supervises parallel-beam projections of the full-grid density.
pub fn make_ct_task(image: SignalGrid, angles: usize, bins: usize) -> Result<TaskInstance> {
    expect_rank(&image, 2, "CT reconstruction")?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    if h != w {
        return Err(Error::Shape(format!("CT needs a square grid, got {h}x{w}")));
    }
    if image.channels() != 1 {
        return Err(Error::Shape("CT needs a single-channel density".into()));
    }
    let image = image.unit_interval();
    let op = CtGeometry::uniform(h, angles, bins).projector()?;
    Ok(linear_task(TaskKind::CtRecon, image, op, MetricKind::Psnr))
}

fn linear_task(kind: TaskKind, image: SignalGrid, op: SparseMatrix, metric: MetricKind) -> TaskInstance {
    let c = image.channels();
    let measured = op.apply(image.values(), c);
    let mut task = pointwise(kind, image, metric);
    task.targets_train = Tensor::matrix(op.rows(), c, measured);
    task.constraint = Constraint::Linear(Arc::new(op));
    task
}
