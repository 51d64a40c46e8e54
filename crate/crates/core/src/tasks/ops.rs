//! Grid coordinates and the linear measurement operators used as task
//! constraints. Every operator acts on row-major grid values.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tensor::Tensor;

/// Cell-centred coordinate of index `i` on an `n`-cell axis spanning `[-1, 1]`.
pub fn cell_center(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

/// All cell-centred coordinates of a row-major grid, `[prod(shape), rank]`.
pub fn grid_coords(shape: &[usize]) -> Tensor {
    let d = shape.len();
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n * d);
    let mut idx = vec![0usize; d];
    for _ in 0..n {
        for (k, &i) in idx.iter().enumerate() {
            data.push(cell_center(i, shape[k]));
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Tensor::matrix(n, d, data)
}

/// Selects the listed flat indices.
pub fn mask_operator(n: usize, indices: &[usize]) -> Result<SparseMatrix> {
    SparseMatrix::from_rows(n, indices.iter().map(|&i| vec![(i, 1.0)]).collect())
}

/// `f × f` block averaging of an `h × w` grid.
pub fn pool_operator(h: usize, w: usize, f: usize) -> Result<SparseMatrix> {
    if f == 0 || !h.is_multiple_of(f) || !w.is_multiple_of(f) {
        return Err(Error::Shape(format!("{h}x{w} grid is not divisible by {f}")));
    }
    let (ph, pw) = (h / f, w / f);
    let weight = 1.0 / (f * f) as f64;
    let rows = (0..ph * pw)
        .map(|r| {
            let (bi, bj) = (r / pw, r % pw);
            let mut row = Vec::with_capacity(f * f);
            for di in 0..f {
                for dj in 0..f {
                    row.push(((bi * f + di) * w + bj * f + dj, weight));
                }
            }
            row
        })
        .collect();
    SparseMatrix::from_rows(h * w, rows)
}

fn check_poisson_grid(h: usize, w: usize) -> Result<()> {
    if h < 3 || w < 3 {
        return Err(Error::Shape(format!("poisson operators need at least 3x3, got {h}x{w}")));
    }
    Ok(())
}

/// Discrete gradient with unit spacing: `h·w` rows of d/drow followed by
/// `h·w` rows of d/dcol. Central differences inside, one-sided at borders.
pub fn gradient_operator(h: usize, w: usize) -> Result<SparseMatrix> {
    check_poisson_grid(h, w)?;
    let at = |i: usize, j: usize| i * w + j;
    let diff = |k: usize, n: usize| -> [(usize, f64); 2] {
        if k == 0 {
            [(1, 1.0), (0, -1.0)]
        } else if k == n - 1 {
            [(k, 1.0), (k - 1, -1.0)]
        } else {
            [(k + 1, 0.5), (k - 1, -0.5)]
        }
    };
    let mut rows = Vec::with_capacity(2 * h * w);
    for i in 0..h {
        for j in 0..w {
            rows.push(diff(i, h).iter().map(|&(r, v)| (at(r, j), v)).collect());
        }
    }
    for i in 0..h {
        for j in 0..w {
            rows.push(diff(j, w).iter().map(|&(c, v)| (at(i, c), v)).collect());
        }
    }
    SparseMatrix::from_rows(h * w, rows)
}

/// Five-point Laplacian on the `(h-2)·(w-2)` interior cells.
pub fn laplacian_operator(h: usize, w: usize) -> Result<SparseMatrix> {
    check_poisson_grid(h, w)?;
    let at = |i: usize, j: usize| i * w + j;
    let mut rows = Vec::with_capacity((h - 2) * (w - 2));
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            rows.push(vec![
                (at(i - 1, j), 1.0),
                (at(i + 1, j), 1.0),
                (at(i, j - 1), 1.0),
                (at(i, j + 1), 1.0),
                (at(i, j), -4.0),
            ]);
        }
    }
    SparseMatrix::from_rows(h * w, rows)
}

/// Parallel-beam acquisition geometry on the unit square `[-1/2, 1/2]²`.
///
/// Row `i` of the density grid sits at `y = -1/2 + (i + 1/2)/n`, column `j`
/// at `x = -1/2 + (j + 1/2)/n`. A ray at angle `θ` and detector offset `s`
/// is `s·(-sin θ, cos θ) + t·(cos θ, sin θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CtGeometry {
    pub n: usize,
    pub angles: Vec<f64>,
    pub bins: usize,
}

impl CtGeometry {
    /// `count` angles uniformly spaced in `[0, π)`.
    pub fn uniform(n: usize, count: usize, bins: usize) -> Self {
        let angles = (0..count).map(|k| std::f64::consts::PI * k as f64 / count as f64).collect();
        Self { n, angles, bins }
    }

    /// Detector offsets, cell-centred over `[-√2/2, √2/2]`.
    pub fn offsets(&self) -> Vec<f64> {
        let r = FRAC_1_SQRT_2;
        (0..self.bins).map(|b| -r + (2 * b + 1) as f64 * r / self.bins as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.angles.is_empty() || self.bins == 0 {
            return Err(Error::InvalidParam("CT geometry needs a grid, angles and detector bins".into()));
        }
        Ok(())
    }

    /// Sinogram rows ordered angle-major, one per (angle, bin). Rays are
    /// sampled ten times per cell.
    pub fn projector(&self) -> Result<SparseMatrix> {
        self.projector_with_step(0.1 / self.n as f64)
    }

    /// Projector integrating with an explicit step length along each ray.
    pub fn projector_with_step(&self, step: f64) -> Result<SparseMatrix> {
        self.validate()?;
        let n = self.n;
        let r = FRAC_1_SQRT_2;
        let samples = (2.0 * r / step).ceil() as usize;
        let offsets = self.offsets();
        let mut rows = Vec::with_capacity(self.angles.len() * self.bins);
        for &theta in &self.angles {
            let (c, s) = (theta.cos(), theta.sin());
            for &off in &offsets {
                let mut row = Vec::new();
                for k in 0..samples {
                    let t = -r + (k as f64 + 0.5) * step;
                    let x = -off * s + t * c;
                    let y = off * c + t * s;
                    bilinear_weights(n, x, y, step, &mut row);
                }
                rows.push(row);
            }
        }
        SparseMatrix::from_rows(n * n, rows)
    }
}

/// Appends `scale`-weighted bilinear interpolation weights for point `(x, y)`.
/// Points outside the square contribute nothing; neighbours are clamped to
/// the grid inside it.
fn bilinear_weights(n: usize, x: f64, y: f64, scale: f64, out: &mut Vec<(usize, f64)>) {
    if !(-0.5..=0.5).contains(&x) || !(-0.5..=0.5).contains(&y) {
        return;
    }
    let fx = (x + 0.5) * n as f64 - 0.5;
    let fy = (y + 0.5) * n as f64 - 0.5;
    let (x0, y0) = (fx.floor(), fy.floor());
    let (ax, ay) = (fx - x0, fy - y0);
    let clamp = |v: f64| v.max(0.0).min((n - 1) as f64) as usize;
    for (dy, wy) in [(0.0, 1.0 - ay), (1.0, ay)] {
        for (dx, wx) in [(0.0, 1.0 - ax), (1.0, ax)] {
            let w = wx * wy * scale;
            if w != 0.0 {
                out.push((clamp(y0 + dy) * n + clamp(x0 + dx), w));
            }
        }
    }
}

/// Bilinearly interpolated value of an `n × n` density grid at `(x, y)`.
pub fn bilinear_sample(grid: &[f64], n: usize, x: f64, y: f64) -> f64 {
    let mut w = Vec::with_capacity(4);
    bilinear_weights(n, x, y, 1.0, &mut w);
    w.iter().map(|&(i, v)| grid[i] * v).sum()
}
