//! Procedural signals standing in for recorded datasets.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::cell_center;
use super::SignalGrid;
use crate::error::{Error, Result};

fn d_samples() -> usize {
    4000
}
fn d_rate() -> u32 {
    4000
}
fn d_f0() -> f64 {
    20.0
}
fn d_f1() -> f64 {
    400.0
}
fn d_size() -> usize {
    64
}
fn d_cell() -> usize {
    8
}
fn d_vol() -> usize {
    32
}
fn d_radius() -> f64 {
    0.5
}
fn d_major() -> f64 {
    0.5
}
fn d_minor() -> f64 {
    0.2
}

/// A generator with its parameters. Every kind is a closed form; `noise`
/// adds seeded Gaussian noise of that standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    /// `sin(2π(f0·t + (f1 − f0)·t²/(2T)))` with `t = i / sample_rate`.
    Chirp {
        #[serde(default = "d_samples")]
        samples: usize,
        #[serde(default = "d_rate")]
        sample_rate: u32,
        #[serde(default = "d_f0")]
        f0: f64,
        #[serde(default = "d_f1")]
        f1: f64,
        #[serde(default)]
        noise: f64,
    },
    /// `Σ_k a_k·sin(2π f_k x)` at `x_i = i / samples`; components are `(f_k, a_k)`.
    SinusoidMix {
        #[serde(default = "d_samples")]
        samples: usize,
        components: Vec<(f64, f64)>,
        #[serde(default)]
        noise: f64,
    },
    /// `0.1 + 0.4·(i + j)/(h + w − 2) + 0.4·checker(i / cell, j / cell)`.
    CheckerGradient {
        #[serde(default = "d_size")]
        height: usize,
        #[serde(default = "d_size")]
        width: usize,
        #[serde(default = "d_cell")]
        cell: usize,
        #[serde(default)]
        noise: f64,
    },
    /// Modified Shepp-Logan ellipses on `[-1, 1]²`, y pointing up.
    Phantom {
        #[serde(default = "d_size")]
        size: usize,
    },
    /// Occupancy of a centred ball on the `[-1, 1]³` voxel grid.
    Sphere {
        #[serde(default = "d_vol")]
        size: usize,
        #[serde(default = "d_radius")]
        radius: f64,
    },
    /// Occupancy of a torus around the z axis.
    Torus {
        #[serde(default = "d_vol")]
        size: usize,
        #[serde(default = "d_major")]
        major: f64,
        #[serde(default = "d_minor")]
        minor: f64,
    },
}

impl SignalSpec {
    pub const KINDS: [&'static str; 6] = ["chirp", "sinusoid_mix", "checker_gradient", "phantom", "sphere", "torus"];

    /// The kind with default parameters; `sinusoid_mix` defaults to `sin(2πx) + sin(32πx)`.
    pub fn default_for(kind: &str) -> Option<Self> {
        Some(match kind {
            "chirp" => Self::Chirp { samples: d_samples(), sample_rate: d_rate(), f0: d_f0(), f1: d_f1(), noise: 0.0 },
            "sinusoid_mix" => Self::SinusoidMix { samples: 256, components: vec![(1.0, 1.0), (16.0, 1.0)], noise: 0.0 },
            "checker_gradient" => {
                Self::CheckerGradient { height: d_size(), width: d_size(), cell: d_cell(), noise: 0.0 }
            }
            "phantom" => Self::Phantom { size: d_size() },
            "sphere" => Self::Sphere { size: d_vol(), radius: d_radius() },
            "torus" => Self::Torus { size: d_vol(), major: d_major(), minor: d_minor() },
            _ => return None,
        })
    }

    pub fn generate(&self, seed: u64) -> Result<SignalGrid> {
        let mut grid = match self {
            Self::Chirp { samples, sample_rate, f0, f1, .. } => {
                nonzero(*samples)?;
                let rate = *sample_rate as f64;
                let dur = *samples as f64 / rate;
                let data = (0..*samples)
                    .map(|i| {
                        let t = i as f64 / rate;
                        (2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur))).sin()
                    })
                    .collect();
                let mut g = SignalGrid::new(vec![*samples], 1, data)?;
                g.sample_rate = Some(*sample_rate);
                g
            }
            Self::SinusoidMix { samples, components, .. } => {
                nonzero(*samples)?;
                let data = (0..*samples).map(|i| sinusoid_mix_value(components, i as f64 / *samples as f64)).collect();
                SignalGrid::new(vec![*samples], 1, data)?
            }
            Self::CheckerGradient { height, width, cell, .. } => {
                let (h, w) = (*height, *width);
                if h < 2 || w < 2 || *cell == 0 {
                    return Err(Error::InvalidParam(
                        "checker image needs at least 2x2 pixels and a nonzero cell".into(),
                    ));
                }
                let mut data = Vec::with_capacity(h * w);
                for i in 0..h {
                    for j in 0..w {
                        let ramp = (i + j) as f64 / (h + w - 2) as f64;
                        let check = ((i / cell + j / cell) % 2) as f64;
                        data.push(0.1 + 0.4 * ramp + 0.4 * check);
                    }
                }
                SignalGrid::new(vec![h, w], 1, data)?
            }
            Self::Phantom { size } => {
                nonzero(*size)?;
                let n = *size;
                let mut data = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        data.push(phantom_value(cell_center(j, n), -cell_center(i, n)).max(0.0));
                    }
                }
                SignalGrid::new(vec![n, n], 1, data)?
            }
            Self::Sphere { size, radius } => occupancy(*size, |x, y, z| x * x + y * y + z * z <= radius * radius)?,
            Self::Torus { size, major, minor } => occupancy(*size, |x, y, z| {
                let q = (x * x + y * y).sqrt() - major;
                q * q + z * z <= minor * minor
            })?,
        };
        let noise = match self {
            Self::Chirp { noise, .. } | Self::SinusoidMix { noise, .. } | Self::CheckerGradient { noise, .. } => *noise,
            _ => 0.0,
        };
        if noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = Normal::new(0.0, noise).map_err(|e| Error::InvalidParam(e.to_string()))?;
            for v in grid.values_mut() {
                *v += dist.sample(&mut rng);
            }
            grid.refresh_range();
        }
        Ok(grid)
    }
}

fn nonzero(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParam("signal size must be >= 1".into()));
    }
    Ok(())
}

pub fn sinusoid_mix_value(components: &[(f64, f64)], x: f64) -> f64 {
    components.iter().map(|(f, a)| a * (2.0 * PI * f * x).sin()).sum()
}

/// `(intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)`.
pub const PHANTOM_ELLIPSES: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Sum of the intensities of every ellipse containing `(x, y)`.
pub fn phantom_value(x: f64, y: f64) -> f64 {
    PHANTOM_ELLIPSES
        .iter()
        .filter(|e| {
            let (s, c) = e[5].to_radians().sin_cos();
            let (dx, dy) = (x - e[3], y - e[4]);
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            (u / e[1]).powi(2) + (v / e[2]).powi(2) <= 1.0
        })
        .map(|e| e[0])
        .sum()
}

fn occupancy(n: usize, inside: impl Fn(f64, f64, f64) -> bool) -> Result<SignalGrid> {
    nonzero(n)?;
    let mut data = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let hit = inside(cell_center(i, n), cell_center(j, n), cell_center(k, n));
                data.push(if hit { 1.0 } else { 0.0 });
            }
        }
    }
    SignalGrid::new(vec![n, n, n], 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_quarter_period() {
        assert!((sinusoid_mix_value(&[(1.0, 1.0)], 0.25) - 1.0).abs() < 1e-15);
        let g = SignalSpec::SinusoidMix { samples: 4, components: vec![(1.0, 1.0)], noise: 0.0 }.generate(0).unwrap();
        assert!((g.values()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn phantom_center_is_sum_of_covering_ellipses() {
        assert!((phantom_value(0.0, 0.0) - 0.2).abs() < 1e-12);
        assert_eq!(phantom_value(0.99, 0.99), 0.0);
        let g = SignalSpec::Phantom { size: 64 }.generate(0).unwrap();
        assert!(g.range().0 >= 0.0 && g.range().1 <= 1.0 + 1e-12);
    }

    #[test]
    fn sphere_centre_voxel_is_occupied() {
        let g = SignalSpec::Sphere { size: 16, radius: 0.5 }.generate(0).unwrap();
        assert_eq!(g.values()[(8 * 16 + 8) * 16 + 8], 1.0);
        assert_eq!(g.values()[0], 0.0);
    }

    #[test]
    fn noise_is_seeded() {
        let spec = SignalSpec::CheckerGradient { height: 8, width: 8, cell: 2, noise: 0.05 };
        assert_eq!(spec.generate(3).unwrap(), spec.generate(3).unwrap());
        assert_ne!(spec.generate(3).unwrap(), spec.generate(4).unwrap());
    }

    #[test]
    fn chirp_rate_metadata() {
        let g = SignalSpec::default_for("chirp").unwrap().generate(0).unwrap();
        assert_eq!(g.sample_rate, Some(4000));
        assert_eq!(g.values()[0], 0.0);
    }
}
