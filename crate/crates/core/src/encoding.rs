//! Positional encodings applied to coordinates before the first MLP layer.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn d_levels() -> usize {
    16
}
fn d_features() -> usize {
    32
}
fn d_sigma() -> f64 {
    10.0
}
fn d_omega_max() -> usize {
    128
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncodingSpec {
    #[default]
    Identity,
    /// `[sin(2^l πx), cos(2^l πx)]` for `l < levels`.
    Nerf {
        #[serde(default = "d_levels")]
        levels: usize,
    },
    /// `[cos(2π bᵀx), sin(2π bᵀx)]` with `b ~ N(0, σ²)`.
    Rff {
        #[serde(default = "d_features")]
        features: usize,
        #[serde(default = "d_sigma")]
        sigma: f64,
    },
    /// `[a cos(ωx_i), b sin(ωx_i)]` for `ω = 1..Ω` with learnable `a`, `b`.
    Fkan {
        #[serde(default = "d_omega_max")]
        omega_max: usize,
    },
}

impl EncodingSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EncodingSpec::Identity => "identity",
            EncodingSpec::Nerf { .. } => "nerf",
            EncodingSpec::Rff { .. } => "rff",
            EncodingSpec::Fkan { .. } => "fkan",
        }
    }

    pub fn from_name(name: &str) -> Option<EncodingSpec> {
        match name {
            "identity" => Some(EncodingSpec::Identity),
            "nerf" => Some(EncodingSpec::Nerf { levels: d_levels() }),
            "rff" => Some(EncodingSpec::Rff { features: d_features(), sigma: d_sigma() }),
            "fkan" => Some(EncodingSpec::Fkan { omega_max: d_omega_max() }),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            EncodingSpec::Identity => "identity".into(),
            EncodingSpec::Nerf { levels } if levels == d_levels() => "nerf".into(),
            EncodingSpec::Nerf { levels } => format!("nerf[levels={levels}]"),
            EncodingSpec::Rff { features, sigma } if features == d_features() && sigma == d_sigma() => "rff".into(),
            EncodingSpec::Rff { features, sigma } => format!("rff[features={features},sigma={sigma}]"),
            EncodingSpec::Fkan { omega_max } if omega_max == d_omega_max() => "fkan".into(),
            EncodingSpec::Fkan { omega_max } => format!("fkan[omega_max={omega_max}]"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EncodingSpec::Nerf { levels: 0 }
            | EncodingSpec::Rff { features: 0, .. }
            | EncodingSpec::Fkan { omega_max: 0 } => {
                Err(Error::InvalidParam(format!("{}: frequency count must be >= 1", self.name())))
            }
            EncodingSpec::Rff { sigma, .. } if !(sigma > 0.0) => {
                Err(Error::InvalidParam("rff: sigma must be > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Feature dimension for `d`-dimensional coordinates.
    pub fn output_dim(&self, d: usize) -> usize {
        match *self {
            EncodingSpec::Identity => d,
            EncodingSpec::Nerf { levels } => 2 * d * levels,
            EncodingSpec::Rff { features, .. } => 2 * features,
            EncodingSpec::Fkan { omega_max } => 2 * d * omega_max,
        }
    }

    /// Samples fixed state (RFF frequencies) and initial learnable
    /// coefficients (FKAN `[d, Ω, 2]`, std 1/√Ω).
    pub fn build<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> (Encoding, Option<Tensor>) {
        match *self {
            EncodingSpec::Identity => (Encoding::Identity { d }, None),
            EncodingSpec::Nerf { levels } => (Encoding::Nerf { d, levels }, None),
            EncodingSpec::Rff { features, sigma } => {
                let normal = Normal::new(0.0, sigma).expect("sigma validated");
                let b = (0..features * d).map(|_| normal.sample(rng)).collect();
                (Encoding::Rff { b: Tensor::matrix(features, d, b) }, None)
            }
            EncodingSpec::Fkan { omega_max } => {
                let normal = Normal::new(0.0, 1.0 / (omega_max as f64).sqrt()).expect("finite");
                let coeffs = (0..d * omega_max * 2).map(|_| normal.sample(rng)).collect();
                (Encoding::Fkan { d, omega_max }, Some(Tensor::new(vec![d, omega_max, 2], coeffs).unwrap()))
            }
        }
    }
}

/// A constructed encoding with any sampled state.
#[derive(Clone, Debug, PartialEq)]
pub enum Encoding {
    Identity { d: usize },
    Nerf { d: usize, levels: usize },
    Rff { b: Tensor },
    Fkan { d: usize, omega_max: usize },
}

impl Encoding {
    pub fn input_dim(&self) -> usize {
        match self {
            Encoding::Identity { d } | Encoding::Nerf { d, .. } | Encoding::Fkan { d, .. } => *d,
            Encoding::Rff { b } => b.shape()[1],
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoding::Identity { d } => *d,
            Encoding::Nerf { d, levels } => 2 * d * levels,
            Encoding::Rff { b } => 2 * b.shape()[0],
            Encoding::Fkan { d, omega_max } => 2 * d * omega_max,
        }
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, Encoding::Fkan { .. })
    }

    fn check_input(&self, shape: &[usize]) -> Result<(usize, usize)> {
        if shape.len() != 2 || shape[1] != self.input_dim() {
            return Err(Error::Shape(format!(
                "encode: coordinates {shape:?} for a {}-dimensional encoding",
                self.input_dim()
            )));
        }
        Ok((shape[0], shape[1]))
    }

    /// Records the encoding of `x: [batch, d]` on the tape. `coeffs` is the
    /// FKAN coefficient node and must be `Some` exactly for FKAN.
    pub fn apply(&self, tape: &mut Tape, x: Var, coeffs: Option<Var>) -> Result<Var> {
        let (batch, d) = self.check_input(tape.value(x).shape())?;
        let m = self.output_dim();
        match self {
            Encoding::Identity { .. } => Ok(x),
            Encoding::Nerf { levels, .. } => {
                let levels = *levels;
                let freqs: Vec<f64> = (0..levels).map(|l| 2f64.powi(l as i32) * PI).collect();
                let xt = tape.value(x);
                let mut out = vec![0.0; batch * m];
                for b in 0..batch {
                    for (l, w) in freqs.iter().enumerate() {
                        for i in 0..d {
                            let (s, c) = (w * xt.data()[b * d + i]).sin_cos();
                            let o = b * m + (l * d + i) * 2;
                            out[o] = s;
                            out[o + 1] = c;
                        }
                    }
                }
                let value = Tensor::matrix(batch, m, out);
                Ok(tape.custom(
                    "nerf",
                    &[x],
                    value,
                    Box::new(move |_, y, g| {
                        let mut gx = vec![0.0; batch * d];
                        for b in 0..batch {
                            for (l, w) in freqs.iter().enumerate() {
                                for i in 0..d {
                                    let o = b * m + (l * d + i) * 2;
                                    let (s, c) = (y.data()[o], y.data()[o + 1]);
                                    gx[b * d + i] += w * (g.data()[o] * c - g.data()[o + 1] * s);
                                }
                            }
                        }
                        vec![Some(Tensor::matrix(batch, d, gx))]
                    }),
                ))
            }
            Encoding::Rff { b } => {
                let bt = b.clone();
                let feats = bt.shape()[0];
                let proj = tape.value(x).matmul(&bt.transpose())?;
                let mut out = vec![0.0; batch * m];
                for r in 0..batch {
                    for f in 0..feats {
                        let (s, c) = (2.0 * PI * proj.data()[r * feats + f]).sin_cos();
                        out[r * m + 2 * f] = c;
                        out[r * m + 2 * f + 1] = s;
                    }
                }
                Ok(tape.custom(
                    "rff",
                    &[x],
                    Tensor::matrix(batch, m, out),
                    Box::new(move |_, y, g| {
                        // ∂/∂p of (cos 2πp, sin 2πp) = 2π(−sin, cos)
                        let mut gp = vec![0.0; batch * feats];
                        for r in 0..batch {
                            for f in 0..feats {
                                let o = r * m + 2 * f;
                                let (c, s) = (y.data()[o], y.data()[o + 1]);
                                gp[r * feats + f] = 2.0 * PI * (-g.data()[o] * s + g.data()[o + 1] * c);
                            }
                        }
                        let gx = Tensor::matrix(batch, feats, gp).matmul(&bt).unwrap();
                        vec![Some(gx)]
                    }),
                ))
            }
            Encoding::Fkan { omega_max, .. } => {
                let omega_max = *omega_max;
                let coeffs = coeffs.ok_or_else(|| Error::InvalidParam("fkan encoding needs coefficients".into()))?;
                let cs = tape.value(coeffs).shape().to_vec();
                if cs != [d, omega_max, 2] {
                    return Err(Error::Shape(format!("fkan coefficients {cs:?}, expected [{d}, {omega_max}, 2]")));
                }
                let (xt, ct) = (tape.value(x), tape.value(coeffs));
                let mut out = vec![0.0; batch * m];
                for r in 0..batch {
                    for i in 0..d {
                        let xv = xt.data()[r * d + i];
                        for w in 1..=omega_max {
                            let (s, c) = (w as f64 * xv).sin_cos();
                            let k = (i * omega_max + w - 1) * 2;
                            out[r * m + k] = ct.data()[k] * c;
                            out[r * m + k + 1] = ct.data()[k + 1] * s;
                        }
                    }
                }
                Ok(tape.custom(
                    "fkan",
                    &[x, coeffs],
                    Tensor::matrix(batch, m, out),
                    Box::new(move |inp, _, g| {
                        let (xt, ct) = (inp[0], inp[1]);
                        let mut gx = vec![0.0; batch * d];
                        let mut gc = vec![0.0; ct.len()];
                        for r in 0..batch {
                            for i in 0..d {
                                let xv = xt.data()[r * d + i];
                                for w in 1..=omega_max {
                                    let wf = w as f64;
                                    let (s, c) = (wf * xv).sin_cos();
                                    let k = (i * omega_max + w - 1) * 2;
                                    let (g0, g1) = (g.data()[r * m + k], g.data()[r * m + k + 1]);
                                    gc[k] += g0 * c;
                                    gc[k + 1] += g1 * s;
                                    gx[r * d + i] += wf * (-g0 * ct.data()[k] * s + g1 * ct.data()[k + 1] * c);
                                }
                            }
                        }
                        vec![Some(Tensor::matrix(batch, d, gx)), Some(Tensor::new(ct.shape().to_vec(), gc).unwrap())]
                    }),
                ))
            }
        }
    }

    /// Encodes without recording.
    pub fn encode(&self, x: &Tensor, coeffs: Option<&Tensor>) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let xv = tape.constant(x.clone());
        let cv = coeffs.map(|c| tape.constant(c.clone()));
        let out = self.apply(&mut tape, xv, cv)?;
        Ok(tape.value(out).clone())
    }

    /// Closed-form kernel `k(δ)` as a function of the coordinate difference.
    ///
    /// For FKAN this is the tabulated `Σ (a² + b²) cos(ω δ_i)`; see
    /// [`fkan_feature_kernel`] for the exact inner product of the features.
    pub fn kernel_closed_form(&self, delta: &[f64], coeffs: Option<&Tensor>) -> Result<f64> {
        if delta.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "kernel: δ of length {} for {}-d encoding",
                delta.len(),
                self.input_dim()
            )));
        }
        match self {
            Encoding::Identity { .. } => {
                Err(Error::Unsupported("identity encoding induces a non-stationary kernel".into()))
            }
            Encoding::Nerf { levels, .. } => Ok(delta
                .iter()
                .map(|&dx| (0..*levels).map(|l| (2f64.powi(l as i32) * PI * dx).cos()).sum::<f64>())
                .sum()),
            Encoding::Rff { b } => {
                let d = delta.len();
                Ok((0..b.shape()[0])
                    .map(|f| {
                        let p: f64 = (0..d).map(|i| b.data()[f * d + i] * delta[i]).sum();
                        (2.0 * PI * p).cos()
                    })
                    .sum())
            }
            Encoding::Fkan { omega_max, .. } => {
                let c = coeffs.ok_or_else(|| Error::InvalidParam("fkan kernel needs coefficients".into()))?;
                let mut k = 0.0;
                for (i, &dx) in delta.iter().enumerate() {
                    for w in 1..=*omega_max {
                        let o = (i * omega_max + w - 1) * 2;
                        let (a, b) = (c.data()[o], c.data()[o + 1]);
                        k += (a * a + b * b) * (w as f64 * dx).cos();
                    }
                }
                Ok(k)
            }
        }
    }
}

/// Exact inner product `γ(x₁)·γ(x₂)` of FKAN features:
/// `Σ ½(a² + b²) cos(ω(x₁ − x₂)) + ½(a² − b²) cos(ω(x₁ + x₂))`.
pub fn fkan_feature_kernel(x1: &[f64], x2: &[f64], coeffs: &Tensor) -> f64 {
    let omega_max = coeffs.shape()[1];
    let mut k = 0.0;
    for (i, (&p, &q)) in x1.iter().zip(x2).enumerate() {
        for w in 1..=omega_max {
            let o = (i * omega_max + w - 1) * 2;
            let (a, b) = (coeffs.data()[o], coeffs.data()[o + 1]);
            let wf = w as f64;
            k += 0.5 * (a * a + b * b) * (wf * (p - q)).cos() + 0.5 * (a * a - b * b) * (wf * (p + q)).cos();
        }
    }
    k
}

/// Gradient of `Σ upstream ⊙ γ(x)` with respect to FKAN coefficients.
pub fn fkan_param_grads(encoding: &Encoding, x: &Tensor, coeffs: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if !encoding.is_learnable() {
        return Err(Error::Unsupported("only fkan has learnable coefficients".into()));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let cv = tape.param(0, coeffs.clone());
    let out = encoding.apply(&mut tape, xv, Some(cv))?;
    let grads = tape.backward_with_seed(out, upstream.clone())?;
    Ok(grads.param(0).unwrap().clone())
}
