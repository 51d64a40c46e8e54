//! Fixed nonlinearities for coordinate MLPs.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::Elementwise;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frequency used by sine families when the config leaves it unset.
pub const DEFAULT_OMEGA: f64 = 30.0;
/// Frequency used by sine families on audio tasks when unset.
pub const AUDIO_OMEGA: f64 = 3000.0;

fn d_prelu() -> f64 {
    0.01
}
fn d_sigma() -> f64 {
    0.1
}
fn d_one() -> f64 {
    1.0
}
fn d_zero() -> f64 {
    0.0
}
fn d_super_n() -> f64 {
    2.0
}
fn d_gabor_omega() -> f64 {
    20.0
}
fn d_gabor_a() -> f64 {
    100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    Relu,
    Prelu {
        #[serde(default = "d_prelu")]
        a: f64,
    },
    /// `sin(ωx)`.
    Sine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
    },
    /// `a·sin(ωbx + c) + d`.
    ScaledSine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
        #[serde(default = "d_one")]
        a: f64,
        #[serde(default = "d_one")]
        b: f64,
        #[serde(default = "d_zero")]
        c: f64,
        #[serde(default = "d_zero")]
        d: f64,
    },
    /// `exp(−x²/2σ²)`.
    Gaussian {
        #[serde(default = "d_sigma")]
        sigma: f64,
    },
    /// `exp(−|x|/σ)`.
    Laplacian {
        #[serde(default = "d_sigma")]
        sigma: f64,
    },
    /// `exp(−(|x|/σ)^{2n})`.
    SuperGaussian {
        #[serde(default = "d_sigma")]
        sigma: f64,
        #[serde(default = "d_super_n")]
        n: f64,
    },
    /// `exp(−a x²)·cos(ωx)`.
    Gabor {
        #[serde(default = "d_gabor_omega")]
        omega: f64,
        #[serde(default = "d_gabor_a")]
        a: f64,
    },
    /// `sin(πx)/(πx)`.
    Sinc,
    /// `exp(sin(ax))`.
    ExpSin {
        #[serde(default = "d_one")]
        a: f64,
    },
    Sigmoid,
    Tanh,
    /// `1/(1 + (ax)²)`.
    Quadratic {
        #[serde(default = "d_one")]
        a: f64,
    },
    /// `1/√(1 + (ax)²)`.
    MultiQuadratic {
        #[serde(default = "d_one")]
        a: f64,
    },
}

/// Global Lipschitz and smoothness constants where a closed form is known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub lipschitz: Option<f64>,
    pub smooth: Option<f64>,
}

impl Activation {
    pub const FAMILIES: [&'static str; 14] = [
        "relu",
        "prelu",
        "sine",
        "scaled_sine",
        "gaussian",
        "laplacian",
        "super_gaussian",
        "gabor",
        "sinc",
        "exp_sin",
        "sigmoid",
        "tanh",
        "quadratic",
        "multi_quadratic",
    ];

    /// Every family with its default parameters.
    pub fn all_defaults() -> Vec<Activation> {
        vec![
            Activation::Relu,
            Activation::Prelu { a: d_prelu() },
            Activation::Sine { omega: None },
            Activation::ScaledSine { omega: None, a: 1.0, b: 1.0, c: 0.0, d: 0.0 },
            Activation::Gaussian { sigma: d_sigma() },
            Activation::Laplacian { sigma: d_sigma() },
            Activation::SuperGaussian { sigma: d_sigma(), n: d_super_n() },
            Activation::Gabor { omega: d_gabor_omega(), a: d_gabor_a() },
            Activation::Sinc,
            Activation::ExpSin { a: 1.0 },
            Activation::Sigmoid,
            Activation::Tanh,
            Activation::Quadratic { a: 1.0 },
            Activation::MultiQuadratic { a: 1.0 },
        ]
    }

    pub fn family(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Prelu { .. } => "prelu",
            Activation::Sine { .. } => "sine",
            Activation::ScaledSine { .. } => "scaled_sine",
            Activation::Gaussian { .. } => "gaussian",
            Activation::Laplacian { .. } => "laplacian",
            Activation::SuperGaussian { .. } => "super_gaussian",
            Activation::Gabor { .. } => "gabor",
            Activation::Sinc => "sinc",
            Activation::ExpSin { .. } => "exp_sin",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Quadratic { .. } => "quadratic",
            Activation::MultiQuadratic { .. } => "multi_quadratic",
        }
    }

    /// Parses a bare family name into its default parameterization.
    pub fn from_family(name: &str) -> Option<Activation> {
        Self::all_defaults().into_iter().find(|a| a.family() == name)
    }

    /// Effective ω of the sine families (ignored elsewhere).
    pub fn omega(&self) -> f64 {
        match self {
            Activation::Sine { omega } | Activation::ScaledSine { omega, .. } => omega.unwrap_or(DEFAULT_OMEGA),
            Activation::Gabor { omega, .. } => *omega,
            _ => DEFAULT_OMEGA,
        }
    }

    pub fn is_sine(&self) -> bool {
        matches!(self, Activation::Sine { .. } | Activation::ScaledSine { .. })
    }

    /// The activation applied after hidden layers. Sine frequencies act on
    /// the first layer only; later layers keep the image default, so a large
    /// audio ω does not also scale every hidden weight update.
    pub fn hidden(&self) -> Activation {
        match self {
            Activation::Sine { .. } => Activation::Sine { omega: Some(DEFAULT_OMEGA) },
            Activation::ScaledSine { a, b, c, d, .. } => {
                Activation::ScaledSine { omega: Some(DEFAULT_OMEGA), a: *a, b: *b, c: *c, d: *d }
            }
            other => other.clone(),
        }
    }

    /// Fills an unset sine frequency with the task-dependent default.
    pub fn resolved(&self, audio: bool) -> Activation {
        let fill = |o: &Option<f64>| Some(o.unwrap_or(if audio { AUDIO_OMEGA } else { DEFAULT_OMEGA }));
        match self {
            Activation::Sine { omega } => Activation::Sine { omega: fill(omega) },
            Activation::ScaledSine { omega, a, b, c, d } => {
                Activation::ScaledSine { omega: fill(omega), a: *a, b: *b, c: *c, d: *d }
            }
            other => other.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParam(format!("{}: {what}", self.family())));
        match *self {
            Activation::Sine { omega } | Activation::ScaledSine { omega, .. } if omega.is_some_and(|w| !(w > 0.0)) => {
                bad("omega must be > 0")
            }
            Activation::Gaussian { sigma }
            | Activation::Laplacian { sigma }
            | Activation::SuperGaussian { sigma, .. }
                if !(sigma > 0.0) =>
            {
                bad("sigma must be > 0")
            }
            Activation::SuperGaussian { n, .. } if !(n > 0.0) => bad("n must be > 0"),
            Activation::Quadratic { a } | Activation::MultiQuadratic { a } if a == 0.0 || !a.is_finite() => {
                bad("a must be nonzero")
            }
            Activation::Gabor { a, .. } if !(a >= 0.0) => bad("a must be >= 0"),
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    pub fn grad(&self, x: f64) -> f64 {
        self.eval(x).1
    }

    pub fn act_value(&self, x: &Tensor) -> Tensor {
        x.map(|v| self.value(v))
    }

    pub fn act_grad(&self, x: &Tensor) -> Tensor {
        x.map(|v| self.grad(v))
    }

    pub fn constants(&self) -> Constants {
        let both = |l: f64, s: f64| Constants { lipschitz: Some(l), smooth: Some(s) };
        match *self {
            Activation::Relu => Constants { lipschitz: Some(1.0), smooth: None },
            Activation::Prelu { a } => Constants { lipschitz: Some(a.abs().max(1.0)), smooth: None },
            Activation::Sine { .. } => {
                let w = self.omega();
                both(w.abs(), w * w)
            }
            Activation::ScaledSine { a, b, .. } => {
                let w = self.omega();
                both((a * w * b).abs(), (a * w * w * b * b).abs())
            }
            Activation::Gaussian { sigma } => both((-0.5f64).exp() / sigma, 2.0 / (sigma * sigma) * (-1.5f64).exp()),
            Activation::Sigmoid => both(0.25, 1.0 / (6.0 * 3f64.sqrt())),
            Activation::Tanh => both(1.0, 4.0 / (3.0 * 3f64.sqrt())),
            _ => Constants { lipschitz: None, smooth: None },
        }
    }

    /// Short label with non-default parameters, e.g. `sine[omega=300]`.
    pub fn label(&self) -> String {
        let params: Vec<(&str, f64)> = match *self {
            Activation::Prelu { a } => vec![("a", a)],
            Activation::Sine { omega } => omega.map(|w| vec![("omega", w)]).unwrap_or_default(),
            Activation::ScaledSine { omega, a, b, c, d } => {
                let mut p: Vec<(&str, f64)> = omega.map(|w| vec![("omega", w)]).unwrap_or_default();
                p.extend([("a", a), ("b", b), ("c", c), ("d", d)]);
                p
            }
            Activation::Gaussian { sigma } | Activation::Laplacian { sigma } => vec![("sigma", sigma)],
            Activation::SuperGaussian { sigma, n } => vec![("sigma", sigma), ("n", n)],
            Activation::Gabor { omega, a } => vec![("omega", omega), ("a", a)],
            Activation::ExpSin { a } | Activation::Quadratic { a } | Activation::MultiQuadratic { a } => {
                vec![("a", a)]
            }
            Activation::Relu | Activation::Sinc | Activation::Sigmoid | Activation::Tanh => vec![],
        };
        if Activation::from_family(self.family()).as_ref() == Some(self) {
            return self.family().to_string();
        }
        if params.is_empty() {
            return self.family().to_string();
        }
        let body: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}[{}]", self.family(), body.join(","))
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Elementwise for Activation {
    fn name(&self) -> &'static str {
        self.family()
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        match *self {
            Activation::Relu => {
                if x > 0.0 {
                    (x, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Prelu { a } => {
                if x > 0.0 {
                    (x, 1.0)
                } else {
                    (a * x, a)
                }
            }
            Activation::Sine { .. } => {
                let w = self.omega();
                ((w * x).sin(), w * (w * x).cos())
            }
            Activation::ScaledSine { a, b, c, d, .. } => {
                let w = self.omega();
                let arg = w * b * x + c;
                (a * arg.sin() + d, a * w * b * arg.cos())
            }
            Activation::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                let f = (-x * x / (2.0 * s2)).exp();
                (f, -x / s2 * f)
            }
            Activation::Laplacian { sigma } => {
                let f = (-x.abs() / sigma).exp();
                (f, if x == 0.0 { 0.0 } else { -x.signum() * f / sigma })
            }
            Activation::SuperGaussian { sigma, n } => {
                let u = x.abs() / sigma;
                let p = u.powf(2.0 * n);
                let f = (-p).exp();
                // d/dx u^{2n} = 2n u^{2n-1} sign(x)/σ
                let dp = if x == 0.0 { 0.0 } else { 2.0 * n * p / u * x.signum() / sigma };
                (f, -dp * f)
            }
            Activation::Gabor { omega, a } => {
                let env = (-a * x * x).exp();
                let (s, c) = (omega * x).sin_cos();
                (env * c, -env * (2.0 * a * x * c + omega * s))
            }
            Activation::Sinc => {
                let px = PI * x;
                if px.abs() < 1e-4 {
                    // Taylor: 1 − (πx)²/6 + (πx)⁴/120; derivative −π²x/3 + π⁴x³/30
                    let p2 = px * px;
                    (1.0 - p2 / 6.0 + p2 * p2 / 120.0, PI * (-px / 3.0 + p2 * px / 30.0))
                } else {
                    let (s, c) = px.sin_cos();
                    (s / px, (px * c - s) / (PI * x * x))
                }
            }
            Activation::ExpSin { a } => {
                let (s, c) = (a * x).sin_cos();
                let f = s.exp();
                (f, a * f * c)
            }
            Activation::Sigmoid => {
                let f = sigmoid(x);
                (f, f * (1.0 - f))
            }
            Activation::Tanh => {
                let f = x.tanh();
                (f, 1.0 - f * f)
            }
            Activation::Quadratic { a } => {
                let q = 1.0 + a * a * x * x;
                (1.0 / q, -2.0 * a * a * x / (q * q))
            }
            Activation::MultiQuadratic { a } => {
                let q = 1.0 + a * a * x * x;
                let r = q.sqrt();
                (1.0 / r, -a * a * x / (q * r))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        assert_eq!(Activation::Relu.value(-2.0), 0.0);
        assert_eq!(Activation::Relu.value(3.0), 3.0);
        assert_eq!(Activation::Relu.grad(0.0), 0.0);
        let g = Activation::Gaussian { sigma: 0.1 };
        assert_eq!(g.value(0.0), 1.0);
        assert!((g.value(0.1) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(g.grad(0.0), 0.0);
        let s = Activation::Sine { omega: Some(30.0) };
        assert!((s.value(PI / 60.0) - 1.0).abs() < 1e-15);
        assert_eq!(s.grad(0.0), 30.0);
        assert_eq!(Activation::Sinc.value(0.0), 1.0);
    }

    #[test]
    fn table_constants() {
        let c = Activation::Sine { omega: Some(30.0) }.constants();
        assert_eq!((c.lipschitz, c.smooth), (Some(30.0), Some(900.0)));
        let c = Activation::Gaussian { sigma: 0.1 }.constants();
        assert!((c.lipschitz.unwrap() - 10.0 * (-0.5f64).exp()).abs() < 1e-12);
        assert!((c.smooth.unwrap() - 200.0 * (-1.5f64).exp()).abs() < 1e-9);
        let c = Activation::Relu.constants();
        assert_eq!((c.lipschitz, c.smooth), (Some(1.0), None));
        assert_eq!(Activation::Sinc.constants().lipschitz, None);
    }

    #[test]
    fn audio_resolution_only_fills_unset_omega() {
        let s = Activation::Sine { omega: None };
        assert_eq!(s.resolved(true).omega(), AUDIO_OMEGA);
        assert_eq!(s.resolved(false).omega(), DEFAULT_OMEGA);
        let s = Activation::Sine { omega: Some(3.0) };
        assert_eq!(s.resolved(true).omega(), 3.0);
    }

    #[test]
    fn labels() {
        assert_eq!(Activation::Relu.label(), "relu");
        assert_eq!(Activation::Sine { omega: Some(300.0) }.label(), "sine[omega=300]");
        assert_eq!(Activation::Gaussian { sigma: 0.1 }.label(), "gaussian");
        assert_eq!(Activation::Gaussian { sigma: 0.5 }.label(), "gaussian[sigma=0.5]");
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(Activation::Gaussian { sigma: 0.0 }.validate().is_err());
        assert!(Activation::Quadratic { a: 0.0 }.validate().is_err());
        assert!(Activation::Sine { omega: Some(-1.0) }.validate().is_err());
        for a in Activation::all_defaults() {
            a.validate().unwrap();
        }
    }

    #[test]
    fn serde_names_and_defaults() {
        let a: Activation = serde_json::from_str(r#"{"family":"gaussian"}"#).unwrap();
        assert_eq!(a, Activation::Gaussian { sigma: 0.1 });
        let err = serde_json::from_str::<Activation>(r#"{"family":"gaussain"}"#).unwrap_err().to_string();
        assert!(err.contains("gaussian"), "{err}");
        assert!(serde_json::from_str::<Activation>(r#"{"family":"sine","omgea":3}"#).is_err());
    }
}
