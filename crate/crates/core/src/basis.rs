//! Learnable edge functions for KAN layers.
//!
//! A layer with `n_in` inputs and `n_out` outputs owns a coefficient tensor
//! of shape `[n_out, n_in, coeff_count]` and computes
//! `out[b, j] = Σ_i φ_{j,i}(x[b, i])`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    Bspline,
    Chebyshev,
    Chebyshev2,
    Gegenbauer,
    Hermite,
    Jacobi,
    Laguerre,
    Legendre,
    Taylor,
    Bessel,
    Fibonacci,
    Lucas,
    Fourier,
    SineBasis,
    MexicanHat,
    Meyer,
    Morlet,
    Dog,
    Shannon,
    Bsrbf,
    Grbf,
    Rbf,
}

impl BasisFamily {
    pub const ALL: [BasisFamily; 22] = [
        BasisFamily::Bspline,
        BasisFamily::Chebyshev,
        BasisFamily::Chebyshev2,
        BasisFamily::Gegenbauer,
        BasisFamily::Hermite,
        BasisFamily::Jacobi,
        BasisFamily::Laguerre,
        BasisFamily::Legendre,
        BasisFamily::Taylor,
        BasisFamily::Bessel,
        BasisFamily::Fibonacci,
        BasisFamily::Lucas,
        BasisFamily::Fourier,
        BasisFamily::SineBasis,
        BasisFamily::MexicanHat,
        BasisFamily::Meyer,
        BasisFamily::Morlet,
        BasisFamily::Dog,
        BasisFamily::Shannon,
        BasisFamily::Bsrbf,
        BasisFamily::Grbf,
        BasisFamily::Rbf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BasisFamily::Bspline => "bspline",
            BasisFamily::Chebyshev => "chebyshev",
            BasisFamily::Chebyshev2 => "chebyshev2",
            BasisFamily::Gegenbauer => "gegenbauer",
            BasisFamily::Hermite => "hermite",
            BasisFamily::Jacobi => "jacobi",
            BasisFamily::Laguerre => "laguerre",
            BasisFamily::Legendre => "legendre",
            BasisFamily::Taylor => "taylor",
            BasisFamily::Bessel => "bessel",
            BasisFamily::Fibonacci => "fibonacci",
            BasisFamily::Lucas => "lucas",
            BasisFamily::Fourier => "fourier",
            BasisFamily::SineBasis => "sine_basis",
            BasisFamily::MexicanHat => "mexican_hat",
            BasisFamily::Meyer => "meyer",
            BasisFamily::Morlet => "morlet",
            BasisFamily::Dog => "dog",
            BasisFamily::Shannon => "shannon",
            BasisFamily::Bsrbf => "bsrbf",
            BasisFamily::Grbf => "grbf",
            BasisFamily::Rbf => "rbf",
        }
    }

    pub fn is_polynomial(self) -> bool {
        use BasisFamily::*;
        matches!(
            self,
            Chebyshev
                | Chebyshev2
                | Gegenbauer
                | Hermite
                | Jacobi
                | Laguerre
                | Legendre
                | Taylor
                | Bessel
                | Fibonacci
                | Lucas
        )
    }

    pub fn is_wavelet(self) -> bool {
        use BasisFamily::*;
        matches!(self, MexicanHat | Meyer | Morlet | Dog | Shannon)
    }

    /// Families whose layer output is linear in the full coefficient tensor.
    pub fn is_linear_in_coeffs(self) -> bool {
        !(self.is_wavelet() || matches!(self, BasisFamily::SineBasis | BasisFamily::Bspline))
    }
}

fn d_degree() -> usize {
    4
}
fn d_grid() -> usize {
    5
}
fn d_order() -> usize {
    3
}
fn d_min() -> f64 {
    -1.0
}
fn d_max() -> f64 {
    1.0
}
fn d_omega0() -> f64 {
    5.0
}
fn d_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub family: BasisFamily,
    /// Maximum polynomial degree or number of frequencies.
    #[serde(default = "d_degree")]
    pub degree: usize,
    /// Grid intervals (B-spline family) or grid points (radial families).
    #[serde(default = "d_grid")]
    pub grid: usize,
    /// Spline order.
    #[serde(default = "d_order")]
    pub order: usize,
    #[serde(default = "d_min")]
    pub grid_min: f64,
    #[serde(default = "d_max")]
    pub grid_max: f64,
    /// Jacobi α (default 1), Gegenbauer α (default 1.5), Laguerre α (default 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Jacobi β (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "d_omega0")]
    pub omega0: f64,
    /// Apply `tanh` to inputs of polynomial families.
    #[serde(default = "d_true")]
    pub squash: bool,
}

impl BasisSpec {
    pub fn new(family: BasisFamily) -> Self {
        Self {
            family,
            degree: d_degree(),
            grid: d_grid(),
            order: d_order(),
            grid_min: d_min(),
            grid_max: d_max(),
            alpha: None,
            beta: None,
            omega0: d_omega0(),
            squash: true,
        }
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree;
        self
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_squash(mut self, squash: bool) -> Self {
        self.squash = squash;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(match self.family {
            BasisFamily::Gegenbauer => 1.5,
            BasisFamily::Laguerre => 0.0,
            _ => 1.0,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(1.0)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        use BasisFamily::*;
        match self.family {
            Bspline => {
                parts.push(format!("grid={}", self.grid));
                parts.push(format!("order={}", self.order));
            }
            Bsrbf | Grbf | Rbf => parts.push(format!("grid={}", self.grid)),
            f if f.is_wavelet() => {}
            _ => parts.push(format!("degree={}", self.degree)),
        }
        if parts.is_empty() {
            return self.family.name().to_string();
        }
        format!("{}[{}]", self.family.name(), parts.join(","))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(format!("{}: {m}", self.family.name())));
        if self.degree < 1 {
            return bad("degree must be >= 1".into());
        }
        if matches!(self.family, BasisFamily::Grbf | BasisFamily::Rbf) && self.grid < 2 {
            return bad("grid must be >= 2".into());
        }
        if matches!(self.family, BasisFamily::Bspline | BasisFamily::Bsrbf) && (self.grid < 1 || self.order < 1) {
            return bad("grid and order must be >= 1".into());
        }
        if !(self.grid_max > self.grid_min) {
            return bad(format!("empty grid range [{}, {}]", self.grid_min, self.grid_max));
        }
        if self.family == BasisFamily::Jacobi && (self.alpha() <= -1.0 || self.beta() <= -1.0) {
            return bad("alpha and beta must be > -1".into());
        }
        if self.family == BasisFamily::Gegenbauer && self.alpha() <= -0.5 {
            return bad("alpha must be > -1/2".into());
        }
        Ok(())
    }

    /// Number of functions in the feature expansion of linear families.
    pub fn feature_count(&self) -> usize {
        use BasisFamily::*;
        match self.family {
            Bspline | Bsrbf => self.grid + self.order,
            Fourier => 2 * self.degree,
            Grbf | Rbf => self.grid,
            SineBasis => self.degree,
            f if f.is_wavelet() => 1,
            _ => self.degree + 1,
        }
    }

    /// Coefficients per edge.
    pub fn coeff_count(&self) -> usize {
        use BasisFamily::*;
        match self.family {
            Bspline => 2 + self.grid + self.order,
            SineBasis => 3 * self.degree,
            f if f.is_wavelet() => 3,
            _ => self.feature_count(),
        }
    }

    fn spacing(&self) -> f64 {
        (self.grid_max - self.grid_min) / self.grid as f64
    }

    /// Extended uniform knot vector with `order` extra intervals per side.
    pub fn knots(&self) -> Vec<f64> {
        let h = self.spacing();
        let k = self.order as isize;
        (-k..=(self.grid as isize + k)).map(|j| self.grid_min + j as f64 * h).collect()
    }

    fn radial_centers(&self) -> Vec<f64> {
        let g = self.grid;
        (0..g).map(|i| self.grid_min + (self.grid_max - self.grid_min) * i as f64 / (g - 1) as f64).collect()
    }

    /// Features `F_k(x)` and derivatives `F_k'(x)` of a linear family.
    pub fn features(&self, x: f64, f: &mut [f64], df: &mut [f64]) {
        use BasisFamily::*;
        match self.family {
            Bspline => {
                let knots = self.knots();
                bspline_eval(&knots, self.order, x, f, df);
            }
            Bsrbf => {
                let knots = self.knots();
                bspline_eval(&knots, self.order, x, f, df);
                let h = self.spacing();
                let k = self.order;
                for n in 0..f.len() {
                    let c = 0.5 * (knots[n] + knots[n + k + 1]);
                    let z = (x - c) / h;
                    let e = (-z * z).exp();
                    f[n] += e;
                    df[n] += -2.0 * z / h * e;
                }
            }
            Grbf | Rbf => {
                let width =
                    if self.family == Rbf { (self.grid_max - self.grid_min) / (self.grid - 1) as f64 } else { 1.0 };
                for (i, c) in self.radial_centers().into_iter().enumerate() {
                    let z = (x - c) / width;
                    let e = (-z * z).exp();
                    f[i] = e;
                    df[i] = -2.0 * z / width * e;
                }
            }
            Fourier => {
                for k in 1..=self.degree {
                    let kf = k as f64;
                    let (s, c) = (kf * x).sin_cos();
                    f[2 * (k - 1)] = c;
                    f[2 * (k - 1) + 1] = s;
                    df[2 * (k - 1)] = -kf * s;
                    df[2 * (k - 1) + 1] = kf * c;
                }
            }
            fam if fam.is_polynomial() => self.polynomial(x, f, df),
            _ => unreachable!("features() called on edge-function family"),
        }
    }

    /// Three-term recurrence `p_n = (A x + B) p_{n−1} − C p_{n−2}`.
    fn polynomial(&self, x: f64, f: &mut [f64], df: &mut [f64]) {
        use BasisFamily::*;
        let (a, b) = (self.alpha(), self.beta());
        let (p0, p1, dp1) = match self.family {
            Chebyshev | Legendre | Taylor => (1.0, x, 1.0),
            Chebyshev2 | Hermite => (1.0, 2.0 * x, 2.0),
            Gegenbauer => (1.0, 2.0 * a * x, 2.0 * a),
            Jacobi => (1.0, 0.5 * ((a - b) + (a + b + 2.0) * x), 0.5 * (a + b + 2.0)),
            Laguerre => (1.0, 1.0 + a - x, -1.0),
            Bessel => (1.0, x + 1.0, 1.0),
            Fibonacci => (0.0, 1.0, 0.0),
            Lucas => (2.0, x, 1.0),
            _ => unreachable!(),
        };
        f[0] = p0;
        df[0] = 0.0;
        if f.len() > 1 {
            f[1] = p1;
            df[1] = dp1;
        }
        for n in 2..f.len() {
            let nf = n as f64;
            let (ca, cb, cc) = match self.family {
                Chebyshev | Chebyshev2 => (2.0, 0.0, 1.0),
                Gegenbauer => (2.0 * (nf - 1.0 + a) / nf, 0.0, (nf + 2.0 * a - 2.0) / nf),
                Hermite => (2.0, 0.0, 2.0 * (nf - 1.0)),
                Jacobi => {
                    let s = 2.0 * nf + a + b;
                    let den = 2.0 * nf * (nf + a + b) * (s - 2.0);
                    (
                        (s - 1.0) * s * (s - 2.0) / den,
                        (s - 1.0) * (a * a - b * b) / den,
                        2.0 * (nf + a - 1.0) * (nf + b - 1.0) * s / den,
                    )
                }
                Laguerre => (-1.0 / nf, (2.0 * nf - 1.0 + a) / nf, (nf - 1.0 + a) / nf),
                Legendre => ((2.0 * nf - 1.0) / nf, 0.0, (nf - 1.0) / nf),
                Taylor => (1.0, 0.0, 0.0),
                Bessel => (2.0 * nf - 1.0, 0.0, -1.0),
                Fibonacci | Lucas => (1.0, 0.0, -1.0),
                _ => unreachable!(),
            };
            f[n] = (ca * x + cb) * f[n - 1] - cc * f[n - 2];
            df[n] = ca * f[n - 1] + (ca * x + cb) * df[n - 1] - cc * df[n - 2];
        }
    }

    /// Edge function `φ(x; c)` for wavelet and sine families. Returns the
    /// value and `∂φ/∂x`, and writes `∂φ/∂c` into `dc`.
    fn edge(&self, x: f64, c: &[f64], dc: &mut [f64]) -> (f64, f64) {
        if self.family == BasisFamily::SineBasis {
            let p = self.degree;
            let (mut v, mut dx) = (0.0, 0.0);
            for k in 0..p {
                let (amp, w, ph) = (c[k], c[p + k], c[2 * p + k]);
                let (s, co) = (w * x + ph).sin_cos();
                v += amp * s;
                dx += amp * w * co;
                dc[k] = s;
                dc[p + k] = amp * co * x;
                dc[2 * p + k] = amp * co;
            }
            return (v, dx);
        }
        let (w, t, s) = (c[0], c[1], c[2]);
        let u = (x - t) / s;
        let (psi, dpsi) = wavelet(self.family, self.omega0, u);
        dc[0] = psi;
        dc[1] = -w * dpsi / s;
        dc[2] = -w * dpsi * u / s;
        (w * psi, w * dpsi / s)
    }

    /// Random initial coefficients for a layer, shape `[n_out, n_in, coeff_count]`.
    pub fn init_coeffs<R: Rng + ?Sized>(&self, n_in: usize, n_out: usize, rng: &mut R) -> Tensor {
        let cc = self.coeff_count();
        let std = 1.0 / ((n_in * self.feature_count()) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut data = Vec::with_capacity(n_out * n_in * cc);
        for _ in 0..n_out * n_in {
            match self.family {
                BasisFamily::Bspline => {
                    data.push(normal.sample(rng));
                    data.push(1.0);
                    data.extend((0..cc - 2).map(|_| normal.sample(rng)));
                }
                BasisFamily::SineBasis => {
                    let p = self.degree;
                    data.extend((0..p).map(|_| normal.sample(rng)));
                    data.extend((1..=p).map(|k| k as f64));
                    data.extend((0..p).map(|_| rng.random_range(-PI..PI)));
                }
                f if f.is_wavelet() => {
                    data.push(normal.sample(rng));
                    data.push(rng.random_range(-1.0..1.0));
                    data.push(1.0);
                }
                _ => data.extend((0..cc).map(|_| normal.sample(rng))),
            }
        }
        Tensor::new(vec![n_out, n_in, cc], data).expect("coefficient shape")
    }

    /// Records one KAN layer on the tape. `x: [batch, n_in]`,
    /// `coeffs: [n_out, n_in, coeff_count]` → `[batch, n_out]`.
    pub fn layer(&self, tape: &mut Tape, x: Var, coeffs: Var) -> Result<Var> {
        let (xs, cs) = (tape.value(x).shape().to_vec(), tape.value(coeffs).shape().to_vec());
        let cc = self.coeff_count();
        if xs.len() != 2 || cs.len() != 3 || cs[1] != xs[1] || cs[2] != cc {
            return Err(Error::Shape(format!(
                "{} layer: input {xs:?} with coefficients {cs:?} (expected [_, {}, {cc}])",
                self.family.name(),
                xs.get(1).copied().unwrap_or(0)
            )));
        }
        let (n_out, n_in) = (cs[0], cs[1]);
        let fam = self.family;
        if fam.is_wavelet() || fam == BasisFamily::SineBasis {
            return Ok(self.edge_layer(tape, x, coeffs));
        }
        let input =
            if fam.is_polynomial() && self.squash { tape.map(x, &crate::activation::Activation::Tanh) } else { x };
        let feats = self.expand(tape, input);
        let k = self.feature_count();
        if fam == BasisFamily::Bspline {
            let flat = tape.reshape(coeffs, &[n_out * n_in, cc])?;
            let wb = tape.slice(flat, 1, 0, 1)?;
            let wb = tape.reshape(wb, &[n_out, n_in])?;
            let ws = tape.slice(flat, 1, 1, 2)?;
            let c = tape.slice(flat, 1, 2, cc)?;
            let eff = tape.mul(c, ws)?;
            let eff = tape.reshape(eff, &[n_out, n_in * k])?;
            let spline = tape.matmul_nt(feats, eff)?;
            let silu = tape.map(x, &Silu);
            let base = tape.matmul_nt(silu, wb)?;
            return tape.add(spline, base);
        }
        let w = tape.reshape(coeffs, &[n_out, n_in * k])?;
        tape.matmul_nt(feats, w)
    }

    /// `[batch, n_in] → [batch, n_in·K]` feature expansion.
    fn expand(&self, tape: &mut Tape, x: Var) -> Var {
        let t = tape.value(x);
        let (batch, n_in) = t.as_matrix_dims();
        let k = self.feature_count();
        let mut f = vec![0.0; batch * n_in * k];
        let mut df = vec![0.0; batch * n_in * k];
        for (idx, &xv) in t.data().iter().enumerate() {
            self.features(xv, &mut f[idx * k..(idx + 1) * k], &mut df[idx * k..(idx + 1) * k]);
        }
        let value = Tensor::matrix(batch, n_in * k, f);
        tape.custom(
            "basis_expand",
            &[x],
            value,
            Box::new(move |inp, _, g| {
                let gx: Vec<f64> = (0..batch * n_in)
                    .map(|idx| {
                        let span = idx * k..(idx + 1) * k;
                        g.data()[span.clone()].iter().zip(&df[span]).map(|(a, b)| a * b).sum()
                    })
                    .collect();
                vec![Some(Tensor::new(inp[0].shape().to_vec(), gx).unwrap())]
            }),
        )
    }

    fn edge_layer(&self, tape: &mut Tape, x: Var, coeffs: Var) -> Var {
        let (xt, ct) = (tape.value(x), tape.value(coeffs));
        let (batch, n_in) = xt.as_matrix_dims();
        let n_out = ct.shape()[0];
        let cc = self.coeff_count();
        let mut scratch = vec![0.0; cc];
        let mut out = vec![0.0; batch * n_out];
        for b in 0..batch {
            for j in 0..n_out {
                let mut acc = 0.0;
                for i in 0..n_in {
                    let c = &ct.data()[(j * n_in + i) * cc..(j * n_in + i + 1) * cc];
                    acc += self.edge(xt.data()[b * n_in + i], c, &mut scratch).0;
                }
                out[b * n_out + j] = acc;
            }
        }
        let spec = self.clone();
        tape.custom(
            "basis_edge",
            &[x, coeffs],
            Tensor::matrix(batch, n_out, out),
            Box::new(move |inp, _, g| {
                let (xt, ct) = (inp[0], inp[1]);
                let mut gx = vec![0.0; batch * n_in];
                let mut gc = vec![0.0; ct.len()];
                let mut dc = vec![0.0; cc];
                for b in 0..batch {
                    for j in 0..n_out {
                        let gb = g.data()[b * n_out + j];
                        if gb == 0.0 {
                            continue;
                        }
                        for i in 0..n_in {
                            let off = (j * n_in + i) * cc;
                            let (_, dx) = spec.edge(xt.data()[b * n_in + i], &ct.data()[off..off + cc], &mut dc);
                            gx[b * n_in + i] += gb * dx;
                            for (acc, d) in gc[off..off + cc].iter_mut().zip(&dc) {
                                *acc += gb * d;
                            }
                        }
                    }
                }
                vec![
                    Some(Tensor::new(xt.shape().to_vec(), gx).unwrap()),
                    Some(Tensor::new(ct.shape().to_vec(), gc).unwrap()),
                ]
            }),
        )
    }
}

/// `x·sigmoid(x)`.
struct Silu;

impl crate::autodiff::Elementwise for Silu {
    fn name(&self) -> &'static str {
        "silu"
    }
    fn eval(&self, x: f64) -> (f64, f64) {
        let s = crate::activation::Activation::Sigmoid.value(x);
        (x * s, s + x * s * (1.0 - s))
    }
}

fn meyer_nu(t: f64) -> (f64, f64) {
    let t3 = t * t * t;
    let v = t3 * t * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t3);
    let dv = 140.0 * t3 - 420.0 * t3 * t + 420.0 * t3 * t * t - 140.0 * t3 * t3;
    (v, dv)
}

fn meyer_aux(v: f64) -> (f64, f64) {
    if v <= 0.5 {
        (1.0, 0.0)
    } else if v >= 1.0 {
        (0.0, 0.0)
    } else {
        let (nu, dnu) = meyer_nu(2.0 * v - 1.0);
        let arg = 0.5 * PI * nu;
        (arg.cos(), -arg.sin() * 0.5 * PI * dnu * 2.0)
    }
}

/// Mother wavelet `ψ(u)` and `ψ'(u)`.
fn wavelet(family: BasisFamily, omega0: f64, u: f64) -> (f64, f64) {
    let g = (-0.5 * u * u).exp();
    match family {
        BasisFamily::MexicanHat => {
            let k = 2.0 / (3f64.sqrt() * PI.powf(0.25));
            (k * (u * u - 1.0) * g, k * u * (3.0 - u * u) * g)
        }
        BasisFamily::Meyer => {
            let v = u.abs();
            let (aux, daux) = meyer_aux(v);
            let (s, c) = (PI * v).sin_cos();
            (s * aux, u.signum() * (PI * c * aux + s * daux))
        }
        BasisFamily::Morlet => {
            let (s, c) = (omega0 * u).sin_cos();
            (g * c, -g * (u * c + omega0 * s))
        }
        BasisFamily::Dog => (-u * g, (u * u - 1.0) * g),
        BasisFamily::Shannon => {
            let (sinc, dsinc) = if u.abs() < 1e-4 {
                (1.0 - u * u / 6.0, -u / 3.0)
            } else {
                let (s, c) = u.sin_cos();
                (s / u, (u * c - s) / (u * u))
            };
            // Hamming window spanning |u| ≤ 2π.
            let (win, dwin) =
                if u.abs() < 2.0 * PI { (0.54 + 0.46 * (0.5 * u).cos(), -0.23 * (0.5 * u).sin()) } else { (0.08, 0.0) };
            (sinc * win, dsinc * win + sinc * dwin)
        }
        _ => unreachable!("not a wavelet family"),
    }
}

/// Cox–de Boor values and derivatives of all order-`k` B-splines on `knots`,
/// with `x` clamped into the knot span.
fn bspline_eval(knots: &[f64], k: usize, x: f64, out: &mut [f64], dout: &mut [f64]) {
    let m = knots.len();
    let (lo, hi) = (knots[0], knots[m - 1]);
    let outside = x < lo || x > hi;
    let x = x.clamp(lo, hi);
    // Order-0 indicators on half-open intervals; the right end belongs to the
    // last non-empty interval.
    let mut b: Vec<f64> = (0..m - 1).map(|i| f64::from(knots[i] <= x && x < knots[i + 1])).collect();
    if x >= hi {
        if let Some(i) = (0..m - 1).rev().find(|&i| knots[i] < knots[i + 1]) {
            b[i] = 1.0;
        }
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    let mut prev = b.clone();
    for p in 1..=k {
        let n = m - 1 - p;
        let mut cur = vec![0.0; n];
        for i in 0..n {
            cur[i] = ratio(x - knots[i], knots[i + p] - knots[i]) * prev[i]
                + ratio(knots[i + p + 1] - x, knots[i + p + 1] - knots[i + 1]) * prev[i + 1];
        }
        if p == k {
            for i in 0..n {
                dout[i] = if outside {
                    0.0
                } else {
                    ratio(p as f64, knots[i + p] - knots[i]) * prev[i]
                        - ratio(p as f64, knots[i + p + 1] - knots[i + 1]) * prev[i + 1]
                };
            }
        }
        prev = cur;
    }
    if k == 0 {
        dout.iter_mut().for_each(|d| *d = 0.0);
    }
    out.copy_from_slice(&prev);
}

/// B-spline bases of order `k` at each entry of `x`: `[len(x), len(knots) − k − 1]`.
pub fn bspline_bases(knots: &[f64], k: usize, x: &Tensor) -> Result<Tensor> {
    if knots.len() < k + 2 {
        return Err(Error::InvalidParam(format!("need at least {} knots for order {k}, got {}", k + 2, knots.len())));
    }
    if knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParam("knot vector must be non-decreasing".into()));
    }
    if knots[0] == knots[knots.len() - 1] {
        return Err(Error::InvalidParam("degenerate knot vector (all knots equal)".into()));
    }
    let n = knots.len() - k - 1;
    let mut data = vec![0.0; x.len() * n];
    let mut scratch = vec![0.0; n];
    for (row, &xv) in data.chunks_mut(n).zip(x.data()) {
        bspline_eval(knots, k, xv, row, &mut scratch);
    }
    Tensor::new(vec![x.len(), n], data)
}

/// Evaluates a KAN layer without recording.
pub fn basis_eval(spec: &BasisSpec, coeffs: &Tensor, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::inference();
    let xv = tape.constant(x.clone());
    let cv = tape.constant(coeffs.clone());
    let out = spec.layer(&mut tape, xv, cv)?;
    Ok(tape.value(out).clone())
}

/// Gradients of `Σ upstream ⊙ layer(x)` with respect to coefficients and inputs.
pub fn basis_grads(spec: &BasisSpec, coeffs: &Tensor, x: &Tensor, upstream: &Tensor) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let xv = tape.param(1, x.clone());
    let cv = tape.param(0, coeffs.clone());
    let out = spec.layer(&mut tape, xv, cv)?;
    let grads = tape.backward_with_seed(out, upstream.clone())?;
    Ok((grads.param(0).unwrap().clone(), grads.param(1).unwrap().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_edge(spec: &BasisSpec, w: Vec<f64>, x: f64) -> f64 {
        let coeffs = Tensor::new(vec![1, 1, w.len()], w).unwrap();
        basis_eval(spec, &coeffs, &Tensor::matrix(1, 1, vec![x])).unwrap().item()
    }

    #[test]
    fn chebyshev_t3_at_half() {
        let spec = BasisSpec::new(BasisFamily::Chebyshev).with_degree(3).with_squash(false);
        let v = single_edge(&spec, vec![0.0, 0.0, 0.0, 1.0], 0.5);
        assert!((v + 1.0).abs() < 1e-14, "{v}");
    }

    #[test]
    fn fibonacci_f3_at_two() {
        let spec = BasisSpec::new(BasisFamily::Fibonacci).with_degree(3).with_squash(false);
        assert_eq!(single_edge(&spec, vec![0.0, 0.0, 0.0, 1.0], 2.0), 5.0);
    }

    #[test]
    fn rbf_at_center() {
        let spec = BasisSpec::new(BasisFamily::Rbf).with_grid(3);
        assert_eq!(single_edge(&spec, vec![0.0, 1.0, 0.0], 0.0), 1.0);
    }

    #[test]
    fn coefficient_counts() {
        assert_eq!(BasisSpec::new(BasisFamily::Fourier).with_degree(8).coeff_count(), 16);
        assert_eq!(BasisSpec::new(BasisFamily::Bspline).coeff_count(), 10);
        assert_eq!(BasisSpec::new(BasisFamily::Chebyshev).with_degree(3).coeff_count(), 4);
        assert_eq!(BasisSpec::new(BasisFamily::Morlet).coeff_count(), 3);
        assert_eq!(BasisSpec::new(BasisFamily::SineBasis).with_degree(4).coeff_count(), 12);
    }

    #[test]
    fn bspline_hand_cases() {
        let b = bspline_bases(&[0.0, 1.0, 2.0], 0, &Tensor::vector(vec![0.5])).unwrap();
        assert_eq!(b.data(), &[1.0, 0.0]);
        let b = bspline_bases(&[0.0, 1.0, 2.0, 3.0], 1, &Tensor::vector(vec![1.5])).unwrap();
        // Four knots carry two order-1 hats, centered at 1 and 2.
        assert_eq!(b.data(), &[0.5, 0.5]);
        assert!(bspline_bases(&[1.0, 1.0, 1.0], 0, &Tensor::vector(vec![1.0])).is_err());
    }

    #[test]
    fn legendre_input_gradient_includes_squash() {
        let spec = BasisSpec::new(BasisFamily::Legendre).with_degree(2);
        let xv = 0.5f64.atanh();
        let coeffs = Tensor::new(vec![1, 1, 3], vec![0.0, 0.0, 1.0]).unwrap();
        let (_, gx) =
            basis_grads(&spec, &coeffs, &Tensor::matrix(1, 1, vec![xv]), &Tensor::matrix(1, 1, vec![1.0])).unwrap();
        let expected = 1.5 * (1.0 - 0.25);
        assert!((gx.item() - expected).abs() < 1e-12, "{}", gx.item());
    }

    #[test]
    fn fourier_coefficient_gradient_is_cosine() {
        let spec = BasisSpec::new(BasisFamily::Fourier).with_degree(2);
        let x = 0.7;
        let coeffs = Tensor::new(vec![1, 1, 4], vec![0.3; 4]).unwrap();
        let (gc, _) =
            basis_grads(&spec, &coeffs, &Tensor::matrix(1, 1, vec![x]), &Tensor::matrix(1, 1, vec![1.0])).unwrap();
        assert!((gc.data()[0] - x.cos()).abs() < 1e-15);
        assert!((gc.data()[2] - (2.0 * x).cos()).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let spec = BasisSpec::new(BasisFamily::Chebyshev);
        let coeffs = Tensor::zeros(&[2, 3, 2]);
        assert!(basis_eval(&spec, &coeffs, &Tensor::zeros(&[4, 3])).is_err());
    }

    #[test]
    fn unknown_family_is_a_parse_error() {
        let err = serde_json::from_str::<BasisSpec>(r#"{"family":"chebyshov"}"#).unwrap_err().to_string();
        assert!(err.contains("chebyshev"), "{err}");
    }
}
