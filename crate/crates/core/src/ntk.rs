//! Empirical neural tangent kernels, a Jacobi eigensolver, the linearised
//! training predictor and per-eigendirection residual tracking.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::network::{Network, ParameterSet};
use crate::tasks::io::{decode_raw, encode_raw};
use crate::tensor::{gemm, Tensor};

/// Largest sample count accepted by [`empirical_ntk`].
pub const NTK_CAP: usize = 512;

/// Per-sample parameter Jacobian of output `channel`, `[n, |θ|]`.
pub fn jacobian(net: &Network, params: &ParameterSet, x: &Tensor, channel: usize) -> Result<Tensor> {
    if channel >= net.out_dim() {
        return Err(Error::InvalidParam(format!("channel {channel} out of range for {} outputs", net.out_dim())));
    }
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let p = params.scalar_count();
    let mut seed = Tensor::zeros(&[1, net.out_dim()]);
    seed.data_mut()[channel] = 1.0;
    let mut jac = Vec::with_capacity(n * p);
    for i in 0..n {
        let mut tape = Tape::new();
        let xi = tape.constant(Tensor::matrix(1, d, x.row(i).to_vec()));
        let out = net.forward(&mut tape, params, xi)?;
        let grads = tape.backward_with_seed(out, seed.clone())?;
        for (k, param) in params.params.iter().enumerate() {
            match grads.param(k) {
                Some(g) => jac.extend_from_slice(g.data()),
                None => jac.extend(std::iter::repeat_n(0.0, param.value.len())),
            }
        }
    }
    Ok(Tensor::matrix(n, p, jac))
}

/// `K_ij = Σ_θ ∂Φ(x_i)/∂θ · ∂Φ(x_j)/∂θ` for a scalar-output network.
pub fn empirical_ntk(net: &Network, params: &ParameterSet, x: &Tensor) -> Result<Tensor> {
    empirical_ntk_channel(net, params, x, 0, NTK_CAP)
}

/// NTK of one output channel with an explicit sample cap.
pub fn empirical_ntk_channel(
    net: &Network,
    params: &ParameterSet,
    x: &Tensor,
    channel: usize,
    cap: usize,
) -> Result<Tensor> {
    let n = x.shape()[0];
    if n > cap {
        return Err(Error::NtkTooLarge { n, cap });
    }
    let j = jacobian(net, params, x, channel)?;
    Ok(gram(&j))
}

/// `J Jᵀ`, made exactly symmetric.
pub fn gram(j: &Tensor) -> Tensor {
    let (n, p) = (j.shape()[0], j.shape()[1]);
    let mut k = vec![0.0; n * n];
    gemm(n, p, n, j.data(), false, j.data(), true, &mut k, 0.0);
    for r in 0..n {
        for c in r + 1..n {
            let v = 0.5 * (k[r * n + c] + k[c * n + r]);
            k[r * n + c] = v;
            k[c * n + r] = v;
        }
    }
    Tensor::matrix(n, n, k)
}

/// Eigendecomposition `K = Q Λ Qᵀ` with eigenvalues descending and the
/// matching eigenvectors as columns of `vectors`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Tensor,
    pub sweeps: usize,
}

fn square_dim(k: &Tensor) -> Result<usize> {
    match k.shape() {
        [r, c] if r == c => Ok(*r),
        s => Err(Error::Shape(format!("expected a square matrix, got {s:?}"))),
    }
}

pub fn max_asymmetry(k: &Tensor) -> f64 {
    let n = k.shape()[0];
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in r + 1..n {
            worst = worst.max((k.get2(r, c) - k.get2(c, r)).abs());
        }
    }
    worst
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops
/// below `1e-12·‖K‖_F`.
pub fn sym_eig(k: &Tensor) -> Result<SymEig> {
    let n = square_dim(k)?;
    let asym = max_asymmetry(k);
    if asym > 1e-8 {
        return Err(Error::NotSymmetric(asym));
    }
    let mut a = k.data().to_vec();
    for r in 0..n {
        for c in r + 1..n {
            let v = 0.5 * (a[r * n + c] + a[c * n + r]);
            a[r * n + c] = v;
            a[c * n + r] = v;
        }
    }
    let mut v = vec![0.0; n * n];
    (0..n).for_each(|i| v[i * n + i] = 1.0);
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += a[r * n + c] * a[r * n + c];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > 1e-12 * frob && sweeps < 100 {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for kk in 0..n {
                    let (akp, akq) = (a[kk * n + p], a[kk * n + q]);
                    a[kk * n + p] = c * akp - s * akq;
                    a[kk * n + q] = s * akp + c * akq;
                }
                for kk in 0..n {
                    let (apk, aqk) = (a[p * n + kk], a[q * n + kk]);
                    a[p * n + kk] = c * apk - s * aqk;
                    a[q * n + kk] = s * apk + c * aqk;
                }
                for kk in 0..n {
                    let (vkp, vkq) = (v[kk * n + p], v[kk * n + q]);
                    v[kk * n + p] = c * vkp - s * vkq;
                    v[kk * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + col] = v[r * n + src];
        }
    }
    Ok(SymEig { values, vectors: Tensor::matrix(n, n, vectors), sweeps })
}

/// Condition number above which [`ntk_predict`] switches to a pseudo-inverse.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct NtkPrediction {
    pub values: Vec<f64>,
    pub condition: f64,
    /// Set when the kernel was too ill-conditioned to invert directly.
    pub pseudo_inverse: bool,
}

/// `K_test · K⁻¹ · (I − e^{−ηKt}) · y`, evaluated in the eigenbasis of `K`.
pub fn ntk_predict(k_train: &Tensor, k_test: &Tensor, y: &[f64], eta: f64, t: f64) -> Result<NtkPrediction> {
    let n = square_dim(k_train)?;
    if y.len() != n || k_test.rank() != 2 || k_test.shape()[1] != n {
        return Err(Error::Shape(format!(
            "K_train is {n}x{n}, K_test {:?}, y has {} entries",
            k_test.shape(),
            y.len()
        )));
    }
    let eig = sym_eig(k_train)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let lmin = eig.values.last().copied().unwrap_or(0.0);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    let pseudo_inverse = condition > MAX_CONDITION;
    let cutoff = lmax.abs() / MAX_CONDITION;
    let q = &eig.vectors;
    // coefficients of y in the eigenbasis, scaled by (1 - e^{-ηλt}) / λ
    let coef: Vec<f64> = (0..n)
        .map(|i| {
            let lam = eig.values[i];
            if pseudo_inverse && lam <= cutoff {
                return 0.0;
            }
            let proj: f64 = (0..n).map(|r| q.get2(r, i) * y[r]).sum();
            proj * -(-eta * lam * t).exp_m1() / lam
        })
        .collect();
    let alpha: Vec<f64> = (0..n).map(|r| (0..n).map(|i| q.get2(r, i) * coef[i]).sum()).collect();
    let values = (0..k_test.shape()[0]).map(|m| k_test.row(m).iter().zip(&alpha).map(|(a, b)| a * b).sum()).collect();
    Ok(NtkPrediction { values, condition, pseudo_inverse })
}

/// Projections `Qᵀv`.
pub fn project(eig: &SymEig, v: &[f64]) -> Vec<f64> {
    let n = eig.values.len();
    (0..n).map(|i| (0..n).map(|r| eig.vectors.get2(r, i) * v[r]).sum()).collect()
}

/// Average ranks, ties sharing the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Plain gradient descent on `½‖Φ(X) − y‖²` for the residual diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct GdConfig {
    pub lr: f64,
    pub steps: usize,
    pub probe_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSpectrum {
    /// NTK eigenvalues at initialisation, descending.
    pub eigenvalues: Vec<f64>,
    pub probe_steps: Vec<usize>,
    /// `|Qᵀ e(t)|` per probe step, one row per probe.
    pub projections: Vec<Vec<f64>>,
    /// Least-squares decay rate per step of each direction's log residual.
    pub rates: Vec<f64>,
    pub spearman: f64,
    pub diverged: bool,
}

/// Trains with full-batch GD from the given parameters and tracks the
/// residual along each eigendirection of the initial NTK.
pub fn residual_spectrum(
    net: &Network,
    params: &ParameterSet,
    x: &Tensor,
    y: &[f64],
    gd: &GdConfig,
) -> Result<ResidualSpectrum> {
    let n = x.shape()[0];
    if n > 256 {
        return Err(Error::NtkTooLarge { n, cap: 256 });
    }
    if net.out_dim() != 1 || y.len() != n {
        return Err(Error::Shape("residual spectrum needs a scalar network and one target per point".into()));
    }
    if gd.probe_every == 0 {
        return Err(Error::InvalidParam("probe_every must be >= 1".into()));
    }
    let k = empirical_ntk(net, params, x)?;
    let eig = sym_eig(&k)?;
    let target = Tensor::matrix(n, 1, y.to_vec());
    let mut params = params.clone();
    let mut probe_steps = Vec::new();
    let mut projections = Vec::new();
    let mut diverged = false;
    for t in 0..=gd.steps {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = net.forward(&mut tape, &params, xv)?;
        let yv = tape.constant(target.clone());
        let e = tape.sub(out, yv)?;
        if t % gd.probe_every == 0 {
            let proj = project(&eig, tape.value(e).data());
            probe_steps.push(t);
            projections.push(proj.iter().map(|p| p.abs()).collect::<Vec<_>>());
        }
        if t == gd.steps {
            break;
        }
        let sq = tape.square(e);
        let s = tape.sum(sq);
        let loss = tape.scale(s, 0.5);
        if !tape.value(loss).item().is_finite() {
            diverged = true;
            break;
        }
        let grads = tape.backward(loss)?;
        for (kk, p) in params.params.iter_mut().enumerate() {
            if let Some(g) = grads.param(kk) {
                p.value.data_mut().iter_mut().zip(g.data()).for_each(|(w, g)| *w -= gd.lr * g);
            }
        }
    }
    let rates = fit_rates(&probe_steps, &projections);
    let spearman = spearman(&rates, &eig.values);
    Ok(ResidualSpectrum { eigenvalues: eig.values, probe_steps, projections, rates, spearman, diverged })
}

/// Negated least-squares slope of `ln|p_i(t)|` against `t` per direction.
pub fn fit_rates(steps: &[usize], projections: &[Vec<f64>]) -> Vec<f64> {
    let m = steps.len() as f64;
    let n = projections.first().map_or(0, |p| p.len());
    let ts: Vec<f64> = steps.iter().map(|&s| s as f64).collect();
    let tm = ts.iter().sum::<f64>() / m;
    let stt: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    (0..n)
        .map(|i| {
            let logs: Vec<f64> = projections.iter().map(|p| (p[i] + f64::MIN_POSITIVE).ln()).collect();
            let lm = logs.iter().sum::<f64>() / m;
            let slt: f64 = ts.iter().zip(&logs).map(|(t, l)| (t - tm) * (l - lm)).sum();
            if stt > 0.0 {
                -slt / stt
            } else {
                0.0
            }
        })
        .collect()
}

/// Kernel, spectrum and optional diagnostics for one network and point set.
#[derive(Clone, Debug, PartialEq)]
pub struct NtkReport {
    pub k_train: Tensor,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Tensor,
    pub k_test: Option<Tensor>,
    pub residual: Option<ResidualSpectrum>,
    /// Free-form `key=value` metadata written to the text header.
    pub metadata: Vec<(String, String)>,
}

impl NtkReport {
    pub fn new(k_train: Tensor) -> Result<Self> {
        let eig = sym_eig(&k_train)?;
        Ok(Self {
            k_train,
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
            k_test: None,
            residual: None,
            metadata: Vec::new(),
        })
    }

    /// Writes `ntk.txt` (metadata header) and one RAW-F64 file per array.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let n = self.eigenvalues.len();
        let mut header = String::from("# inrbench ntk report\n");
        let _ = writeln!(header, "n={n}");
        if let (Some(first), Some(last)) = (self.eigenvalues.first(), self.eigenvalues.last()) {
            let _ = writeln!(header, "lambda_max={first:e}\nlambda_min={last:e}");
        }
        if let Some(r) = &self.residual {
            let _ = writeln!(header, "spearman={}\ndiverged={}", r.spearman, r.diverged);
        }
        for (k, v) in &self.metadata {
            let _ = writeln!(header, "{k}={v}");
        }
        fs::write(dir.join("ntk.txt"), header)?;
        fs::write(dir.join("k_train.raw"), encode_raw(&[n, n], self.k_train.data()))?;
        fs::write(dir.join("eigenvalues.raw"), encode_raw(&[n], &self.eigenvalues))?;
        fs::write(dir.join("eigenvectors.raw"), encode_raw(&[n, n], self.eigenvectors.data()))?;
        if let Some(kt) = &self.k_test {
            fs::write(dir.join("k_test.raw"), encode_raw(kt.shape(), kt.data()))?;
        }
        if let Some(r) = &self.residual {
            fs::write(dir.join("residual_rates.raw"), encode_raw(&[r.rates.len()], &r.rates))?;
            let flat: Vec<f64> = r.projections.iter().flatten().copied().collect();
            fs::write(dir.join("residual_projections.raw"), encode_raw(&[r.projections.len(), n], &flat))?;
        }
        Ok(())
    }

    /// Reads the kernel arrays back; residual curves are not reloaded.
    pub fn read(dir: &Path) -> Result<Self> {
        let load = |name: &str| -> Result<Tensor> {
            let (shape, data) = decode_raw(&fs::read(dir.join(name))?)?;
            Tensor::new(shape, data)
        };
        let header = fs::read_to_string(dir.join("ntk.txt"))?;
        let metadata = header
            .lines()
            .filter(|l| !l.starts_with('#'))
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let k_test_path = dir.join("k_test.raw");
        Ok(Self {
            k_train: load("k_train.raw")?,
            eigenvalues: load("eigenvalues.raw")?.into_data(),
            eigenvectors: load("eigenvectors.raw")?,
            k_test: if k_test_path.exists() { Some(load("k_test.raw")?) } else { None },
            residual: None,
            metadata,
        })
    }
}
