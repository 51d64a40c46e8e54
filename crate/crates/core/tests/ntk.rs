use inrbench::activation::Activation;
use inrbench::encoding::EncodingSpec;
use inrbench::network::{Network, NetworkConfig};
use inrbench::ntk::{
    empirical_ntk, max_asymmetry, ntk_predict, project, residual_spectrum, sym_eig, GdConfig, NtkReport,
};
use inrbench::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let mut k = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..=i {
            let v = rng.random_range(-1.0..1.0);
            k.data_mut()[i * n + j] = v;
            k.data_mut()[j * n + i] = v;
        }
    }
    k
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn linear_network_kernel() {
    // Φ(x) = w·x + b, so K(x₁, x₂) = x₁x₂ + 1.
    let cfg = NetworkConfig::mlp(Activation::Relu, EncodingSpec::Identity).with_shape(1, 1);
    let (net, params) = Network::build(&cfg, 1, 1, 0).unwrap();
    let xs = [-0.8, -0.1, 0.3, 0.9];
    let k = empirical_ntk(&net, &params, &Tensor::matrix(4, 1, xs.to_vec())).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!((k.get2(i, j) - (xs[i] * xs[j] + 1.0)).abs() < 1e-14);
        }
    }
}

/// Hand-derived Jacobian of `W2·tanh(W1 x + b1) + b2`, flattened in
/// parameter order `[W1, b1, W2, b2]`.
fn explicit_jacobian(params: &inrbench::network::ParameterSet, x: &[f64]) -> Vec<f64> {
    let (w1, b1, w2) = (params.get(0), params.get(1), params.get(2));
    let (h, d) = (w1.shape()[0], w1.shape()[1]);
    let mut jw1 = vec![0.0; h * d];
    let mut jb1 = vec![0.0; h];
    let mut jw2 = vec![0.0; h];
    for i in 0..h {
        let z: f64 = b1.data()[i] + (0..d).map(|k| w1.get2(i, k) * x[k]).sum::<f64>();
        let a = z.tanh();
        let da = 1.0 - a * a;
        jw2[i] = a;
        jb1[i] = w2.data()[i] * da;
        for k in 0..d {
            jw1[i * d + k] = w2.data()[i] * da * x[k];
        }
    }
    [jw1, jb1, jw2, vec![1.0]].concat()
}

#[test]
fn empirical_ntk_matches_explicit_jacobian() {
    let cfg = NetworkConfig::mlp(Activation::Tanh, EncodingSpec::Identity).with_shape(2, 16);
    let (net, params) = Network::build(&cfg, 2, 1, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_points(&mut rng, 8, 2);
    let k = empirical_ntk(&net, &params, &x).unwrap();
    let jac: Vec<Vec<f64>> = (0..8).map(|i| explicit_jacobian(&params, x.row(i))).collect();
    for i in 0..8 {
        for j in 0..8 {
            let oracle: f64 = jac[i].iter().zip(&jac[j]).map(|(a, b)| a * b).sum();
            assert!((k.get2(i, j) - oracle).abs() < 1e-10 * oracle.abs().max(1.0));
        }
    }
}

#[test]
fn empirical_ntk_is_symmetric_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (act, enc) in [
        (Activation::Relu, EncodingSpec::Identity),
        (Activation::Sine { omega: None }, EncodingSpec::Identity),
        (Activation::Gaussian { sigma: 0.1 }, EncodingSpec::from_name("rff").unwrap()),
    ] {
        let cfg = NetworkConfig::mlp(act, enc).with_shape(2, 64);
        let (net, params) = Network::build(&cfg, 1, 1, 2).unwrap();
        let k = empirical_ntk(&net, &params, &random_points(&mut rng, 64, 1)).unwrap();
        assert!(max_asymmetry(&k) < 1e-10);
        let eig = sym_eig(&k).unwrap();
        let (max, min) = (eig.values[0], *eig.values.last().unwrap());
        assert!(min >= -1e-8 * max, "{min} vs {max}");
    }
}

/// Number of eigenvalues below `sigma`, from the inertia of `K − σI`.
fn count_below(k: &Tensor, sigma: f64) -> usize {
    let n = k.shape()[0];
    let mut a: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| k.get2(i, j) - if i == j { sigma } else { 0.0 }).collect()).collect();
    let mut negative = 0;
    for p in 0..n {
        let piv = a[p][p];
        if piv < 0.0 {
            negative += 1;
        }
        let pivot_row = a[p].clone();
        for row in a.iter_mut().skip(p + 1) {
            let f = row[p] / piv;
            for (v, &u) in row.iter_mut().zip(&pivot_row).skip(p) {
                *v -= f * u;
            }
        }
    }
    negative
}

/// The `m`-th smallest eigenvalue by bisection on the inertia count.
fn bisect_eigenvalue(k: &Tensor, m: usize) -> f64 {
    let bound = k.data().iter().map(|v| v.abs()).sum::<f64>();
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(k, mid) > m {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn jacobi_matches_inertia_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let k = random_symmetric(&mut rng, 8);
        let eig = sym_eig(&k).unwrap();
        for (m, &v) in eig.values.iter().rev().enumerate() {
            let oracle = bisect_eigenvalue(&k, m);
            assert!((v - oracle).abs() < 1e-8, "λ_{m}: {v} vs {oracle}");
        }
        let q = &eig.vectors;
        let kq = k.matmul(q).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((kq.get2(i, j) - q.get2(i, j) * eig.values[j]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn jacobi_hand_cases() {
    let e = sym_eig(&Tensor::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]])).unwrap();
    assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
    let e = sym_eig(&Tensor::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]])).unwrap();
    assert!(max_abs_diff(&e.values, &[3.0, 1.0]) < 1e-14);
    assert!(sym_eig(&Tensor::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigendecomposition_reconstructs(seed in 0u64..10_000, n in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_symmetric(&mut rng, n);
        let eig = sym_eig(&k).unwrap();
        let q = &eig.vectors;
        let kmax = k.max_abs();
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|m| q.get2(i, m) * eig.values[m] * q.get2(j, m)).sum();
                prop_assert!((r - k.get2(i, j)).abs() < 1e-9 * kmax);
                let o: f64 = (0..n).map(|m| q.get2(m, i) * q.get2(m, j)).sum();
                let delta = if i == j { 1.0 } else { 0.0 };
                prop_assert!((o - delta).abs() < 1e-8);
            }
        }
        prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn prediction_moves_toward_targets(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(&mut rng, 6);
        let k = a.matmul(&a.transpose()).unwrap();
        let y: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eig = sym_eig(&k).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for t in [0.0, 0.1, 0.5, 2.0, 10.0] {
            let f = ntk_predict(&k, &k, &y, 0.3, t).unwrap().values;
            let e: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
            let pe = project(&eig, &e);
            if let Some(p) = &prev {
                for i in 0..6 {
                    if eig.values[i] > 1e-9 * eig.values[0] {
                        prop_assert!(pe[i].abs() <= p[i].abs() + 1e-12);
                    }
                }
            }
            prev = Some(pe);
        }
    }
}

#[test]
fn residual_decays_exponentially_per_eigendirection() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_symmetric(&mut rng, 10);
    let k = a.matmul(&a.transpose()).unwrap();
    let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eig = sym_eig(&k).unwrap();
    let p0 = project(&eig, &y);
    let eta = 0.05;
    for t in [0.5, 3.0, 20.0] {
        let f = ntk_predict(&k, &k, &y, eta, t).unwrap().values;
        let e: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
        let pt = project(&eig, &e);
        for i in 0..10 {
            let want = (-eta * eig.values[i] * t).exp();
            assert!((pt[i].abs() / p0[i].abs() - want).abs() < 1e-10, "t={t} i={i}");
        }
    }
}

#[test]
fn null_direction_residual_is_constant() {
    // Rank-2 kernel on 3 points: the residual along the null vector never moves.
    let v1 = [1.0, 0.5, -0.3];
    let v2 = [0.2, -1.0, 0.4];
    let mut k = Tensor::zeros(&[3, 3]);
    for i in 0..3 {
        for j in 0..3 {
            k.data_mut()[i * 3 + j] = v1[i] * v1[j] + v2[i] * v2[j];
        }
    }
    let y = [0.7, -0.2, 0.9];
    let eig = sym_eig(&k).unwrap();
    let p0 = project(&eig, &y);
    let pred = ntk_predict(&k, &k, &y, 1.0, 50.0).unwrap();
    let e: Vec<f64> = y.iter().zip(&pred.values).map(|(a, b)| a - b).collect();
    let pt = project(&eig, &e);
    assert!((pt[2] - p0[2]).abs() <= 0.01 * p0[2].abs(), "{} vs {}", pt[2], p0[2]);
    assert!(pt[0].abs() < 1e-8 && pt[1].abs() < 1e-8);
}

#[test]
fn wide_relu_decay_rates_follow_eigenvalues() {
    let cfg = NetworkConfig::mlp(Activation::Relu, EncodingSpec::Identity).with_shape(2, 1024);
    let x = Tensor::matrix(16, 1, (0..16).map(|i| -1.0 + (2 * i + 1) as f64 / 16.0).collect());
    let y: Vec<f64> =
        (0..16).map(|i| (std::f64::consts::PI * x.data()[i]).sin() + 0.5 * (4.0 * x.data()[i]).cos()).collect();
    for seed in 0..5 {
        let (net, params) = Network::build(&cfg, 1, 1, seed).unwrap();
        let k = empirical_ntk(&net, &params, &x).unwrap();
        let lmax = sym_eig(&k).unwrap().values[0];
        let gd = GdConfig { lr: 0.5 / lmax, steps: 400, probe_every: 20 };
        let r = residual_spectrum(&net, &params, &x, &y, &gd).unwrap();
        assert!(!r.diverged);
        assert!(r.spearman > 0.7, "seed {seed}: ρ = {}", r.spearman);
    }
}

#[test]
fn report_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_symmetric(&mut rng, 5);
    let k = a.matmul(&a.transpose()).unwrap();
    let mut report = NtkReport::new(k.clone()).unwrap();
    report.metadata.push(("model".into(), "mlp/relu/identity".into()));
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    let back = NtkReport::read(dir.path()).unwrap();
    assert_eq!(back.k_train, k);
    assert_eq!(back.eigenvalues, report.eigenvalues);
    assert!(std::fs::read_to_string(dir.path().join("ntk.txt")).unwrap().contains("model=mlp/relu/identity"));
}
