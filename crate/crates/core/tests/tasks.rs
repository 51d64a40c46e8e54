use std::f64::consts::PI;

use inrbench::sparse::SparseMatrix;
use inrbench::tasks::generate::SignalSpec;
use inrbench::tasks::io::{decode_raw, encode_raw, ingest, save, SignalFormat};
use inrbench::tasks::metrics::{iou, lsd, mse, psnr, snr, DB_CAP};
use inrbench::tasks::ops::{
    bilinear_sample, cell_center, gradient_operator, grid_coords, laplacian_operator, mask_operator, pool_operator,
    CtGeometry,
};
use inrbench::tasks::{corrupt, inpaint_split, make_regression_task, SignalGrid, TaskKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn assert_linear(op: &SparseMatrix, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u, v) = (random_vec(&mut rng, op.cols()), random_vec(&mut rng, op.cols()));
    let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let mix: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
    let lhs = op.apply(&mix, 1);
    let (ou, ov) = (op.apply(&u, 1), op.apply(&v, 1));
    for i in 0..lhs.len() {
        let rhs = a * ou[i] + b * ov[i];
        assert!((lhs[i] - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "row {i}: {} vs {rhs}", lhs[i]);
    }
}

#[test]
fn every_operator_is_linear() {
    let (train, _) = inpaint_split(256, 1).unwrap();
    assert_linear(&mask_operator(256, &train).unwrap(), 1);
    assert_linear(&pool_operator(16, 16, 4).unwrap(), 2);
    assert_linear(&gradient_operator(12, 9).unwrap(), 3);
    assert_linear(&laplacian_operator(12, 9).unwrap(), 4);
    assert_linear(&CtGeometry::uniform(32, 20, 45).projector().unwrap(), 5);
}

#[test]
fn pooling_matches_block_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let img = random_vec(&mut rng, 256);
    let pooled = pool_operator(16, 16, 4).unwrap().apply(&img, 1);
    for bi in 0..4 {
        for bj in 0..4 {
            let mut s = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    s += img[(bi * 4 + i) * 16 + bj * 4 + j];
                }
            }
            assert!((pooled[bi * 4 + bj] - s / 16.0).abs() < 1e-12);
        }
    }
    let constant = pool_operator(8, 8, 4).unwrap().apply(&[0.3; 64], 1);
    assert!(constant.iter().all(|&v| (v - 0.3).abs() < 1e-15));
}

#[test]
fn laplacian_matches_stencil() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = random_vec(&mut rng, 64);
    let lap = laplacian_operator(8, 8).unwrap().apply(&img, 1);
    let at = |i: usize, j: usize| img[i * 8 + j];
    let mut k = 0;
    for i in 1..7 {
        for j in 1..7 {
            let s = at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j);
            assert!((lap[k] - s).abs() < 1e-12);
            k += 1;
        }
    }
}

#[test]
fn ramp_gradient_and_constant_image() {
    let ramp: Vec<f64> = (0..36).map(|k| (k / 6) as f64).collect();
    let g = gradient_operator(6, 6).unwrap().apply(&ramp, 1);
    for i in 0..6 {
        for j in 0..6 {
            assert!((g[i * 6 + j] - 1.0).abs() < 1e-12);
            assert!(g[36 + i * 6 + j].abs() < 1e-12);
        }
    }
    assert!(laplacian_operator(6, 6).unwrap().apply(&ramp, 1).iter().all(|v| v.abs() < 1e-12));
    let flat = [2.5; 36];
    assert!(gradient_operator(6, 6).unwrap().apply(&flat, 1).iter().all(|v| v.abs() < 1e-12));
    assert!(laplacian_operator(6, 6).unwrap().apply(&flat, 1).iter().all(|v| v.abs() < 1e-12));
}

/// Ray integral by dense midpoint quadrature, independent of the projector.
fn ray_integral(grid: &[f64], n: usize, theta: f64, offset: f64, step: f64) -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (c, s) = (theta.cos(), theta.sin());
    let count = (2.0 * r / step).ceil() as usize;
    (0..count)
        .map(|k| {
            let t = -r + (k as f64 + 0.5) * step;
            bilinear_sample(grid, n, -offset * s + t * c, offset * c + t * s) * step
        })
        .sum()
}

#[test]
fn ct_projector_matches_fine_quadrature() {
    let n = 32;
    let geo = CtGeometry::uniform(n, 12, 45);
    let proj = geo.projector().unwrap();
    // A single unit cell, slightly off the grid centre.
    let mut grid = vec![0.0; n * n];
    grid[13 * n + 18] = 1.0;
    let sino = proj.apply(&grid, 1);
    let offsets = geo.offsets();
    let peak = sino.iter().cloned().fold(0.0, f64::max);
    let mut checked = 0;
    for (a, &theta) in geo.angles.iter().enumerate() {
        for (b, &off) in offsets.iter().enumerate() {
            let fine = ray_integral(&grid, n, theta, off, 0.01 / n as f64);
            let v = sino[a * geo.bins + b];
            if fine > 0.05 * peak {
                assert!((v - fine).abs() <= 0.01 * fine, "angle {a} bin {b}: {v} vs {fine}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 12, "{checked}");
}

#[test]
fn ct_constant_square_chord_lengths() {
    // A one-cell grid is a constant unit square.
    let geo = CtGeometry::uniform(1, 8, 31);
    let sino = geo.projector().unwrap().apply(&[1.0], 1);
    for (b, &off) in geo.offsets().iter().enumerate() {
        let fine = ray_integral(&[1.0], 1, 0.0, off, 1e-4);
        let exact = if off.abs() <= 0.5 { 1.0 } else { 0.0 };
        assert!((fine - exact).abs() < 1e-3);
        if exact > 0.0 {
            assert!((sino[b] - exact).abs() <= 0.01 * exact, "bin {b}: {}", sino[b]);
        }
    }
}

#[test]
fn ct_radial_phantom_is_angle_invariant() {
    let n = 64;
    let grid: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let y = -0.5 + (i as f64 + 0.5) / n as f64;
            let x = -0.5 + (j as f64 + 0.5) / n as f64;
            (-(x * x + y * y) / (2.0 * 0.12 * 0.12)).exp()
        })
        .collect();
    let geo = CtGeometry::uniform(n, 60, 91);
    let sino = geo.projector().unwrap().apply(&grid, 1);
    let reference = &sino[..geo.bins];
    let peak = reference.iter().cloned().fold(0.0, f64::max);
    for a in 1..geo.angles.len() {
        for b in 0..geo.bins {
            let (v, r) = (sino[a * geo.bins + b], reference[b]);
            if r > 0.05 * peak {
                assert!((v - r).abs() <= 0.01 * r, "angle {a} bin {b}: {v} vs {r}");
            }
        }
    }
}

#[test]
fn denoise_noise_statistics() {
    // Zero photons in, zero out.
    assert_eq!(corrupt(&[0.0; 10], 30.0, 0.0, 3).unwrap(), vec![0.0; 10]);

    // High photon count: unbiased and concentrated.
    let clean = [0.2, 0.5, 0.9];
    let n = 2000;
    let values: Vec<f64> = clean.iter().copied().cycle().take(3 * n).collect();
    let noisy = corrupt(&values, 1e6, 0.0, 5).unwrap();
    for (k, &c) in clean.iter().enumerate() {
        let mean = noisy.iter().skip(k).step_by(3).sum::<f64>() / n as f64;
        assert!((mean - c).abs() < 1e-2);
    }

    // Shot-noise variance x/P.
    let draws = 100_000;
    let noisy = corrupt(&vec![0.5; draws], 30.0, 0.0, 6).unwrap();
    let mean = noisy.iter().sum::<f64>() / draws as f64;
    let var = noisy.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws - 1) as f64;
    let expected = 0.5 / 30.0;
    assert!((var - expected).abs() <= 0.1 * expected, "{var}");

    // Unbiased with read noise, within three standard errors.
    let noisy = corrupt(&vec![0.5; draws], 30.0, 0.01, 7).unwrap();
    let mean = noisy.iter().sum::<f64>() / draws as f64;
    let se = ((0.5 / 30.0 + 1e-4) / draws as f64).sqrt();
    assert!((mean - 0.5).abs() <= 3.0 * se, "{mean}");
}

#[test]
fn inpaint_split_partitions_pixels() {
    let (train, eval) = inpaint_split(100, 9).unwrap();
    assert_eq!(train.len(), 20);
    let mut all: Vec<usize> = train.iter().chain(&eval).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
    assert_eq!(inpaint_split(100, 9).unwrap(), (train, eval));
    assert_ne!(inpaint_split(100, 10).unwrap().0, inpaint_split(100, 9).unwrap().0);
}

#[test]
fn sphere_occupancy_fraction() {
    let grid = SignalSpec::Sphere { size: 16, radius: 0.5 }.generate(0).unwrap();
    let frac = grid.values().iter().filter(|&&v| v > 0.5).count() as f64 / grid.points() as f64;
    let expected = 4.0 / 3.0 * PI * 0.125 / 8.0;
    assert!((frac - expected).abs() < 0.1 * expected, "{frac} vs {expected}");
}

#[test]
fn audio_coordinates_are_cell_centred() {
    let task = make_regression_task(SignalGrid::new(vec![4], 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap(), TaskKind::AudioReg)
        .unwrap();
    assert_eq!(task.coords_train.data(), &[-0.75, -0.25, 0.25, 0.75]);
    assert_eq!(cell_center(0, 4), -0.75);
    assert_eq!(grid_coords(&[2, 2]).data(), &[-0.5, -0.5, -0.5, 0.5, 0.5, -0.5, 0.5, 0.5]);
}

#[test]
fn constant_image_perfect_fit_is_capped() {
    assert_eq!(psnr(&[0.5; 16], &[0.5; 16]).unwrap(), DB_CAP);
}

#[test]
fn metric_examples() {
    assert_eq!(psnr(&[0.1; 8], &[0.0; 8]).unwrap(), 20.0);
    assert!((psnr(&[0.6, 0.4], &[0.5, 0.5]).unwrap() - 20.0).abs() < 1e-12);
    assert!((snr(&[2.0, 1.0], &[2.0, 0.0]).unwrap() - 20.0 * 4f64.log10()).abs() < 1e-12);
    assert_eq!(snr(&[0.0], &[1.0]).unwrap(), 0.0);
    assert!(snr(&[1.0], &[0.0]).is_err());
    assert_eq!(iou(&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], 0.5).unwrap(), 1.0);
    assert_eq!(iou(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap(), 0.0);
    assert_eq!(iou(&[1.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0], 0.5).unwrap(), 0.5);
    assert_eq!(iou(&[0.0; 4], &[0.0; 4], 0.5).unwrap(), 1.0);
}

/// Log-power STFT by the textbook definition.
fn naive_log_spectra(x: &[f64], frame: usize) -> Vec<Vec<f64>> {
    let hop = frame / 4;
    let mut out = Vec::new();
    let mut start = 0;
    while start + frame <= x.len() {
        let mut spec = Vec::new();
        for k in 0..=frame / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for n in 0..frame {
                let w = 0.5 * (1.0 - (2.0 * PI * n as f64 / frame as f64).cos());
                let ang = 2.0 * PI * (k * n) as f64 / frame as f64;
                re += w * x[start + n] * ang.cos();
                im -= w * x[start + n] * ang.sin();
            }
            spec.push((re * re + im * im + 1e-10).ln());
        }
        out.push(spec);
        start += hop;
    }
    out
}

#[test]
fn lsd_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (p, t) = (random_vec(&mut rng, 64), random_vec(&mut rng, 64));
    let (sp, st) = (naive_log_spectra(&p, 8), naive_log_spectra(&t, 8));
    let oracle = sp
        .iter()
        .zip(&st)
        .map(|(a, b)| (a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / a.len() as f64).sqrt())
        .sum::<f64>()
        / sp.len() as f64;
    let got = lsd(&p, &t, 8).unwrap();
    assert!((got.value - oracle).abs() < 1e-9, "{} vs {oracle}", got.value);
    assert!(!got.frame_shrunk);
}

#[test]
fn lsd_of_scaled_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let t: Vec<f64> = random_vec(&mut rng, 4096).iter().map(|v| v * 10.0).collect();
    let p: Vec<f64> = t.iter().map(|v| v * std::f64::consts::E).collect();
    assert!((lsd(&p, &t, 2048).unwrap().value - 2.0).abs() < 1e-6);
    assert_eq!(lsd(&t, &t, 2048).unwrap().value, 0.0);
}

proptest! {
    #[test]
    fn psnr_matches_two_pass_mse_and_is_symmetric(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_vec(&mut rng, 50), random_vec(&mut rng, 50));
        let m = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 50.0;
        prop_assert!((mse(&a, &b).unwrap() - m).abs() < 1e-12);
        let p = psnr(&a, &b).unwrap();
        prop_assert!((p - 10.0 * (1.0 / m).log10()).abs() < 1e-12);
        prop_assert_eq!(p, psnr(&b, &a).unwrap());
        prop_assert_eq!(iou(&a, &b, 0.0).unwrap(), iou(&b, &a, 0.0).unwrap());
    }

    #[test]
    fn raw_round_trip_is_bitwise(data in proptest::collection::vec(proptest::num::f64::NORMAL, 1..64)) {
        let bytes = encode_raw(&[data.len()], &data);
        let (shape, back) = decode_raw(&bytes).unwrap();
        prop_assert_eq!(shape, vec![data.len()]);
        prop_assert!(data.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn pgm_and_wav_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pgm = dir.path().join("img.pgm");
    std::fs::write(&pgm, b"P5\n# comment\n2 2\n255\n\x00\xff\x80\x40").unwrap();
    let g = ingest(&pgm, SignalFormat::Pgm).unwrap();
    let want = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
    assert!(g.values().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!((g.values()[2] - 0.50196).abs() < 1e-5);

    let out = dir.path().join("copy.pgm");
    save(&out, SignalFormat::Pgm, &g).unwrap();
    assert_eq!(ingest(&out, SignalFormat::Pgm).unwrap().values(), g.values());

    let wav = dir.path().join("a.wav");
    let mut audio = SignalSpec::default_for("chirp").unwrap().generate(0).unwrap();
    audio.sample_rate = Some(4000);
    save(&wav, SignalFormat::Wav, &audio).unwrap();
    let back = ingest(&wav, SignalFormat::Wav).unwrap();
    assert_eq!(back.sample_rate, Some(4000));
    assert!(back.values().iter().zip(audio.values()).all(|(a, b)| (a - b).abs() <= 1.0 / 32768.0 + 1e-12));

    let raw = dir.path().join("s.raw");
    save(&raw, SignalFormat::RawF64, &audio).unwrap();
    assert_eq!(ingest(&raw, SignalFormat::RawF64).unwrap().values(), audio.values());
}
