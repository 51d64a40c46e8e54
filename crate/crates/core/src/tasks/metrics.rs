//! Reconstruction metrics: SNR, PSNR, LSD and IoU.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Value reported when the error is numerically zero.
pub const DB_CAP: f64 = 200.0;
/// Default STFT frame length for LSD.
pub const LSD_FRAME: usize = 2048;
const LSD_EPS: f64 = 1e-10;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("prediction has {} values, target {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Metric("empty signal".into()));
    }
    Ok(())
}

/// `20·log10(‖y‖² / ‖ŷ − y‖²)`. Squared norms with a factor of 20, so one
/// decibel here is half a conventional one.
pub fn snr(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len(pred, target)?;
    let signal: f64 = target.iter().map(|y| y * y).sum();
    if signal == 0.0 {
        return Err(Error::Metric("SNR undefined for an all-zero target".into()));
    }
    let err: f64 = pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum();
    if err.sqrt() < 1e-15 {
        return Ok(DB_CAP);
    }
    Ok(20.0 * (signal / err).log10())
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / pred.len() as f64)
}

/// `10·log10(1 / MSE)` for values in `[0, 1]`.
pub fn psnr(pred: &[f64], target: &[f64]) -> Result<f64> {
    let m = mse(pred, target)?;
    if m < 1e-20 {
        return Ok(DB_CAP);
    }
    Ok(-10.0 * m.log10())
}

/// PSNR after the least-squares gain and offset mapping `pred` onto `target`.
pub fn psnr_affine(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len(pred, target)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = target.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(target) {
        cov += (p - mp) * (t - mt);
        var += (p - mp) * (p - mp);
    }
    let gain = if var > 0.0 { cov / var } else { 0.0 };
    let fitted: Vec<f64> = pred.iter().map(|p| gain * (p - mp) + mt).collect();
    psnr(&fitted, target)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lsd {
    pub value: f64,
    pub frame: usize,
    /// Set when the signal was shorter than the requested frame.
    pub frame_shrunk: bool,
}

/// Log-power spectra `log(|S|² + ε)` of Hann-windowed frames, `[frames][bins]`.
pub fn log_power_frames(x: &[f64], frame: usize) -> Vec<Vec<f64>> {
    let hop = (frame / 4).max(1);
    let bins = frame / 2 + 1;
    let window: Vec<f64> = (0..frame).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / frame as f64).cos()).collect();
    let twiddle: Vec<(f64, f64)> = (0..frame)
        .map(|m| {
            let a = -2.0 * PI * m as f64 / frame as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut buf = vec![0.0; frame];
    while start + frame <= x.len() {
        for (n, b) in buf.iter_mut().enumerate() {
            *b = x[start + n] * window[n];
        }
        let spec = (0..bins)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &v) in buf.iter().enumerate() {
                    let (c, s) = twiddle[(k * n) % frame];
                    re += v * c;
                    im += v * s;
                }
                (re * re + im * im + LSD_EPS).ln()
            })
            .collect();
        out.push(spec);
        start += hop;
    }
    out
}

/// Mean over frames of the RMS over bins of the log-power difference.
pub fn lsd(pred: &[f64], target: &[f64], frame: usize) -> Result<Lsd> {
    same_len(pred, target)?;
    if frame == 0 {
        return Err(Error::InvalidParam("LSD frame must be >= 1".into()));
    }
    let frame_shrunk = target.len() < frame;
    let frame = frame.min(target.len());
    let xp = log_power_frames(pred, frame);
    let xt = log_power_frames(target, frame);
    let value = lsd_from_spectra(&xp, &xt);
    Ok(Lsd { value, frame, frame_shrunk })
}

/// LSD between two precomputed log-power spectrograms.
pub fn lsd_from_spectra(pred: &[Vec<f64>], target: &[Vec<f64>]) -> f64 {
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let ms = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
            ms.sqrt()
        })
        .sum();
    total / pred.len() as f64
}

/// Intersection over union of `{v > threshold}` sets; two empty sets give 1.
pub fn iou(pred: &[f64], target: &[f64], threshold: f64) -> Result<f64> {
    same_len(pred, target)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, t) in pred.iter().zip(target) {
        let (a, b) = (*p > threshold, *t > threshold);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_examples() {
        let y = [1.0, 0.0, 0.0];
        assert_eq!(snr(&y, &y).unwrap(), DB_CAP);
        assert_eq!(snr(&[0.0; 3], &y).unwrap(), 0.0);
        let y = [2.0, 0.0];
        let p = [2.0, 1.0];
        assert!((snr(&p, &y).unwrap() - 12.041199826559248).abs() < 1e-12);
        assert!(snr(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn psnr_examples() {
        let y = [0.3, 0.5, 0.9, 0.1];
        assert_eq!(psnr(&y, &y).unwrap(), DB_CAP);
        let p: Vec<f64> = y.iter().map(|v| v + 0.1).collect();
        assert_eq!(psnr(&p, &y).unwrap(), 20.0);
        assert!(psnr(&p[..3], &y).is_err());
    }

    #[test]
    fn affine_psnr_ignores_gain_and_offset() {
        let y = [0.3, 0.5, 0.9, 0.1];
        let p: Vec<f64> = y.iter().map(|v| 3.0 * v - 7.0).collect();
        assert_eq!(psnr_affine(&p, &y).unwrap(), DB_CAP);
    }

    #[test]
    fn lsd_short_signal_shrinks_frame() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let r = lsd(&x, &x, 2048).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.frame_shrunk);
        assert_eq!(r.frame, 100);
    }

    #[test]
    fn iou_examples() {
        let a = [1.0, 1.0, 0.0, 0.0];
        let b = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(iou(&a, &a, 0.5).unwrap(), 1.0);
        assert_eq!(iou(&a, &[0.0, 0.0, 1.0, 1.0], 0.5).unwrap(), 0.0);
        assert_eq!(iou(&a, &b, 0.5).unwrap(), 0.5);
        assert_eq!(iou(&[0.0; 4], &[0.2; 4], 0.5).unwrap(), 1.0);
    }
}
