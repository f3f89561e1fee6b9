//! Brute-force reference implementations shared by integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use adjfree::MfccConfig;

fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Filter edge frequencies: `n_mels + 2` points evenly spaced in mel.
pub fn filter_points(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = mel(sample_rate as f64 / 2.0);
    let step = top / (n_mels + 1) as f64;
    (0..n_mels + 2).map(|i| inv_mel(step * i as f64)).collect()
}

/// Peak frequency of each triangular filter.
pub fn filter_centers(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let p = filter_points(n_mels, sample_rate);
    p[1..=n_mels].to_vec()
}

fn triangle(f: f64, lo: f64, mid: f64, hi: f64) -> f64 {
    let up = (f - lo) / (mid - lo);
    let down = (hi - f) / (hi - mid);
    up.min(down).max(0.0)
}

/// Per-frame mel energies via a direct O(N^2) DFT.
pub fn naive_mel_energies(x: &[f64], sample_rate: u32, cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let frame = (cfg.frame_len * sample_rate as f64).round() as usize;
    let stride = (cfg.frame_stride * sample_rate as f64).round() as usize;
    let n = cfg.n_fft;
    let points = filter_points(cfg.n_mels, sample_rate);
    let bins = n / 2 + 1;

    let mut out = Vec::new();
    let mut start = 0;
    while start + frame <= x.len() {
        let windowed: Vec<f64> = (0..frame)
            .map(|i| {
                let w = if frame == 1 {
                    1.0
                } else {
                    0.54 - 0.46 * (2.0 * PI * i as f64 / (frame as f64 - 1.0)).cos()
                };
                w * x[start + i]
            })
            .collect();
        let power: Vec<f64> = (0..bins)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in windowed.iter().enumerate() {
                    // reduce the phase index first to keep the angle small
                    let ang = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                re * re + im * im
            })
            .collect();
        let energies = (0..cfg.n_mels)
            .map(|m| {
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * sample_rate as f64 / n as f64;
                        triangle(f, points[m], points[m + 1], points[m + 2]) * power[k]
                    })
                    .sum()
            })
            .collect();
        out.push(energies);
        start += stride;
    }
    out
}

/// Frame-major MFCC matrix from the naive pipeline.
pub fn naive_mfcc(x: &[f64], sample_rate: u32, cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let m = cfg.n_mels as f64;
    naive_mel_energies(x, sample_rate, cfg)
        .into_iter()
        .map(|e| {
            let logs: Vec<f64> = e.iter().map(|v| v.max(cfg.log_floor).ln()).collect();
            (0..cfg.n_coeffs)
                .map(|k| {
                    let s: f64 = logs
                        .iter()
                        .enumerate()
                        .map(|(i, l)| l * (PI * k as f64 * (i as f64 + 0.5) / m).cos())
                        .sum();
                    let norm = if k == 0 {
                        (1.0 / m).sqrt()
                    } else {
                        (2.0 / m).sqrt()
                    };
                    norm * s
                })
                .collect()
        })
        .collect()
}

/// Largest elementwise deviation scaled by `max(1, |expected|)`.
pub fn max_scaled_error(got: &[f64], expected: &[f64]) -> f64 {
    assert_eq!(got.len(), expected.len());
    got.iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}
