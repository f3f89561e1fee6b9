//! MFCC extraction and feature-matrix distances.
//!
//! Per frame the pipeline is: Hamming window, power spectrum of an
//! `n_fft`-point FFT, triangular HTK-mel filterbank spanning 0 Hz to
//! Nyquist, natural log with an energy floor, orthonormal DCT-II truncated
//! to `n_coeffs`. There is no pre-emphasis, liftering or delta stage.
//!
//! [`MfccExtractor`] precomputes the window, filterbank, DCT basis and FFT
//! plan for one `(MfccConfig, sample_rate)` pair and is cheap to share
//! between threads.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::Waveform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("invalid MFCC configuration: {0}")]
    InvalidConfig(String),
    #[error("signal of {len} samples is shorter than one frame of {frame} samples")]
    SignalTooShort { len: usize, frame: usize },
    #[error("feature shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("extractor built for {expected} Hz but waveform is {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    /// Frame length in seconds.
    pub frame_len: f64,
    /// Hop between frame starts in seconds.
    pub frame_stride: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_len: 0.025,
            frame_stride: 0.010,
            n_fft: 512,
            n_mels: 40,
            n_coeffs: 13,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_len * sample_rate as f64).round() as usize
    }

    pub fn stride_samples(&self, sample_rate: u32) -> usize {
        (self.frame_stride * sample_rate as f64).round() as usize
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize, sample_rate: u32) -> Result<usize, FeatureError> {
        let frame = self.frame_samples(sample_rate);
        let stride = self.stride_samples(sample_rate);
        if len < frame {
            return Err(FeatureError::SignalTooShort { len, frame });
        }
        Ok((len - frame) / stride + 1)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if !(self.frame_stride > 0.0 && self.frame_stride <= self.frame_len) {
            return bad(format!(
                "need 0 < frame_stride ({}) <= frame_len ({})",
                self.frame_stride, self.frame_len
            ));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return bad(format!(
                "need 0 < n_coeffs ({}) <= n_mels ({})",
                self.n_coeffs, self.n_mels
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad(format!(
                "log_floor must be positive, got {}",
                self.log_floor
            ));
        }
        let frame = self.frame_samples(sample_rate);
        let stride = self.stride_samples(sample_rate);
        if frame == 0 || stride == 0 {
            return bad(format!(
                "frame ({frame}) and stride ({stride}) must both span at least one sample at {sample_rate} Hz"
            ));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < frame {
            return bad(format!(
                "n_fft ({}) must be a power of two >= the frame length ({frame})",
                self.n_fft
            ));
        }
        Ok(())
    }
}

/// Frame-major matrix of cepstral coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    frames: usize,
    coeffs_per_frame: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(frames: usize, coeffs_per_frame: usize, values: Vec<f64>) -> Self {
        assert_eq!(frames * coeffs_per_frame, values.len(), "matrix size");
        Self {
            frames,
            coeffs_per_frame,
            values,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn coeffs_per_frame(&self) -> usize {
        self.coeffs_per_frame
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.coeffs_per_frame)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.coeffs_per_frame..(i + 1) * self.coeffs_per_frame]
    }

    pub fn get(&self, frame: usize, coeff: usize) -> f64 {
        self.values[frame * self.coeffs_per_frame + coeff]
    }
}

/// How the distance between two feature matrices is normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    /// Frobenius norm of the difference.
    #[default]
    L2,
    /// Frobenius norm divided by `sqrt(element count)`.
    Rmse,
}

/// Frobenius norm of `a - b`.
pub fn feature_distance(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<f64, FeatureError> {
    if a.shape() != b.shape() {
        return Err(FeatureError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

pub fn feature_distance_with(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    kind: DistanceKind,
) -> Result<f64, FeatureError> {
    let d = feature_distance(a, b)?;
    Ok(match kind {
        DistanceKind::L2 => d,
        DistanceKind::Rmse if a.values.is_empty() => 0.0,
        DistanceKind::Rmse => d / (a.values.len() as f64).sqrt(),
    })
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `n_mels + 2` filter edge points, evenly
/// spaced in mel between 0 Hz and Nyquist.
pub fn mel_edges(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// One triangular filter stored as a contiguous run of nonzero weights.
#[derive(Debug, Clone)]
struct MelFilter {
    first_bin: usize,
    weights: Vec<f64>,
}

#[derive(Clone)]
pub struct MfccExtractor {
    cfg: MfccConfig,
    sample_rate: u32,
    frame: usize,
    stride: usize,
    window: Vec<f64>,
    filters: Vec<MelFilter>,
    /// `n_coeffs x n_mels`, row-major.
    dct: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("cfg", &self.cfg)
            .field("sample_rate", &self.sample_rate)
            .finish_non_exhaustive()
    }
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        cfg.validate(sample_rate)?;
        let frame = cfg.frame_samples(sample_rate);
        let stride = cfg.stride_samples(sample_rate);

        let window = if frame == 1 {
            vec![1.0]
        } else {
            (0..frame)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame - 1) as f64).cos())
                .collect()
        };

        let n_bins = cfg.n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / cfg.n_fft as f64;
        let edges = mel_edges(cfg.n_mels, sample_rate);
        let filters = edges
            .windows(3)
            .map(|e| {
                let (lo, mid, hi) = (e[0], e[1], e[2]);
                let mut first_bin = None;
                let mut weights = Vec::new();
                for k in 0..n_bins {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    if w > 0.0 {
                        first_bin.get_or_insert(k);
                        weights.push(w);
                    } else if first_bin.is_some() {
                        break;
                    }
                }
                MelFilter {
                    first_bin: first_bin.unwrap_or(0),
                    weights,
                }
            })
            .collect();

        let m = cfg.n_mels as f64;
        let mut dct = Vec::with_capacity(cfg.n_coeffs * cfg.n_mels);
        for k in 0..cfg.n_coeffs {
            let scale = if k == 0 {
                (1.0 / m).sqrt()
            } else {
                (2.0 / m).sqrt()
            };
            for n in 0..cfg.n_mels {
                dct.push(scale * (PI * k as f64 * (2 * n + 1) as f64 / (2.0 * m)).cos());
            }
        }

        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            cfg,
            sample_rate,
            frame,
            stride,
            window,
            filters,
            dct,
            fft,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn extract(&self, w: &Waveform) -> Result<FeatureMatrix, FeatureError> {
        if w.sample_rate() != self.sample_rate {
            return Err(FeatureError::RateMismatch {
                expected: self.sample_rate,
                actual: w.sample_rate(),
            });
        }
        self.extract_samples(w.samples())
    }

    /// Same as [`extract`](Self::extract) for raw samples assumed to be at the
    /// extractor's rate.
    pub fn extract_samples(&self, x: &[f64]) -> Result<FeatureMatrix, FeatureError> {
        if x.len() < self.frame {
            return Err(FeatureError::SignalTooShort {
                len: x.len(),
                frame: self.frame,
            });
        }
        let frames = (x.len() - self.frame) / self.stride + 1;
        let n_fft = self.cfg.n_fft;
        let n_coeffs = self.cfg.n_coeffs;
        let mut values = Vec::with_capacity(frames * n_coeffs);
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_fft / 2 + 1];
        let mut log_mel = vec![0.0; self.cfg.n_mels];

        for f in 0..frames {
            let start = f * self.stride;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = if i < self.frame {
                    Complex64::new(x[start + i] * self.window[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (out, filt) in log_mel.iter_mut().zip(&self.filters) {
                let e: f64 = filt
                    .weights
                    .iter()
                    .zip(&power[filt.first_bin..])
                    .map(|(w, p)| w * p)
                    .sum();
                *out = e.max(self.cfg.log_floor).ln();
            }
            for row in self.dct.chunks_exact(self.cfg.n_mels) {
                values.push(row.iter().zip(&log_mel).map(|(a, b)| a * b).sum());
            }
        }
        Ok(FeatureMatrix::new(frames, n_coeffs, values))
    }

    /// Pre-log mel filterbank energies of every frame, frame-major.
    pub fn mel_energies(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, FeatureError> {
        if x.len() < self.frame {
            return Err(FeatureError::SignalTooShort {
                len: x.len(),
                frame: self.frame,
            });
        }
        let frames = (x.len() - self.frame) / self.stride + 1;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.n_fft];
        let mut out = Vec::with_capacity(frames);
        for f in 0..frames {
            let start = f * self.stride;
            buf.fill(Complex64::new(0.0, 0.0));
            for i in 0..self.frame {
                buf[i].re = x[start + i] * self.window[i];
            }
            self.fft.process(&mut buf);
            let energies = self
                .filters
                .iter()
                .map(|filt| {
                    filt.weights
                        .iter()
                        .enumerate()
                        .map(|(j, w)| w * buf[filt.first_bin + j].norm_sqr())
                        .sum()
                })
                .collect();
            out.push(energies);
        }
        Ok(out)
    }
}

/// Convenience wrapper building a one-off extractor.
pub fn mfcc(w: &Waveform, cfg: &MfccConfig) -> Result<FeatureMatrix, FeatureError> {
    MfccExtractor::new(*cfg, w.sample_rate())?.extract(w)
}
