//! Mono PCM audio: the [`Waveform`] container, 16-bit WAV I/O, circular
//! time shifting and clipped mixing.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("sample {index} has magnitude {value} > 1.0")]
    OutOfRange { index: usize, value: f64 },
    #[error("lag of {lag} s exceeds the waveform duration of {duration} s")]
    LagTooLarge { lag: f64, duration: f64 },
    #[error("length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
}

/// Mono audio with samples normalized to full scale `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Number of whole samples a lag in seconds corresponds to at `sample_rate`.
pub fn lag_to_samples(lag: f64, sample_rate: u32) -> i64 {
    (lag * sample_rate as f64).round() as i64
}

/// Rotates `p` so that sample `k` of the output is sample
/// `(k - round(lag * sr)) mod N` of the input. Positive lags delay.
pub fn shift_circular(p: &Waveform, lag: f64) -> Result<Waveform, AudioError> {
    let duration = p.duration();
    if !lag.is_finite() || lag.abs() > duration {
        return Err(AudioError::LagTooLarge { lag, duration });
    }
    Ok(Waveform {
        samples: rotate(&p.samples, lag_to_samples(lag, p.sample_rate)),
        sample_rate: p.sample_rate,
    })
}

pub(crate) fn rotate(samples: &[f64], shift: i64) -> Vec<f64> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let k = shift.rem_euclid(n as i64) as usize;
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&samples[n - k..]);
    out.extend_from_slice(&samples[..n - k]);
    out
}

/// Elementwise sum of `s` and `p`, hard-clipped to `[-1, 1]`.
pub fn mix_clipped(s: &Waveform, p: &Waveform) -> Result<Waveform, AudioError> {
    if s.sample_rate != p.sample_rate {
        return Err(AudioError::RateMismatch(s.sample_rate, p.sample_rate));
    }
    if s.len() != p.len() {
        return Err(AudioError::LengthMismatch(s.len(), p.len()));
    }
    Ok(Waveform {
        samples: mix_slices(&s.samples, &p.samples),
        sample_rate: s.sample_rate,
    })
}

pub(crate) fn mix_slices(s: &[f64], p: &[f64]) -> Vec<f64> {
    s.iter()
        .zip(p)
        .map(|(a, b)| (a + b).clamp(-1.0, 1.0))
        .collect()
}

/// Encodes one amplitude as a 16-bit PCM value, using the same 32768 scale
/// as [`decode_sample`] so a round trip is off by at most one step.
pub fn encode_sample(a: f64) -> i16 {
    (a * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Decodes one 16-bit PCM value into `[-1, 1)`.
pub fn decode_sample(v: i16) -> f64 {
    v as f64 / 32768.0
}

const PCM_FORMAT: u16 = 1;

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_wav(&bytes)
}

/// Parses an in-memory RIFF/WAVE file holding 16-bit mono PCM.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    let malformed = |m: &str| AudioError::MalformedHeader(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE signature"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| malformed("chunk extends past end of file"))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(malformed("fmt chunk shorter than 16 bytes"));
                }
                let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                fmt = Some((u16_at(0), u16_at(2), rate, u16_at(14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;
    if format != PCM_FORMAT {
        return Err(AudioError::UnsupportedEncoding(format!(
            "format tag {format} (only PCM = 1 is supported)"
        )));
    }
    if channels != 1 {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{channels} channels (only mono is supported)"
        )));
    }
    if bits != 16 {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{bits} bits per sample (only 16 is supported)"
        )));
    }
    if rate == 0 {
        return Err(malformed("sample rate of zero"));
    }
    if data.len() % 2 != 0 {
        return Err(malformed("odd-length data chunk"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| decode_sample(i16::from_le_bytes([c[0], c[1]])))
        .collect();
    Waveform::new(samples, rate)
}

pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let bytes = encode_wav(w)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Serializes `w` as a canonical 44-byte-header PCM WAV.
pub fn encode_wav(w: &Waveform) -> Result<Vec<u8>, AudioError> {
    if let Some(index) = w.samples.iter().position(|s| s.abs() > 1.0) {
        return Err(AudioError::OutOfRange {
            index,
            value: w.samples[index],
        });
    }
    let data_len = (w.len() * 2) as u32;
    let mut b = Vec::with_capacity(44 + data_len as usize);
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVE");
    b.extend_from_slice(b"fmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&PCM_FORMAT.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&w.sample_rate.to_le_bytes());
    b.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        b.extend_from_slice(&encode_sample(s).to_le_bytes());
    }
    Ok(b)
}
