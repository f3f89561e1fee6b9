use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClassifierError;
use crate::audio::Waveform;

/// Peak amplitude of generated clips, leaving headroom for a perturbation.
pub const CORPUS_PEAK: f64 = 0.6;

/// Amplitude of the uniform background hiss added to every clip.
pub const CORPUS_NOISE: f64 = 0.003;

fn label_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, folded into the user seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

/// One deterministic clip per label: a three-tone chord plus a linear chirp
/// under a slow amplitude envelope, normalized to [`CORPUS_PEAK`], over a
/// low background hiss of amplitude [`CORPUS_NOISE`].
pub fn make_synthetic_corpus(
    labels: &[String],
    duration: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<BTreeMap<String, Waveform>, ClassifierError> {
    if labels.len() < 2 {
        return Err(ClassifierError::InvalidSetup(format!(
            "need at least 2 labels, got {}",
            labels.len()
        )));
    }
    if !(duration > 0.0) {
        return Err(ClassifierError::InvalidSetup(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let n = (duration * sample_rate as f64).round() as usize;
    let sr = sample_rate as f64;
    let nyquist = sr / 2.0;

    let mut out = BTreeMap::new();
    for label in labels {
        let mut rng = ChaCha8Rng::seed_from_u64(label_seed(seed, label));
        let tones: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen_range(120.0..0.8 * nyquist),
                    rng.gen_range(0.4..1.0),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        let chirp_from = rng.gen_range(100.0..0.8 * nyquist);
        let chirp_to = rng.gen_range(100.0..0.8 * nyquist);
        let chirp_amp = rng.gen_range(0.3..0.8);
        let env_rate = rng.gen_range(1.0..6.0);
        let env_phase = rng.gen_range(0.0..2.0 * PI);

        let mut samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                let chord: f64 = tones
                    .iter()
                    .map(|(f, a, ph)| a * (2.0 * PI * f * t + ph).sin())
                    .sum();
                let sweep = (chirp_to - chirp_from) / duration;
                let chirp = chirp_amp * (2.0 * PI * (chirp_from * t + 0.5 * sweep * t * t)).sin();
                let env = 0.6 + 0.4 * (2.0 * PI * env_rate * t + env_phase).sin();
                env * (chord + chirp)
            })
            .collect();
        let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if peak > 0.0 {
            let g = CORPUS_PEAK / peak;
            samples.iter_mut().for_each(|s| *s *= g);
        }
        for s in samples.iter_mut() {
            *s += CORPUS_NOISE * rng.gen_range(-1.0..1.0);
        }
        out.insert(label.clone(), Waveform::new(samples, sample_rate)?);
    }
    Ok(out)
}
