//! Turns a candidate perturbation into the objective vector `(f1, f2, f3)`:
//!
//! - `f1`: mean confidence of the correct class over a schedule of
//!   playback lags,
//! - `f2`: population standard deviation of those confidences,
//! - `f3`: MFCC distance between the perturbed and clean target at zero lag.
//!
//! All three are minimized.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{lag_to_samples, mix_slices, rotate, AudioError, Waveform};
use crate::classifier::{Classifier, ClassifierError};
use crate::features::{
    feature_distance_with, DistanceKind, FeatureError, FeatureMatrix, MfccConfig, MfccExtractor,
};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("invalid lag schedule: {0}")]
    InvalidLagSchedule(String),
    #[error("genome has {actual} dimensions, target has {expected} samples")]
    GenomeLength { expected: usize, actual: usize },
    #[error("invalid genome: {0}")]
    InvalidGenome(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// Per-sample perturbation `rho`, boxed to `[-bound, bound]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    rho: Vec<f64>,
    bound: f64,
}

impl Genome {
    pub fn new(rho: Vec<f64>, bound: f64) -> Result<Self, ObjectiveError> {
        if !(bound > 0.0 && bound <= 1.0) {
            return Err(ObjectiveError::InvalidGenome(format!(
                "bound must be in (0, 1], got {bound}"
            )));
        }
        if let Some(i) = rho.iter().position(|x| !x.is_finite() || x.abs() > bound) {
            return Err(ObjectiveError::InvalidGenome(format!(
                "component {i} = {} outside [-{bound}, {bound}]",
                rho[i]
            )));
        }
        Ok(Self { rho, bound })
    }

    /// Builds a genome by clamping every component into the box.
    pub fn clamped(mut rho: Vec<f64>, bound: f64) -> Result<Self, ObjectiveError> {
        for x in &mut rho {
            *x = if x.is_nan() {
                0.0
            } else {
                x.clamp(-bound, bound)
            };
        }
        Self::new(rho, bound)
    }

    pub fn zeros(len: usize, bound: f64) -> Result<Self, ObjectiveError> {
        Self::new(vec![0.0; len], bound)
    }

    /// Uniform sample from the whole box.
    pub fn random<R: Rng + ?Sized>(
        len: usize,
        bound: f64,
        rng: &mut R,
    ) -> Result<Self, ObjectiveError> {
        let rho = (0..len).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self::new(rho, bound)
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn in_box(&self) -> bool {
        self.rho.iter().all(|x| x.abs() <= self.bound)
    }

    pub fn to_waveform(&self, sample_rate: u32) -> Result<Waveform, AudioError> {
        Waveform::new(self.rho.clone(), sample_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    F1,
    F2,
    F3,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::F1, Objective::F2, Objective::F3];

    pub fn name(self) -> &'static str {
        match self {
            Objective::F1 => "f1",
            Objective::F2 => "f2",
            Objective::F3 => "f3",
        }
    }
}

impl FromStr for Objective {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Objective::F1),
            "f2" => Ok(Objective::F2),
            "f3" => Ok(Objective::F3),
            other => Err(ObjectiveError::InvalidArgument(format!(
                "unknown objective `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which objectives the optimizer sees. `F1F3` drops the spread term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveSet {
    F1F3,
    #[default]
    F1F2F3,
}

impl ObjectiveSet {
    pub fn objectives(self) -> &'static [Objective] {
        match self {
            ObjectiveSet::F1F3 => &[Objective::F1, Objective::F3],
            ObjectiveSet::F1F2F3 => &[Objective::F1, Objective::F2, Objective::F3],
        }
    }

    pub fn len(self) -> usize {
        self.objectives().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn project(self, v: &ObjectiveVector) -> Vec<f64> {
        self.objectives().iter().map(|&o| v.get(o)).collect()
    }
}

impl FromStr for ObjectiveSet {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f1f3" => Ok(ObjectiveSet::F1F3),
            "f1f2f3" => Ok(ObjectiveSet::F1F2F3),
            other => Err(ObjectiveError::InvalidArgument(format!(
                "unknown objective set `{other}` (expected f1f3 or f1f2f3)"
            ))),
        }
    }
}

impl fmt::Display for ObjectiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveSet::F1F3 => "f1f3",
            ObjectiveSet::F1F2F3 => "f1f2f3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

impl ObjectiveVector {
    pub fn new(f1: f64, f2: f64, f3: f64) -> Self {
        Self { f1, f2, f3 }
    }

    pub fn get(&self, o: Objective) -> f64 {
        match o {
            Objective::F1 => self.f1,
            Objective::F2 => self.f2,
            Objective::F3 => self.f3,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.f1, self.f2, self.f3]
    }
}

/// Sorted, symmetric set of playback lags in seconds, always containing 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSchedule {
    lags: Vec<f64>,
    t_max: f64,
}

impl LagSchedule {
    pub fn new(lags: Vec<f64>, t_max: f64) -> Result<Self, ObjectiveError> {
        let bad = |m: String| Err(ObjectiveError::InvalidLagSchedule(m));
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return bad(format!("t_max must be finite and >= 0, got {t_max}"));
        }
        if lags.iter().any(|l| !l.is_finite() || l.abs() > t_max) {
            return bad(format!("every lag must lie in [-{t_max}, {t_max}]"));
        }
        if lags.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lags must be strictly increasing".into());
        }
        if lags.iter().filter(|&&l| l == 0.0).count() != 1 {
            return bad("lag 0 must appear exactly once".into());
        }
        let n = lags.len();
        if (0..n).any(|i| lags[i] != -lags[n - 1 - i]) {
            return bad("lags must be symmetric about 0".into());
        }
        Ok(Self { lags, t_max })
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }
}

/// `n` evenly spaced lags from `-t_max` to `t_max` inclusive; `n` must be
/// odd so that 0 is on the grid.
pub fn default_lag_schedule(t_max: f64, n: usize) -> Result<LagSchedule, ObjectiveError> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(ObjectiveError::InvalidLagSchedule(format!(
            "lag count must be odd and >= 3, got {n}"
        )));
    }
    if !(t_max > 0.0) {
        return Err(ObjectiveError::InvalidLagSchedule(format!(
            "t_max must be positive, got {t_max}"
        )));
    }
    let half = (n / 2) as i64;
    // dividing first keeps the end points at exactly ±t_max and the grid
    // exactly symmetric
    let lags = (-half..=half)
        .map(|i| t_max * (i as f64 / half as f64))
        .collect();
    LagSchedule::new(lags, t_max)
}

/// How lags are chosen per evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LagMode {
    /// The context's fixed schedule, every time.
    #[default]
    Grid,
    /// A fresh symmetric draw of the same size per evaluation key:
    /// `{0} ∪ {±u_i}` with `u_i ~ U(0, t_max]`.
    Random { seed: u64 },
}

impl LagMode {
    fn schedule(&self, grid: &LagSchedule, key: u64) -> Result<LagSchedule, ObjectiveError> {
        match *self {
            LagMode::Grid => Ok(grid.clone()),
            LagMode::Random { seed } => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ key.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let k = grid.len() / 2;
                let t = grid.t_max();
                let mut mags: Vec<f64> = Vec::with_capacity(k);
                while mags.len() < k {
                    let u = t * (1.0 - rng.gen::<f64>());
                    if u > 0.0 && !mags.contains(&u) {
                        mags.push(u);
                    }
                }
                mags.sort_by(f64::total_cmp);
                let lags = mags
                    .iter()
                    .rev()
                    .map(|u| -u)
                    .chain(std::iter::once(0.0))
                    .chain(mags.iter().copied())
                    .collect();
                LagSchedule::new(lags, t)
            }
        }
    }
}

/// One point of a lag-robustness curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagPoint {
    pub lag: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objectives: ObjectiveVector,
    pub curve: Vec<LagPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustFreeReport {
    pub adjust_free: bool,
    pub threshold: f64,
    pub max_confidence: f64,
    pub curve: Vec<LagPoint>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    // shifted by the first value so constant input gives exactly zero spread
    let n = values.len() as f64;
    let k = values[0];
    let shift = values.iter().map(|v| v - k).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| (v - k - shift) * (v - k - shift))
        .sum::<f64>()
        / n;
    (k + shift, var.sqrt())
}

/// Everything needed to score perturbations against one target clip.
pub struct EvalContext {
    target: Waveform,
    correct_label: String,
    clean_confidence: f64,
    model: Arc<dyn Classifier>,
    lags: LagSchedule,
    extractor: MfccExtractor,
    target_features: FeatureMatrix,
    distance: DistanceKind,
    lag_mode: LagMode,
    queries: AtomicU64,
}

impl fmt::Debug for EvalContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvalContext")
            .field("correct_label", &self.correct_label)
            .field("lags", &self.lags)
            .field("queries", &self.queries())
            .finish_non_exhaustive()
    }
}

impl EvalContext {
    /// Queries the model once on the clean target to fix the correct label.
    /// That query is not counted.
    pub fn new(
        target: Waveform,
        model: Arc<dyn Classifier>,
        lags: LagSchedule,
        mfcc_cfg: MfccConfig,
    ) -> Result<Self, ObjectiveError> {
        if lags.t_max() > target.duration() {
            return Err(ObjectiveError::InvalidLagSchedule(format!(
                "t_max {} s exceeds the target duration of {} s",
                lags.t_max(),
                target.duration()
            )));
        }
        let extractor = MfccExtractor::new(mfcc_cfg, target.sample_rate())?;
        let target_features = extractor.extract(&target)?;
        let clean = model.classify(&target)?;
        let correct_label = clean.predicted().to_string();
        let clean_confidence = clean.confidence_of(&correct_label)?;
        Ok(Self {
            target,
            correct_label,
            clean_confidence,
            model,
            lags,
            extractor,
            target_features,
            distance: DistanceKind::L2,
            lag_mode: LagMode::Grid,
            queries: AtomicU64::new(0),
        })
    }

    pub fn with_distance(mut self, distance: DistanceKind) -> Self {
        self.distance = distance;
        self
    }

    pub fn with_lag_mode(mut self, mode: LagMode) -> Self {
        self.lag_mode = mode;
        self
    }

    pub fn target(&self) -> &Waveform {
        &self.target
    }

    pub fn correct_label(&self) -> &str {
        &self.correct_label
    }

    /// Correct-class confidence on the unperturbed target.
    pub fn clean_confidence(&self) -> f64 {
        self.clean_confidence
    }

    pub fn lag_schedule(&self) -> &LagSchedule {
        &self.lags
    }

    pub fn lag_mode(&self) -> LagMode {
        self.lag_mode
    }

    pub fn distance_kind(&self) -> DistanceKind {
        self.distance
    }

    pub fn model(&self) -> &Arc<dyn Classifier> {
        &self.model
    }

    /// Classifier queries issued through this context so far.
    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn genome_len(&self) -> usize {
        self.target.len()
    }

    fn check_len(&self, g: &Genome) -> Result<(), ObjectiveError> {
        if g.len() != self.target.len() {
            return Err(ObjectiveError::GenomeLength {
                expected: self.target.len(),
                actual: g.len(),
            });
        }
        Ok(())
    }

    /// Correct-class confidence with `rho` played `lag` seconds late.
    pub fn confidence_at(&self, g: &Genome, lag: f64) -> Result<f64, ObjectiveError> {
        self.check_len(g)?;
        if lag.abs() > self.target.duration() {
            return Err(AudioError::LagTooLarge {
                lag,
                duration: self.target.duration(),
            }
            .into());
        }
        let shifted = rotate(g.rho(), lag_to_samples(lag, self.target.sample_rate()));
        let mixed = Waveform::new(
            mix_slices(self.target.samples(), &shifted),
            self.target.sample_rate(),
        )?;
        let result = self.model.classify(&mixed);
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(result?.confidence_of(&self.correct_label)?)
    }

    /// `f3`: feature distance between the zero-lag mix and the clean target.
    pub fn distortion(&self, g: &Genome) -> Result<f64, ObjectiveError> {
        self.check_len(g)?;
        let mixed = mix_slices(self.target.samples(), g.rho());
        let feats = self.extractor.extract_samples(&mixed)?;
        Ok(feature_distance_with(
            &feats,
            &self.target_features,
            self.distance,
        )?)
    }

    pub fn evaluate(&self, g: &Genome) -> Result<ObjectiveVector, ObjectiveError> {
        Ok(self.evaluate_detailed(g, 0)?.objectives)
    }

    /// Full evaluation. `key` selects the lag draw in [`LagMode::Random`]
    /// and is ignored for the fixed grid.
    pub fn evaluate_detailed(&self, g: &Genome, key: u64) -> Result<Evaluation, ObjectiveError> {
        self.check_len(g)?;
        let schedule = self.lag_mode.schedule(&self.lags, key)?;
        let curve = schedule
            .lags()
            .iter()
            .map(|&lag| {
                Ok(LagPoint {
                    lag,
                    confidence: self.confidence_at(g, lag)?,
                })
            })
            .collect::<Result<Vec<_>, ObjectiveError>>()?;
        let confidences: Vec<f64> = curve.iter().map(|p| p.confidence).collect();
        let (f1, f2) = mean_std(&confidences);
        let f3 = self.distortion(g)?;
        Ok(Evaluation {
            objectives: ObjectiveVector::new(f1, f2, f3),
            curve,
        })
    }

    /// Checks the correct-class confidence on a dense `dense_n`-point grid
    /// over `±t_max`; adjust-free iff every point is below `threshold`.
    pub fn is_adjust_free(
        &self,
        g: &Genome,
        dense_n: usize,
        threshold: f64,
    ) -> Result<AdjustFreeReport, ObjectiveError> {
        if dense_n < self.lags.len() {
            return Err(ObjectiveError::InvalidArgument(format!(
                "dense grid of {dense_n} points is coarser than the {}-lag schedule",
                self.lags.len()
            )));
        }
        let dense = default_lag_schedule(self.lags.t_max(), dense_n)?;
        let curve = dense
            .lags()
            .iter()
            .map(|&lag| {
                Ok(LagPoint {
                    lag,
                    confidence: self.confidence_at(g, lag)?,
                })
            })
            .collect::<Result<Vec<_>, ObjectiveError>>()?;
        Ok(adjust_free_verdict(curve, threshold))
    }
}

/// Verdict for an already-measured curve.
pub fn adjust_free_verdict(curve: Vec<LagPoint>, threshold: f64) -> AdjustFreeReport {
    let max_confidence = curve.iter().map(|p| p.confidence).fold(0.0, f64::max);
    AdjustFreeReport {
        adjust_free: curve.iter().all(|p| p.confidence < threshold),
        threshold,
        max_confidence,
        curve,
    }
}
