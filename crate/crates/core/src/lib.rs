//! Black-box search for lag-robust ("adjust-free") adversarial audio
//! perturbations.
//!
//! A perturbation is scored on three minimized objectives: the mean and the
//! spread of the target model's correct-class confidence over a schedule of
//! playback lags, and the MFCC distortion it introduces. [`moead`] searches
//! that trade-off with a decomposition-based evolutionary algorithm that
//! only ever sees classifier confidences.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod classifier;
pub mod features;
pub mod moead;
pub mod objectives;
pub mod report;

pub use audio::{mix_clipped, read_wav, shift_circular, write_wav, AudioError, Waveform};
pub use classifier::{
    make_synthetic_corpus, ClassificationResult, Classifier, ClassifierError, FixedClassifier,
    SubprocessClassifier, SubprocessConfig, TemplateClassifier,
};
pub use features::{
    feature_distance, mfcc, DistanceKind, FeatureMatrix, MfccConfig, MfccExtractor,
};
pub use moead::{Moead, MoeadError, ParetoArchive, RunConfig, RunOutcome, RunState};
pub use objectives::{
    default_lag_schedule, EvalContext, Genome, LagMode, LagSchedule, Objective, ObjectiveSet,
    ObjectiveVector,
};

/// Confidence below which a class is treated as not recognized when
/// checking adjust-freeness.
pub const DEFAULT_THRESHOLD: f64 = 0.49;
