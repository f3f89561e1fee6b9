//! The black-box target model.
//!
//! Everything the attack learns about a model goes through
//! [`Classifier::classify`]: a label-to-confidence map and nothing else.

mod corpus;
mod subprocess;
mod surrogate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, Waveform};
use crate::features::FeatureError;

pub use corpus::make_synthetic_corpus;
pub use subprocess::{SubprocessClassifier, SubprocessConfig, TMPDIR_ENV};
pub use surrogate::TemplateClassifier;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid confidences: {0}")]
    InvalidConfidences(String),
    #[error("invalid classifier setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("failed to start classifier process `{command}`: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("classifier i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("classifier process exited before replying to request {0}")]
    ProcessExited(u64),
    #[error("no reply to request {id} within {seconds} s")]
    Timeout { id: u64, seconds: f64 },
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("label `{0}` missing from classifier output")]
    UnknownLabel(String),
}

/// Confidence assigned to each class label plus the arg-max label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    confidences: BTreeMap<String, f64>,
    predicted: String,
}

/// Tolerance on the confidence sum for in-process models.
pub const SUM_TOLERANCE: f64 = 1e-6;

impl ClassificationResult {
    /// Validates a confidence map whose sum must already be 1 within
    /// [`SUM_TOLERANCE`].
    pub fn new(confidences: BTreeMap<String, f64>) -> Result<Self, ClassifierError> {
        Self::normalized(confidences, SUM_TOLERANCE)
    }

    /// Accepts confidences summing to 1 within `tolerance` and rescales them
    /// to sum to exactly 1 (up to rounding).
    pub fn normalized(
        mut confidences: BTreeMap<String, f64>,
        tolerance: f64,
    ) -> Result<Self, ClassifierError> {
        if confidences.len() < 2 {
            return Err(ClassifierError::InvalidConfidences(format!(
                "need at least 2 classes, got {}",
                confidences.len()
            )));
        }
        for (label, &c) in &confidences {
            if !c.is_finite() || !(-tolerance..=1.0 + tolerance).contains(&c) {
                return Err(ClassifierError::InvalidConfidences(format!(
                    "confidence {c} for `{label}` outside [0, 1]"
                )));
            }
        }
        let sum: f64 = confidences.values().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(ClassifierError::InvalidConfidences(format!(
                "confidences sum to {sum}, not 1 within {tolerance}"
            )));
        }
        for c in confidences.values_mut() {
            *c = (*c / sum).clamp(0.0, 1.0);
        }
        let predicted = argmax(&confidences).to_string();
        Ok(Self {
            confidences,
            predicted,
        })
    }

    pub fn confidences(&self) -> &BTreeMap<String, f64> {
        &self.confidences
    }

    pub fn predicted(&self) -> &str {
        &self.predicted
    }

    pub fn confidence_of(&self, label: &str) -> Result<f64, ClassifierError> {
        self.confidences
            .get(label)
            .copied()
            .ok_or_else(|| ClassifierError::UnknownLabel(label.to_string()))
    }
}

/// Highest-confidence label; ties go to the lexicographically smallest.
fn argmax(confidences: &BTreeMap<String, f64>) -> &str {
    let mut best: Option<(&str, f64)> = None;
    for (label, &c) in confidences {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((label, c));
        }
    }
    best.map(|(l, _)| l).unwrap_or_default()
}

/// A model that can only be queried for per-class confidences.
pub trait Classifier: Send + Sync {
    fn classify(&self, w: &Waveform) -> Result<ClassificationResult, ClassifierError>;
}

impl<C: Classifier + ?Sized> Classifier for std::sync::Arc<C> {
    fn classify(&self, w: &Waveform) -> Result<ClassificationResult, ClassifierError> {
        (**self).classify(w)
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn classify(&self, w: &Waveform) -> Result<ClassificationResult, ClassifierError> {
        (**self).classify(w)
    }
}

/// Always returns the same confidences regardless of input.
#[derive(Debug, Clone)]
pub struct FixedClassifier {
    result: ClassificationResult,
}

impl FixedClassifier {
    pub fn new(confidences: BTreeMap<String, f64>) -> Result<Self, ClassifierError> {
        Ok(Self {
            result: ClassificationResult::new(confidences)?,
        })
    }
}

impl Classifier for FixedClassifier {
    fn classify(&self, _w: &Waveform) -> Result<ClassificationResult, ClassifierError> {
        Ok(self.result.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conf(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(l, c)| (l.to_string(), *c)).collect()
    }

    #[test]
    fn ties_go_to_the_smallest_label() {
        let r = ClassificationResult::new(conf(&[("yes", 0.5), ("no", 0.5)])).unwrap();
        assert_eq!(r.predicted(), "no");
        let r = ClassificationResult::new(conf(&[("b", 0.4), ("c", 0.4), ("a", 0.2)])).unwrap();
        assert_eq!(r.predicted(), "b");
    }

    #[test]
    fn renormalizes_within_band_and_rejects_beyond() {
        let r = ClassificationResult::normalized(conf(&[("a", 0.7004), ("b", 0.3)]), 1e-3).unwrap();
        let sum: f64 = r.confidences().values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(ClassificationResult::normalized(conf(&[("a", 0.71), ("b", 0.3)]), 1e-3).is_err());
        assert!(ClassificationResult::new(conf(&[("a", 0.7004), ("b", 0.3)])).is_err());
    }

    #[test]
    fn rejects_out_of_range_and_degenerate_maps() {
        assert!(ClassificationResult::new(conf(&[("a", 1.5), ("b", -0.5)])).is_err());
        assert!(ClassificationResult::new(conf(&[("a", 1.0)])).is_err());
        assert!(ClassificationResult::new(conf(&[("a", f64::NAN), ("b", 1.0)])).is_err());
    }

    #[test]
    fn unknown_label_lookup_fails() {
        let r = ClassificationResult::new(conf(&[("a", 0.25), ("b", 0.75)])).unwrap();
        assert_eq!(r.confidence_of("b").unwrap(), 0.75);
        assert!(matches!(
            r.confidence_of("z"),
            Err(ClassifierError::UnknownLabel(_))
        ));
    }
}
