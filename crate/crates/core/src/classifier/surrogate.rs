use std::collections::BTreeMap;

use super::{ClassificationResult, Classifier, ClassifierError};
use crate::audio::Waveform;
use crate::features::{feature_distance, FeatureMatrix, MfccConfig, MfccExtractor};

/// Nearest-template classifier: a softmax over negative MFCC distances to
/// one reference feature matrix per label.
///
/// `confidence_k = exp(-d_k / T) / sum_j exp(-d_j / T)`
#[derive(Debug, Clone)]
pub struct TemplateClassifier {
    labels: Vec<String>,
    templates: Vec<FeatureMatrix>,
    temperature: f64,
    extractor: MfccExtractor,
}

impl TemplateClassifier {
    pub const DEFAULT_TEMPERATURE: f64 = 1.0;

    /// Builds templates from one source waveform per label. All sources must
    /// share a sample rate and length.
    pub fn from_waveforms(
        sources: &BTreeMap<String, Waveform>,
        mfcc_cfg: MfccConfig,
        temperature: f64,
    ) -> Result<Self, ClassifierError> {
        let first = sources
            .values()
            .next()
            .ok_or_else(|| ClassifierError::InvalidSetup("no template sources".into()))?;
        let extractor = MfccExtractor::new(mfcc_cfg, first.sample_rate())?;
        let mut labels = Vec::with_capacity(sources.len());
        let mut templates = Vec::with_capacity(sources.len());
        for (label, w) in sources {
            labels.push(label.clone());
            templates.push(extractor.extract(w)?);
        }
        Self::from_templates(labels, templates, temperature, extractor)
    }

    pub fn from_templates(
        labels: Vec<String>,
        templates: Vec<FeatureMatrix>,
        temperature: f64,
        extractor: MfccExtractor,
    ) -> Result<Self, ClassifierError> {
        if labels.len() < 2 || labels.len() != templates.len() {
            return Err(ClassifierError::InvalidSetup(format!(
                "need >= 2 labels with one template each, got {} labels and {} templates",
                labels.len(),
                templates.len()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(ClassifierError::InvalidSetup("duplicate labels".into()));
        }
        let shape = templates[0].shape();
        if templates.iter().any(|t| t.shape() != shape) {
            return Err(ClassifierError::InvalidSetup(
                "templates do not share one shape".into(),
            ));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(ClassifierError::InvalidSetup(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self {
            labels,
            templates,
            temperature,
            extractor,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn sample_rate(&self) -> u32 {
        self.extractor.sample_rate()
    }

    pub fn mfcc_config(&self) -> &MfccConfig {
        self.extractor.config()
    }

    /// Distance from `w`'s features to every template, in label order.
    pub fn distances(&self, w: &Waveform) -> Result<Vec<f64>, ClassifierError> {
        let feats = self.extractor.extract(w)?;
        self.templates
            .iter()
            .map(|t| feature_distance(&feats, t).map_err(ClassifierError::from))
            .collect()
    }

    /// Softmax of `-d / temperature`, shifted by the minimum distance for
    /// numerical stability.
    pub fn confidences_from_distances(
        &self,
        distances: &[f64],
    ) -> Result<ClassificationResult, ClassifierError> {
        let d_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = distances
            .iter()
            .map(|d| (-(d - d_min) / self.temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let map = self
            .labels
            .iter()
            .cloned()
            .zip(weights.iter().map(|w| w / total))
            .collect();
        ClassificationResult::new(map)
    }
}

impl Classifier for TemplateClassifier {
    fn classify(&self, w: &Waveform) -> Result<ClassificationResult, ClassifierError> {
        let d = self.distances(w)?;
        self.confidences_from_distances(&d)
    }
}
