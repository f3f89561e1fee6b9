use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use adjfree::{
    make_synthetic_corpus, Classifier, MfccConfig, SubprocessClassifier, SubprocessConfig,
    TemplateClassifier, Waveform,
};
use anyhow::{bail, Context, Result};

use crate::ModelArgs;

pub fn default_labels() -> Vec<String> {
    [
        "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassifierSpec {
    Builtin,
    Command(String),
}

impl FromStr for ClassifierSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "builtin" {
            return Ok(ClassifierSpec::Builtin);
        }
        match s.strip_prefix("cmd:") {
            Some(c) if !c.trim().is_empty() => Ok(ClassifierSpec::Command(c.to_string())),
            _ => Err(format!("expected `builtin` or `cmd:<command>`, got `{s}`")),
        }
    }
}

impl std::fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassifierSpec::Builtin => f.write_str("builtin"),
            ClassifierSpec::Command(c) => write!(f, "cmd:{c}"),
        }
    }
}

/// Builds the model for clips shaped like `target`.
pub fn build(args: &ModelArgs, target: &Waveform) -> Result<Arc<dyn Classifier>> {
    match &args.classifier {
        ClassifierSpec::Builtin => {
            if args.labels.len() < 2 {
                bail!("the built-in classifier needs at least 2 labels");
            }
            let corpus = make_synthetic_corpus(
                &args.labels,
                target.duration(),
                target.sample_rate(),
                args.corpus_seed,
            )?;
            let model = TemplateClassifier::from_waveforms(
                &corpus,
                MfccConfig::default(),
                args.temperature,
            )?;
            Ok(Arc::new(model))
        }
        ClassifierSpec::Command(cmd) => {
            if args.timeout.is_nan() || args.timeout <= 0.0 {
                bail!("timeout must be positive");
            }
            let mut cfg = SubprocessConfig::new(cmd.clone());
            cfg.timeout = Duration::from_secs_f64(args.timeout);
            cfg.pool_size = args.workers.max(1);
            let model = SubprocessClassifier::spawn(cfg)
                .with_context(|| format!("starting classifier `{cmd}`"))?;
            Ok(Arc::new(model))
        }
    }
}

/// Short description stored in run metadata.
pub fn describe(args: &ModelArgs) -> String {
    match &args.classifier {
        ClassifierSpec::Builtin => format!(
            "builtin(labels={}, corpus_seed={}, temperature={})",
            args.labels.join(","),
            args.corpus_seed,
            args.temperature
        ),
        other => other.to_string(),
    }
}
