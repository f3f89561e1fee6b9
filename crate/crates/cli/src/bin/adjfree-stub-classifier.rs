//! Minimal external classifier speaking the line-delimited JSON protocol.
//! Used to exercise the subprocess bridge.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::time::Duration;

use adjfree::{make_synthetic_corpus, read_wav, Classifier, MfccConfig, TemplateClassifier};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

#[derive(Parser)]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Subcommand)]
enum Mode {
    /// Reply with the same confidences to every request, e.g. `yes=0.8,no=0.2`.
    Fixed { confidences: String },
    /// Reply with a line that is not JSON.
    Malformed,
    /// Reply with a mismatched request id.
    WrongId,
    /// Read requests but answer only after sleeping.
    Sleep { seconds: f64 },
    /// Template surrogate over the synthetic corpus, sized to each request.
    Surrogate {
        #[arg(long, default_value_t = 0)]
        corpus_seed: u64,
    },
}

#[derive(Deserialize)]
struct Request {
    id: u64,
    wav_path: String,
}

fn parse_fixed(s: &str) -> Result<BTreeMap<String, f64>> {
    s.split(',')
        .map(|kv| {
            let (k, v) = kv.split_once('=').context("expected label=confidence")?;
            Ok((k.trim().to_string(), v.trim().parse::<f64>()?))
        })
        .collect()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let fixed = match &cli.mode {
        Mode::Fixed { confidences } => Some(parse_fixed(confidences)?),
        _ => None,
    };
    let labels: Vec<String> = [
        "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let mut model: Option<((usize, u32), TemplateClassifier)> = None;

    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line).context("bad request")?;
        let reply = match &cli.mode {
            Mode::Fixed { .. } => {
                json!({"id": req.id, "confidences": fixed.as_ref().unwrap()}).to_string()
            }
            Mode::Malformed => "this is not json".to_string(),
            Mode::WrongId => json!({"id": req.id + 1000, "confidences": {"a": 1.0}}).to_string(),
            Mode::Sleep { seconds } => {
                std::thread::sleep(Duration::from_secs_f64(*seconds));
                json!({"id": req.id, "confidences": {"a": 1.0}}).to_string()
            }
            Mode::Surrogate { corpus_seed } => {
                let w = read_wav(&req.wav_path)?;
                let shape = (w.len(), w.sample_rate());
                if model.as_ref().map(|m| m.0) != Some(shape) {
                    let corpus = make_synthetic_corpus(
                        &labels,
                        w.duration(),
                        w.sample_rate(),
                        *corpus_seed,
                    )?;
                    let m =
                        TemplateClassifier::from_waveforms(&corpus, MfccConfig::default(), 1.0)?;
                    model = Some((shape, m));
                }
                let r = model.as_ref().unwrap().1.classify(&w)?;
                json!({"id": req.id, "confidences": r.confidences()}).to_string()
            }
        };
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}
