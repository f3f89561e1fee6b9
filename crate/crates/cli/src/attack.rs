use std::fs;
use std::path::Path;
use std::time::Instant;

use adjfree::moead::{Checkpoint, RunState, StopReason};
use adjfree::report::{
    entry_order, knee_neighborhood, write_history_csv, AttackConfig, FrontEntry, FrontFile,
    HistoryRow, Verification,
};
use adjfree::{
    default_lag_schedule, read_wav, write_wav, EvalContext, Genome, LagMode, MfccConfig, Moead,
    MoeadError, RunConfig,
};
use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::{classifier, AttackArgs, LagModeArg, VerifyArg};

#[derive(Serialize)]
struct RunMeta<'a> {
    config: &'a AttackConfig,
    seed: u64,
    queries: u64,
    generations: usize,
    stop_reason: StopReason,
    wall_time_seconds: f64,
    target: String,
    correct_label: &'a str,
    clean_confidence: f64,
    resumed_from: Option<String>,
    version: &'static str,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn write_checkpoint(dir: &Path, state: &Checkpoint) -> Result<()> {
    let path = dir.join("checkpoint.json");
    fs::write(&path, state.to_json()?).with_context(|| format!("writing {}", path.display()))
}

pub fn run(args: AttackArgs) -> Result<()> {
    let started = Instant::now();
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let target = read_wav(&args.target)
        .with_context(|| format!("reading target {}", args.target.display()))?;
    let model = classifier::build(&args.model, &target)?;

    let lags = default_lag_schedule(args.tmax, args.lags)?;
    let lag_mode = match args.lag_mode {
        LagModeArg::Grid => LagMode::Grid,
        LagModeArg::Random => LagMode::Random { seed: args.seed },
    };
    let mfcc = MfccConfig::default();
    let ctx = EvalContext::new(target.clone(), model, lags, mfcc)?
        .with_distance(args.distance.into())
        .with_lag_mode(lag_mode);
    log::info!(
        "target classified as `{}` with confidence {:.4}",
        ctx.correct_label(),
        ctx.clean_confidence()
    );

    let run_cfg = RunConfig {
        n_pop: args.pop,
        n_gen: args.gens,
        neighborhood: args.neighborhood.min(args.pop),
        seed: args.seed,
        objectives: args.objectives,
        bound: args.bound,
        archive_capacity: Some(args.archive_capacity),
        max_queries: args.max_queries,
        ..RunConfig::default()
    };
    let config = AttackConfig {
        run: run_cfg.clone(),
        t_max: args.tmax,
        n_lags: args.lags,
        lag_mode,
        mfcc,
        distance: args.distance.into(),
        classifier: classifier::describe(&args.model),
    };
    let engine = Moead::new(&ctx, run_cfg)?;

    let out = args.out.clone();
    let every = args.checkpoint_every;
    let mut checkpoint_error = None;
    let observe = |s: &RunState| {
        if let Some(h) = s.history.last() {
            log::info!(
                "generation {:>5}  queries {:>9}  min f1 {:.4}  min f2 {:.4}  min f3 {:.3}  archive {}",
                h.generation, h.queries, h.min[0], h.min[1], h.min[2], h.archive_size
            );
        }
        if every > 0 && s.generation > 0 && s.generation.is_multiple_of(every) {
            if let Err(e) = write_checkpoint(&out, s) {
                checkpoint_error.get_or_insert(e);
            }
        }
    };
    let result = match &args.resume {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading checkpoint {}", path.display()))?;
            let state = RunState::from_json(&text)
                .with_context(|| format!("parsing checkpoint {}", path.display()))?;
            log::info!("resuming at generation {}", state.generation);
            engine.resume(state, observe)
        }
        None => engine.run_with(observe),
    };
    if let Some(e) = checkpoint_error {
        return Err(e);
    }
    let outcome = match result {
        Ok(o) => o,
        Err(MoeadError::Aborted {
            generation,
            checkpoint,
            source,
        }) => {
            write_checkpoint(&args.out, &checkpoint)?;
            bail!(
                "generation {generation} failed: {source}; state saved to {}",
                args.out.join("checkpoint.json").display()
            );
        }
        Err(e) => return Err(e.into()),
    };

    let mut entries: Vec<(Genome, FrontEntry)> = outcome
        .archive()
        .entries()
        .iter()
        .map(|e| {
            (
                e.genome.clone(),
                FrontEntry {
                    objectives: e.objectives,
                    wav: None,
                    verification: None,
                },
            )
        })
        .collect();
    entries.sort_by(|a, b| entry_order(&a.1, &b.1));
    let mut front: Vec<FrontEntry> = entries.iter().map(|e| e.1.clone()).collect();

    let exported = knee_neighborhood(&front, args.export);
    if !exported.is_empty() {
        fs::create_dir_all(args.out.join("wavs"))?;
    }
    for &i in &exported {
        let rel = format!("wavs/entry_{i:03}.wav");
        let w = entries[i].0.to_waveform(target.sample_rate())?;
        write_wav(&w, args.out.join(&rel))?;
        front[i].wav = Some(rel);
    }

    let to_verify: Vec<usize> = match args.verify {
        VerifyArg::All => (0..front.len()).collect(),
        VerifyArg::Exported => exported.clone(),
        VerifyArg::None => Vec::new(),
    };
    let dense_n = args.dense_lags.max(args.lags);
    for i in to_verify {
        let rep = ctx.is_adjust_free(&entries[i].0, dense_n, args.threshold)?;
        front[i].verification = Some(Verification {
            dense_n,
            threshold: args.threshold,
            max_confidence: rep.max_confidence,
            adjust_free: rep.adjust_free,
        });
    }
    let n_free = front
        .iter()
        .filter(|e| e.verification.as_ref().is_some_and(|v| v.adjust_free))
        .count();

    let file = FrontFile {
        entries: front,
        config: config.clone(),
        queries: outcome.queries(),
        target: args.target.display().to_string(),
        correct_label: ctx.correct_label().to_string(),
        clean_confidence: ctx.clean_confidence(),
    };
    file.write(&args.out.join("front.json"))?;
    let rows: Vec<HistoryRow> = outcome.history().iter().map(HistoryRow::from).collect();
    write_history_csv(&args.out.join("history.csv"), &rows)?;
    write_json(
        &args.out.join("run_meta.json"),
        &RunMeta {
            config: &config,
            seed: args.seed,
            queries: outcome.queries(),
            generations: outcome.state.generation,
            stop_reason: outcome.stop,
            wall_time_seconds: started.elapsed().as_secs_f64(),
            target: args.target.display().to_string(),
            correct_label: ctx.correct_label(),
            clean_confidence: ctx.clean_confidence(),
            resumed_from: args.resume.as_ref().map(|p| p.display().to_string()),
            version: env!("CARGO_PKG_VERSION"),
        },
    )?;

    println!(
        "front: {} entries, {} adjust-free at threshold {}; {} queries; artifacts in {}",
        file.entries.len(),
        n_free,
        args.threshold,
        outcome.queries(),
        args.out.display()
    );
    Ok(())
}
