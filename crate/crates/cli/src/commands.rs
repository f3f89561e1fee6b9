use std::fs;
use std::path::Path;

use adjfree::report::{
    compare_ablation, select_entry, tally_adjust_free, write_comparison_csv, write_curve_csv,
    FrontFile, RunSummary,
};
use adjfree::{
    default_lag_schedule, make_synthetic_corpus, read_wav, write_wav, EvalContext, Genome,
    MfccConfig,
};
use anyhow::{bail, Context, Result};

use crate::{classifier, CompareArgs, CorpusArgs, SelectArgs, SweepArgs, TallyArgs};

pub fn sweep_lag(args: SweepArgs) -> Result<()> {
    let target = read_wav(&args.target)
        .with_context(|| format!("reading target {}", args.target.display()))?;
    let pert = read_wav(&args.perturbation)
        .with_context(|| format!("reading perturbation {}", args.perturbation.display()))?;
    if pert.sample_rate() != target.sample_rate() || pert.len() != target.len() {
        bail!(
            "perturbation ({} samples @ {} Hz) does not match target ({} samples @ {} Hz)",
            pert.len(),
            pert.sample_rate(),
            target.len(),
            target.sample_rate()
        );
    }
    let model = classifier::build(&args.model, &target)?;
    let ctx = EvalContext::new(
        target,
        model,
        default_lag_schedule(args.tmax, 3)?,
        MfccConfig::default(),
    )?;
    let genome = Genome::new(pert.into_samples(), 1.0)?;
    let report = ctx.is_adjust_free(&genome, args.dense_lags, args.threshold)?;

    fs::create_dir_all(&args.out)?;
    let path = args.out.join("curve.csv");
    write_curve_csv(&path, &report.curve)?;
    println!(
        "correct label `{}`: max confidence {:.4} over {} lags in ±{} s",
        ctx.correct_label(),
        report.max_confidence,
        report.curve.len(),
        args.tmax
    );
    println!(
        "adjust-free at threshold {}: {}",
        args.threshold,
        if report.adjust_free { "yes" } else { "no" }
    );
    println!("curve written to {}", path.display());
    Ok(())
}

pub fn select(args: SelectArgs) -> Result<()> {
    let front = FrontFile::read(&args.front)?;
    let i = select_entry(&front.entries, args.strategy)?;
    let e = &front.entries[i];
    println!("entry {i}");
    println!(
        "f1 {}  f2 {}  f3 {}",
        e.objectives.f1, e.objectives.f2, e.objectives.f3
    );
    let base = args.front.parent().unwrap_or_else(|| Path::new("."));
    match &e.wav {
        Some(w) => println!("wav {}", base.join(w).display()),
        None => println!("wav (not exported; rerun the attack with a larger --export)"),
    }
    if let Some(v) = &e.verification {
        println!(
            "dense-grid max confidence {:.4} over {} lags; adjust-free: {}",
            v.max_confidence, v.dense_n, v.adjust_free
        );
    }
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let a = RunSummary::load(&args.with_spread)?;
    let b = RunSummary::load(&args.without_spread)?;
    let table = compare_ablation(&a, &b, args.bin_width);
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("comparison.csv");
    write_comparison_csv(&path, &table)?;
    if !table.budget_matched {
        println!(
            "warning: query budgets differ ({} vs {})",
            a.queries(),
            b.queries()
        );
    }
    if !table.same_target {
        println!("warning: runs attack different targets");
    }
    let findings = table.rows.iter().filter(|r| r.finding).count();
    println!(
        "{} paired rows, {} where only the lower-spread member is adjust-free; written to {}",
        table.rows.len(),
        findings,
        path.display()
    );
    Ok(())
}

pub fn tally(args: TallyArgs) -> Result<()> {
    let runs = args
        .runs
        .iter()
        .map(|d| RunSummary::load(d))
        .collect::<Result<Vec<_>, _>>()?;
    let t = tally_adjust_free(&runs, args.threshold)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("tally.json");
    let mut s = serde_json::to_string_pretty(&t)?;
    s.push('\n');
    fs::write(&path, s)?;
    for v in &t.verdicts {
        println!(
            "{:<40} {:<10} {}",
            v.target,
            v.correct_label,
            if v.adjust_free { "adjust-free" } else { "-" }
        );
    }
    println!(
        "{} of {} targets ({:.2}) written to {}",
        t.passes,
        t.targets,
        t.fraction,
        path.display()
    );
    Ok(())
}

pub fn make_corpus(args: CorpusArgs) -> Result<()> {
    let corpus = make_synthetic_corpus(&args.labels, args.duration, args.rate, args.seed)?;
    fs::create_dir_all(&args.out)?;
    for (label, w) in &corpus {
        let path = args.out.join(format!("{label}.wav"));
        write_wav(w, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}
