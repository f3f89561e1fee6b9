//! On-disk run artifacts and the analyses built on them.
//!
//! A run directory holds `front.json` (the final nondominated set),
//! `history.csv` (per-generation population statistics) and exported
//! perturbation WAVs. The functions here read those files back and
//! derive front projections, representative-entry selection, 2- vs
//! 3-objective comparisons and adjust-free tallies.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{DistanceKind, MfccConfig};
use crate::moead::{GenerationStats, RunConfig};
use crate::objectives::{LagMode, LagPoint, Objective, ObjectiveError, ObjectiveVector};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown objective axis `{0}`")]
    UnknownAxis(String),
    #[error("unknown selection strategy `{0}` (expected min-f1, min-f1f2 or knee)")]
    UnknownStrategy(String),
    #[error("front is empty")]
    EmptyFront,
    #[error("{0} references missing file {1}")]
    MissingFile(String, PathBuf),
    #[error("no runs given")]
    NoRuns,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Dense-grid robustness check attached to a front entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub dense_n: usize,
    pub threshold: f64,
    pub max_confidence: f64,
    pub adjust_free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    pub objectives: ObjectiveVector,
    /// Exported perturbation, relative to the run directory.
    pub wav: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<Verification>,
}

/// Everything that determines a run's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub run: RunConfig,
    pub t_max: f64,
    pub n_lags: usize,
    pub lag_mode: LagMode,
    pub mfcc: MfccConfig,
    pub distance: DistanceKind,
    pub classifier: String,
}

/// Contents of `front.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontFile {
    pub entries: Vec<FrontEntry>,
    pub config: AttackConfig,
    pub queries: u64,
    pub target: String,
    pub correct_label: String,
    pub clean_confidence: f64,
}

impl FrontFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("front serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), ReportError> {
        fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| ReportError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Output order of front entries: by f1, then f2, then f3.
pub fn entry_order(a: &FrontEntry, b: &FrontEntry) -> std::cmp::Ordering {
    lexi(&a.objectives, &b.objectives)
}

pub fn sort_entries(entries: &mut [FrontEntry]) {
    entries.sort_by(entry_order);
}

/// One row of `history.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub generation: usize,
    pub queries: u64,
    pub f1_min: f64,
    pub f1_mean: f64,
    pub f2_min: f64,
    pub f2_mean: f64,
    pub f3_min: f64,
    pub f3_mean: f64,
    pub archive_size: usize,
    pub replacements: usize,
}

impl From<&GenerationStats> for HistoryRow {
    fn from(s: &GenerationStats) -> Self {
        Self {
            generation: s.generation,
            queries: s.queries,
            f1_min: s.min[0],
            f1_mean: s.mean[0],
            f2_min: s.min[1],
            f2_mean: s.mean[1],
            f3_min: s.min[2],
            f3_mean: s.mean[2],
            archive_size: s.archive_size,
            replacements: s.replacements,
        }
    }
}

pub fn write_history_csv(path: &Path, rows: &[HistoryRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub lag_seconds: f64,
    pub correct_class_confidence: f64,
}

pub fn write_curve_csv(path: &Path, curve: &[LagPoint]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in curve {
        w.serialize(CurveRow {
            lag_seconds: p.lag,
            correct_class_confidence: p.confidence,
        })?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn parse_axis(name: &str) -> Result<Objective, ReportError> {
    Objective::from_str(name).map_err(|_: ObjectiveError| ReportError::UnknownAxis(name.into()))
}

/// 2-D scatter data for the chosen pair of objectives, in entry order.
pub fn project_front(entries: &[FrontEntry], axes: (Objective, Objective)) -> Vec<(f64, f64)> {
    entries
        .iter()
        .map(|e| (e.objectives.get(axes.0), e.objectives.get(axes.1)))
        .collect()
}

/// Rules for picking one representative from a front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectStrategy {
    MinF1,
    MinF1F2,
    /// Farthest from the chord joining the f1-f2 extremes.
    Knee,
}

impl FromStr for SelectStrategy {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min-f1" => Ok(SelectStrategy::MinF1),
            "min-f1f2" | "min-f1+f2" | "min-sum" => Ok(SelectStrategy::MinF1F2),
            "knee" => Ok(SelectStrategy::Knee),
            other => Err(ReportError::UnknownStrategy(other.into())),
        }
    }
}

fn lexi(a: &ObjectiveVector, b: &ObjectiveVector) -> std::cmp::Ordering {
    a.f1.total_cmp(&b.f1)
        .then(a.f2.total_cmp(&b.f2))
        .then(a.f3.total_cmp(&b.f3))
}

/// Index of the entry chosen by `strategy`.
pub fn select_entry(
    entries: &[FrontEntry],
    strategy: SelectStrategy,
) -> Result<usize, ReportError> {
    if entries.is_empty() {
        return Err(ReportError::EmptyFront);
    }
    let objs: Vec<ObjectiveVector> = entries.iter().map(|e| e.objectives).collect();
    let argmin_by = |key: &dyn Fn(&ObjectiveVector) -> f64| {
        (0..objs.len())
            .min_by(|&i, &j| {
                key(&objs[i])
                    .total_cmp(&key(&objs[j]))
                    .then(lexi(&objs[i], &objs[j]))
                    .then(i.cmp(&j))
            })
            .expect("non-empty")
    };
    Ok(match strategy {
        SelectStrategy::MinF1 => argmin_by(&|o| o.f1),
        SelectStrategy::MinF1F2 => argmin_by(&|o| o.f1 + o.f2),
        SelectStrategy::Knee => {
            let a = argmin_by(&|o| o.f1);
            let b = (0..objs.len())
                .min_by(|&i, &j| {
                    objs[i]
                        .f2
                        .total_cmp(&objs[j].f2)
                        .then(objs[i].f1.total_cmp(&objs[j].f1))
                        .then(i.cmp(&j))
                })
                .expect("non-empty");
            let (p, q) = ((objs[a].f1, objs[a].f2), (objs[b].f1, objs[b].f2));
            let (dx, dy) = (q.0 - p.0, q.1 - p.1);
            let len = (dx * dx + dy * dy).sqrt();
            if len == 0.0 {
                return Ok(a);
            }
            let dist = |o: &ObjectiveVector| ((o.f1 - p.0) * dy - (o.f2 - p.1) * dx).abs() / len;
            let is_end = |i: usize| {
                let o = &objs[i];
                (o.f1, o.f2) == p || (o.f1, o.f2) == q
            };
            (0..objs.len())
                .max_by(|&i, &j| {
                    dist(&objs[i])
                        .total_cmp(&dist(&objs[j]))
                        // prefer interior points, then smaller f1, then earlier entries
                        .then(is_end(j).cmp(&is_end(i)))
                        .then(objs[j].f1.total_cmp(&objs[i].f1))
                        .then(j.cmp(&i))
                })
                .expect("non-empty")
        }
    })
}

/// Indices of up to `k` entries nearest the knee in f1 order.
pub fn knee_neighborhood(entries: &[FrontEntry], k: usize) -> Vec<usize> {
    if entries.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&i, &j| lexi(&entries[i].objectives, &entries[j].objectives).then(i.cmp(&j)));
    let knee = select_entry(entries, SelectStrategy::Knee).expect("non-empty");
    let pos = order
        .iter()
        .position(|&i| i == knee)
        .expect("knee is an entry");
    let k = k.min(order.len());
    let start = pos.saturating_sub(k / 2).min(order.len() - k);
    order[start..start + k].to_vec()
}

/// A finished run loaded from its directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub dir: PathBuf,
    pub front: FrontFile,
    pub history: Vec<HistoryRow>,
}

impl RunSummary {
    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        let front = FrontFile::read(&dir.join("front.json"))?;
        let history = read_history_csv(&dir.join("history.csv"))?;
        let run_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        for e in &front.entries {
            if let Some(w) = &e.wav {
                let p = dir.join(w);
                if !p.is_file() {
                    return Err(ReportError::MissingFile(run_id, p));
                }
            }
        }
        Ok(Self {
            run_id,
            dir: dir.to_path_buf(),
            front,
            history,
        })
    }

    pub fn queries(&self) -> u64 {
        self.front.queries
    }

    /// True if some verified entry stays under `threshold` at every lag.
    pub fn has_adjust_free(&self, threshold: f64) -> bool {
        self.front
            .entries
            .iter()
            .filter_map(|e| e.verification.as_ref())
            .any(|v| v.max_confidence < threshold)
    }
}

/// One side of an ablation pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSide {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub max_confidence: Option<f64>,
    pub adjust_free: Option<bool>,
}

impl From<&FrontEntry> for PairSide {
    fn from(e: &FrontEntry) -> Self {
        Self {
            f1: e.objectives.f1,
            f2: e.objectives.f2,
            f3: e.objectives.f3,
            max_confidence: e.verification.as_ref().map(|v| v.max_confidence),
            adjust_free: e.verification.as_ref().map(|v| v.adjust_free),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub with_spread: PairSide,
    pub without_spread: PairSide,
    /// The lower-f2 member is adjust-free and the higher-f2 member is not.
    pub finding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub bin_width: f64,
    pub budget_matched: bool,
    pub same_target: bool,
    pub rows: Vec<AblationRow>,
}

/// Default f1 tolerance for pairing entries across runs.
pub const ABLATION_BIN_WIDTH: f64 = 0.05;

/// Pairs every entry of the 3-objective run with the 2-objective entry of
/// nearest f1, keeping pairs whose f1 differ by at most `bin_width`.
pub fn compare_ablation(
    with_spread: &RunSummary,
    without_spread: &RunSummary,
    bin_width: f64,
) -> AblationTable {
    let budget_matched = with_spread.queries() == without_spread.queries();
    let same_target = with_spread.front.target == without_spread.front.target
        && with_spread.front.correct_label == without_spread.front.correct_label;
    if !budget_matched {
        log::warn!(
            "query budgets differ: {} vs {}",
            with_spread.queries(),
            without_spread.queries()
        );
    }
    let others = &without_spread.front.entries;
    let rows = with_spread
        .front
        .entries
        .iter()
        .filter_map(|a| {
            let b = others.iter().min_by(|x, y| {
                (x.objectives.f1 - a.objectives.f1)
                    .abs()
                    .total_cmp(&(y.objectives.f1 - a.objectives.f1).abs())
            })?;
            // small slack so bin-edge decimals like 0.30 vs 0.35 still pair
            if (b.objectives.f1 - a.objectives.f1).abs() > bin_width + 1e-12 {
                return None;
            }
            let (ps, pw) = (PairSide::from(a), PairSide::from(b));
            let (low, high) = if ps.f2 <= pw.f2 {
                (&ps, &pw)
            } else {
                (&pw, &ps)
            };
            let finding =
                ps.f2 != pw.f2 && low.adjust_free == Some(true) && high.adjust_free == Some(false);
            Some(AblationRow {
                with_spread: ps,
                without_spread: pw,
                finding,
            })
        })
        .collect();
    AblationTable {
        bin_width,
        budget_matched,
        same_target,
        rows,
    }
}

pub fn write_comparison_csv(path: &Path, table: &AblationTable) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "f1_3obj",
        "f2_3obj",
        "f3_3obj",
        "maxconf_3obj",
        "adjust_free_3obj",
        "f1_2obj",
        "f2_2obj",
        "f3_2obj",
        "maxconf_2obj",
        "adjust_free_2obj",
        "finding",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let optb = |v: Option<bool>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &table.rows {
        let (a, b) = (&r.with_spread, &r.without_spread);
        w.write_record([
            a.f1.to_string(),
            a.f2.to_string(),
            a.f3.to_string(),
            opt(a.max_confidence),
            optb(a.adjust_free),
            b.f1.to_string(),
            b.f2.to_string(),
            b.f3.to_string(),
            opt(b.max_confidence),
            optb(b.adjust_free),
            r.finding.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetVerdict {
    pub target: String,
    pub correct_label: String,
    pub adjust_free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub threshold: f64,
    pub passes: usize,
    pub targets: usize,
    pub fraction: f64,
    pub verdicts: Vec<TargetVerdict>,
}

/// Fraction of distinct targets with at least one adjust-free entry across
/// the given runs.
pub fn tally_adjust_free(runs: &[RunSummary], threshold: f64) -> Result<Tally, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::NoRuns);
    }
    let mut verdicts: Vec<TargetVerdict> = Vec::new();
    for run in runs {
        let pass = run.has_adjust_free(threshold);
        match verdicts
            .iter_mut()
            .find(|v| v.target == run.front.target && v.correct_label == run.front.correct_label)
        {
            Some(v) => v.adjust_free |= pass,
            None => verdicts.push(TargetVerdict {
                target: run.front.target.clone(),
                correct_label: run.front.correct_label.clone(),
                adjust_free: pass,
            }),
        }
    }
    let passes = verdicts.iter().filter(|v| v.adjust_free).count();
    Ok(Tally {
        threshold,
        passes,
        targets: verdicts.len(),
        fraction: passes as f64 / verdicts.len() as f64,
        verdicts,
    })
}
