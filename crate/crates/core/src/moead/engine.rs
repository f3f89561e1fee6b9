use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    de_crossover, neighborhoods, polynomial_mutation, update_population, weights_for_population,
    MoeadError, ParetoArchive, ReferencePoint, Subproblem,
};
use crate::objectives::{EvalContext, Evaluation, Genome, Objective, ObjectiveSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Number of subproblems, one offspring each per generation.
    pub n_pop: usize,
    pub n_gen: usize,
    /// Neighborhood size `T`.
    pub neighborhood: usize,
    /// DE scale factor `F`.
    pub de_scale: f64,
    /// DE per-dimension crossover rate `CR`.
    pub crossover_rate: f64,
    /// Per-dimension mutation probability; `None` means `1 / dimension`.
    pub mutation_prob: Option<f64>,
    /// Polynomial mutation distribution index.
    pub mutation_eta: f64,
    /// Probability of mating and replacing within the neighborhood rather
    /// than the whole population.
    pub neighbor_prob: f64,
    /// Maximum number of incumbents one child may replace.
    pub replacement_limit: usize,
    pub seed: u64,
    pub objectives: ObjectiveSet,
    /// Box constraint on every perturbation sample.
    pub bound: f64,
    pub archive_capacity: Option<usize>,
    /// Stop before a generation whose queries would exceed this budget.
    pub max_queries: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_pop: 91,
            n_gen: 2000,
            neighborhood: 20,
            de_scale: 0.5,
            crossover_rate: 0.9,
            mutation_prob: None,
            mutation_eta: 20.0,
            neighbor_prob: 0.9,
            replacement_limit: 2,
            seed: 0,
            objectives: ObjectiveSet::F1F2F3,
            bound: 0.10,
            archive_capacity: Some(200),
            max_queries: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), MoeadError> {
        let bad = |m: String| Err(MoeadError::InvalidConfig(m));
        let n_f = self.objectives.len();
        if self.n_pop < n_f.max(2) {
            return bad(format!(
                "n_pop must be >= {}, got {}",
                n_f.max(2),
                self.n_pop
            ));
        }
        if self.neighborhood < 2 || self.neighborhood > self.n_pop {
            return bad(format!(
                "neighborhood must be in [2, n_pop = {}], got {}",
                self.n_pop, self.neighborhood
            ));
        }
        if !(self.de_scale > 0.0 && self.de_scale <= 1.0) {
            return bad(format!("de_scale must be in (0, 1], got {}", self.de_scale));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad(format!(
                "crossover_rate must be in [0, 1], got {}",
                self.crossover_rate
            ));
        }
        if let Some(p) = self.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("mutation_prob must be in [0, 1], got {p}"));
            }
        }
        if !(self.mutation_eta > 0.0) {
            return bad(format!(
                "mutation_eta must be positive, got {}",
                self.mutation_eta
            ));
        }
        if !(0.0..=1.0).contains(&self.neighbor_prob) {
            return bad(format!(
                "neighbor_prob must be in [0, 1], got {}",
                self.neighbor_prob
            ));
        }
        if self.replacement_limit == 0 {
            return bad("replacement_limit must be >= 1".into());
        }
        if !(self.bound > 0.0 && self.bound <= 1.0) {
            return bad(format!("bound must be in (0, 1], got {}", self.bound));
        }
        if self.archive_capacity == Some(0) {
            return bad("archive_capacity must be >= 1".into());
        }
        Ok(())
    }
}

/// Classifier queries of a full run: `lags * n_pop * (1 + generations)`.
pub fn budget_for(n_lags: usize, n_pop: usize, generations: usize) -> u64 {
    (n_lags * (n_pop + generations * n_pop)) as u64
}

/// Population summary after one generation (generation 0 is the initial
/// population).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub queries: u64,
    pub min: [f64; 3],
    pub mean: [f64; 3],
    /// Population index holding the minimum of each objective.
    pub best_index: [usize; 3],
    pub reference: Vec<f64>,
    pub archive_size: usize,
    pub replacements: usize,
}

/// Complete optimizer state; serializes to the checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub config: RunConfig,
    /// Number of completed generations.
    pub generation: usize,
    pub rng: ChaCha8Rng,
    pub subproblems: Vec<Subproblem>,
    pub reference: ReferencePoint,
    pub archive: ParetoArchive,
    pub history: Vec<GenerationStats>,
    pub queries: u64,
}

pub type Checkpoint = RunState;

impl RunState {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Generations,
    QueryBudget,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: RunState,
    pub stop: StopReason,
}

impl RunOutcome {
    pub fn archive(&self) -> &ParetoArchive {
        &self.state.archive
    }

    pub fn history(&self) -> &[GenerationStats] {
        &self.state.history
    }

    pub fn queries(&self) -> u64 {
        self.state.queries
    }
}

/// MOEA/D driver bound to one evaluation context.
///
/// Each generation every subproblem (in shuffled order) draws a mating
/// range, builds one child by DE crossover plus polynomial mutation, and
/// all children are evaluated together, in parallel. Reference-point,
/// population and archive updates then run sequentially in the same
/// shuffled order, so results do not depend on thread scheduling.
pub struct Moead<'a> {
    ctx: &'a EvalContext,
    cfg: RunConfig,
}

struct Offspring {
    origin: usize,
    range: Vec<usize>,
    child: Genome,
}

impl<'a> Moead<'a> {
    pub fn new(ctx: &'a EvalContext, cfg: RunConfig) -> Result<Self, MoeadError> {
        cfg.validate()?;
        Ok(Self { ctx, cfg })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn mutation_prob(&self) -> f64 {
        self.cfg
            .mutation_prob
            .unwrap_or(1.0 / self.ctx.genome_len().max(1) as f64)
    }

    fn evaluate_all(
        &self,
        genomes: &[Genome],
        key_base: u64,
    ) -> Result<Vec<Evaluation>, crate::objectives::ObjectiveError> {
        genomes
            .par_iter()
            .enumerate()
            .map(|(k, g)| self.ctx.evaluate_detailed(g, key_base + k as u64))
            .collect()
    }

    /// Uniform random population, evaluated, with reference point and
    /// archive seeded from it.
    pub fn initialize(&self) -> Result<RunState, MoeadError> {
        let cfg = &self.cfg;
        let set = cfg.objectives;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (weights, _) = weights_for_population(set.len(), cfg.n_pop, &mut rng)?;
        let hoods = neighborhoods(&weights, cfg.neighborhood);
        let dim = self.ctx.genome_len();
        let genomes = (0..cfg.n_pop)
            .map(|_| Genome::random(dim, cfg.bound, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;

        let q0 = self.ctx.queries();
        let evals = self.evaluate_all(&genomes, 0)?;
        let queries = self.ctx.queries() - q0;

        let mut reference = ReferencePoint::unbounded(set.len());
        let mut archive = ParetoArchive::new(set, cfg.archive_capacity);
        let subproblems: Vec<Subproblem> = weights
            .into_iter()
            .zip(hoods)
            .zip(genomes)
            .zip(evals)
            .map(|(((weight, neighbors), current), e)| Subproblem {
                weight,
                neighbors,
                current,
                current_objs: e.objectives,
            })
            .collect();
        for sp in &subproblems {
            reference.update(&set.project(&sp.current_objs));
            archive.insert(sp.current.clone(), sp.current_objs);
        }
        let mut state = RunState {
            config: cfg.clone(),
            generation: 0,
            rng,
            subproblems,
            reference,
            archive,
            history: Vec::new(),
            queries,
        };
        let stats = summarize(&state, 0);
        state.history.push(stats);
        Ok(state)
    }

    /// Advances `state` by one generation. On evaluation failure `state` is
    /// left as it was before the call.
    pub fn step(&self, state: &mut RunState) -> Result<(), MoeadError> {
        let cfg = &self.cfg;
        let set = cfg.objectives;
        let n = state.subproblems.len();
        let before = state.rng.clone();
        let p_m = self.mutation_prob();
        let everyone: Vec<usize> = (0..n).collect();

        let mut order = everyone.clone();
        order.shuffle(&mut state.rng);
        let offspring: Vec<Offspring> = order
            .iter()
            .map(|&i| {
                let rng = &mut state.rng;
                let range = if rng.gen::<f64>() < cfg.neighbor_prob {
                    state.subproblems[i].neighbors.clone()
                } else {
                    everyone.clone()
                };
                let parents: Vec<usize> = if range.len() >= 3 {
                    index::sample(rng, range.len(), 3)
                        .into_iter()
                        .map(|k| range[k])
                        .collect()
                } else {
                    (0..3)
                        .map(|_| range[rng.gen_range(0..range.len())])
                        .collect()
                };
                let pick = |k: usize| &state.subproblems[parents[k]].current;
                let trial = de_crossover(
                    &state.subproblems[i].current,
                    pick(0),
                    pick(1),
                    pick(2),
                    cfg.de_scale,
                    cfg.crossover_rate,
                    rng,
                );
                let child = polynomial_mutation(&trial, p_m, cfg.mutation_eta, rng);
                Offspring {
                    origin: i,
                    range,
                    child,
                }
            })
            .collect();

        let generation = state.generation + 1;
        let children: Vec<Genome> = offspring.iter().map(|o| o.child.clone()).collect();
        let q0 = self.ctx.queries();
        let evals = match self.evaluate_all(&children, (generation * n) as u64) {
            Ok(e) => e,
            Err(source) => {
                state.rng = before;
                return Err(MoeadError::Aborted {
                    generation,
                    checkpoint: Box::new(state.clone()),
                    source,
                });
            }
        };
        state.queries += self.ctx.queries() - q0;

        let mut replacements = 0;
        for (o, e) in offspring.into_iter().zip(evals) {
            let objs = e.objectives;
            debug_assert!(o.origin < n);
            state.reference.update(&set.project(&objs));
            replacements += update_population(
                &mut state.subproblems,
                &o.child,
                &objs,
                &o.range,
                set,
                &state.reference,
                cfg.replacement_limit,
                &mut state.rng,
            );
            state.archive.insert(o.child, objs);
        }
        state.generation = generation;
        let stats = summarize(state, replacements);
        log::debug!(
            "generation {}: min f1 {:.4} f2 {:.4} f3 {:.3}, archive {}",
            stats.generation,
            stats.min[0],
            stats.min[1],
            stats.min[2],
            stats.archive_size
        );
        state.history.push(stats);
        Ok(())
    }

    pub fn run(&self) -> Result<RunOutcome, MoeadError> {
        self.run_with(|_| {})
    }

    /// Runs to completion, calling `observe` after initialization and after
    /// every generation.
    pub fn run_with(&self, observe: impl FnMut(&RunState)) -> Result<RunOutcome, MoeadError> {
        let state = self.initialize()?;
        self.continue_from(state, observe)
    }

    /// Resumes from a checkpoint written by an earlier, interrupted run.
    pub fn resume(
        &self,
        checkpoint: Checkpoint,
        observe: impl FnMut(&RunState),
    ) -> Result<RunOutcome, MoeadError> {
        let c = &checkpoint.config;
        let mismatch = |m: &str| Err(MoeadError::CheckpointMismatch(m.to_string()));
        if c.n_pop != self.cfg.n_pop || checkpoint.subproblems.len() != self.cfg.n_pop {
            return mismatch("population size differs");
        }
        if c.objectives != self.cfg.objectives
            || c.bound != self.cfg.bound
            || c.seed != self.cfg.seed
        {
            return mismatch("objective set, bound or seed differs");
        }
        if checkpoint
            .subproblems
            .iter()
            .any(|s| s.current.len() != self.ctx.genome_len())
        {
            return mismatch("genome length differs from the target");
        }
        self.continue_from(checkpoint, observe)
    }

    fn continue_from(
        &self,
        mut state: RunState,
        mut observe: impl FnMut(&RunState),
    ) -> Result<RunOutcome, MoeadError> {
        state.config = self.cfg.clone();
        if state.generation == 0 {
            observe(&state);
        }
        let per_gen = budget_for(self.ctx.lag_schedule().len(), self.cfg.n_pop, 1)
            - budget_for(self.ctx.lag_schedule().len(), self.cfg.n_pop, 0);
        while state.generation < self.cfg.n_gen {
            if let Some(max) = self.cfg.max_queries {
                if state.queries + per_gen > max {
                    return Ok(RunOutcome {
                        state,
                        stop: StopReason::QueryBudget,
                    });
                }
            }
            self.step(&mut state)?;
            observe(&state);
        }
        Ok(RunOutcome {
            state,
            stop: StopReason::Generations,
        })
    }
}

fn summarize(state: &RunState, replacements: usize) -> GenerationStats {
    let n = state.subproblems.len().max(1) as f64;
    let mut min = [f64::INFINITY; 3];
    let mut mean = [0.0; 3];
    let mut best_index = [0; 3];
    for (i, sp) in state.subproblems.iter().enumerate() {
        for (k, o) in Objective::ALL.iter().enumerate() {
            let v = sp.current_objs.get(*o);
            if v < min[k] {
                min[k] = v;
                best_index[k] = i;
            }
            mean[k] += v / n;
        }
    }
    GenerationStats {
        generation: state.generation,
        queries: state.queries,
        min,
        mean,
        best_index,
        reference: state.reference.components().to_vec(),
        archive_size: state.archive.len(),
        replacements,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Waveform;
    use crate::classifier::{ClassificationResult, Classifier, ClassifierError};
    use crate::features::MfccConfig;
    use crate::objectives::{default_lag_schedule, EvalContext};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Confidence of "a" falls with perturbation energy.
    struct EnergyModel;

    impl Classifier for EnergyModel {
        fn classify(&self, w: &Waveform) -> Result<ClassificationResult, ClassifierError> {
            let e = w.samples().iter().map(|x| x.abs()).sum::<f64>() / w.len() as f64;
            let a = (1.0 - 8.0 * e).clamp(0.05, 0.95);
            ClassificationResult::new(
                [("a".into(), a), ("b".into(), 1.0 - a)]
                    .into_iter()
                    .collect(),
            )
        }
    }

    /// Fails after a fixed number of calls.
    struct Flaky {
        left: AtomicUsize,
    }

    impl Classifier for Flaky {
        fn classify(&self, w: &Waveform) -> Result<ClassificationResult, ClassifierError> {
            if self.left.fetch_sub(1, Ordering::SeqCst) == 0 {
                return Err(ClassifierError::ProcessExited(0));
            }
            EnergyModel.classify(w)
        }
    }

    fn ctx(model: Arc<dyn Classifier>) -> EvalContext {
        EvalContext::new(
            Waveform::silence(800, 800).unwrap(),
            model,
            default_lag_schedule(0.25, 3).unwrap(),
            MfccConfig::default(),
        )
        .unwrap()
    }

    fn small(seed: u64, n_gen: usize) -> RunConfig {
        RunConfig {
            n_pop: 10,
            n_gen,
            neighborhood: 4,
            seed,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_generations_keep_the_initial_front() {
        let c = ctx(Arc::new(EnergyModel));
        let out = Moead::new(&c, small(1, 0)).unwrap().run().unwrap();
        assert_eq!(out.history().len(), 1);
        assert_eq!(out.queries(), budget_for(3, 10, 0));
        let set = ObjectiveSet::F1F2F3;
        let pts: Vec<Vec<f64>> = out
            .state
            .subproblems
            .iter()
            .map(|s| set.project(&s.current_objs))
            .collect();
        for e in out.archive().entries() {
            let p = set.project(&e.objectives);
            assert!(pts.contains(&p));
            assert!(!pts.iter().any(|q| super::super::dominates(q, &p)));
        }
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let c = ctx(Arc::new(EnergyModel));
        let a = Moead::new(&c, small(7, 5)).unwrap().run().unwrap();
        let b = Moead::new(&c, small(7, 5)).unwrap().run().unwrap();
        assert_eq!(a.state, b.state);
        let d = Moead::new(&c, small(8, 5)).unwrap().run().unwrap();
        assert_ne!(a.state.archive, d.state.archive);
    }

    #[test]
    fn budget_stops_the_run() {
        let c = ctx(Arc::new(EnergyModel));
        let cfg = RunConfig {
            max_queries: Some(budget_for(3, 10, 2) + 5),
            ..small(1, 50)
        };
        let out = Moead::new(&c, cfg).unwrap().run().unwrap();
        assert_eq!(out.stop, StopReason::QueryBudget);
        assert_eq!(out.state.generation, 2);
        assert_eq!(out.queries(), budget_for(3, 10, 2));
    }

    #[test]
    fn aborted_runs_resume_to_the_same_result() {
        let reference = {
            let c = ctx(Arc::new(EnergyModel));
            Moead::new(&c, small(3, 6)).unwrap().run().unwrap().state
        };
        // 10 initial + 3 generations of 10 children, 3 lags each, then fail
        let flaky = ctx(Arc::new(Flaky {
            left: AtomicUsize::new(3 * 10 * 4 + 7),
        }));
        let err = Moead::new(&flaky, small(3, 6)).unwrap().run().unwrap_err();
        let checkpoint = match err {
            MoeadError::Aborted {
                generation,
                checkpoint,
                ..
            } => {
                assert_eq!(generation, 4);
                checkpoint
            }
            other => panic!("unexpected {other}"),
        };
        assert_eq!(checkpoint.generation, 3);
        let json = checkpoint.to_json().unwrap();
        let restored = RunState::from_json(&json).unwrap();
        assert_eq!(&restored, checkpoint.as_ref());
        let c = ctx(Arc::new(EnergyModel));
        let resumed = Moead::new(&c, small(3, 6))
            .unwrap()
            .resume(restored, |_| {})
            .unwrap();
        assert_eq!(resumed.state, reference);
    }

    #[test]
    fn resume_rejects_foreign_checkpoints() {
        let c = ctx(Arc::new(EnergyModel));
        let st = Moead::new(&c, small(1, 0)).unwrap().initialize().unwrap();
        let other = Moead::new(
            &c,
            RunConfig {
                n_pop: 12,
                ..small(1, 2)
            },
        )
        .unwrap();
        assert!(matches!(
            other.resume(st, |_| {}),
            Err(MoeadError::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            RunConfig {
                neighborhood: 1,
                ..ok.clone()
            },
            RunConfig {
                neighborhood: 200,
                ..ok.clone()
            },
            RunConfig {
                de_scale: 0.0,
                ..ok.clone()
            },
            RunConfig {
                de_scale: 1.5,
                ..ok.clone()
            },
            RunConfig {
                crossover_rate: 1.1,
                ..ok.clone()
            },
            RunConfig {
                mutation_eta: 0.0,
                ..ok.clone()
            },
            RunConfig {
                replacement_limit: 0,
                ..ok.clone()
            },
            RunConfig {
                bound: 0.0,
                ..ok.clone()
            },
            RunConfig {
                n_pop: 2,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
