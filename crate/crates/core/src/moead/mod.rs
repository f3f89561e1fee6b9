//! Decomposition-based multi-objective search (MOEA/D with DE variation).
//!
//! The problem is split into one scalar subproblem per weight vector,
//! each scored with the Tchebycheff function against a running reference
//! point. Subproblems mate and replace within weight-space neighborhoods.

mod archive;
mod engine;
mod operators;
mod weights;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{Genome, ObjectiveError, ObjectiveSet, ObjectiveVector};

pub use archive::{crowding_distances, dominates, ArchiveEntry, ParetoArchive};
pub use engine::{
    budget_for, Checkpoint, GenerationStats, Moead, RunConfig, RunOutcome, RunState, StopReason,
};
pub use operators::{de_crossover, mutate_value, polynomial_mutation};
pub use weights::{
    lattice_size, neighborhoods, random_simplex, simplex_lattice, weights_for_population,
    WeightVector,
};

#[derive(Debug, Error)]
pub enum MoeadError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    /// Evaluation failed mid-run; `checkpoint` holds the state at the start
    /// of the failed generation.
    #[error("run aborted at generation {generation}: {source}")]
    Aborted {
        generation: usize,
        checkpoint: Box<Checkpoint>,
        source: ObjectiveError,
    },
    #[error("checkpoint does not match this run: {0}")]
    CheckpointMismatch(String),
}

/// Weight used in place of an exact zero so no objective is ignored.
pub const ZERO_WEIGHT_EPSILON: f64 = 1e-6;

/// Componentwise best objective values seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint(Vec<f64>);

impl ReferencePoint {
    pub fn new(z: Vec<f64>) -> Self {
        Self(z)
    }

    /// Starts at `+inf` in every component.
    pub fn unbounded(n_f: usize) -> Self {
        Self(vec![f64::INFINITY; n_f])
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    /// Componentwise minimum with `objs`.
    pub fn update(&mut self, objs: &[f64]) {
        for (z, f) in self.0.iter_mut().zip(objs) {
            if *f < *z {
                *z = *f;
            }
        }
    }

    pub fn updated(&self, objs: &[f64]) -> Self {
        let mut z = self.clone();
        z.update(objs);
        z
    }
}

/// `max_i lambda_i * |f_i - z_i|`, with zero weights raised to
/// [`ZERO_WEIGHT_EPSILON`].
pub fn tchebycheff(objs: &[f64], w: &WeightVector, z: &ReferencePoint) -> f64 {
    objs.iter()
        .zip(w.components())
        .zip(z.components())
        .map(|((f, &l), zi)| {
            let l = if l == 0.0 { ZERO_WEIGHT_EPSILON } else { l };
            l * (f - zi).abs()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subproblem {
    pub weight: WeightVector,
    pub neighbors: Vec<usize>,
    pub current: Genome,
    pub current_objs: ObjectiveVector,
}

/// Offers `child` to the subproblems listed in `range`, visited in random
/// order. An incumbent is replaced only if the child's Tchebycheff value is
/// strictly lower; at most `limit` replacements happen. Returns the number
/// of replacements.
#[allow(clippy::too_many_arguments)]
pub fn update_population<R: Rng + ?Sized>(
    subproblems: &mut [Subproblem],
    child: &Genome,
    child_objs: &ObjectiveVector,
    range: &[usize],
    set: ObjectiveSet,
    z: &ReferencePoint,
    limit: usize,
    rng: &mut R,
) -> usize {
    let mut order = range.to_vec();
    order.shuffle(rng);
    let child_proj = set.project(child_objs);
    let mut replaced = 0;
    for j in order {
        if replaced >= limit {
            break;
        }
        let sp = &mut subproblems[j];
        let incumbent = tchebycheff(&set.project(&sp.current_objs), &sp.weight, z);
        let challenger = tchebycheff(&child_proj, &sp.weight, z);
        if challenger < incumbent {
            sp.current = child.clone();
            sp.current_objs = *child_objs;
            replaced += 1;
        }
    }
    replaced
}
