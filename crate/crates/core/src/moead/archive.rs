use serde::{Deserialize, Serialize};

use crate::objectives::{Genome, ObjectiveSet, ObjectiveVector};

/// `a` dominates `b` (minimization): no worse anywhere, better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub genome: Genome,
    pub objectives: ObjectiveVector,
}

/// External set of mutually nondominated solutions, compared on the
/// objectives of `set`. When `capacity` is exceeded the most crowded entry
/// is evicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    entries: Vec<ArchiveEntry>,
    capacity: Option<usize>,
    set: ObjectiveSet,
}

impl ParetoArchive {
    pub fn new(set: ObjectiveSet, capacity: Option<usize>) -> Self {
        Self {
            entries: Vec::new(),
            capacity,
            set,
        }
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ArchiveEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn objective_set(&self) -> ObjectiveSet {
        self.set
    }

    /// Returns whether the candidate was admitted.
    pub fn insert(&mut self, genome: Genome, objectives: ObjectiveVector) -> bool {
        let cand = self.set.project(&objectives);
        if self
            .entries
            .iter()
            .any(|e| dominates(&self.set.project(&e.objectives), &cand))
        {
            return false;
        }
        let set = self.set;
        self.entries
            .retain(|e| !dominates(&cand, &set.project(&e.objectives)));
        self.entries.push(ArchiveEntry { genome, objectives });
        if let Some(cap) = self.capacity {
            while self.entries.len() > cap {
                let victim = self.most_crowded();
                self.entries.remove(victim);
            }
        }
        true
    }

    /// True when no entry dominates another.
    pub fn is_dominance_free(&self) -> bool {
        let pts: Vec<Vec<f64>> = self
            .entries
            .iter()
            .map(|e| self.set.project(&e.objectives))
            .collect();
        pts.iter().all(|a| pts.iter().all(|b| !dominates(a, b)))
    }

    fn most_crowded(&self) -> usize {
        let pts: Vec<Vec<f64>> = self
            .entries
            .iter()
            .map(|e| self.set.project(&e.objectives))
            .collect();
        let d = crowding_distances(&pts);
        // first index with the smallest distance
        d.iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, &v)| if v < best.1 { (i, v) } else { best },
            )
            .0
    }
}

/// NSGA-II crowding distance of each point; extremes get infinity.
#[allow(clippy::needless_range_loop)]
pub fn crowding_distances(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = points[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        order.sort_by(|&a, &b| points[a][k].total_cmp(&points[b][k]).then(a.cmp(&b)));
        let lo = points[order[0]][k];
        let hi = points[order[n - 1]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            dist[i] += (points[order[w + 1]][k] - points[order[w - 1]][k]) / span;
        }
    }
    dist
}
