use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MoeadError;

/// Non-negative weights summing to 1, one per active objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(lambda: Vec<f64>) -> Result<Self, MoeadError> {
        let sum: f64 = lambda.iter().sum();
        if lambda.is_empty() || lambda.iter().any(|l| !(*l >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(MoeadError::InvalidConfig(format!(
                "weight vector {lambda:?} must be non-negative and sum to 1"
            )));
        }
        Ok(Self(lambda))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &WeightVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Size of the simplex lattice with `h` divisions in `n_f` dimensions:
/// `C(h + n_f - 1, n_f - 1)`.
pub fn lattice_size(n_f: usize, h: usize) -> usize {
    let k = n_f.saturating_sub(1);
    let n = h + k;
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Every vector `(i_1/h, ..., i_nf/h)` with non-negative integer `i` summing
/// to `h`, in lexicographic order of the numerators.
pub fn simplex_lattice(n_f: usize, h: usize) -> Result<Vec<WeightVector>, MoeadError> {
    if h == 0 || n_f == 0 {
        return Err(MoeadError::InvalidConfig(format!(
            "simplex lattice needs n_f >= 1 and h >= 1, got n_f = {n_f}, h = {h}"
        )));
    }
    let mut out = Vec::with_capacity(lattice_size(n_f, h));
    let mut current = Vec::with_capacity(n_f);
    fill(n_f, h, h, &mut current, &mut out);
    Ok(out)
}

fn fill(n_f: usize, h: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<WeightVector>) {
    if current.len() == n_f - 1 {
        current.push(left);
        out.push(WeightVector(
            current.iter().map(|&i| i as f64 / h as f64).collect(),
        ));
        current.pop();
        return;
    }
    for i in (0..=left).rev() {
        current.push(i);
        fill(n_f, h, left - i, current, out);
        current.pop();
    }
}

/// Uniform sample from the probability simplex.
pub fn random_simplex<R: Rng + ?Sized>(n_f: usize, rng: &mut R) -> WeightVector {
    let e: Vec<f64> = (0..n_f).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let mut w: Vec<f64> = e.iter().map(|x| x / s).collect();
    // absorb rounding so the sum is 1 to machine precision
    let tail: f64 = w[..n_f - 1].iter().sum();
    w[n_f - 1] = (1.0 - tail).max(0.0);
    WeightVector(w)
}

/// Exactly `n_pop` weights: the largest simplex lattice that fits, topped up
/// with random simplex samples. Returns the weights and the lattice `h`.
pub fn weights_for_population<R: Rng + ?Sized>(
    n_f: usize,
    n_pop: usize,
    rng: &mut R,
) -> Result<(Vec<WeightVector>, usize), MoeadError> {
    if n_pop < n_f {
        return Err(MoeadError::InvalidConfig(format!(
            "population of {n_pop} is smaller than the {n_f} lattice corners"
        )));
    }
    let mut h = 1;
    while lattice_size(n_f, h + 1) <= n_pop {
        h += 1;
    }
    let mut weights = simplex_lattice(n_f, h)?;
    if weights.len() < n_pop {
        log::info!(
            "population {n_pop} is not a lattice size; using {} lattice weights (h = {h}) plus {} random ones",
            weights.len(),
            n_pop - weights.len()
        );
    }
    while weights.len() < n_pop {
        weights.push(random_simplex(n_f, rng));
    }
    Ok((weights, h))
}

/// For each weight, the indices of the `t` closest weights (itself first),
/// ties broken by index.
pub fn neighborhoods(weights: &[WeightVector], t: usize) -> Vec<Vec<usize>> {
    (0..weights.len())
        .map(|i| {
            let mut idx: Vec<usize> = (0..weights.len()).collect();
            idx.sort_by(|&a, &b| {
                let da = weights[i].distance(&weights[a]);
                let db = weights[i].distance(&weights[b]);
                da.total_cmp(&db)
                    .then((a != i).cmp(&(b != i)))
                    .then(a.cmp(&b))
            });
            idx.truncate(t);
            idx
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn corners_for_one_division() {
        let w = simplex_lattice(3, 1).unwrap();
        let comps: Vec<_> = w.iter().map(|v| v.components().to_vec()).collect();
        assert_eq!(
            comps,
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0]
            ]
        );
    }

    #[test]
    fn ninety_one_for_twelve_divisions() {
        let w = simplex_lattice(3, 12).unwrap();
        assert_eq!(w.len(), 91);
        assert_eq!(lattice_size(3, 12), 91);
        for v in &w {
            assert!((v.components().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(v.components().iter().all(|&c| c >= 0.0));
        }
        let mut seen: Vec<Vec<u64>> = w
            .iter()
            .map(|v| {
                v.components()
                    .iter()
                    .map(|c| (c * 12.0).round() as u64)
                    .collect()
            })
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 91);
    }

    #[test]
    fn lattice_sizes() {
        assert_eq!(lattice_size(2, 90), 91);
        assert_eq!(lattice_size(3, 13), 105);
        assert_eq!(simplex_lattice(2, 4).unwrap().len(), 5);
        assert!(simplex_lattice(3, 0).is_err());
    }

    #[test]
    fn population_top_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (w, h) = weights_for_population(3, 100, &mut rng).unwrap();
        assert_eq!(h, 12);
        assert_eq!(w.len(), 100);
        for v in &w {
            assert!((v.components().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        let (w, h) = weights_for_population(2, 91, &mut rng).unwrap();
        assert_eq!((w.len(), h), (91, 90));
        assert!(weights_for_population(3, 2, &mut rng).is_err());
    }

    #[test]
    fn neighborhoods_include_self_first() {
        let w = simplex_lattice(3, 6).unwrap();
        let nb = neighborhoods(&w, 5);
        for (i, n) in nb.iter().enumerate() {
            assert_eq!(n.len(), 5);
            assert_eq!(n[0], i);
            let mut d = n.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 5);
        }
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.5, 1.5]).is_err());
        assert!(WeightVector::new(vec![0.25, 0.75]).is_ok());
    }
}
