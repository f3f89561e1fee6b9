//! Variation operators: DE/rand/1/bin crossover and bounded polynomial
//! mutation. Both keep genomes inside their box.

use rand::Rng;

use crate::objectives::Genome;

/// `trial_d = a_d + f_scale * (b_d - c_d)` where crossed, `x_d` elsewhere.
/// Each dimension crosses with probability `cr`; one uniformly chosen
/// dimension always does. The result is clamped to `x`'s box.
pub fn de_crossover<R: Rng + ?Sized>(
    x: &Genome,
    a: &Genome,
    b: &Genome,
    c: &Genome,
    f_scale: f64,
    cr: f64,
    rng: &mut R,
) -> Genome {
    let n = x.len();
    assert!(
        a.len() == n && b.len() == n && c.len() == n,
        "parents must share one length"
    );
    let bound = x.bound();
    let forced = if n == 0 { 0 } else { rng.gen_range(0..n) };
    let rho = (0..n)
        .map(|d| {
            let v = if rng.gen::<f64>() < cr || d == forced {
                a.rho()[d] + f_scale * (b.rho()[d] - c.rho()[d])
            } else {
                x.rho()[d]
            };
            v.clamp(-bound, bound)
        })
        .collect();
    Genome::new(rho, bound).expect("clamped into the box")
}

/// Deb's bounded polynomial mutation with distribution index `eta`, applied
/// to each dimension independently with probability `p_m`.
pub fn polynomial_mutation<R: Rng + ?Sized>(g: &Genome, p_m: f64, eta: f64, rng: &mut R) -> Genome {
    let bound = g.bound();
    if p_m <= 0.0 {
        return g.clone();
    }
    let mut rho = g.rho().to_vec();
    for x in rho.iter_mut() {
        if rng.gen::<f64>() < p_m {
            let u = rng.gen::<f64>();
            *x = mutate_value(*x, -bound, bound, eta, u);
        }
    }
    Genome::new(rho, bound).expect("mutation stays in the box")
}

/// One polynomial-mutation step of `y` in `[lo, hi]` driven by the uniform
/// draw `u`; `u < 0.5` moves toward `lo`.
pub fn mutate_value(y: f64, lo: f64, hi: f64, eta: f64, u: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return y;
    }
    let d1 = (y - lo) / span;
    let d2 = (hi - y) / span;
    let pow = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let xy = 1.0 - d1;
        let val = 2.0 * u + (1.0 - 2.0 * u) * xy.powf(eta + 1.0);
        val.powf(pow) - 1.0
    } else {
        let xy = 1.0 - d2;
        let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy.powf(eta + 1.0);
        1.0 - val.powf(pow)
    };
    (y + dq * span).clamp(lo, hi)
}
