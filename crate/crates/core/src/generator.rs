//! Random instance generation: raise a degree-2 base program to degree δ by
//! adding random monomials of every size 2..=δ to the objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{Multiset, Polynomial};
use crate::problem::{PolynomialProgram, ProblemError};

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub base: PolynomialProgram,
    /// Target degree, at least 3.
    pub delta: usize,
    /// Number of repetitions of the 2..=δ sweep.
    pub k: usize,
    pub seed: u64,
    pub coef_range: (f64, f64),
}

impl GeneratorConfig {
    pub fn new(base: PolynomialProgram, delta: usize, k: usize, seed: u64) -> Self {
        GeneratorConfig {
            base,
            delta,
            k,
            seed,
            coef_range: (-10.0, 10.0),
        }
    }
}

/// Draws `size` variable indices uniformly with replacement.
fn random_multiset<R: Rng>(rng: &mut R, n: usize, size: usize) -> Multiset {
    Multiset::from_atoms((0..size).map(|_| rng.gen_range(0..n) as u32))
}

pub fn generate_instance(cfg: &GeneratorConfig) -> Result<PolynomialProgram, ProblemError> {
    let n = cfg.base.n();
    if n == 0 {
        return Err(ProblemError::InvalidConfig("base program has no variables".into()));
    }
    if cfg.base.degree() > 2 {
        return Err(ProblemError::InvalidConfig(format!(
            "base program has degree {}, expected at most 2",
            cfg.base.degree()
        )));
    }
    if cfg.delta < 3 {
        return Err(ProblemError::InvalidConfig(format!("delta = {} < 3", cfg.delta)));
    }
    if cfg.k == 0 {
        return Err(ProblemError::InvalidConfig("k must be at least 1".into()));
    }
    let (lo, hi) = cfg.coef_range;
    if !(lo < hi) {
        return Err(ProblemError::InvalidConfig(format!("empty coefficient range ({lo}, {hi})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut objective = cfg.base.objective.clone();
    for _ in 0..cfg.k {
        for size in 2..=cfg.delta {
            let m = random_multiset(&mut rng, n, size);
            let coef = rng.gen_range(lo..hi);
            objective.add_term(coef, m);
        }
    }
    PolynomialProgram::new(cfg.base.vars.clone(), objective, cfg.base.constraints.clone())
}

/// Random box-only degree-2 base over `[0, 1]^n`: every linear term plus each
/// quadratic monomial `x_i x_j` (i <= j) with probability `density`, all with
/// coefficients uniform in (-10, 10). At least one quadratic term is present.
pub fn random_base(n: usize, density: f64, seed: u64) -> Result<PolynomialProgram, ProblemError> {
    if n == 0 || !(0.0..=1.0).contains(&density) {
        return Err(ProblemError::InvalidConfig(format!(
            "random base needs n >= 1 and density in [0, 1], got n = {n}, density = {density}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut obj = Polynomial::zero();
    for j in 0..n {
        obj.add_term(rng.gen_range(-10.0..10.0), Multiset::from_atoms([j as u32]));
    }
    let mut quad = 0;
    for i in 0..n {
        for j in i..n {
            if rng.gen_bool(density) {
                obj.add_term(rng.gen_range(-10.0..10.0), Multiset::from_atoms([i as u32, j as u32]));
                quad += 1;
            }
        }
    }
    if quad == 0 {
        let i = rng.gen_range(0..n) as u32;
        let j = rng.gen_range(0..n) as u32;
        obj.add_term(rng.gen_range(-10.0..10.0), Multiset::from_atoms([i, j]));
    }
    PolynomialProgram::with_box(&vec![(0.0, 1.0); n], obj)
}
