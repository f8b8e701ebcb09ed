//! Shared instance generators for the benchmark suite.

use mfsp_core::{FidelityClass, ProblemInstance, Selection};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random dense placement instance with Gaussian forward maps.
pub fn random_instance(
    seed: u64,
    ell: usize,
    m: usize,
    cost: (f64, f64),
    sigma: (f64, f64),
    budget: f64,
) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(ell, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    ProblemInstance::new(
        &g / sigma.0,
        &g / sigma.1,
        FidelityClass::new(cost.0, sigma.0).expect("valid cheap class"),
        FidelityClass::new(cost.1, sigma.1).expect("valid expensive class"),
        budget,
    )
    .expect("valid instance")
}

/// Random disjoint selection with `k_cheap + k_exp` sensors.
pub fn random_selection(seed: u64, m: usize, k_cheap: usize, k_exp: usize) -> Selection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    Selection::new(
        order[..k_cheap].to_vec(),
        order[k_cheap..k_cheap + k_exp].to_vec(),
    )
    .expect("disjoint by construction")
}
