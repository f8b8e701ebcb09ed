//! Baselines and oracles: uniform random designs, exhaustive search over
//! every assignment (the optimality oracle for desk-scale instances), the
//! pathological instance on which greedy is arbitrarily suboptimal, and the
//! first-order cost/noise regime heuristic.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::greedy::DesignResult;
use crate::iterative::Allocation;
use crate::model::{phi_d, FidelityClass, ProblemInstance, Selection};

/// Exhaustive enumeration is capped at 3^12 assignments.
const EXHAUSTIVE_MAX_LOCATIONS: usize = 12;

/// Which sensor class the small-signal expansion favors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    CheapFavored,
    ExpensiveFavored,
    Critical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::CheapFavored => "cheap-favored",
            Regime::ExpensiveFavored => "expensive-favored",
            Regime::Critical => "critical",
        })
    }
}

/// Outcome of [`predict_regime`]: cost ratio, noise ratio, verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeVerdict {
    /// `c_ch / c_exp`
    pub ratio_cost: f64,
    /// `sigma_exp^2 / sigma_ch^2`
    pub ratio_noise: f64,
    pub regime: Regime,
}

/// First-order heuristic: in the small-signal regime greedy favors cheap
/// sensors when `c_ch/c_exp < sigma_exp^2/sigma_ch^2`, expensive when the
/// inequality reverses, and is indifferent at the critical ratio (where the
/// tie rule then picks cheap). Advisory only; it never steers the selectors.
pub fn predict_regime(cheap: &FidelityClass, exp: &FidelityClass) -> RegimeVerdict {
    let ratio_cost = cheap.cost() / exp.cost();
    let ratio_noise = (exp.sigma() * exp.sigma()) / (cheap.sigma() * cheap.sigma());
    let scale = ratio_cost.abs().max(ratio_noise.abs());
    let regime = if (ratio_cost - ratio_noise).abs() <= 1e-12 * scale {
        Regime::Critical
    } else if ratio_cost < ratio_noise {
        Regime::CheapFavored
    } else {
        Regime::ExpensiveFavored
    };
    RegimeVerdict {
        ratio_cost,
        ratio_noise,
        regime,
    }
}

/// Uniformly random disjoint index sets of the allocation's sizes, drawn by
/// shuffling `0..m` and splitting the prefix. Deterministic per seed.
pub fn random_design(alloc: &Allocation, m: usize, seed: u64) -> Result<Selection> {
    if alloc.k_cheap + alloc.k_exp > m {
        return Err(Error::invalid(format!(
            "allocation ({}, {}) does not fit {m} locations",
            alloc.k_cheap, alloc.k_exp
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let cheap = order[..alloc.k_cheap].to_vec();
    let exp = order[alloc.k_cheap..alloc.k_cheap + alloc.k_exp].to_vec();
    Selection::new(cheap, exp)
}

/// Optimality oracle: enumerates every assignment of {none, cheap,
/// expensive} to each location within budget and returns a canonical
/// maximizer of `Phi_D` (ties: smaller spend, then lexicographically
/// smallest index sets), so the result is independent of enumeration order.
pub fn exhaustive_search(inst: &ProblemInstance) -> Result<DesignResult> {
    let m = inst.num_candidates();
    if m > EXHAUSTIVE_MAX_LOCATIONS {
        return Err(Error::invalid(format!(
            "exhaustive search is limited to M <= {EXHAUSTIVE_MAX_LOCATIONS}, got {m}"
        )));
    }
    let c_ch = inst.cheap().cost();
    let c_ex = inst.exp().cost();
    let budget = inst.budget();

    let mut best: Option<(f64, f64, Selection)> = None;
    let total = 3usize.pow(m as u32);
    let mut cheap = Vec::with_capacity(m);
    let mut exp = Vec::with_capacity(m);
    for code in 0..total {
        cheap.clear();
        exp.clear();
        let mut c = code;
        for loc in 0..m {
            match c % 3 {
                1 => cheap.push(loc),
                2 => exp.push(loc),
                _ => {}
            }
            c /= 3;
        }
        let spend = cheap.len() as f64 * c_ch + exp.len() as f64 * c_ex;
        if spend > budget {
            continue;
        }
        let sel = Selection::new(cheap.clone(), exp.clone())?;
        let phi = phi_d(inst, &sel)?;
        let better = match &best {
            None => true,
            Some((bp, bs, bsel)) => {
                phi > *bp
                    || (phi == *bp && spend < *bs)
                    || (phi == *bp
                        && spend == *bs
                        && (sel.cheap(), sel.exp()) < (bsel.cheap(), bsel.exp()))
            }
        };
        if better {
            best = Some((phi, spend, sel));
        }
    }
    let (phi, spend, selection) = best.expect("the empty assignment is always feasible");
    Ok(DesignResult {
        algorithm: "exhaustive".to_string(),
        selection,
        phi_d: phi,
        spend,
        budget,
        trace: Vec::new(),
        iterative: None,
    })
}

/// The instance family on which greedy attains exactly `eps` of the optimum:
/// one location, direction `a` with `x = a^T a`,
/// `sigma_ch = x^{1/2} (e^eps - 1)^{-1/2}`, `sigma_exp = x^{1/2} (e - 1)^{-1/2}`,
/// costs `(eps/2, 1)`, budget 1. The cheap sensor yields `Phi_D = eps` at
/// gain-per-cost 2; the expensive one yields `Phi_D = 1` at gain-per-cost 1.
pub fn counterexample_instance(eps: f64, direction: &DVector<f64>) -> Result<ProblemInstance> {
    if !eps.is_finite() || eps <= 0.0 || eps >= 1.0 {
        return Err(Error::invalid(format!("eps must lie strictly in (0, 1), got {eps}")));
    }
    if direction.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("direction contains non-finite entries"));
    }
    let x = direction.norm_squared();
    if x <= 0.0 {
        return Err(Error::invalid("direction must be nonzero"));
    }
    let sigma_ch = x.sqrt() * (eps.exp() - 1.0).powf(-0.5);
    let sigma_ex = x.sqrt() * (1f64.exp() - 1.0).powf(-0.5);
    ProblemInstance::new(
        DMatrix::from_columns(&[direction / sigma_ch]),
        DMatrix::from_columns(&[direction / sigma_ex]),
        FidelityClass::new(eps / 2.0, sigma_ch)?,
        FidelityClass::new(1.0, sigma_ex)?,
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::{greedy_naive, greedy_sm};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_instance(
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
            FidelityClass::new(cost.0, sigma.0).unwrap(),
            FidelityClass::new(cost.1, sigma.1).unwrap(),
            budget,
        )
        .unwrap()
    }

    #[test]
    fn regime_verdicts_match_reference_cases() {
        let v = predict_regime(
            &FidelityClass::new(1.0, 0.02).unwrap(),
            &FidelityClass::new(4.0, 0.01).unwrap(),
        );
        assert_eq!(v.regime, Regime::Critical);
        assert_relative_eq!(v.ratio_cost, 0.25, max_relative = 1e-15);
        assert_relative_eq!(v.ratio_noise, 0.25, max_relative = 1e-12);

        let v = predict_regime(
            &FidelityClass::new(1.0, 0.02).unwrap(),
            &FidelityClass::new(6.0, 0.01).unwrap(),
        );
        assert_eq!(v.regime, Regime::CheapFavored);

        let v = predict_regime(
            &FidelityClass::new(1.0, 0.05).unwrap(),
            &FidelityClass::new(5.0, 0.01).unwrap(),
        );
        assert_eq!(v.regime, Regime::ExpensiveFavored);
    }

    #[test]
    fn random_design_shapes_and_determinism() {
        let alloc = Allocation { k_cheap: 2, k_exp: 1 };
        let a = random_design(&alloc, 5, 99).unwrap();
        let b = random_design(&alloc, 5, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cheap().len(), 2);
        assert_eq!(a.exp().len(), 1);

        let empty = random_design(&Allocation { k_cheap: 0, k_exp: 0 }, 5, 1).unwrap();
        assert!(empty.is_empty());

        let full = random_design(&Allocation { k_cheap: 5, k_exp: 0 }, 5, 7).unwrap();
        assert_eq!(full.cheap(), &[0, 1, 2, 3, 4]);

        assert!(random_design(&Allocation { k_cheap: 4, k_exp: 2 }, 5, 1).is_err());
    }

    #[test]
    fn random_design_varies_with_seed() {
        let alloc = Allocation { k_cheap: 2, k_exp: 2 };
        let distinct: std::collections::BTreeSet<_> = (0..40u64)
            .map(|s| {
                let sel = random_design(&alloc, 10, s).unwrap();
                (sel.cheap().to_vec(), sel.exp().to_vec())
            })
            .collect();
        assert!(distinct.len() > 10, "seeds produce varied draws");
    }

    #[test]
    fn exhaustive_search_trivial_and_guard_cases() {
        let inst = random_instance(4, 3, 5, (2.0, 3.0), (0.7, 0.3), 1.0);
        let res = exhaustive_search(&inst).unwrap();
        assert!(res.selection.is_empty());
        assert_eq!(res.phi_d, 0.0);

        let wide = random_instance(5, 2, 13, (1.0, 2.0), (0.7, 0.3), 3.0);
        assert!(matches!(exhaustive_search(&wide), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn exhaustive_search_result_is_enumeration_order_invariant() {
        let inst = random_instance(17, 3, 5, (1.0, 2.0), (0.8, 0.35), 4.0);
        let forward = exhaustive_search(&inst).unwrap();

        // reference sweep in reversed code order with the same canonical
        // tie rule must land on the same design
        let m = inst.num_candidates();
        let mut best: Option<(f64, f64, Selection)> = None;
        for code in (0..3usize.pow(m as u32)).rev() {
            let mut cheap = vec![];
            let mut exp = vec![];
            let mut c = code;
            for loc in 0..m {
                match c % 3 {
                    1 => cheap.push(loc),
                    2 => exp.push(loc),
                    _ => {}
                }
                c /= 3;
            }
            let spend = cheap.len() as f64 * inst.cheap().cost() + exp.len() as f64 * inst.exp().cost();
            if spend > inst.budget() {
                continue;
            }
            let sel = Selection::new(cheap, exp).unwrap();
            let phi = phi_d(&inst, &sel).unwrap();
            let better = match &best {
                None => true,
                Some((bp, bs, bsel)) => {
                    phi > *bp
                        || (phi == *bp && spend < *bs)
                        || (phi == *bp
                            && spend == *bs
                            && (sel.cheap(), sel.exp()) < (bsel.cheap(), bsel.exp()))
                }
            };
            if better {
                best = Some((phi, spend, sel));
            }
        }
        let (phi, _, sel) = best.unwrap();
        assert_eq!(forward.phi_d, phi);
        assert_eq!(forward.selection, sel);
    }

    #[test]
    fn exhaustive_dominates_greedy_and_iterative() {
        for seed in 0..6u64 {
            let inst = random_instance(40 + seed, 3, 5, (1.0, 2.0), (0.8, 0.35), 3.0);
            let best = exhaustive_search(&inst).unwrap();
            assert!(greedy_sm(&inst).unwrap().phi_d <= best.phi_d + 1e-10);
            assert!(
                crate::iterative::iterative_select(&inst, 20).unwrap().winner.phi_d
                    <= best.phi_d + 1e-10
            );
        }
    }

    #[test]
    fn counterexample_exhibits_the_greedy_gap() {
        let a = DVector::from_column_slice(&[1.0, 0.0]);
        for eps in [0.1, 0.5, 0.9] {
            let inst = counterexample_instance(eps, &a).unwrap();
            let greedy = greedy_naive(&inst).unwrap();
            let oracle = exhaustive_search(&inst).unwrap();
            assert_relative_eq!(greedy.phi_d, eps, max_relative = 1e-9);
            assert_relative_eq!(oracle.phi_d, 1.0, max_relative = 1e-9);
            assert!(oracle.selection.cheap().is_empty());
            assert_eq!(oracle.selection.exp(), &[0]);
            assert_relative_eq!(greedy.phi_d / oracle.phi_d, eps, max_relative = 1e-9);
        }
    }

    #[test]
    fn counterexample_is_scale_invariant_and_validates() {
        let a = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let scaled = &a * 7.0;
        let base = counterexample_instance(0.9, &a).unwrap();
        let big = counterexample_instance(0.9, &scaled).unwrap();
        let sel = Selection::new(vec![0], vec![]).unwrap();
        assert_relative_eq!(
            phi_d(&base, &sel).unwrap(),
            phi_d(&big, &sel).unwrap(),
            max_relative = 1e-12
        );
        assert_relative_eq!(phi_d(&base, &sel).unwrap(), 0.9, max_relative = 1e-9);

        assert!(counterexample_instance(0.0, &a).is_err());
        assert!(counterexample_instance(1.0, &a).is_err());
        assert!(counterexample_instance(0.5, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn greedy_defaults_to_cheap_at_critical_ratio() {
        // orthogonal equal-norm columns at the exact critical cost ratio:
        // the log1p concavity tips the normalized gain toward cheap
        let g = DMatrix::<f64>::identity(4, 4) * 1e-8;
        let inst = ProblemInstance::new(
            &g / 0.02,
            &g / 0.01,
            FidelityClass::new(1.0, 0.02).unwrap(),
            FidelityClass::new(4.0, 0.01).unwrap(),
            8.0,
        )
        .unwrap();
        assert_eq!(
            predict_regime(inst.cheap(), inst.exp()).regime,
            Regime::Critical
        );
        let run = greedy_sm(&inst).unwrap();
        assert!(run.selection.exp().is_empty());
        assert_eq!(run.selection.cheap().len(), 4);
    }
}
