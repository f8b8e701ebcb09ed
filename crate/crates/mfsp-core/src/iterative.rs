//! Allocation pruning and alternating per-fidelity refinement.
//!
//! Phase I enumerates sensor-count allocations `(k_ch, k_exp)`: for each
//! affordable expensive count the maximal cheap count is kept only when no
//! cheap sensor can be upgraded to an expensive one within budget, which
//! caps the candidate list at `floor(1 + b / c_exp)` entries. Phase II
//! refines each surviving allocation by alternating greedy refreshes of the
//! cheap and expensive sets, keeping the best configuration evaluated, and
//! the winner across allocations is returned.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greedy::{DesignResult, GreedyState, IterativeMeta};
use crate::model::{phi_d, Fidelity, ProblemInstance, Selection};

/// Sensor counts per fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Allocation {
    pub k_cheap: usize,
    pub k_exp: usize,
}

/// Result of Phase I pruning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    /// Surviving allocations, ascending in `k_exp`, at most one per value.
    pub allocations: Vec<Allocation>,
    /// Number of feasible allocations before pruning.
    pub feasible_count: u64,
    /// Theoretical cap `floor(1 + b / c_exp)` on the survivor count.
    pub bound: u64,
}

/// Refined configuration for one allocation.
#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub allocation: Allocation,
    pub selection: Selection,
    pub phi_d: f64,
    /// Completed refinement passes (both per-fidelity refreshes accepted).
    pub refinements: usize,
}

/// Everything [`iterative_select`] learned, including the winning design.
#[derive(Debug, Clone)]
pub struct IterativeReport {
    pub candidates: CandidateSet,
    pub per_candidate: Vec<CandidateOutcome>,
    /// Allocations dropped because `k_exp` alone exceeds the location count.
    pub skipped: Vec<(Allocation, String)>,
    pub total_refinements: usize,
    pub winner: DesignResult,
}

/// Phase I: per expensive count `k_exp`, keep the maximal cheap count
/// `k_ch = floor((b - c_exp k_exp) / c_ch)` unless a cheap sensor could be
/// upgraded to an expensive one within budget.
///
/// When even one cheap sensor is unaffordable the set degenerates to the
/// single empty allocation `(0, 0)`.
pub fn prune_allocations(cost_cheap: f64, cost_exp: f64, budget: f64) -> Result<CandidateSet> {
    for (name, v) in [("cheap cost", cost_cheap), ("expensive cost", cost_exp), ("budget", budget)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::invalid(format!("{name} must be finite and positive, got {v}")));
        }
    }
    if cost_cheap >= cost_exp {
        return Err(Error::invalid(format!(
            "cheap cost must be strictly below expensive cost ({cost_cheap} vs {cost_exp})"
        )));
    }

    let kmax_exp = (budget / cost_exp).floor() as u64;
    let upgrade = cost_exp - cost_cheap;
    let mut allocations = Vec::new();
    let mut feasible_count: u64 = 0;
    for k_exp in 0..=kmax_exp {
        let residual = (budget - cost_exp * k_exp as f64).max(0.0);
        let k_ch = (residual / cost_cheap).floor() as u64;
        feasible_count += k_ch + 1;
        let spend = cost_cheap * k_ch as f64 + cost_exp * k_exp as f64;
        if k_ch == 0 || spend > budget - upgrade {
            allocations.push(Allocation {
                k_cheap: k_ch as usize,
                k_exp: k_exp as usize,
            });
        }
    }
    let bound = (1.0 + budget / cost_exp).floor() as u64;
    debug_assert!(allocations.len() as u64 <= bound);
    Ok(CandidateSet {
        allocations,
        feasible_count,
        bound,
    })
}

/// Greedy selection of `k` sensors of one fidelity, conditioned on `prev`
/// sensors of the other fidelity.
///
/// Runs on Sherman-Morrison state seeded with `prev`; each added location
/// maximizes the un-normalized marginal gain, ties to the lowest index.
/// Returns the chosen locations in ascending order.
pub fn greedy_select(
    inst: &ProblemInstance,
    fidelity: Fidelity,
    k: usize,
    prev: &[usize],
) -> Result<Vec<usize>> {
    let m = inst.num_candidates();
    if k + prev.len() > m {
        return Err(Error::invalid(format!(
            "cannot place {k} sensors with {} occupied out of {m} locations",
            prev.len()
        )));
    }
    let mut st = GreedyState::new(inst);
    for &i in prev {
        if i >= m {
            return Err(Error::invalid(format!("location {i} out of range (M = {m})")));
        }
        st.advance(fidelity.other(), i, true, true)?;
    }
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..m {
            if !st.is_free(i) {
                continue;
            }
            let raw = st.raw_gain(fidelity, i);
            if !raw.is_finite() || raw <= -1.0 {
                return Err(Error::breakdown(format!(
                    "gain argument {raw} outside log1p domain at location {i}"
                )));
            }
            if best.map_or(true, |(b, _)| raw > b) {
                best = Some((raw, i));
            }
        }
        let (_, i) = best.expect("free location count was checked");
        st.advance(fidelity, i, true, true)?;
        chosen.push(i);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

enum Processed {
    Done(CandidateOutcome),
    Skipped(Allocation, String),
}

fn refine_allocation(
    inst: &ProblemInstance,
    alloc: Allocation,
    max_iters: usize,
) -> Result<Processed> {
    let m = inst.num_candidates();
    if alloc.k_exp > m {
        return Ok(Processed::Skipped(
            alloc,
            format!("k_exp = {} exceeds the {m} candidate locations", alloc.k_exp),
        ));
    }
    // keep every expensive sensor, give up cheap ones that no longer fit
    let clamped = Allocation {
        k_cheap: alloc.k_cheap.min(m - alloc.k_exp),
        k_exp: alloc.k_exp,
    };

    let mut s_exp = greedy_select(inst, Fidelity::Expensive, clamped.k_exp, &[])?;
    let mut s_ch: Vec<usize> = Vec::new();
    let cur = Selection::new(s_ch.clone(), s_exp.clone())?;
    let mut cur_phi = phi_d(inst, &cur)?;
    let mut best_sel = cur;
    let mut best_phi = cur_phi;
    let mut refinements = 0usize;

    for _ in 0..max_iters {
        let s_ch_new = greedy_select(inst, Fidelity::Cheap, clamped.k_cheap, &s_exp)?;
        let cand = Selection::new(s_ch_new.clone(), s_exp.clone())?;
        let phi = phi_d(inst, &cand)?;
        if phi > best_phi {
            best_phi = phi;
            best_sel = cand;
        }
        if phi <= cur_phi {
            break;
        }
        cur_phi = phi;
        s_ch = s_ch_new;

        let s_exp_new = greedy_select(inst, Fidelity::Expensive, clamped.k_exp, &s_ch)?;
        let cand = Selection::new(s_ch.clone(), s_exp_new.clone())?;
        let phi = phi_d(inst, &cand)?;
        if phi > best_phi {
            best_phi = phi;
            best_sel = cand;
        }
        if phi <= cur_phi {
            break;
        }
        cur_phi = phi;
        s_exp = s_exp_new;
        refinements += 1;
    }

    Ok(Processed::Done(CandidateOutcome {
        allocation: clamped,
        selection: best_sel,
        phi_d: best_phi,
        refinements,
    }))
}

/// Phase I + Phase II: prune allocations, refine each in parallel and pick
/// the winner (highest objective, ties to fewer expensive sensors, then
/// first encountered).
pub fn iterative_select(inst: &ProblemInstance, max_iters: usize) -> Result<IterativeReport> {
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    let candidates = if inst.budget() > 0.0 {
        prune_allocations(inst.cheap().cost(), inst.exp().cost(), inst.budget())?
    } else {
        CandidateSet {
            allocations: vec![Allocation { k_cheap: 0, k_exp: 0 }],
            feasible_count: 1,
            bound: 1,
        }
    };

    let processed: Vec<Processed> = candidates
        .allocations
        .par_iter()
        .map(|&alloc| refine_allocation(inst, alloc, max_iters))
        .collect::<Result<_>>()?;

    let mut per_candidate = Vec::new();
    let mut skipped = Vec::new();
    for p in processed {
        match p {
            Processed::Done(outcome) => per_candidate.push(outcome),
            Processed::Skipped(alloc, why) => skipped.push((alloc, why)),
        }
    }
    if per_candidate.is_empty() {
        return Err(Error::degenerate("no allocation survived pruning"));
    }

    let mut winner = 0usize;
    for i in 1..per_candidate.len() {
        let (cur, best) = (&per_candidate[i], &per_candidate[winner]);
        if cur.phi_d > best.phi_d
            || (cur.phi_d == best.phi_d && cur.allocation.k_exp < best.allocation.k_exp)
        {
            winner = i;
        }
    }
    let total_refinements = per_candidate.iter().map(|c| c.refinements).sum();
    let best = &per_candidate[winner];
    let winner = DesignResult {
        algorithm: "iterative".to_string(),
        selection: best.selection.clone(),
        phi_d: best.phi_d,
        spend: best.selection.spend(inst.cheap(), inst.exp()),
        budget: inst.budget(),
        trace: Vec::new(),
        iterative: Some(IterativeMeta {
            candidate_count: candidates.allocations.len(),
            total_refinements,
        }),
    };

    Ok(IterativeReport {
        candidates,
        per_candidate,
        skipped,
        total_refinements,
        winner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FidelityClass;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
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

    fn counterexample(eps: f64) -> ProblemInstance {
        let a = DVector::from_column_slice(&[1.0]);
        let s_ch = (eps.exp() - 1.0).powf(-0.5);
        let s_ex = (1f64.exp() - 1.0).powf(-0.5);
        ProblemInstance::new(
            DMatrix::from_columns(&[&a / s_ch]),
            DMatrix::from_columns(&[&a / s_ex]),
            FidelityClass::new(eps / 2.0, s_ch).unwrap(),
            FidelityClass::new(1.0, s_ex).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn prune_matches_published_counts() {
        // (c_ch, c_exp) -> (feasible, |K|, bound) at budget 100
        let cases = [
            ((1.0, 2.0), (2601, 51, 51)),
            ((2.0, 3.0), (884, 18, 34)),
            ((3.0, 5.0), (364, 14, 21)),
            ((5.0, 11.0), (107, 10, 10)),
        ];
        for ((c_ch, c_exp), (feasible, k, bound)) in cases {
            let set = prune_allocations(c_ch, c_exp, 100.0).unwrap();
            assert_eq!(set.feasible_count, feasible, "costs ({c_ch}, {c_exp})");
            assert_eq!(set.allocations.len(), k, "costs ({c_ch}, {c_exp})");
            assert_eq!(set.bound, bound, "costs ({c_ch}, {c_exp})");
        }
    }

    #[test]
    fn prune_discards_only_upgradeable_allocations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let c_ch = rng.random_range(1..20) as f64;
            let c_exp = c_ch + rng.random_range(1..20) as f64;
            let budget = rng.random_range(1..400) as f64;
            let set = prune_allocations(c_ch, c_exp, budget).unwrap();
            assert!(set.allocations.len() as u64 <= set.bound);
            let mut seen = std::collections::BTreeSet::new();
            for a in &set.allocations {
                assert!(seen.insert(a.k_exp), "duplicate k_exp {}", a.k_exp);
            }
            // every discarded maximal allocation admits a cheap -> expensive
            // upgrade within budget
            let kmax = (budget / c_exp).floor() as usize;
            for k_exp in 0..=kmax {
                let k_ch = ((budget - c_exp * k_exp as f64) / c_ch).floor() as usize;
                if set.allocations.iter().any(|a| a.k_exp == k_exp) {
                    continue;
                }
                assert!(k_ch > 0);
                let upgraded = c_ch * (k_ch - 1) as f64 + c_exp * (k_exp + 1) as f64;
                assert!(
                    upgraded <= budget + 1e-9,
                    "discarded ({k_ch}, {k_exp}) is not upgradeable at c = ({c_ch}, {c_exp}), b = {budget}"
                );
            }
        }
    }

    #[test]
    fn prune_degenerates_to_empty_allocation() {
        let set = prune_allocations(3.0, 5.0, 2.0).unwrap();
        assert_eq!(set.allocations, vec![Allocation { k_cheap: 0, k_exp: 0 }]);
        assert_eq!(set.feasible_count, 1);
        assert!(prune_allocations(0.0, 5.0, 2.0).is_err());
        assert!(prune_allocations(3.0, 5.0, -1.0).is_err());
        assert!(prune_allocations(5.0, 3.0, 10.0).is_err());
    }

    #[test]
    fn greedy_select_matches_single_fidelity_reference() {
        let inst = random_instance(31, 3, 6, (1.0, 2.0), (0.7, 0.3), 100.0);
        let picked = greedy_select(&inst, Fidelity::Expensive, 2, &[]).unwrap();

        // reference: repeated argmax of fresh phi_d differences
        let mut sel = Selection::empty();
        for _ in 0..2 {
            let base = phi_d(&inst, &sel).unwrap();
            let mut best: Option<(f64, usize)> = None;
            for i in 0..6 {
                if sel.contains(i) {
                    continue;
                }
                let v = phi_d(&inst, &sel.with(Fidelity::Expensive, i).unwrap()).unwrap() - base;
                if best.map_or(true, |(b, _)| v > b) {
                    best = Some((v, i));
                }
            }
            sel = sel.with(Fidelity::Expensive, best.unwrap().1).unwrap();
        }
        assert_eq!(picked, sel.exp());
    }

    #[test]
    fn greedy_select_breaks_ties_by_lowest_index() {
        // orthogonal equal-norm columns: all gains equal at every step
        let g = DMatrix::<f64>::identity(4, 4) * 0.5;
        let inst = ProblemInstance::new(
            &g / 0.9,
            &g / 0.45,
            FidelityClass::new(1.0, 0.9).unwrap(),
            FidelityClass::new(2.0, 0.45).unwrap(),
            10.0,
        )
        .unwrap();
        assert_eq!(greedy_select(&inst, Fidelity::Cheap, 3, &[]).unwrap(), vec![0, 1, 2]);
        assert_eq!(greedy_select(&inst, Fidelity::Cheap, 0, &[]).unwrap(), Vec::<usize>::new());
        // conditioning skips occupied locations
        assert_eq!(greedy_select(&inst, Fidelity::Cheap, 2, &[0, 2]).unwrap(), vec![1, 3]);
        assert!(greedy_select(&inst, Fidelity::Cheap, 3, &[0, 1]).is_err());
    }

    #[test]
    fn counterexample_winner_places_expensive_sensor() {
        for eps in [0.1, 0.5, 0.9] {
            let inst = counterexample(eps);
            let report = iterative_select(&inst, 20).unwrap();
            assert!(report.winner.selection.cheap().is_empty());
            assert_eq!(report.winner.selection.exp(), &[0]);
            assert_relative_eq!(report.winner.phi_d, 1.0, max_relative = 1e-9);
            let greedy = crate::greedy::greedy_sm(&inst).unwrap();
            assert!(report.winner.phi_d > greedy.phi_d);
        }
    }

    #[test]
    fn tiny_budget_yields_empty_winner() {
        let inst = random_instance(8, 3, 5, (2.0, 3.0), (0.6, 0.3), 1.0);
        let report = iterative_select(&inst, 20).unwrap();
        assert!(report.winner.selection.is_empty());
        assert_eq!(report.winner.phi_d, 0.0);

        let zero = inst.with_budget(0.0).unwrap();
        let report = iterative_select(&zero, 20).unwrap();
        assert!(report.winner.selection.is_empty());
    }

    #[test]
    fn allocations_are_clamped_and_oversize_k_exp_skipped() {
        // M = 2 but budget affords far more sensors
        let inst = random_instance(13, 2, 2, (1.0, 3.0), (0.8, 0.4), 12.0);
        let report = iterative_select(&inst, 20).unwrap();
        for o in &report.per_candidate {
            assert!(o.allocation.k_cheap + o.allocation.k_exp <= 2);
            assert_eq!(o.selection.cheap().len(), o.allocation.k_cheap);
            assert_eq!(o.selection.exp().len(), o.allocation.k_exp);
        }
        assert!(!report.skipped.is_empty(), "k_exp = 3, 4 should be skipped");
        for (alloc, why) in &report.skipped {
            assert!(alloc.k_exp > 2);
            assert!(why.contains("k_exp"));
        }
    }

    #[test]
    fn winner_is_keep_best_and_bounded_by_exhaustive() {
        for seed in 0..8u64 {
            let inst = random_instance(
                200 + seed,
                3,
                5,
                (1.0, 2.0),
                (0.8, 0.35),
                3.0 + (seed % 2) as f64,
            );
            let report = iterative_select(&inst, 20).unwrap();
            let max_phi = report
                .per_candidate
                .iter()
                .map(|c| c.phi_d)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(report.winner.phi_d, max_phi);
            assert!(report.winner.spend <= inst.budget() + 1e-12);

            // per-candidate keep-best dominates its expensive-only start
            for o in &report.per_candidate {
                let init = greedy_select(&inst, Fidelity::Expensive, o.allocation.k_exp, &[]).unwrap();
                let init_phi =
                    phi_d(&inst, &Selection::new(vec![], init).unwrap()).unwrap();
                assert!(o.phi_d >= init_phi - 1e-12);
            }

            let best = crate::baselines::exhaustive_search(&inst).unwrap();
            assert!(report.winner.phi_d <= best.phi_d + 1e-10);
        }
    }
}
