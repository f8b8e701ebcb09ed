//! Cost-normalized greedy selection.
//!
//! Two implementations of the same algorithm: [`greedy_naive`] recomputes
//! `Phi_D` from scratch for every candidate (the reference), [`greedy_sm`]
//! maintains `D_j = B_t^{-1} A_j` with Sherman-Morrison rank-one updates so a
//! step costs O(M ell) instead of repeated factorizations. Both pick, while
//! budget lasts, the (fidelity, location) pair maximizing marginal gain per
//! unit cost, preferring the cheap fidelity and then the lowest location
//! index on ties.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{phi_d, Fidelity, ProblemInstance, Selection};

/// One accepted greedy step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// 1-based step counter.
    pub step: usize,
    pub fidelity: Fidelity,
    pub location: usize,
    /// Marginal objective gain divided by the sensor cost.
    pub gain_per_cost: f64,
    /// Objective value after the step.
    pub phi_d: f64,
}

/// Candidate-set statistics attached to iterative designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterativeMeta {
    /// Number of allocations that survived pruning.
    pub candidate_count: usize,
    /// Total completed refinement passes across all allocations.
    pub total_refinements: usize,
}

/// Outcome of a design run, independent of the algorithm that produced it.
#[derive(Debug, Clone)]
pub struct DesignResult {
    pub algorithm: String,
    pub selection: Selection,
    pub phi_d: f64,
    pub spend: f64,
    pub budget: f64,
    pub trace: Vec<TraceStep>,
    pub iterative: Option<IterativeMeta>,
}

impl DesignResult {
    pub fn k_cheap(&self) -> usize {
        self.selection.cheap().len()
    }

    pub fn k_exp(&self) -> usize {
        self.selection.exp().len()
    }
}

/// Sherman-Morrison running state: `d_cheap`/`d_exp` track `B_t^{-1} A_j`
/// across accepted sensors, without ever forming `B_t` or its inverse.
pub struct GreedyState<'a> {
    inst: &'a ProblemInstance,
    d_cheap: DMatrix<f64>,
    d_exp: DMatrix<f64>,
    occupied: Vec<bool>,
    cheap: Vec<usize>,
    exp: Vec<usize>,
    spend: f64,
    step: usize,
    phi: f64,
    trace: Vec<TraceStep>,
}

impl<'a> GreedyState<'a> {
    pub fn new(inst: &'a ProblemInstance) -> Self {
        GreedyState {
            inst,
            d_cheap: inst.a(Fidelity::Cheap).clone(),
            d_exp: inst.a(Fidelity::Expensive).clone(),
            occupied: vec![false; inst.num_candidates()],
            cheap: Vec::new(),
            exp: Vec::new(),
            spend: 0.0,
            step: 0,
            phi: 0.0,
            trace: Vec::new(),
        }
    }

    pub fn remaining_budget(&self) -> f64 {
        self.inst.budget() - self.spend
    }

    pub fn phi_d(&self) -> f64 {
        self.phi
    }

    pub fn sensor_count(&self) -> usize {
        self.cheap.len() + self.exp.len()
    }

    pub fn is_free(&self, location: usize) -> bool {
        !self.occupied[location]
    }

    pub fn trace(&self) -> &[TraceStep] {
        &self.trace
    }

    pub fn selection(&self) -> Selection {
        Selection::new(self.cheap.clone(), self.exp.clone())
            .expect("greedy state holds disjoint sorted indices")
    }

    fn d(&self, f: Fidelity) -> &DMatrix<f64> {
        match f {
            Fidelity::Cheap => &self.d_cheap,
            Fidelity::Expensive => &self.d_exp,
        }
    }

    /// `[A_j]_i^T [D_j]_i`, the argument of the log1p gain for adding
    /// fidelity `f` at location `i` to the current state.
    pub(crate) fn raw_gain(&self, f: Fidelity, i: usize) -> f64 {
        self.inst.a(f).column(i).dot(&self.d(f).column(i))
    }

    /// Accepts sensor (f, i): applies the rank-one update
    /// `D_j <- D_j - v (u^T D_j) / (1 + u^T v)` to each fidelity selected by
    /// the `update_*` flags (those still admissible), marks the location
    /// occupied and returns the log gain.
    pub(crate) fn advance(
        &mut self,
        f: Fidelity,
        i: usize,
        update_cheap: bool,
        update_exp: bool,
    ) -> Result<f64> {
        if i >= self.occupied.len() {
            return Err(Error::invalid(format!("location {i} out of range")));
        }
        if self.occupied[i] {
            return Err(Error::invalid(format!("location {i} already occupied")));
        }
        let u = self.inst.a(f).column(i).clone_owned();
        let v = self.d(f).column(i).clone_owned();
        let uv = u.dot(&v);
        let denom = 1.0 + uv;
        if !denom.is_finite() || denom <= 1e-12 {
            return Err(Error::breakdown(format!(
                "Sherman-Morrison denominator {denom} at location {i}"
            )));
        }
        if update_cheap {
            let w = self.d_cheap.tr_mul(&u);
            self.d_cheap.ger(-1.0 / denom, &v, &w, 1.0);
        }
        if update_exp {
            let w = self.d_exp.tr_mul(&u);
            self.d_exp.ger(-1.0 / denom, &v, &w, 1.0);
        }
        self.occupied[i] = true;
        let list = match f {
            Fidelity::Cheap => &mut self.cheap,
            Fidelity::Expensive => &mut self.exp,
        };
        let pos = list.partition_point(|&x| x < i);
        list.insert(pos, i);
        let gain = uv.ln_1p();
        self.phi += gain;
        Ok(gain)
    }
}

/// Argmax of gain-per-cost over admissible fidelities and free locations.
///
/// `log_gain(f, i)` returns the marginal objective gain in log space. Scan
/// order is cheap before expensive, locations ascending, replacing only on
/// strictly greater value, which realizes the tie-breaking rules.
fn best_pair(
    inst: &ProblemInstance,
    cheap_in: bool,
    exp_in: bool,
    is_free: impl Fn(usize) -> bool,
    log_gain: impl Fn(Fidelity, usize) -> Result<f64>,
) -> Result<Option<(f64, Fidelity, usize)>> {
    let m = inst.num_candidates();
    let mut best: Option<(f64, Fidelity, usize)> = None;
    for f in [Fidelity::Cheap, Fidelity::Expensive] {
        let admissible = match f {
            Fidelity::Cheap => cheap_in,
            Fidelity::Expensive => exp_in,
        };
        if !admissible {
            continue;
        }
        let cost = inst.class(f).cost();
        for i in 0..m {
            if !is_free(i) {
                continue;
            }
            let value = log_gain(f, i)? / cost;
            if !value.is_finite() {
                return Err(Error::breakdown(format!(
                    "non-finite gain at location {i}"
                )));
            }
            if best.map_or(true, |(b, _, _)| value > b) {
                best = Some((value, f, i));
            }
        }
    }
    Ok(best)
}

/// Reference greedy: every candidate evaluated with a fresh `Phi_D`
/// factorization.
pub fn greedy_naive(inst: &ProblemInstance) -> Result<DesignResult> {
    let m = inst.num_candidates();
    let mut sel = Selection::empty();
    let mut spend = 0.0;
    let mut phi = 0.0;
    let mut trace = Vec::new();

    loop {
        let remaining = inst.budget() - spend;
        let cheap_in = inst.cheap().cost() <= remaining;
        let exp_in = inst.exp().cost() <= remaining;
        if (!cheap_in && !exp_in) || sel.len() == m {
            break;
        }
        let base = phi_d(inst, &sel)?;
        let best = best_pair(inst, cheap_in, exp_in, |i| !sel.contains(i), |f, i| {
            let grown = sel.with(f, i)?;
            Ok(phi_d(inst, &grown)? - base)
        })?;
        let (value, f, i) = best.expect("admissible fidelity and free location exist");
        sel = sel.with(f, i)?;
        spend += inst.class(f).cost();
        phi = phi_d(inst, &sel)?;
        trace.push(TraceStep {
            step: trace.len() + 1,
            fidelity: f,
            location: i,
            gain_per_cost: value,
            phi_d: phi,
        });
    }

    Ok(DesignResult {
        algorithm: "greedy-naive".to_string(),
        selection: sel,
        phi_d: phi,
        spend,
        budget: inst.budget(),
        trace,
        iterative: None,
    })
}

/// Sherman-Morrison greedy: same selection rule as [`greedy_naive`], one
/// rank-one update per accepted sensor, no `B_t` ever formed.
pub fn greedy_sm(inst: &ProblemInstance) -> Result<DesignResult> {
    let m = inst.num_candidates();
    let mut st = GreedyState::new(inst);

    loop {
        let remaining = st.remaining_budget();
        let cheap_in = inst.cheap().cost() <= remaining;
        let exp_in = inst.exp().cost() <= remaining;
        if (!cheap_in && !exp_in) || st.sensor_count() == m {
            break;
        }
        let best = best_pair(inst, cheap_in, exp_in, |i| st.is_free(i), |f, i| {
            let raw = st.raw_gain(f, i);
            if !raw.is_finite() || raw <= -1.0 {
                return Err(Error::breakdown(format!(
                    "gain argument {raw} outside log1p domain at location {i}"
                )));
            }
            Ok(raw.ln_1p())
        })?;
        let (value, f, i) = best.expect("admissible fidelity and free location exist");
        st.advance(f, i, cheap_in, exp_in)?;
        st.spend += inst.class(f).cost();
        st.step += 1;
        st.trace.push(TraceStep {
            step: st.step,
            fidelity: f,
            location: i,
            gain_per_cost: value,
            phi_d: st.phi,
        });
    }

    let phi = st.phi;
    let spend = st.spend;
    let selection = st.selection();
    let trace = st.trace;
    Ok(DesignResult {
        algorithm: "greedy".to_string(),
        selection,
        phi_d: phi,
        spend,
        budget: inst.budget(),
        trace,
        iterative: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FidelityClass;
    use approx::assert_relative_eq;
    use nalgebra::{Cholesky, DVector};
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
        // single direction with a^T a = 1; cheap gain eps, expensive gain 1
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
    fn budget_below_cheapest_cost_gives_empty_design() {
        let inst = random_instance(1, 3, 6, (1.0, 2.0), (0.5, 0.2), 0.5);
        for run in [greedy_naive(&inst).unwrap(), greedy_sm(&inst).unwrap()] {
            assert!(run.selection.is_empty());
            assert_eq!(run.phi_d, 0.0);
            assert_eq!(run.spend, 0.0);
            assert!(run.trace.is_empty());
        }
    }

    #[test]
    fn counterexample_picks_cheap_sensor() {
        let inst = counterexample(0.5);
        for run in [greedy_naive(&inst).unwrap(), greedy_sm(&inst).unwrap()] {
            assert_eq!(run.selection.cheap(), &[0]);
            assert!(run.selection.exp().is_empty());
            assert_relative_eq!(run.phi_d, 0.5, max_relative = 1e-9);
            assert_relative_eq!(run.spend, 0.25, max_relative = 1e-15);
        }
    }

    #[test]
    fn naive_and_sm_agree_on_random_instances() {
        for seed in 0..10u64 {
            let ell = 2 + (seed as usize) % 4;
            let m = 5 + (seed as usize) % 8;
            let inst = random_instance(
                100 + seed,
                ell,
                m,
                (1.0, 3.0),
                (0.6, 0.25),
                6.0 + (seed % 3) as f64,
            );
            let a = greedy_naive(&inst).unwrap();
            let b = greedy_sm(&inst).unwrap();
            assert_eq!(a.selection, b.selection, "seed {seed}");
            assert_eq!(a.trace.len(), b.trace.len());
            for (x, y) in a.trace.iter().zip(b.trace.iter()) {
                assert_eq!((x.fidelity, x.location), (y.fidelity, y.location));
                assert_relative_eq!(x.gain_per_cost, y.gain_per_cost, max_relative = 1e-9);
                assert_relative_eq!(x.phi_d, y.phi_d, max_relative = 1e-9);
            }
            assert_relative_eq!(a.phi_d, b.phi_d, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn trace_is_monotone_and_budget_accounting_exact() {
        let inst = random_instance(7, 4, 12, (1.0, 2.5), (0.7, 0.3), 9.0);
        for run in [greedy_naive(&inst).unwrap(), greedy_sm(&inst).unwrap()] {
            let mut last = 0.0;
            let mut spend = 0.0;
            for step in &run.trace {
                assert!(step.phi_d >= last - 1e-12, "objective decreased");
                last = step.phi_d;
                spend += inst.class(step.fidelity).cost();
            }
            assert_eq!(spend, run.spend, "trace costs must sum to spend exactly");
            assert!(run.spend <= run.budget);
        }
    }

    #[test]
    fn common_cost_scaling_leaves_sequence_unchanged() {
        let base = random_instance(42, 3, 9, (1.0, 2.5), (0.7, 0.3), 8.0);
        let gamma = 3.7;
        let scaled = ProblemInstance::new(
            base.a(Fidelity::Cheap).clone(),
            base.a(Fidelity::Expensive).clone(),
            FidelityClass::new(1.0 * gamma, 0.7).unwrap(),
            FidelityClass::new(2.5 * gamma, 0.3).unwrap(),
            8.0 * gamma,
        )
        .unwrap();
        let a = greedy_sm(&base).unwrap();
        let b = greedy_sm(&scaled).unwrap();
        assert_eq!(a.selection, b.selection);
        let seq_a: Vec<_> = a.trace.iter().map(|t| (t.fidelity, t.location)).collect();
        let seq_b: Vec<_> = b.trace.iter().map(|t| (t.fidelity, t.location)).collect();
        assert_eq!(seq_a, seq_b);
    }

    #[test]
    fn sm_gain_matches_fresh_phi_d_difference_mid_run() {
        let inst = random_instance(55, 4, 8, (1.0, 3.0), (0.8, 0.3), 10.0);
        let mut st = GreedyState::new(&inst);
        st.advance(Fidelity::Cheap, 2, true, true).unwrap();
        st.advance(Fidelity::Expensive, 5, true, true).unwrap();
        let sel = st.selection();
        let base = phi_d(&inst, &sel).unwrap();
        for (f, i) in [(Fidelity::Cheap, 0), (Fidelity::Expensive, 7)] {
            let sm_gain = st.raw_gain(f, i).ln_1p();
            let fresh = phi_d(&inst, &sel.with(f, i).unwrap()).unwrap() - base;
            assert_relative_eq!(sm_gain, fresh, max_relative = 1e-9);
        }
    }

    #[test]
    fn sm_state_tracks_dense_inverse() {
        // D_j == B_t^{-1} A_j after every accepted step
        let inst = random_instance(77, 5, 10, (1.0, 2.0), (0.9, 0.4), 7.0);
        let mut st = GreedyState::new(&inst);
        for (f, i) in [
            (Fidelity::Cheap, 3),
            (Fidelity::Expensive, 0),
            (Fidelity::Cheap, 8),
            (Fidelity::Expensive, 4),
        ] {
            st.advance(f, i, true, true).unwrap();
            let b = crate::model::information_matrix(&inst, &st.selection());
            let chol = Cholesky::new(b).unwrap();
            for f in [Fidelity::Cheap, Fidelity::Expensive] {
                let dense = chol.solve(inst.a(f));
                let diff = (st.d(f) - &dense).norm();
                assert!(
                    diff <= 1e-8 * dense.norm().max(1.0),
                    "D drifted from dense inverse by {diff}"
                );
            }
        }
    }

    #[test]
    fn sm_denominator_breakdown_is_reported() {
        let inst = random_instance(3, 3, 5, (1.0, 2.0), (0.5, 0.2), 10.0);
        let mut st = GreedyState::new(&inst);
        // corrupt the state so the denominator collapses
        st.d_cheap.fill(0.0);
        st.d_cheap[(0, 1)] = -2.0 / inst.a(Fidelity::Cheap)[(0, 1)];
        let err = st.advance(Fidelity::Cheap, 1, true, true).unwrap_err();
        assert!(matches!(err, Error::NumericalBreakdown(_)));
    }

    #[test]
    fn greedy_never_beats_exhaustive_optimum() {
        // spot check; the acceptance suite sweeps this against the oracle
        let inst = random_instance(21, 3, 8, (1.0, 2.0), (0.8, 0.35), 3.0);
        let run = greedy_sm(&inst).unwrap();
        let best = crate::baselines::exhaustive_search(&inst).unwrap();
        assert!(run.phi_d <= best.phi_d + 1e-10);
    }
}
