//! Budget-constrained multifidelity sensor placement for linear Bayesian
//! state estimation.
//!
//! The pipeline: compress training snapshots into a POD basis with a
//! data-driven Gaussian prior ([`reduced`]), pose sensor selection as
//! maximizing the D-optimality objective `log det B(S)` over two sensor
//! classes with different costs and noise levels ([`model`]), and solve the
//! budgeted selection problem with cost-normalized greedy ([`greedy`]) or
//! allocation-pruned alternating refinement ([`iterative`]). Reference
//! implementations, an exhaustive oracle, and a known greedy failure mode
//! live in [`baselines`]; posterior reconstruction and held-out evaluation
//! in [`reconstruct`]; file formats in [`io`].

pub mod baselines;
pub mod error;
pub mod greedy;
pub mod io;
pub mod iterative;
pub mod model;
pub mod reconstruct;
pub mod reduced;
pub mod seed;

pub use error::{Error, Result};
pub use model::{
    marginal_gain, phi_d, posterior, Fidelity, FidelityClass, PosteriorSummary, ProblemInstance,
    Selection,
};
pub use reduced::{
    assemble_instance, build_model, build_reduced_basis, chronological_split, prior_covariance,
    restrict_to_candidates, BasisOptions, EnergyRule, ReducedModel, SnapshotMatrix,
};
pub use greedy::{greedy_naive, greedy_sm, DesignResult, IterativeMeta, TraceStep};
pub use iterative::{
    greedy_select, iterative_select, prune_allocations, Allocation, CandidateOutcome,
    CandidateSet, IterativeReport,
};
pub use baselines::{
    counterexample_instance, exhaustive_search, predict_regime, random_design, Regime,
    RegimeVerdict,
};
pub use reconstruct::{
    compare_designs, evaluate, reconstruct, simulate_measurement, Comparison, ComparisonRow,
    EvalOptions, EvalSummary, HistogramBin, Measurement, RandomBaselineSpec,
};
