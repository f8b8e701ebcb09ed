//! Measurement simulation, posterior-mean reconstruction of full states,
//! relative-error evaluation over held-out snapshots, and design comparison
//! against random baselines.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greedy::DesignResult;
use crate::iterative::{prune_allocations, Allocation};
use crate::model::{phi_d, posterior, FidelityClass, PosteriorSummary, ProblemInstance, Selection};
use crate::reduced::ReducedModel;
use crate::{baselines, seed};

/// Number of equal-width bins in the random-baseline histogram.
const HISTOGRAM_BINS: usize = 40;

/// Synthetic sensor readings for one snapshot: truth at the selected
/// locations plus independent Gaussian noise, ordered cheap block first
/// (ascending location), then expensive block.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub values: DVector<f64>,
    pub selection: Selection,
    pub noise_seed: u64,
}

/// Samples a measurement of `truth` at the selected candidate rows.
/// `sigmas` are the (cheap, expensive) noise levels; zero is allowed and
/// yields exact readings. A fixed seed reproduces the noise bitwise, and the
/// noise pattern does not depend on the sigma values (one standard normal
/// draw per sensor, scaled).
pub fn simulate_measurement(
    truth: &DVector<f64>,
    cand_idx: &[usize],
    sigmas: (f64, f64),
    sel: &Selection,
    noise_seed: u64,
) -> Result<Measurement> {
    if !(sigmas.0.is_finite() && sigmas.1.is_finite()) || sigmas.0 < 0.0 || sigmas.1 < 0.0 {
        return Err(Error::invalid(format!(
            "noise levels must be finite and nonnegative, got ({}, {})",
            sigmas.0, sigmas.1
        )));
    }
    if let Some(&bad) = cand_idx.iter().find(|&&r| r >= truth.len()) {
        return Err(Error::invalid(format!(
            "candidate row {bad} outside state of dimension {}",
            truth.len()
        )));
    }
    sel.check_range(cand_idx.len())?;

    let mut rng = seed::stream(noise_seed, "measurement-noise");
    let mut values = Vec::with_capacity(sel.len());
    for (locs, sigma) in [(sel.cheap(), sigmas.0), (sel.exp(), sigmas.1)] {
        for &loc in locs {
            let z: f64 = rng.sample(StandardNormal);
            values.push(truth[cand_idx[loc]] + sigma * z);
        }
    }
    Ok(Measurement {
        values: DVector::from_vec(values),
        selection: sel.clone(),
        noise_seed,
    })
}

/// Posterior-mean reconstruction of the full state from one measurement:
/// solves the Bayesian inverse problem in the reduced coordinates, then
/// lifts through the basis and adds back the stored mean.
pub fn reconstruct(
    model: &ReducedModel,
    cheap: &FidelityClass,
    exp: &FidelityClass,
    y: &Measurement,
) -> Result<(DVector<f64>, PosteriorSummary)> {
    let post = posterior(
        &model.psi,
        &model.prior_var,
        cheap,
        exp,
        &y.selection,
        &y.values,
    )?;
    let mut estimate = &model.phi * &post.mean;
    if let Some(mean) = &model.mean {
        estimate += mean;
    }
    Ok((estimate, post))
}

/// Knobs for [`evaluate`]. `noise_free` replaces the sampled noise with
/// exact readings while the reconstruction still assumes the nominal noise
/// levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub seed: u64,
    pub noise_free: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            seed: 0,
            noise_free: false,
        }
    }
}

/// Reconstruction quality of one design over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    /// Relative error per evaluated snapshot, in snapshot order (skipped
    /// snapshots are absent).
    pub per_snapshot_rel_err: Vec<f64>,
    /// Arithmetic mean of `per_snapshot_rel_err`.
    pub mean_rel_err: f64,
    /// `Phi_D` of the design, recomputed on `inst`.
    pub phi_d: f64,
    pub allocation: Allocation,
    /// Column indices of test snapshots skipped because their norm is zero.
    pub skipped: Vec<usize>,
}

/// Evaluates a design: for every test snapshot, simulate a measurement with
/// a per-snapshot derived seed, reconstruct, and record the relative L2
/// error against the truth. Zero-norm snapshots are skipped and reported.
pub fn evaluate(
    model: &ReducedModel,
    inst: &ProblemInstance,
    sel: &Selection,
    test: &DMatrix<f64>,
    opts: &EvalOptions,
) -> Result<EvalSummary> {
    if test.ncols() == 0 {
        return Err(Error::invalid("test set has no snapshots"));
    }
    if test.nrows() != model.num_locations() {
        return Err(Error::invalid(format!(
            "test snapshots have {} rows but the model expects {}",
            test.nrows(),
            model.num_locations()
        )));
    }
    if inst.num_candidates() != model.num_candidates() || inst.state_dim() != model.state_dim() {
        return Err(Error::invalid(
            "problem instance shape does not match the reduced model",
        ));
    }
    sel.check_range(inst.num_candidates())?;

    let sigmas = if opts.noise_free {
        (0.0, 0.0)
    } else {
        (inst.cheap().sigma(), inst.exp().sigma())
    };

    let per_column: Vec<Option<f64>> = (0..test.ncols())
        .into_par_iter()
        .map(|j| -> Result<Option<f64>> {
            let truth = DVector::from_column_slice(test.column(j).as_slice());
            let norm = truth.norm();
            if norm == 0.0 {
                return Ok(None);
            }
            let snapshot_seed = seed::derive_indexed(opts.seed, "eval-noise", j as u64);
            let y = simulate_measurement(&truth, &model.cand_idx, sigmas, sel, snapshot_seed)?;
            let (estimate, _) = reconstruct(model, inst.cheap(), inst.exp(), &y)?;
            Ok(Some((&truth - &estimate).norm() / norm))
        })
        .collect::<Result<_>>()?;

    let mut per_snapshot_rel_err = Vec::with_capacity(test.ncols());
    let mut skipped = Vec::new();
    for (j, entry) in per_column.into_iter().enumerate() {
        match entry {
            Some(err) => per_snapshot_rel_err.push(err),
            None => skipped.push(j),
        }
    }
    if per_snapshot_rel_err.is_empty() {
        return Err(Error::degenerate("every test snapshot has zero norm"));
    }
    let mean_rel_err =
        per_snapshot_rel_err.iter().sum::<f64>() / per_snapshot_rel_err.len() as f64;

    Ok(EvalSummary {
        per_snapshot_rel_err,
        mean_rel_err,
        phi_d: phi_d(inst, sel)?,
        allocation: Allocation {
            k_cheap: sel.cheap().len(),
            k_exp: sel.exp().len(),
        },
        skipped,
    })
}

/// Random-baseline sampling plan for [`compare_designs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomBaselineSpec {
    /// Random designs drawn per budget-feasible allocation.
    pub samples_per_allocation: usize,
    pub seed: u64,
}

impl Default for RandomBaselineSpec {
    fn default() -> Self {
        RandomBaselineSpec {
            samples_per_allocation: 1000,
            seed: 0,
        }
    }
}

/// One named design in a comparison table. `mean_rel_err` is filled in by
/// callers that also ran an evaluation; [`compare_designs`] leaves it empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub k_cheap: usize,
    pub k_exp: usize,
    pub spend: f64,
    pub phi_d: f64,
    pub mean_rel_err: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Designs side by side with the `Phi_D` distribution of random designs.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// `Phi_D` of every random draw, grouped by allocation in pruned order.
    pub random_phi_d: Vec<f64>,
    pub histogram: Vec<HistogramBin>,
}

/// Puts the given designs on a common scale: recomputes each design's
/// `Phi_D` on `inst`, then samples random designs per pruned allocation and
/// bins their objective values.
pub fn compare_designs(
    inst: &ProblemInstance,
    designs: &[DesignResult],
    spec: &RandomBaselineSpec,
) -> Result<Comparison> {
    let m = inst.num_candidates();
    let mut rows = Vec::with_capacity(designs.len());
    for d in designs {
        d.selection.check_range(m)?;
        rows.push(ComparisonRow {
            name: d.algorithm.clone(),
            k_cheap: d.selection.cheap().len(),
            k_exp: d.selection.exp().len(),
            spend: d.selection.spend(inst.cheap(), inst.exp()),
            phi_d: phi_d(inst, &d.selection)?,
            mean_rel_err: None,
        });
    }

    let mut random_phi_d = Vec::new();
    if spec.samples_per_allocation > 0 && inst.budget() > 0.0 {
        let pruned = prune_allocations(inst.cheap().cost(), inst.exp().cost(), inst.budget())?;
        let mut allocs: Vec<Allocation> = Vec::new();
        for a in &pruned.allocations {
            if a.k_exp > m {
                continue;
            }
            allocs.push(Allocation {
                k_cheap: a.k_cheap.min(m - a.k_exp),
                k_exp: a.k_exp,
            });
        }
        let n = spec.samples_per_allocation;
        random_phi_d = (0..allocs.len() * n)
            .into_par_iter()
            .map(|flat| -> Result<f64> {
                let alloc = &allocs[flat / n];
                let draw_seed = seed::derive_indexed(spec.seed, "random-design", flat as u64);
                let sel = baselines::random_design(alloc, m, draw_seed)?;
                phi_d(inst, &sel)
            })
            .collect::<Result<_>>()?;
    }

    Ok(Comparison {
        rows,
        histogram: histogram(&random_phi_d),
        random_phi_d,
    })
}

fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // widen a degenerate range so every sample still lands in a bin
    let (lo, hi) = if max > min {
        (min, max)
    } else {
        (min - 0.5, min + 0.5)
    };
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[b].count += 1;
    }
    bins
}
