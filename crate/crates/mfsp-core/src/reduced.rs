//! Snapshot-based reduced model: centering, thin SVD, energy truncation,
//! POD prior and restriction to candidate locations.
//!
//! Training snapshots `Y` (N locations x p snapshots) yield `Y = U S V^T`.
//! The basis keeps the leading `ell` left singular vectors, the prior puts
//! variance `lambda^2 s_i^2 / (p-1)` on mode `i`, and `psi` gathers the basis
//! rows at the candidate sensor locations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{FidelityClass, ProblemInstance};

/// How cumulative energy is accounted during truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyRule {
    /// Squared singular values (Frobenius energy). The usual POD convention.
    #[default]
    Squared,
    /// Plain singular-value cumsum.
    Plain,
}

impl std::str::FromStr for EnergyRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(EnergyRule::Squared),
            "plain" => Ok(EnergyRule::Plain),
            other => Err(Error::invalid(format!(
                "unknown energy rule `{other}` (expected `squared` or `plain`)"
            ))),
        }
    }
}

/// Basis construction switches.
#[derive(Debug, Clone, Copy)]
pub struct BasisOptions {
    pub energy: f64,
    pub center: bool,
    pub max_modes: Option<usize>,
    pub rule: EnergyRule,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions {
            energy: 0.99,
            center: true,
            max_modes: None,
            rule: EnergyRule::Squared,
        }
    }
}

/// Snapshot data, one column per snapshot.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    mean: Option<DVector<f64>>,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::degenerate("snapshot matrix has no rows"));
        }
        if data.ncols() < 2 {
            return Err(Error::degenerate(format!(
                "need at least 2 snapshots, got {}",
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("snapshot matrix contains non-finite entries"));
        }
        Ok(SnapshotMatrix { data, mean: None })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Column mean stored by [`SnapshotMatrix::centered`], if any.
    pub fn mean(&self) -> Option<&DVector<f64>> {
        self.mean.as_ref()
    }

    pub fn num_locations(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.data.ncols()
    }

    /// Subtracts the column mean and stores it. A no-op on already centered
    /// data.
    pub fn centered(self) -> SnapshotMatrix {
        if self.mean.is_some() {
            return self;
        }
        let p = self.data.ncols() as f64;
        let mean = DVector::from_fn(self.data.nrows(), |r, _| self.data.row(r).sum() / p);
        let mut data = self.data;
        for mut col in data.column_iter_mut() {
            col -= &mean;
        }
        SnapshotMatrix {
            data,
            mean: Some(mean),
        }
    }
}

/// Splits snapshot columns chronologically: the first
/// `floor(train_frac * p)` columns (at least 2) train the basis, the rest
/// are held out.
pub fn chronological_split(data: &DMatrix<f64>, train_frac: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(train_frac > 0.0 && train_frac <= 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1], got {train_frac}"
        )));
    }
    let p = data.ncols();
    let train = ((train_frac * p as f64).floor() as usize).clamp(2, p);
    if train < 2 {
        return Err(Error::degenerate("too few snapshots to split"));
    }
    Ok((
        data.columns(0, train).into_owned(),
        data.columns(train, p - train).into_owned(),
    ))
}

/// Thin SVD with energy truncation.
///
/// Keeps the smallest `ell` with cumulative energy (per `rule`) at least
/// `energy`, further capped by `max_modes` and by numerical rank.
pub fn build_reduced_basis(
    snapshots: &SnapshotMatrix,
    energy: f64,
    center: bool,
    max_modes: Option<usize>,
    rule: EnergyRule,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::invalid(format!(
            "energy threshold must lie in (0, 1], got {energy}"
        )));
    }
    if max_modes == Some(0) {
        return Err(Error::invalid("max_modes must be at least 1"));
    }
    let work;
    let data = if center {
        work = snapshots.clone().centered();
        work.data()
    } else {
        snapshots.data()
    };

    let (n, p) = data.shape();
    let svd = data.clone().svd(true, false);
    let s = &svd.singular_values;
    if s[0] <= 0.0 {
        return Err(Error::degenerate("snapshot matrix is identically zero"));
    }
    let cutoff = s[0] * n.max(p) as f64 * f64::EPSILON;
    let rank = s.iter().take_while(|v| **v > cutoff).count();
    debug_assert!(rank >= 1);

    let weight = |v: f64| match rule {
        EnergyRule::Squared => v * v,
        EnergyRule::Plain => v,
    };
    let total: f64 = (0..rank).map(|i| weight(s[i])).sum();
    let mut ell = rank;
    let mut acc = 0.0;
    for k in 0..rank {
        acc += weight(s[k]);
        if acc / total >= energy {
            ell = k + 1;
            break;
        }
    }
    if let Some(cap) = max_modes {
        ell = ell.min(cap);
    }

    let u = svd.u.expect("u requested");
    let phi = u.columns(0, ell).into_owned();
    let sing_vals = DVector::from_fn(ell, |i, _| s[i]);
    Ok((phi, sing_vals))
}

/// POD prior variances `lambda^2 s_i^2 / (p - 1)`.
pub fn prior_covariance(sing_vals: &DVector<f64>, lambda: f64, p: usize) -> Result<DVector<f64>> {
    if p < 2 {
        return Err(Error::invalid(format!("need p >= 2 snapshots, got {p}")));
    }
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid(format!("lambda must be finite and positive, got {lambda}")));
    }
    if sing_vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::invalid("singular values must be finite and positive"));
    }
    let scale = lambda * lambda / (p - 1) as f64;
    Ok(sing_vals.map(|s| scale * s * s))
}

/// Gathers basis rows at candidate locations: `psi[r, :] = phi[cand_idx[r], :]`.
pub fn restrict_to_candidates(phi: &DMatrix<f64>, cand_idx: &[usize]) -> Result<DMatrix<f64>> {
    if cand_idx.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    for w in cand_idx.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::invalid("candidate indices must be strictly increasing"));
        }
    }
    let n = phi.nrows();
    if *cand_idx.last().unwrap() >= n {
        return Err(Error::invalid(format!(
            "candidate index {} out of range (N = {n})",
            cand_idx.last().unwrap()
        )));
    }
    let mut psi = DMatrix::zeros(cand_idx.len(), phi.ncols());
    for (r, &i) in cand_idx.iter().enumerate() {
        psi.row_mut(r).copy_from(&phi.row(i));
    }
    Ok(psi)
}

/// Complete reduced model, ready to assemble placement instances.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub phi: DMatrix<f64>,
    pub sing_vals: DVector<f64>,
    pub prior_var: DVector<f64>,
    pub psi: DMatrix<f64>,
    pub cand_idx: Vec<usize>,
    pub lambda: f64,
    /// Number of training snapshots the prior was derived from.
    pub snapshot_count: usize,
    /// Column mean of the training data when centering was applied.
    pub mean: Option<DVector<f64>>,
}

impl ReducedModel {
    pub fn state_dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn num_locations(&self) -> usize {
        self.phi.nrows()
    }

    pub fn num_candidates(&self) -> usize {
        self.cand_idx.len()
    }

    /// Checks the structural invariants (orthonormal basis, positive
    /// non-increasing spectrum, prior formula, exact psi gather).
    pub fn validate(&self) -> Result<()> {
        let (n, ell) = self.phi.shape();
        if ell == 0 {
            return Err(Error::degenerate("model has no modes"));
        }
        if self.sing_vals.len() != ell || self.prior_var.len() != ell {
            return Err(Error::data("spectrum length does not match basis width"));
        }
        let gram = self.phi.tr_mul(&self.phi);
        for i in 0..ell {
            for j in 0..ell {
                let want = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - want).abs() > 1e-10 {
                    return Err(Error::data("basis columns are not orthonormal"));
                }
            }
        }
        for i in 0..ell {
            let s = self.sing_vals[i];
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::data("singular values must be positive"));
            }
            if i > 0 && s > self.sing_vals[i - 1] {
                return Err(Error::data("singular values must be non-increasing"));
            }
        }
        if self.snapshot_count < 2 {
            return Err(Error::data("model must record at least 2 training snapshots"));
        }
        let scale = self.lambda * self.lambda / (self.snapshot_count - 1) as f64;
        for i in 0..ell {
            let want = scale * self.sing_vals[i] * self.sing_vals[i];
            if (self.prior_var[i] - want).abs() > 1e-12 * want {
                return Err(Error::data("prior variances do not match the POD prior formula"));
            }
        }
        if self.cand_idx.is_empty() {
            return Err(Error::degenerate("model has no candidate locations"));
        }
        for w in self.cand_idx.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::data("candidate indices must be strictly increasing"));
            }
        }
        if *self.cand_idx.last().unwrap() >= n {
            return Err(Error::data("candidate index out of range"));
        }
        if self.psi.shape() != (self.cand_idx.len(), ell) {
            return Err(Error::data("psi shape does not match candidate set"));
        }
        for (r, &i) in self.cand_idx.iter().enumerate() {
            for c in 0..ell {
                if self.psi[(r, c)] != self.phi[(i, c)] {
                    return Err(Error::data("psi rows must equal basis rows at candidates"));
                }
            }
        }
        if let Some(mean) = &self.mean {
            if mean.len() != n {
                return Err(Error::data("stored mean length does not match location count"));
            }
        }
        Ok(())
    }
}

/// Builds the full reduced model from raw snapshots.
///
/// `cand_idx` defaults to every location.
pub fn build_model(
    snapshots: SnapshotMatrix,
    opts: &BasisOptions,
    lambda: f64,
    cand_idx: Option<Vec<usize>>,
) -> Result<ReducedModel> {
    let snaps = if opts.center {
        snapshots.centered()
    } else {
        snapshots
    };
    let p = snaps.num_snapshots();
    let (phi, sing_vals) = build_reduced_basis(&snaps, opts.energy, false, opts.max_modes, opts.rule)?;
    let prior_var = prior_covariance(&sing_vals, lambda, p)?;
    let cand_idx = cand_idx.unwrap_or_else(|| (0..snaps.num_locations()).collect());
    let psi = restrict_to_candidates(&phi, &cand_idx)?;
    let model = ReducedModel {
        phi,
        sing_vals,
        prior_var,
        psi,
        cand_idx,
        lambda,
        snapshot_count: p,
        mean: snaps.mean().cloned(),
    };
    model.validate()?;
    Ok(model)
}

/// Whitened forward maps `A_j = sigma_j^{-1} Sigma_pr^{1/2} Psi^T` for both
/// fidelities, bundled into a placement instance.
pub fn assemble_instance(
    model: &ReducedModel,
    cheap: FidelityClass,
    exp: FidelityClass,
    budget: f64,
) -> Result<ProblemInstance> {
    let (m, ell) = model.psi.shape();
    let mut g = DMatrix::zeros(ell, m);
    for r in 0..ell {
        let w = model.prior_var[r].sqrt();
        for c in 0..m {
            g[(r, c)] = w * model.psi[(c, r)];
        }
    }
    let a_cheap = &g / cheap.sigma();
    let a_exp = &g / exp.sigma();
    ProblemInstance::new(a_cheap, a_exp, cheap, exp, budget)
}
