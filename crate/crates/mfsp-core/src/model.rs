//! Placement instance and the Bayesian D-optimality objective.
//!
//! A placement instance works with the whitened forward maps
//!
//! ```text
//!     A_j = sigma_j^{-1} * Sigma_pr^{1/2} * Psi^T      (ell x M, j in {cheap, expensive})
//! ```
//!
//! so that for a selection `S` the objective becomes
//!
//! ```text
//!     Phi_D(S) = log det B(S),
//!     B(S) = I + sum_{i in S_ch} a_i a_i^T + sum_{i in S_ex} a_i a_i^T,
//! ```
//!
//! the expected information gain of the posterior over the prior. Adding a
//! sensor of fidelity `j` at location `i` changes the objective by
//! `log(1 + a_i^T B^{-1} a_i)` (matrix determinant lemma), which is what the
//! greedy selectors exploit.

use nalgebra::{Cholesky, DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative tolerance for the cross-fidelity consistency check
/// `sigma_ch * a_cheap == sigma_ex * a_exp`.
const CONSISTENCY_RTOL: f64 = 1e-12;

/// Sensor fidelity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fidelity {
    Cheap,
    Expensive,
}

impl Fidelity {
    pub fn as_str(self) -> &'static str {
        match self {
            Fidelity::Cheap => "cheap",
            Fidelity::Expensive => "expensive",
        }
    }

    pub fn other(self) -> Fidelity {
        match self {
            Fidelity::Cheap => Fidelity::Expensive,
            Fidelity::Expensive => Fidelity::Cheap,
        }
    }
}

impl std::fmt::Display for Fidelity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cheap" => Ok(Fidelity::Cheap),
            "expensive" => Ok(Fidelity::Expensive),
            other => Err(Error::invalid(format!("unknown fidelity `{other}`"))),
        }
    }
}

/// Cost and noise level of one sensor class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityClass {
    cost: f64,
    sigma: f64,
}

impl FidelityClass {
    pub fn new(cost: f64, sigma: f64) -> Result<Self> {
        if !cost.is_finite() || cost <= 0.0 {
            return Err(Error::invalid(format!("sensor cost must be finite and positive, got {cost}")));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::invalid(format!("noise level must be finite and positive, got {sigma}")));
        }
        Ok(FidelityClass { cost, sigma })
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// A multifidelity placement instance: whitened forward maps for both
/// fidelities, their cost/noise classes and the budget.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    a_cheap: DMatrix<f64>,
    a_exp: DMatrix<f64>,
    cheap: FidelityClass,
    exp: FidelityClass,
    budget: f64,
}

impl ProblemInstance {
    /// Builds and validates an instance. `a_cheap` and `a_exp` are the
    /// whitened `ell x M` forward maps; they must describe the same
    /// underlying map, i.e. `sigma_ch * a_cheap == sigma_ex * a_exp`
    /// elementwise up to roundoff.
    pub fn new(
        a_cheap: DMatrix<f64>,
        a_exp: DMatrix<f64>,
        cheap: FidelityClass,
        exp: FidelityClass,
        budget: f64,
    ) -> Result<Self> {
        if a_cheap.nrows() == 0 || a_cheap.ncols() == 0 {
            return Err(Error::degenerate("forward map has zero rows or columns"));
        }
        if a_cheap.shape() != a_exp.shape() {
            return Err(Error::invalid(format!(
                "fidelity map shapes differ: {:?} vs {:?}",
                a_cheap.shape(),
                a_exp.shape()
            )));
        }
        if a_cheap.iter().any(|v| !v.is_finite()) || a_exp.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("forward map contains non-finite entries"));
        }
        if cheap.cost >= exp.cost {
            return Err(Error::invalid(format!(
                "cheap cost must be strictly below expensive cost ({} vs {})",
                cheap.cost, exp.cost
            )));
        }
        if cheap.sigma <= exp.sigma {
            return Err(Error::invalid(format!(
                "cheap noise must be strictly above expensive noise ({} vs {})",
                cheap.sigma, exp.sigma
            )));
        }
        if !budget.is_finite() || budget < 0.0 {
            return Err(Error::invalid(format!("budget must be finite and nonnegative, got {budget}")));
        }
        for (x, y) in a_cheap.iter().zip(a_exp.iter()) {
            let lhs = x * cheap.sigma;
            let rhs = y * exp.sigma;
            let scale = lhs.abs().max(rhs.abs());
            if (lhs - rhs).abs() > CONSISTENCY_RTOL * scale {
                return Err(Error::invalid(
                    "fidelity maps are inconsistent: sigma_ch * a_cheap != sigma_ex * a_exp",
                ));
            }
        }
        Ok(ProblemInstance {
            a_cheap,
            a_exp,
            cheap,
            exp,
            budget,
        })
    }

    /// Reduced state dimension `ell`.
    pub fn state_dim(&self) -> usize {
        self.a_cheap.nrows()
    }

    /// Number of candidate locations `M`.
    pub fn num_candidates(&self) -> usize {
        self.a_cheap.ncols()
    }

    pub fn a(&self, f: Fidelity) -> &DMatrix<f64> {
        match f {
            Fidelity::Cheap => &self.a_cheap,
            Fidelity::Expensive => &self.a_exp,
        }
    }

    pub fn class(&self, f: Fidelity) -> &FidelityClass {
        match f {
            Fidelity::Cheap => &self.cheap,
            Fidelity::Expensive => &self.exp,
        }
    }

    pub fn cheap(&self) -> &FidelityClass {
        &self.cheap
    }

    pub fn exp(&self) -> &FidelityClass {
        &self.exp
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Same instance with a different budget.
    pub fn with_budget(&self, budget: f64) -> Result<Self> {
        ProblemInstance::new(
            self.a_cheap.clone(),
            self.a_exp.clone(),
            self.cheap,
            self.exp,
            budget,
        )
    }

    /// Hex digest identifying the instance (maps, classes, budget). Design
    /// files carry it so a design is never evaluated against the wrong
    /// instance.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"MFSP1");
        h.update((self.state_dim() as u64).to_le_bytes());
        h.update((self.num_candidates() as u64).to_le_bytes());
        for v in [
            self.cheap.cost,
            self.cheap.sigma,
            self.exp.cost,
            self.exp.sigma,
            self.budget,
        ] {
            h.update(v.to_le_bytes());
        }
        for v in self.a_cheap.iter().chain(self.a_exp.iter()) {
            h.update(v.to_le_bytes());
        }
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// A placement: disjoint sorted index sets per fidelity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    cheap: Vec<usize>,
    exp: Vec<usize>,
}

impl Selection {
    pub fn empty() -> Self {
        Selection::default()
    }

    /// Builds a selection from index lists (any order), rejecting duplicates
    /// within a fidelity and overlaps across fidelities.
    pub fn new(mut cheap: Vec<usize>, mut exp: Vec<usize>) -> Result<Self> {
        cheap.sort_unstable();
        exp.sort_unstable();
        for w in cheap.windows(2).chain(exp.windows(2)) {
            if w[0] == w[1] {
                return Err(Error::invalid(format!("duplicate location {}", w[0])));
            }
        }
        for i in &cheap {
            if exp.binary_search(i).is_ok() {
                return Err(Error::invalid(format!(
                    "location {i} appears in both fidelities"
                )));
            }
        }
        Ok(Selection { cheap, exp })
    }

    pub fn cheap(&self) -> &[usize] {
        &self.cheap
    }

    pub fn exp(&self) -> &[usize] {
        &self.exp
    }

    pub fn indices(&self, f: Fidelity) -> &[usize] {
        match f {
            Fidelity::Cheap => &self.cheap,
            Fidelity::Expensive => &self.exp,
        }
    }

    pub fn len(&self) -> usize {
        self.cheap.len() + self.exp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cheap.is_empty() && self.exp.is_empty()
    }

    pub fn contains(&self, location: usize) -> bool {
        self.cheap.binary_search(&location).is_ok() || self.exp.binary_search(&location).is_ok()
    }

    /// Copy of the selection with one more sensor.
    pub fn with(&self, f: Fidelity, location: usize) -> Result<Self> {
        if self.contains(location) {
            return Err(Error::invalid(format!("location {location} already occupied")));
        }
        let mut out = self.clone();
        let v = match f {
            Fidelity::Cheap => &mut out.cheap,
            Fidelity::Expensive => &mut out.exp,
        };
        let pos = v.partition_point(|&x| x < location);
        v.insert(pos, location);
        Ok(out)
    }

    /// Total cost of the selection under the given classes.
    pub fn spend(&self, cheap: &FidelityClass, exp: &FidelityClass) -> f64 {
        self.cheap.len() as f64 * cheap.cost() + self.exp.len() as f64 * exp.cost()
    }

    pub(crate) fn check_range(&self, num_candidates: usize) -> Result<()> {
        for &i in self.cheap.iter().chain(self.exp.iter()) {
            if i >= num_candidates {
                return Err(Error::invalid(format!(
                    "location {i} out of range (M = {num_candidates})"
                )));
            }
        }
        Ok(())
    }
}

/// Posterior mean and covariance in reduced coordinates.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Information matrix `B(S) = I + sum a_i a_i^T` for a selection.
pub(crate) fn information_matrix(inst: &ProblemInstance, sel: &Selection) -> DMatrix<f64> {
    let ell = inst.state_dim();
    let mut b = DMatrix::identity(ell, ell);
    for f in [Fidelity::Cheap, Fidelity::Expensive] {
        let a = inst.a(f);
        for &i in sel.indices(f) {
            let col = a.column(i);
            b.ger(1.0, &col, &col, 1.0);
        }
    }
    b
}

pub(crate) fn spd_log_det(m: DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::breakdown("information matrix lost positive definiteness"))?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..n {
        acc += l[(i, i)].ln();
    }
    Ok(2.0 * acc)
}

/// D-optimality objective `Phi_D(S) = log det B(S)`.
///
/// The empty selection scores exactly zero; adding sensors can only increase
/// the value.
pub fn phi_d(inst: &ProblemInstance, sel: &Selection) -> Result<f64> {
    sel.check_range(inst.num_candidates())?;
    if sel.is_empty() {
        return Ok(0.0);
    }
    spd_log_det(information_matrix(inst, sel))
}

/// Marginal objective gain `log(1 + a^T B^{-1} a)` of one added sensor.
///
/// `b_inv_col` must equal `B^{-1} a_col` for the current information matrix;
/// the caller owns that invariant. The inner product must stay above `-1`
/// (it is nonnegative in exact arithmetic) or the update has broken down.
pub fn marginal_gain(a_col: &DVector<f64>, b_inv_col: &DVector<f64>) -> Result<f64> {
    if a_col.len() != b_inv_col.len() {
        return Err(Error::invalid(format!(
            "column length mismatch: {} vs {}",
            a_col.len(),
            b_inv_col.len()
        )));
    }
    let g = a_col.dot(b_inv_col);
    if !g.is_finite() || g <= -1.0 {
        return Err(Error::breakdown(format!(
            "marginal gain argument {g} outside log1p domain"
        )));
    }
    Ok(g.ln_1p())
}

/// Gaussian posterior for measurements `y` taken at `sel`.
///
/// `psi` is the `M x ell` candidate-restricted basis, `prior_var` the
/// diagonal prior covariance. `y` stacks the cheap block then the expensive
/// block, each in ascending location order. With no sensors the prior is
/// returned unchanged.
pub fn posterior(
    psi: &DMatrix<f64>,
    prior_var: &DVector<f64>,
    cheap: &FidelityClass,
    exp: &FidelityClass,
    sel: &Selection,
    y: &DVector<f64>,
) -> Result<PosteriorSummary> {
    let (m, ell) = psi.shape();
    if ell == 0 || m == 0 {
        return Err(Error::degenerate("empty basis"));
    }
    if prior_var.len() != ell {
        return Err(Error::invalid(format!(
            "prior variance length {} does not match state dimension {ell}",
            prior_var.len()
        )));
    }
    if prior_var.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::invalid("prior variances must be finite and positive"));
    }
    if psi.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("basis contains non-finite entries"));
    }
    sel.check_range(m)?;
    if y.len() != sel.len() {
        return Err(Error::invalid(format!(
            "measurement length {} does not match sensor count {}",
            y.len(),
            sel.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("measurement contains non-finite entries"));
    }

    let mut g = DMatrix::zeros(ell, ell);
    for i in 0..ell {
        g[(i, i)] = 1.0 / prior_var[i];
    }
    let mut rhs = DVector::zeros(ell);
    let mut k = 0;
    for (idx_set, sigma) in [(sel.cheap(), cheap.sigma()), (sel.exp(), exp.sigma())] {
        let w = 1.0 / (sigma * sigma);
        for &i in idx_set {
            let row = psi.row(i).transpose();
            g.ger(w, &row, &row, 1.0);
            rhs.axpy(w * y[k], &row, 1.0);
            k += 1;
        }
    }

    let chol = Cholesky::new(g)
        .ok_or_else(|| Error::breakdown("posterior precision lost positive definiteness"))?;
    let mean = chol.solve(&rhs);
    let mut cov = chol.inverse();
    // enforce exact symmetry lost to roundoff
    for i in 0..ell {
        for j in (i + 1)..ell {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    Ok(PosteriorSummary { mean, cov })
}
