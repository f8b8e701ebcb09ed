//! Reduced-model persistence: a directory holding the basis and spectrum as
//! MFSM files plus a small JSON meta file. The candidate restriction and the
//! prior variances are rebuilt on load (both are deterministic functions of
//! the stored pieces), and the result must pass the full model validation.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::matrix::{read_mfsm, write_mfsm};
use crate::reduced::{prior_covariance, restrict_to_candidates, ReducedModel};

const PHI_FILE: &str = "phi.mfsm";
const SING_VALS_FILE: &str = "sing_vals.mfsm";
const MEAN_FILE: &str = "mean.mfsm";
const META_FILE: &str = "meta.json";

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    lambda: f64,
    snapshot_count: usize,
    cand_idx: Vec<usize>,
    centered: bool,
}

pub fn save_model(dir: &Path, model: &ReducedModel) -> Result<()> {
    model.validate()?;
    std::fs::create_dir_all(dir)?;
    write_mfsm(&dir.join(PHI_FILE), &model.phi)?;
    let sv = DMatrix::from_column_slice(model.sing_vals.len(), 1, model.sing_vals.as_slice());
    write_mfsm(&dir.join(SING_VALS_FILE), &sv)?;
    if let Some(mean) = &model.mean {
        let m = DMatrix::from_column_slice(mean.len(), 1, mean.as_slice());
        write_mfsm(&dir.join(MEAN_FILE), &m)?;
    }
    let meta = ModelMeta {
        lambda: model.lambda,
        snapshot_count: model.snapshot_count,
        cand_idx: model.cand_idx.clone(),
        centered: model.mean.is_some(),
    };
    let mut text = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::data(format!("meta serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(dir.join(META_FILE), text)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<ReducedModel> {
    let meta_path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&meta_path)?;
    let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: meta_path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;

    let phi = read_mfsm(&dir.join(PHI_FILE))?;
    let sv = read_mfsm(&dir.join(SING_VALS_FILE))?;
    if sv.ncols() != 1 {
        return Err(Error::data(format!(
            "{}: expected a single column, got {}",
            dir.join(SING_VALS_FILE).display(),
            sv.ncols()
        )));
    }
    let sing_vals = DVector::from_column_slice(sv.as_slice());

    let mean = if meta.centered {
        let m = read_mfsm(&dir.join(MEAN_FILE))?;
        if m.ncols() != 1 {
            return Err(Error::data(format!(
                "{}: expected a single column, got {}",
                dir.join(MEAN_FILE).display(),
                m.ncols()
            )));
        }
        Some(DVector::from_column_slice(m.as_slice()))
    } else {
        None
    };

    let prior_var = prior_covariance(&sing_vals, meta.lambda, meta.snapshot_count)?;
    let psi = restrict_to_candidates(&phi, &meta.cand_idx)?;
    let model = ReducedModel {
        phi,
        sing_vals,
        prior_var,
        psi,
        cand_idx: meta.cand_idx,
        lambda: meta.lambda,
        snapshot_count: meta.snapshot_count,
        mean,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduced::{build_model, BasisOptions, SnapshotMatrix};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn model(center: bool, cand: Option<Vec<usize>>) -> ReducedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = DMatrix::from_fn(8, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let opts = BasisOptions {
            center,
            ..BasisOptions::default()
        };
        build_model(SnapshotMatrix::new(data).unwrap(), &opts, 0.01, cand).unwrap()
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        for (center, cand) in [(true, None), (false, Some(vec![0, 2, 3, 7]))] {
            let dir = tempfile::tempdir().unwrap();
            let m = model(center, cand);
            save_model(dir.path(), &m).unwrap();
            let back = load_model(dir.path()).unwrap();
            assert_eq!(m.phi, back.phi);
            assert_eq!(m.sing_vals, back.sing_vals);
            assert_eq!(m.prior_var, back.prior_var);
            assert_eq!(m.psi, back.psi);
            assert_eq!(m.cand_idx, back.cand_idx);
            assert_eq!(m.lambda, back.lambda);
            assert_eq!(m.snapshot_count, back.snapshot_count);
            assert_eq!(m.mean, back.mean);
        }
    }

    #[test]
    fn tampered_stores_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let m = model(true, None);
        save_model(dir.path(), &m).unwrap();

        // corrupt the basis so it is no longer orthonormal
        let mut phi = m.phi.clone();
        phi[(0, 0)] += 0.5;
        write_mfsm(&dir.path().join(PHI_FILE), &phi).unwrap();
        assert!(load_model(dir.path()).is_err());
    }

    #[test]
    fn missing_pieces_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_model(dir.path()).is_err());
    }
}
