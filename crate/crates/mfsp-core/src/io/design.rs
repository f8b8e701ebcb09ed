//! JSON design files. A design records which algorithm chose which
//! locations under which budget, plus a fingerprint of the instance it was
//! computed on so later evaluation refuses mismatched models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greedy::{DesignResult, IterativeMeta, TraceStep};
use crate::model::{Fidelity, ProblemInstance, Selection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub fidelity: String,
    pub location: usize,
    pub gain_per_cost: f64,
    pub phi_d: f64,
}

impl From<&TraceStep> for TraceEntry {
    fn from(s: &TraceStep) -> Self {
        TraceEntry {
            step: s.step,
            fidelity: s.fidelity.as_str().to_string(),
            location: s.location,
            gain_per_cost: s.gain_per_cost,
            phi_d: s.phi_d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterativeMetaFile {
    pub candidate_count: usize,
    pub total_refinements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub algorithm: String,
    pub fingerprint: String,
    pub cheap_idx: Vec<usize>,
    pub exp_idx: Vec<usize>,
    #[serde(rename = "k_ch")]
    pub k_cheap: usize,
    pub k_exp: usize,
    pub spend: f64,
    pub budget: f64,
    pub phi_d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterative: Option<IterativeMetaFile>,
}

impl DesignFile {
    pub fn from_result(res: &DesignResult, inst: &ProblemInstance, include_trace: bool) -> Self {
        DesignFile {
            algorithm: res.algorithm.clone(),
            fingerprint: inst.fingerprint(),
            cheap_idx: res.selection.cheap().to_vec(),
            exp_idx: res.selection.exp().to_vec(),
            k_cheap: res.selection.cheap().len(),
            k_exp: res.selection.exp().len(),
            spend: res.spend,
            budget: res.budget,
            phi_d: res.phi_d,
            trace: (include_trace && !res.trace.is_empty())
                .then(|| res.trace.iter().map(TraceEntry::from).collect()),
            iterative: res.iterative.map(|m| IterativeMetaFile {
                candidate_count: m.candidate_count,
                total_refinements: m.total_refinements,
            }),
        }
    }

    /// Structural checks that do not need the instance: sorted disjoint
    /// indices, count fields consistent, spend within budget, finite reals.
    pub fn validate(&self) -> Result<()> {
        Selection::new(self.cheap_idx.clone(), self.exp_idx.clone())?;
        for w in [&self.cheap_idx, &self.exp_idx] {
            if w.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::data("design indices must be sorted ascending"));
            }
        }
        if self.k_cheap != self.cheap_idx.len() || self.k_exp != self.exp_idx.len() {
            return Err(Error::data("design count fields disagree with index lists"));
        }
        for (name, v) in [("spend", self.spend), ("budget", self.budget), ("phi_d", self.phi_d)] {
            if !v.is_finite() {
                return Err(Error::data(format!("design field {name} is not finite")));
            }
        }
        if self.spend > self.budget {
            return Err(Error::data(format!(
                "design spend {} exceeds budget {}",
                self.spend, self.budget
            )));
        }
        Ok(())
    }

    pub fn selection(&self) -> Result<Selection> {
        Selection::new(self.cheap_idx.clone(), self.exp_idx.clone())
    }

    /// Refuses to pair this design with an instance other than the one it
    /// was computed on.
    pub fn verify_fingerprint(&self, inst: &ProblemInstance) -> Result<()> {
        let actual = inst.fingerprint();
        if self.fingerprint != actual {
            return Err(Error::data(format!(
                "design fingerprint {} does not match instance {actual}",
                self.fingerprint
            )));
        }
        Ok(())
    }

    pub fn to_result(&self) -> Result<DesignResult> {
        let selection = self.selection()?;
        let mut trace = Vec::new();
        if let Some(entries) = &self.trace {
            for e in entries {
                trace.push(TraceStep {
                    step: e.step,
                    fidelity: e.fidelity.parse::<Fidelity>()?,
                    location: e.location,
                    gain_per_cost: e.gain_per_cost,
                    phi_d: e.phi_d,
                });
            }
        }
        Ok(DesignResult {
            algorithm: self.algorithm.clone(),
            selection,
            phi_d: self.phi_d,
            spend: self.spend,
            budget: self.budget,
            trace,
            iterative: self.iterative.map(|m| IterativeMeta {
                candidate_count: m.candidate_count,
                total_refinements: m.total_refinements,
            }),
        })
    }
}

pub fn write_design(path: &Path, design: &DesignFile) -> Result<()> {
    design.validate()?;
    let mut text = serde_json::to_string_pretty(design)
        .map_err(|e| Error::data(format!("design serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_design(path: &Path) -> Result<DesignFile> {
    let text = std::fs::read_to_string(path)?;
    let design: DesignFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    design.validate()?;
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::greedy_sm;
    use crate::model::FidelityClass;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn instance(seed: u64) -> ProblemInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(3, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        ProblemInstance::new(
            &g / 0.7,
            &g / 0.3,
            FidelityClass::new(1.0, 0.7).unwrap(),
            FidelityClass::new(2.0, 0.3).unwrap(),
            5.0,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_the_design_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.json");
        let inst = instance(1);
        let res = greedy_sm(&inst).unwrap();
        let design = DesignFile::from_result(&res, &inst, true);
        write_design(&path, &design).unwrap();
        let back = read_design(&path).unwrap();
        assert_eq!(design, back);
        assert_eq!(back.phi_d.to_bits(), res.phi_d.to_bits());
        let rebuilt = back.to_result().unwrap();
        assert_eq!(rebuilt.selection, res.selection);
        assert_eq!(rebuilt.trace.len(), res.trace.len());
    }

    #[test]
    fn rewriting_the_same_design_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let inst = instance(2);
        let res = greedy_sm(&inst).unwrap();
        let design = DesignFile::from_result(&res, &inst, true);
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        write_design(&a, &design).unwrap();
        write_design(&b, &design).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn fingerprint_guards_against_model_swaps() {
        let inst = instance(3);
        let other = instance(4);
        let design = DesignFile::from_result(&greedy_sm(&inst).unwrap(), &inst, false);
        assert!(design.verify_fingerprint(&inst).is_ok());
        assert!(matches!(
            design.verify_fingerprint(&other),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn validation_rejects_inconsistent_files() {
        let inst = instance(5);
        let good = DesignFile::from_result(&greedy_sm(&inst).unwrap(), &inst, false);

        let mut unsorted = good.clone();
        unsorted.cheap_idx = vec![3, 1];
        unsorted.k_cheap = 2;
        assert!(unsorted.validate().is_err());

        let mut overlap = good.clone();
        overlap.cheap_idx = vec![1];
        overlap.exp_idx = vec![1];
        overlap.k_cheap = 1;
        overlap.k_exp = 1;
        assert!(overlap.validate().is_err());

        let mut counts = good.clone();
        counts.k_cheap += 1;
        assert!(counts.validate().is_err());

        let mut overspend = good.clone();
        overspend.spend = overspend.budget + 1.0;
        assert!(overspend.validate().is_err());
    }

    #[test]
    fn parse_errors_carry_the_json_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{\n  \"algorithm\": 3,\n}").unwrap();
        match read_design(&path) {
            Err(Error::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
