//! Plain key=value run configuration. Blank lines and `#` comments are
//! skipped; unknown or duplicate keys are parse errors so typos fail loudly.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Pipeline parameters with their documented defaults. Fields without a
/// sensible default stay `None` until the file or the command line provides
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lambda: f64,
    pub energy: f64,
    pub train_frac: f64,
    pub cost_cheap: Option<f64>,
    pub cost_exp: Option<f64>,
    pub sigma_cheap: Option<f64>,
    pub sigma_exp: Option<f64>,
    pub budget: Option<f64>,
    pub algorithm: Option<String>,
    pub seed: u64,
    pub max_iters: usize,
    pub center: bool,
    pub candidate_mask: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda: 0.01,
            energy: 0.99,
            train_frac: 0.70,
            cost_cheap: None,
            cost_exp: None,
            sigma_cheap: None,
            sigma_exp: None,
            budget: None,
            algorithm: None,
            seed: 0,
            max_iters: 20,
            center: true,
            candidate_mask: None,
        }
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string())
}

pub fn parse_config(text: &str, label: &str) -> Result<RunConfig> {
    let err = |line: usize, msg: String| Error::Parse {
        path: label.to_string(),
        line,
        msg,
    };
    let parse_f64 = |line: usize, key: &str, val: &str| -> Result<f64> {
        let v: f64 = val
            .parse()
            .map_err(|_| err(line, format!("{key} expects a number, got {val:?}")))?;
        if !v.is_finite() {
            return Err(err(line, format!("{key} must be finite, got {val:?}")));
        }
        Ok(v)
    };

    let mut cfg = RunConfig::default();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(err(lineno, format!("expected key=value, got {line:?}")));
        };
        let key = k.trim();
        let val = v.trim();
        if !seen.insert(key.to_string()) {
            return Err(err(lineno, format!("duplicate key {key:?}")));
        }
        match key {
            "lambda" => cfg.lambda = parse_f64(lineno, key, val)?,
            "energy" => cfg.energy = parse_f64(lineno, key, val)?,
            "train_frac" => cfg.train_frac = parse_f64(lineno, key, val)?,
            "cost_cheap" => cfg.cost_cheap = Some(parse_f64(lineno, key, val)?),
            "cost_exp" => cfg.cost_exp = Some(parse_f64(lineno, key, val)?),
            "sigma_cheap" => cfg.sigma_cheap = Some(parse_f64(lineno, key, val)?),
            "sigma_exp" => cfg.sigma_exp = Some(parse_f64(lineno, key, val)?),
            "budget" => cfg.budget = Some(parse_f64(lineno, key, val)?),
            "algorithm" => cfg.algorithm = Some(val.to_string()),
            "seed" => {
                cfg.seed = val
                    .parse()
                    .map_err(|_| err(lineno, format!("seed expects an unsigned integer, got {val:?}")))?
            }
            "max_iters" => {
                cfg.max_iters = val
                    .parse()
                    .map_err(|_| err(lineno, format!("max_iters expects an unsigned integer, got {val:?}")))?
            }
            "center" => {
                cfg.center = match val {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(err(lineno, format!("center expects true/false, got {val:?}"))),
                }
            }
            "candidate_mask" => cfg.candidate_mask = Some(PathBuf::from(val)),
            _ => return Err(err(lineno, format!("unknown key {key:?}"))),
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_the_documented_defaults() {
        let cfg = parse_config("", "inline").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.lambda, 0.01);
        assert_eq!(cfg.energy, 0.99);
        assert_eq!(cfg.train_frac, 0.70);
        assert_eq!(cfg.max_iters, 20);
        assert_eq!(cfg.seed, 0);
        assert!(cfg.center);
        assert!(cfg.budget.is_none());
    }

    #[test]
    fn full_file_parses_with_comments_and_blanks() {
        let text = "\
# sensor placement run
lambda = 0.02
energy=0.95

cost_cheap = 1
cost_exp = 4
sigma_cheap = 0.02
sigma_exp = 0.01
budget = 100
algorithm = iterative
seed = 7
max_iters = 5
center = false
train_frac = 0.8
candidate_mask = mask.csv
";
        let cfg = parse_config(text, "inline").unwrap();
        assert_eq!(cfg.lambda, 0.02);
        assert_eq!(cfg.energy, 0.95);
        assert_eq!(cfg.cost_cheap, Some(1.0));
        assert_eq!(cfg.cost_exp, Some(4.0));
        assert_eq!(cfg.sigma_cheap, Some(0.02));
        assert_eq!(cfg.sigma_exp, Some(0.01));
        assert_eq!(cfg.budget, Some(100.0));
        assert_eq!(cfg.algorithm.as_deref(), Some("iterative"));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.max_iters, 5);
        assert!(!cfg.center);
        assert_eq!(cfg.train_frac, 0.8);
        assert_eq!(cfg.candidate_mask, Some(PathBuf::from("mask.csv")));
    }

    #[test]
    fn unknown_duplicate_and_malformed_keys_carry_line_numbers() {
        match parse_config("lambda = 0.01\nbogus = 3\n", "inline") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"));
            }
            other => panic!("unexpected: {other:?}"),
        }
        match parse_config("seed = 1\nseed = 2\n", "inline") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected: {other:?}"),
        }
        match parse_config("just a line\n", "inline") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected: {other:?}"),
        }
        assert!(parse_config("lambda = abc", "inline").is_err());
        assert!(parse_config("budget = inf", "inline").is_err());
        assert!(parse_config("center = yes", "inline").is_err());
        assert!(parse_config("seed = -1", "inline").is_err());
    }
}
