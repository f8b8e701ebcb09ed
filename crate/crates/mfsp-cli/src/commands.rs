use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use mfsp_core::io::{
    load_matrix, load_model, read_config, read_design, save_model, write_csv_matrix, write_design,
    write_mfsm, DesignFile, MatrixFormat, RunConfig,
};
use mfsp_core::{
    assemble_instance, build_model, chronological_split, compare_designs, evaluate, exhaustive_search,
    greedy_naive, greedy_sm, iterative_select, phi_d, prune_allocations, random_design, reconstruct,
    seed as seedstream, simulate_measurement, Allocation, BasisOptions, Comparison, DesignResult,
    Error, EvalOptions, FidelityClass, ProblemInstance, RandomBaselineSpec, ReducedModel, Result,
    Selection, SnapshotMatrix,
};

use crate::{Cli, Cmd, FidelityParams};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => read_config(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);

    match cli.cmd {
        Cmd::Basis {
            data,
            format,
            lambda,
            energy,
            energy_rule,
            train_frac,
            center,
            max_modes,
            candidate_mask,
            out_model,
        } => cmd_basis(
            &cfg,
            &data,
            format.as_deref(),
            lambda,
            energy,
            &energy_rule,
            train_frac,
            center,
            max_modes,
            candidate_mask.or_else(|| cfg.candidate_mask.clone()),
            &out_model,
        ),
        Cmd::Design {
            model,
            fidelity,
            budget,
            algorithm,
            max_iters,
            k_cheap,
            k_exp,
            trace,
            out,
        } => cmd_design(
            &cfg, seed, &model, &fidelity, budget, algorithm, max_iters, k_cheap, k_exp, trace, &out,
        ),
        Cmd::Reconstruct {
            model,
            design,
            data,
            format,
            snapshot,
            fidelity,
            noise_free,
            out,
        } => cmd_reconstruct(
            &cfg,
            seed,
            &model,
            &design,
            &data,
            format.as_deref(),
            snapshot,
            &fidelity,
            noise_free,
            out.as_deref(),
        ),
        Cmd::Evaluate {
            model,
            design,
            data,
            format,
            train_frac,
            fidelity,
            noise_free,
            out,
        } => cmd_evaluate(
            &cfg,
            seed,
            &model,
            &design,
            &data,
            format.as_deref(),
            train_frac,
            &fidelity,
            noise_free,
            out.as_deref(),
        ),
        Cmd::Prune {
            cost_cheap,
            cost_exp,
            budget,
        } => {
            let c_ch = require("cost_cheap", cost_cheap, cfg.cost_cheap)?;
            let c_ex = require("cost_exp", cost_exp, cfg.cost_exp)?;
            let b = require("budget", budget, cfg.budget)?;
            let set = prune_allocations(c_ch, c_ex, b)?;
            println!("{} {} {}", set.feasible_count, set.allocations.len(), set.bound);
            Ok(())
        }
        Cmd::Compare {
            model,
            designs,
            fidelity,
            samples,
            data,
            format,
            train_frac,
            out_table,
            out_hist,
        } => cmd_compare(
            &cfg,
            seed,
            &model,
            &designs,
            &fidelity,
            samples,
            data.as_deref(),
            format.as_deref(),
            train_frac,
            out_table.as_deref(),
            out_hist.as_deref(),
        ),
        Cmd::Oracle {
            model,
            fidelity,
            budget,
            out,
        } => {
            let model = load_model(&model)?;
            let (cheap, exp) = classes(&fidelity, &cfg)?;
            let b = require("budget", budget, cfg.budget)?;
            let inst = assemble_instance(&model, cheap, exp, b)?;
            let res = exhaustive_search(&inst)?;
            write_design(&out, &DesignFile::from_result(&res, &inst, false))?;
            print_design_summary(&res);
            Ok(())
        }
    }
}

fn require(name: &str, flag: Option<f64>, from_config: Option<f64>) -> Result<f64> {
    flag.or(from_config).ok_or_else(|| {
        Error::InvalidInput(format!("{name} is required (flag --{} or config)", name.replace('_', "-")))
    })
}

fn classes(p: &FidelityParams, cfg: &RunConfig) -> Result<(FidelityClass, FidelityClass)> {
    let c_ch = require("cost_cheap", p.cost_cheap, cfg.cost_cheap)?;
    let c_ex = require("cost_exp", p.cost_exp, cfg.cost_exp)?;
    let s_ch = require("sigma_cheap", p.sigma_cheap, cfg.sigma_cheap)?;
    let s_ex = require("sigma_exp", p.sigma_exp, cfg.sigma_exp)?;
    Ok((FidelityClass::new(c_ch, s_ch)?, FidelityClass::new(c_ex, s_ex)?))
}

fn format_of(flag: Option<&str>, path: &Path) -> Result<MatrixFormat> {
    match flag {
        Some(s) => s.parse(),
        None => Ok(MatrixFormat::from_path(path)),
    }
}

fn load_mask(path: &Path) -> Result<Vec<usize>> {
    let m = load_matrix(path, MatrixFormat::from_path(path))?;
    if m.ncols() != 1 {
        return Err(Error::InvalidInput(format!(
            "candidate mask must be a single column, got {} columns",
            m.ncols()
        )));
    }
    let mut idx = Vec::new();
    for (i, v) in m.iter().enumerate() {
        match *v {
            v if v == 0.0 => {}
            v if v == 1.0 => idx.push(i),
            other => {
                return Err(Error::InvalidInput(format!(
                    "candidate mask entries must be 0 or 1, row {i} is {other}"
                )))
            }
        }
    }
    Ok(idx)
}

fn write_matrix_auto(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    match MatrixFormat::from_path(path) {
        MatrixFormat::Mfsm => write_mfsm(path, m),
        MatrixFormat::Csv => write_csv_matrix(path, m),
    }
}

fn print_design_summary(res: &DesignResult) {
    println!(
        "algorithm={} k_ch={} k_exp={} spend={} phi_d={}",
        res.algorithm,
        res.selection.cheap().len(),
        res.selection.exp().len(),
        res.spend,
        res.phi_d
    );
}

/// Loads model and design together and rebuilds the instance the design was
/// computed on, refusing mismatched parameters via the fingerprint.
fn load_pair(
    model_dir: &Path,
    design_path: &Path,
    fidelity: &FidelityParams,
    cfg: &RunConfig,
) -> Result<(ReducedModel, DesignFile, ProblemInstance, Selection)> {
    let model = load_model(model_dir)?;
    let design = read_design(design_path)?;
    let (cheap, exp) = classes(fidelity, cfg)?;
    let inst = assemble_instance(&model, cheap, exp, design.budget)?;
    design.verify_fingerprint(&inst)?;
    let sel = design.selection()?;
    Ok((model, design, inst, sel))
}

#[allow(clippy::too_many_arguments)]
fn cmd_basis(
    cfg: &RunConfig,
    data: &Path,
    format: Option<&str>,
    lambda: Option<f64>,
    energy: Option<f64>,
    energy_rule: &str,
    train_frac: Option<f64>,
    center: Option<bool>,
    max_modes: Option<usize>,
    candidate_mask: Option<PathBuf>,
    out_model: &Path,
) -> Result<()> {
    let matrix = load_matrix(data, format_of(format, data)?)?;
    let frac = train_frac.unwrap_or(cfg.train_frac);
    let (train, test) = chronological_split(&matrix, frac)?;
    let opts = BasisOptions {
        energy: energy.unwrap_or(cfg.energy),
        center: center.unwrap_or(cfg.center),
        max_modes,
        rule: energy_rule.parse()?,
    };
    let cand = match candidate_mask {
        Some(path) => Some(load_mask(&path)?),
        None => None,
    };
    let model = build_model(
        SnapshotMatrix::new(train)?,
        &opts,
        lambda.unwrap_or(cfg.lambda),
        cand,
    )?;
    save_model(out_model, &model)?;
    println!(
        "modes={} locations={} candidates={} train={} test={}",
        model.state_dim(),
        model.num_locations(),
        model.num_candidates(),
        model.snapshot_count,
        test.ncols()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_design(
    cfg: &RunConfig,
    seed: u64,
    model_dir: &Path,
    fidelity: &FidelityParams,
    budget: Option<f64>,
    algorithm: Option<String>,
    max_iters: Option<usize>,
    k_cheap: Option<usize>,
    k_exp: Option<usize>,
    trace: bool,
    out: &Path,
) -> Result<()> {
    let model = load_model(model_dir)?;
    let (cheap, exp) = classes(fidelity, cfg)?;
    let b = require("budget", budget, cfg.budget)?;
    let inst = assemble_instance(&model, cheap, exp, b)?;
    let algorithm = algorithm
        .or_else(|| cfg.algorithm.clone())
        .unwrap_or_else(|| "greedy".to_string());

    let res = match algorithm.as_str() {
        "greedy" => greedy_sm(&inst)?,
        "greedy-naive" => greedy_naive(&inst)?,
        "iterative" => {
            let report = iterative_select(&inst, max_iters.unwrap_or(cfg.max_iters))?;
            println!(
                "candidates={} refinements={} skipped={}",
                report.candidates.allocations.len(),
                report.total_refinements,
                report.skipped.len()
            );
            report.winner
        }
        "random" => {
            let alloc = Allocation {
                k_cheap: k_cheap.ok_or_else(|| {
                    Error::InvalidInput("--k-cheap is required for the random algorithm".into())
                })?,
                k_exp: k_exp.ok_or_else(|| {
                    Error::InvalidInput("--k-exp is required for the random algorithm".into())
                })?,
            };
            let sel = random_design(
                &alloc,
                inst.num_candidates(),
                seedstream::derive(seed, "random-design"),
            )?;
            let spend = sel.spend(inst.cheap(), inst.exp());
            if spend > b {
                return Err(Error::InvalidInput(format!(
                    "allocation ({}, {}) costs {spend}, over budget {b}",
                    alloc.k_cheap, alloc.k_exp
                )));
            }
            DesignResult {
                algorithm: "random".to_string(),
                phi_d: phi_d(&inst, &sel)?,
                spend,
                budget: b,
                selection: sel,
                trace: Vec::new(),
                iterative: None,
            }
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown algorithm {other:?} (expected greedy, greedy-naive, iterative or random)"
            )))
        }
    };

    write_design(out, &DesignFile::from_result(&res, &inst, trace))?;
    print_design_summary(&res);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_reconstruct(
    cfg: &RunConfig,
    seed: u64,
    model_dir: &Path,
    design_path: &Path,
    data: &Path,
    format: Option<&str>,
    snapshot: usize,
    fidelity: &FidelityParams,
    noise_free: bool,
    out: Option<&Path>,
) -> Result<()> {
    let (model, _design, inst, sel) = load_pair(model_dir, design_path, fidelity, cfg)?;
    let matrix = load_matrix(data, format_of(format, data)?)?;
    if matrix.nrows() != model.num_locations() {
        return Err(Error::InvalidInput(format!(
            "data has {} rows but the model expects {}",
            matrix.nrows(),
            model.num_locations()
        )));
    }
    if snapshot >= matrix.ncols() {
        return Err(Error::InvalidInput(format!(
            "snapshot {snapshot} out of range ({} columns)",
            matrix.ncols()
        )));
    }
    let truth = DVector::from_column_slice(matrix.column(snapshot).as_slice());
    let sigmas = if noise_free {
        (0.0, 0.0)
    } else {
        (inst.cheap().sigma(), inst.exp().sigma())
    };
    let y = simulate_measurement(
        &truth,
        &model.cand_idx,
        sigmas,
        &sel,
        seedstream::derive_indexed(seed, "eval-noise", snapshot as u64),
    )?;
    let (estimate, _) = reconstruct(&model, inst.cheap(), inst.exp(), &y)?;
    if let Some(path) = out {
        let col = DMatrix::from_column_slice(estimate.len(), 1, estimate.as_slice());
        write_matrix_auto(path, &col)?;
    }
    let norm = truth.norm();
    if norm > 0.0 {
        println!("rel_err={}", (&truth - &estimate).norm() / norm);
    } else {
        println!("rel_err=nan");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    cfg: &RunConfig,
    seed: u64,
    model_dir: &Path,
    design_path: &Path,
    data: &Path,
    format: Option<&str>,
    train_frac: Option<f64>,
    fidelity: &FidelityParams,
    noise_free: bool,
    out: Option<&Path>,
) -> Result<()> {
    let (model, _design, inst, sel) = load_pair(model_dir, design_path, fidelity, cfg)?;
    let matrix = load_matrix(data, format_of(format, data)?)?;
    let (_, test) = chronological_split(&matrix, train_frac.unwrap_or(cfg.train_frac))?;
    let opts = EvalOptions { seed, noise_free };
    let summary = evaluate(&model, &inst, &sel, &test, &opts)?;
    if !summary.skipped.is_empty() {
        eprintln!(
            "warning: skipped {} zero-norm snapshot(s): {:?}",
            summary.skipped.len(),
            summary.skipped
        );
    }
    if let Some(path) = out {
        let mut csv = String::from("snapshot,rel_err\n");
        let mut errs = summary.per_snapshot_rel_err.iter();
        for j in 0..test.ncols() {
            if summary.skipped.binary_search(&j).is_ok() {
                continue;
            }
            csv.push_str(&format!("{j},{}\n", errs.next().expect("one error per kept snapshot")));
        }
        std::fs::write(path, csv)?;
    }
    println!(
        "mean_rel_err={} phi_d={} k_ch={} k_exp={} evaluated={} skipped={}",
        summary.mean_rel_err,
        summary.phi_d,
        summary.allocation.k_cheap,
        summary.allocation.k_exp,
        summary.per_snapshot_rel_err.len(),
        summary.skipped.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    cfg: &RunConfig,
    seed: u64,
    model_dir: &Path,
    design_paths: &[PathBuf],
    fidelity: &FidelityParams,
    samples: Option<usize>,
    data: Option<&Path>,
    format: Option<&str>,
    train_frac: Option<f64>,
    out_table: Option<&Path>,
    out_hist: Option<&Path>,
) -> Result<()> {
    let model = load_model(model_dir)?;
    let (cheap, exp) = classes(fidelity, cfg)?;
    let mut files = Vec::with_capacity(design_paths.len());
    for p in design_paths {
        files.push(read_design(p)?);
    }
    let inst = assemble_instance(&model, cheap, exp, files[0].budget)?;
    let mut results = Vec::with_capacity(files.len());
    for f in &files {
        f.verify_fingerprint(&inst)?;
        results.push(f.to_result()?);
    }

    let spec = RandomBaselineSpec {
        samples_per_allocation: samples.unwrap_or(RandomBaselineSpec::default().samples_per_allocation),
        seed,
    };
    let mut cmp = compare_designs(&inst, &results, &spec)?;

    if let Some(data_path) = data {
        let matrix = load_matrix(data_path, format_of(format, data_path)?)?;
        let (_, test) = chronological_split(&matrix, train_frac.unwrap_or(cfg.train_frac))?;
        let opts = EvalOptions { seed, noise_free: false };
        for (row, res) in cmp.rows.iter_mut().zip(&results) {
            row.mean_rel_err =
                Some(evaluate(&model, &inst, &res.selection, &test, &opts)?.mean_rel_err);
        }
    }

    let table = table_csv(&cmp);
    match out_table {
        Some(path) => std::fs::write(path, table)?,
        None => print!("{table}"),
    }
    if let Some(path) = out_hist {
        let mut csv = String::from("bin_lo,bin_hi,count\n");
        for b in &cmp.histogram {
            csv.push_str(&format!("{},{},{}\n", b.lo, b.hi, b.count));
        }
        std::fs::write(path, csv)?;
    }
    Ok(())
}

fn table_csv(cmp: &Comparison) -> String {
    let mut out = String::from("design,k_ch,k_exp,spend,phi_d,mean_rel_err\n");
    for r in &cmp.rows {
        let err = r.mean_rel_err.map(|e| e.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name, r.k_cheap, r.k_exp, r.spend, r.phi_d, err
        ));
    }
    out
}
