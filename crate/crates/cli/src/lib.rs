//! CLI front end: parses arguments, loads the scenario config, dispatches the
//! requested experiment, and persists CSV/JSON outputs.
//!
//! Exit codes: 0 success, 2 argument/config error, 3 experiment failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use aircomp_core::analysis::{optimal_q_bound, BoundParams};
use aircomp_core::harness::{
    experiment_convergence, experiment_hardening, experiment_mse_vs_m, experiment_mse_vs_q,
    experiment_optq_vs_l, experiment_sparsity, experiment_vq, train_lista_cached, write_csv,
    write_json, write_trial_records, RunSummary, ScenarioConfig, VqConfig,
};
use aircomp_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "aircomp",
    version,
    about = "Monte Carlo lab for blind digital over-the-air computation",
    disable_help_subcommand = true
)]
struct Cli {
    /// Scenario config file (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the per-cell trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory (also via AIRCOMP_OUT_DIR; default ./aircomp_out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table output format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Channel-hardening metric versus antenna count.
    Hardening,
    /// Per-iteration MSE of the shrinkage and unfolded detectors.
    Convergence,
    /// Empirical MSE and bound overlay versus codebook size.
    MseVsQ,
    /// Bound-based optimal codebook size versus preamble length.
    OptqVsL {
        /// Also compute the empirical optimum with this many trials per cell.
        #[arg(long)]
        empirical_trials: Option<usize>,
    },
    /// Mean effective sparsity versus codebook size.
    Sparsity,
    /// MSE versus antenna count with the fixed-SNR AWGN baseline.
    MseVsM,
    /// Vector-quantization comparison under a fixed channel-use budget.
    Vq,
    /// Train the unfolded detector and cache its parameters.
    TrainLista,
    /// Print the bound-optimal codebook size for given (L, K, SNR, R, C0).
    PlanQ {
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// SNR in dB.
        #[arg(long)]
        snr: f64,
        /// Source half-range.
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
        /// Antenna count determining the post-combining noise level.
        #[arg(long, default_value_t = 1024)]
        m: usize,
    },
}

/// Run the CLI against explicit arguments; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text; --help and --version are
            // successful exits.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    if let Ok(threads) = std::env::var("AIRCOMP_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let mut cfg = match &cli.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read config {}: {e}", path.display());
                    return 2;
                }
            };
            match ScenarioConfig::from_json(&text) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: bad config {}: {e}", path.display());
                    return 2;
                }
            }
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: invalid scenario: {e}");
        return 2;
    }

    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var("AIRCOMP_OUT_DIR").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("aircomp_out"));

    match dispatch(&cli.cmd, &cfg, &out_dir, cli.format) {
        Ok(()) => 0,
        Err(e @ (Error::Convergence { .. } | Error::DivergentLoss { .. })) => {
            eprintln!("error: numerical failure: {e}");
            3
        }
        Err(e @ (Error::InvalidInput(_) | Error::ShapeMismatch(_))) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

fn dispatch(cmd: &Cmd, cfg: &ScenarioConfig, out_dir: &Path, format: Format) -> Result<()> {
    let start = Instant::now();
    match cmd {
        Cmd::Hardening => {
            let table = experiment_hardening(cfg)?;
            match format {
                Format::Csv => {
                    let rows: Vec<String> = table
                        .rows
                        .iter()
                        .map(|r| {
                            format!("{},{},{},{}", r.m, r.realizations, r.mean_metric, r.median_metric)
                        })
                        .collect();
                    let p = write_csv(
                        out_dir,
                        "hardening",
                        aircomp_core::harness::HardeningTable::CSV_HEADER,
                        &rows,
                    )?;
                    let sample_rows: Vec<String> = table
                        .samples
                        .iter()
                        .map(|(m, i, v)| format!("{m},{i},{v}"))
                        .collect();
                    write_csv(
                        out_dir,
                        "hardening_samples",
                        aircomp_core::harness::HardeningTable::SAMPLES_CSV_HEADER,
                        &sample_rows,
                    )?;
                    println!("wrote {}", p.display());
                }
                Format::Json => {
                    let p = write_json(out_dir, "hardening", &table.rows)?;
                    println!("wrote {}", p.display());
                }
            }
            let headline = json!({
                "metric_times_m": table.rows.iter().map(|r| r.mean_metric * r.m as f64).collect::<Vec<_>>(),
            });
            RunSummary::new("hardening", cfg, start.elapsed().as_secs_f64(), headline)
                .write(out_dir)?;
        }
        Cmd::Convergence => {
            let (params, cache_path, loaded) =
                train_lista_cached(cfg, &out_dir.join("lista_cache"))?;
            let outcome = experiment_convergence(cfg, Some(params))?;
            match format {
                Format::Csv => {
                    let rows: Vec<String> = outcome
                        .rows
                        .iter()
                        .map(|r| format!("{},{},{}", r.detector, r.iteration, r.mse))
                        .collect();
                    let p = write_csv(
                        out_dir,
                        "convergence",
                        aircomp_core::harness::ConvergenceOutcome::CSV_HEADER,
                        &rows,
                    )?;
                    let final_rows: Vec<String> = outcome
                        .final_records
                        .iter()
                        .map(|(label, r)| format!("{label},{}", r.to_csv_row()))
                        .collect();
                    write_csv(
                        out_dir,
                        "convergence_finals",
                        &format!("cell,{}", aircomp_core::harness::TrialRecord::CSV_HEADER),
                        &final_rows,
                    )?;
                    println!("wrote {} (solver cache: {}, loaded = {loaded})", p.display(), cache_path.display());
                }
                Format::Json => {
                    let p = write_json(out_dir, "convergence", &outcome.rows)?;
                    println!("wrote {}", p.display());
                }
            }
            let headline = json!({
                "lista_cache": cache_path.display().to_string(),
                "cache_hit": loaded,
            });
            RunSummary::new("convergence", cfg, start.elapsed().as_secs_f64(), headline)
                .write(out_dir)?;
        }
        Cmd::MseVsQ => {
            let table = experiment_mse_vs_q(cfg)?;
            match format {
                Format::Csv => {
                    let rows: Vec<String> =
                        table.records.iter().map(|r| r.to_csv_row()).collect();
                    let p = write_csv(
                        out_dir,
                        "mse_vs_q",
                        aircomp_core::analysis::SweepRecord::CSV_HEADER,
                        &rows,
                    )?;
                    let cells: Vec<(String, &[aircomp_core::harness::TrialRecord])> = table
                        .dumps
                        .iter()
                        .map(|(q, l, recs)| (format!("q{q}_l{l}"), recs.as_slice()))
                        .collect();
                    write_trial_records(out_dir, "mse_vs_q_trials", &cells)?;
                    println!("wrote {}", p.display());
                }
                Format::Json => {
                    let p = write_json(out_dir, "mse_vs_q", &table.records)?;
                    println!("wrote {}", p.display());
                }
            }
            let headline = json!({
                "cells": table.records.len(),
            });
            RunSummary::new("mse_vs_q", cfg, start.elapsed().as_secs_f64(), headline)
                .write(out_dir)?;
        }
        Cmd::OptqVsL { empirical_trials } => {
            let table = experiment_optq_vs_l(cfg, *empirical_trials)?;
            match format {
                Format::Csv => {
                    let rows: Vec<String> = table
                        .rows
                        .iter()
                        .map(|r| {
                            format!(
                                "{},{},{},{}",
                                r.l,
                                r.snr_db,
                                r.q_star_bound,
                                r.q_star_empirical.map_or(String::new(), |q| q.to_string())
                            )
                        })
                        .collect();
                    let p = write_csv(
                        out_dir,
                        "optq_vs_l",
                        aircomp_core::harness::OptqTable::CSV_HEADER,
                        &rows,
                    )?;
                    println!("wrote {}", p.display());
                }
                Format::Json => {
                    let p = write_json(out_dir, "optq_vs_l", &table.rows)?;
                    println!("wrote {}", p.display());
                }
            }
            RunSummary::new("optq_vs_l", cfg, start.elapsed().as_secs_f64(), json!({}))
                .write(out_dir)?;
        }
        Cmd::Sparsity => {
            let table = experiment_sparsity(cfg)?;
            match format {
                Format::Csv => {
                    let rows: Vec<String> = table
                        .rows
                        .iter()
                        .map(|r| {
                            format!("{},{},{},{},{}", r.k, r.dist, r.q, r.mean_support, r.trials)
                        })
                        .collect();
                    let p = write_csv(
                        out_dir,
                        "sparsity",
                        aircomp_core::harness::SparsityTable::CSV_HEADER,
                        &rows,
                    )?;
                    println!("wrote {}", p.display());
                }
                Format::Json => {
                    let p = write_json(out_dir, "sparsity", &table.rows)?;
                    println!("wrote {}", p.display());
                }
            }
            RunSummary::new("sparsity", cfg, start.elapsed().as_secs_f64(), json!({}))
                .write(out_dir)?;
        }
        Cmd::MseVsM => {
            let table = experiment_mse_vs_m(cfg)?;
            match format {
                Format::Csv => {
                    let rows: Vec<String> = table
                        .rows
                        .iter()
                        .map(|r| {
                            format!(
                                "{},{},{},{},{},{}",
                                r.m, r.ideal, r.mse_mean, r.mse_median, r.exact_fraction, r.trials
                            )
                        })
                        .collect();
                    let p = write_csv(
                        out_dir,
                        "mse_vs_m",
                        aircomp_core::harness::MseVsMTable::CSV_HEADER,
                        &rows,
                    )?;
                    let cells: Vec<(String, &[aircomp_core::harness::TrialRecord])> = table
                        .dumps
                        .iter()
                        .map(|(label, recs)| (label.clone(), recs.as_slice()))
                        .collect();
                    write_trial_records(out_dir, "mse_vs_m_trials", &cells)?;
                    println!("wrote {}", p.display());
                }
                Format::Json => {
                    let p = write_json(out_dir, "mse_vs_m", &table.rows)?;
                    println!("wrote {}", p.display());
                }
            }
            RunSummary::new("mse_vs_m", cfg, start.elapsed().as_secs_f64(), json!({}))
                .write(out_dir)?;
        }
        Cmd::Vq => {
            let mut cfg = cfg.clone();
            if cfg.vq.is_none() {
                cfg.vq = Some(VqConfig::default());
                cfg.l = 40;
            }
            cfg.validate()?;
            let table = experiment_vq(&cfg)?;
            match format {
                Format::Csv => {
                    let rows: Vec<String> = table
                        .rows
                        .iter()
                        .map(|r| {
                            format!(
                                "{},{},{},{},{},{}",
                                r.scheme, r.q, r.snr_db, r.detector, r.mse, r.trials
                            )
                        })
                        .collect();
                    let p = write_csv(
                        out_dir,
                        "vq",
                        aircomp_core::harness::VqTable::CSV_HEADER,
                        &rows,
                    )?;
                    let sample_rows: Vec<String> = table
                        .samples
                        .iter()
                        .map(|(scheme, q, snr, seed, err)| {
                            format!("{scheme},{q},{snr},{seed},{err}")
                        })
                        .collect();
                    write_csv(
                        out_dir,
                        "vq_trials",
                        aircomp_core::harness::VqTable::SAMPLES_CSV_HEADER,
                        &sample_rows,
                    )?;
                    println!("wrote {}", p.display());
                }
                Format::Json => {
                    let p = write_json(out_dir, "vq", &table.rows)?;
                    println!("wrote {}", p.display());
                }
            }
            RunSummary::new("vq", &cfg, start.elapsed().as_secs_f64(), json!({}))
                .write(out_dir)?;
        }
        Cmd::TrainLista => {
            let (params, path, loaded) = train_lista_cached(cfg, &out_dir.join("lista_cache"))?;
            println!(
                "solver parameters at {} ({} layers, {})",
                path.display(),
                params.layers(),
                if loaded { "cache hit" } else { "freshly trained" }
            );
            let headline = json!({
                "path": path.display().to_string(),
                "layers": params.layers(),
                "cache_hit": loaded,
            });
            RunSummary::new("train_lista", cfg, start.elapsed().as_secs_f64(), headline)
                .write(out_dir)?;
        }
        Cmd::PlanQ { l, k, snr, r, c0, m } => {
            let sigma2 = 10f64.powf(-snr / 10.0);
            let bp = BoundParams {
                r: *r,
                k: *k,
                l: *l,
                sigma2_eff: sigma2 * *k as f64 / *m as f64,
                c0: *c0,
                u_sq_norm: 0.0,
            };
            let grid: Vec<usize> = (1..=8).map(|j| 1usize << j).collect();
            let q_star = optimal_q_bound(&bp, &grid)?;
            println!("q,quant_term,detect_term,total_bound");
            for &q in &grid {
                let quant = bp.quant_term(q);
                let total = bp.total_bound_swept(q)?;
                println!("{q},{quant},{},{total}", total - quant);
            }
            println!("optimal q = {q_star}");
            if !bp.condition_ok(q_star) {
                eprintln!(
                    "warning: L = {l} is below K ln(Q/K) = {:.1} at q = {q_star}; the detection bound is extrapolated",
                    *k as f64 * (q_star as f64 / *k as f64).ln()
                );
            }
        }
    }
    Ok(())
}
