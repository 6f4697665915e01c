//! The `run`, `bench` and `gradcheck` subcommands. Each returns the process
//! exit code.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{baseline_bests, run_experiment, Failure};
use crate::output::{resolve_output_dir, write_atomic, write_run, write_trace_csv};

fn report(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

pub fn cmd_run(config: &Path, out: Option<&Path>) -> i32 {
    let cfg = match ExperimentConfig::load(config) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    let dir = resolve_output_dir(&cfg, out);
    match run_to_dir(&cfg, &dir) {
        Ok(summary) => {
            println!("{summary}");
            println!("wrote {}", dir.display());
            0
        }
        Err(e) => report(&e),
    }
}

/// Runs `cfg` and writes its artifacts into `dir`. On a numerical failure
/// the partial trace is still written before the error is returned.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<String, CliError> {
    match run_experiment(cfg) {
        Ok(o) => {
            write_run(dir, &o)?;
            let last = o.last_record();
            Ok(format!(
                "{}: {} windows, best cost {:.10} (before polish {:.10}), sync residual {:.3e}, {:.2}s",
                cfg.name,
                o.total_windows(),
                o.best_cost,
                o.best_cost_pre_polish,
                last.map_or(f64::NAN, |r| r.sync_residual),
                o.wall_time_s
            ))
        }
        Err(Failure { error, phases, q }) => {
            if !phases.is_empty() {
                fs::create_dir_all(dir)?;
                write_trace_csv(&dir.join("trace.csv"), &phases, q)?;
                eprintln!(
                    "partial trace written to {}",
                    dir.join("trace.csv").display()
                );
            }
            Err(error)
        }
    }
}

/// One line of `comparison.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub clm_best: f64,
    pub multistart_best: f64,
    pub quasi_newton_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub seeds: usize,
    pub failed_seeds: Vec<u64>,
    /// Seeds where the CLM result is no worse than the multi-start descent one.
    pub wins_vs_multistart: usize,
    pub wins_vs_quasi_newton: usize,
    pub win_rate_vs_multistart: f64,
    pub win_rate_vs_quasi_newton: f64,
    pub median_clm_best: f64,
    pub median_multistart_best: f64,
    pub median_quasi_newton_best: f64,
}

/// `a` counts as no worse than `b` up to a relative rounding slack.
pub fn no_worse(a: f64, b: f64) -> bool {
    a.is_finite() && (!b.is_finite() || a <= b + 1e-9 * (1.0 + b.abs()))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn summarize(rows: &[SeedComparison]) -> BenchSummary {
    let n = rows.len();
    let wins_ms = rows
        .iter()
        .filter(|r| no_worse(r.clm_best, r.multistart_best))
        .count();
    let wins_qn = rows
        .iter()
        .filter(|r| no_worse(r.clm_best, r.quasi_newton_best))
        .count();
    let rate = |w: usize| if n == 0 { 0.0 } else { w as f64 / n as f64 };
    BenchSummary {
        seeds: n,
        failed_seeds: rows
            .iter()
            .filter(|r| !r.clm_best.is_finite())
            .map(|r| r.seed)
            .collect(),
        wins_vs_multistart: wins_ms,
        wins_vs_quasi_newton: wins_qn,
        win_rate_vs_multistart: rate(wins_ms),
        win_rate_vs_quasi_newton: rate(wins_qn),
        median_clm_best: median(rows.iter().map(|r| r.clm_best).collect()),
        median_multistart_best: median(rows.iter().map(|r| r.multistart_best).collect()),
        median_quasi_newton_best: median(rows.iter().map(|r| r.quasi_newton_best).collect()),
    }
}

/// CLM against both baselines from identical initial states for one seed.
/// A CLM numerical failure is recorded as a NaN CLM result.
pub fn compare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedComparison, CliError> {
    let cfg = cfg.with_seed(seed);
    let built = cfg.problem.build()?;
    let init = crate::experiment::initial_state(&cfg)?;
    let (ms, qn) = baseline_bests(
        &*built.raw,
        &init,
        true,
        true,
        cfg.baselines.descent_max_iter,
    );
    let clm_best = match run_experiment(&cfg) {
        Ok(o) => o.best_cost,
        Err(Failure {
            error: e @ CliError::Config(_),
            ..
        }) => return Err(e),
        Err(f) => {
            eprintln!("seed {seed}: {}", f.error);
            f64::NAN
        }
    };
    Ok(SeedComparison {
        seed,
        clm_best,
        multistart_best: ms.unwrap_or(f64::NAN),
        quasi_newton_best: qn.unwrap_or(f64::NAN),
    })
}

/// Runs seeds `first_seed..first_seed + seeds` in parallel. Each seed's
/// result is written to `seeds/seed_<k>.json` before the merged
/// `comparison.csv` and `bench_summary.json` are produced.
pub fn bench_to_dir(
    cfg: &ExperimentConfig,
    seeds: usize,
    first_seed: u64,
    dir: &Path,
) -> Result<BenchSummary, CliError> {
    cfg.validate()?;
    let seed_dir = dir.join("seeds");
    fs::create_dir_all(&seed_dir)?;
    let rows: Vec<SeedComparison> = (first_seed..first_seed + seeds as u64)
        .into_par_iter()
        .map(|s| {
            let row = compare_seed(cfg, s)?;
            write_atomic(
                &seed_dir.join(format!("seed_{s}.json")),
                &serde_json::to_vec_pretty(&row)?,
            )?;
            Ok(row)
        })
        .collect::<Result<_, CliError>>()?;

    let mut w = csv::Writer::from_path(dir.join("comparison.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let summary = summarize(&rows);
    write_atomic(
        &dir.join("bench_summary.json"),
        &serde_json::to_vec_pretty(&summary)?,
    )?;
    Ok(summary)
}

pub fn cmd_bench(config: &Path, seeds: usize, first_seed: u64, out: Option<&Path>) -> i32 {
    let cfg = match ExperimentConfig::load(config) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    if seeds == 0 {
        return report(&CliError::Config("--seeds must be at least 1".into()));
    }
    let dir = resolve_output_dir(&cfg, out);
    match bench_to_dir(&cfg, seeds, first_seed, &dir) {
        Ok(s) => {
            println!(
                "{} seeds: CLM no worse than multi-start descent on {} ({:.0}%), than multi-start L-BFGS on {} ({:.0}%)",
                s.seeds,
                s.wins_vs_multistart,
                100.0 * s.win_rate_vs_multistart,
                s.wins_vs_quasi_newton,
                100.0 * s.win_rate_vs_quasi_newton
            );
            println!(
                "median best: clm {:.6}, multistart {:.6}, quasi-newton {:.6}",
                s.median_clm_best, s.median_multistart_best, s.median_quasi_newton_best
            );
            println!("wrote {}", dir.display());
            if s.failed_seeds.is_empty() {
                0
            } else {
                eprintln!("CLM failed numerically on seeds {:?}", s.failed_seeds);
                3
            }
        }
        Err(e) => report(&e),
    }
}

pub fn cmd_gradcheck(points: usize, tol: f64, seed: u64) -> i32 {
    let report =
        clm_core::gradcheck::run_suite(&clm_core::gradcheck::registered_cases(), points, tol, seed);
    println!(
        "{:<40} {:>8} {:>14}  result",
        "problem", "points", "worst rel err"
    );
    for c in &report.cases {
        println!(
            "{:<40} {:>8} {:>14.3e}  {}",
            c.name,
            c.points,
            c.worst_rel_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    report.exit_code()
}
