//! Run artifacts: `trace.csv`, `summary.json`, `best.xyz`, `plot_trace.py`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{BaselineReport, MlpReport, Outcome, Phase};

/// Environment variable naming the directory relative output paths are
/// resolved against. Defaults to `runs`.
pub const OUTPUT_ROOT_ENV: &str = "CLM_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// `explicit`, else the config's `output_dir`, else the experiment name;
/// relative results land under [`output_root`].
pub fn resolve_output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    let dir = explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(&cfg.name));
    if dir.is_absolute() {
        dir
    } else {
        output_root().join(dir)
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn trace_header(q: usize) -> Vec<String> {
    let mut h = vec!["window".to_string(), "t".to_string()];
    h.extend((1..=q).map(|i| format!("U_{i}")));
    h.extend(["avgU", "sync_residual", "eta"].map(String::from));
    h.extend((1..=q).map(|i| format!("gamma_{i}")));
    h.push("renumbered".into());
    h
}

/// One row per completed window across all phases. Windows are numbered
/// from 1 and flow time runs on across phase boundaries.
pub fn write_trace_csv(path: &Path, phases: &[Phase], q: usize) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header(q))?;
    for phase in phases {
        for (k, r) in phase.trace.records.iter().enumerate() {
            let mut row = vec![
                (phase.first_window + k + 1).to_string(),
                (phase.t_offset + r.t).to_string(),
            ];
            row.extend(r.costs.iter().map(f64::to_string));
            row.extend([r.avg_cost, r.sync_residual, r.eta].map(|v| v.to_string()));
            row.extend(r.gamma.iter().map(f64::to_string));
            let renumbered = r.renumbering.as_ref().is_some_and(|m| !m.is_identity());
            row.push(u8::from(renumbered).to_string());
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct PhaseSummary {
    pub name: String,
    pub first_window: usize,
    pub windows: usize,
    pub stop_reason: Option<clm_core::integrate::StopReason>,
    pub final_avg_cost: Option<f64>,
    pub final_sync_residual: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RenumberEvent {
    pub window: usize,
    /// `(from, to)` member positions.
    pub moves: Vec<(usize, usize)>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub name: String,
    pub problem: String,
    pub q: usize,
    pub dim: usize,
    pub windows: usize,
    pub phases: Vec<PhaseSummary>,
    pub best_index: usize,
    pub best_cost_pre_polish: f64,
    pub best_cost_post_polish: f64,
    pub polish_iterations: Option<usize>,
    pub argmin: Vec<f64>,
    pub final_state_variance: f64,
    pub wall_time_s: f64,
    pub renumber_events: Vec<RenumberEvent>,
    pub mlp: Option<MlpReport>,
    pub baselines: Option<BaselineReport>,
    pub config: ExperimentConfig,
}

pub fn phase_summaries(phases: &[Phase]) -> Vec<PhaseSummary> {
    phases
        .iter()
        .map(|p| PhaseSummary {
            name: p.name.to_string(),
            first_window: p.first_window + 1,
            windows: p.trace.records.len(),
            stop_reason: p.trace.stop_reason,
            final_avg_cost: p.trace.last().map(|r| r.avg_cost),
            final_sync_residual: p.trace.last().map(|r| r.sync_residual),
        })
        .collect()
}

fn renumber_events(phases: &[Phase]) -> Vec<RenumberEvent> {
    phases
        .iter()
        .flat_map(|p| {
            p.trace
                .records
                .iter()
                .enumerate()
                .filter_map(move |(k, r)| {
                    r.renumbering.as_ref().map(|m| RenumberEvent {
                        window: p.first_window + k + 1,
                        moves: m.moves.clone(),
                    })
                })
        })
        .collect()
}

impl Summary {
    pub fn from_outcome(o: &Outcome) -> Self {
        Summary {
            name: o.config.name.clone(),
            problem: o.problem_name.clone(),
            q: o.config.clm.q,
            dim: o.config.problem.dim(),
            windows: o.total_windows(),
            phases: phase_summaries(&o.phases),
            best_index: o.best_index,
            best_cost_pre_polish: o.best_cost_pre_polish,
            best_cost_post_polish: o.best_cost,
            polish_iterations: o.polish.as_ref().map(|r| r.iterations),
            argmin: o.argmin.clone(),
            final_state_variance: o.final_state.state_variance(),
            wall_time_s: o.wall_time_s,
            renumber_events: renumber_events(&o.phases),
            mlp: o.mlp.clone(),
            baselines: o.baselines.clone(),
            config: o.config.clone(),
        }
    }
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots member costs, average cost and sync residual from trace.csv."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
with open(here / "trace.csv") as f:
    rows = list(csv.DictReader(f))
t = [float(r["t"]) for r in rows]
members = sorted((k for k in rows[0] if k.startswith("U_")), key=lambda k: int(k[2:]))

fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(8, 7))
for k in members:
    top.plot(t, [float(r[k]) for r in rows], lw=0.6, alpha=0.6)
top.plot(t, [float(r["avgU"]) for r in rows], "k--", lw=1.5, label="average")
top.set_ylabel("cost")
top.legend()
bottom.semilogy(t, [max(float(r["sync_residual"]), 1e-300) for r in rows])
bottom.set_ylabel("sync residual")
bottom.set_xlabel("t")
fig.tight_layout()
fig.savefig(here / "trace.png", dpi=150)
"#;

/// Writes every artifact of a finished run into `dir`.
pub fn write_run(dir: &Path, o: &Outcome) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_trace_csv(&dir.join("trace.csv"), &o.phases, o.config.clm.q)?;
    let summary = serde_json::to_vec_pretty(&Summary::from_outcome(o))?;
    write_atomic(&dir.join("summary.json"), &summary)?;
    if o.config.problem.is_lj() {
        let xyz = clm_core::io::write_xyz(&o.argmin, "Ar", o.best_cost);
        write_atomic(&dir.join("best.xyz"), xyz.as_bytes())?;
    }
    write_atomic(&dir.join("plot_trace.py"), PLOT_SCRIPT.as_bytes())?;
    Ok(())
}
