//! Result files: JSON run records and CSV traces headed by the config hash.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gradcode_core::simulator::{RunResult, Summary};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct RunFile<'a> {
    config_hash: String,
    config: String,
    #[serde(flatten)]
    result: &'a RunResult,
}

pub fn run_json(cfg: &ExperimentConfig, result: &RunResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(&RunFile {
        config_hash: cfg.hash(),
        config: cfg.serialize(),
        result,
    })?)
}

/// Per-iteration trace: `t, wall_time, covered_blocks, finished_count, loss, grad_error`.
pub fn trace_csv(cfg: &ExperimentConfig, result: &RunResult) -> String {
    let mut s = format!(
        "# config_hash: {}\nt,wall_time,covered_blocks,finished_count,loss,grad_error\n",
        cfg.hash()
    );
    for r in &result.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.t,
            r.wall_time,
            r.covered_blocks,
            r.finished_workers.len(),
            r.loss,
            r.grad_error
        );
    }
    s
}

/// Mean curves with 95% bands.
pub fn summary_csv(cfg: &ExperimentConfig, summary: &Summary) -> String {
    let mut s = format!(
        "# config_hash: {}\n# runs: {}\nt,gap_mean,gap_lo,gap_hi,wall_time_mean,wall_time_lo,wall_time_hi,elapsed_mean\n",
        cfg.hash(),
        summary.runs
    );
    for r in &summary.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.t, r.gap.mean, r.gap.lo, r.gap.hi, r.wall_time.mean, r.wall_time.lo, r.wall_time.hi, r.elapsed.mean
        );
    }
    s
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::file(format!("writing {}", path.display()), e))
}

/// Writes `run_<seed>.json` and `run_<seed>.csv` under `dir`; returns both paths.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, result: &RunResult) -> Result<(PathBuf, PathBuf)> {
    let json = dir.join(format!("run_{}.json", result.seed));
    let csv = dir.join(format!("run_{}.csv", result.seed));
    write(&json, &run_json(cfg, result)?)?;
    write(&csv, &trace_csv(cfg, result))?;
    Ok((json, csv))
}
