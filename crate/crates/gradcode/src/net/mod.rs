//! Master/worker execution over TCP.

pub mod codec;
mod master;
mod worker;

use std::net::TcpListener;
use std::path::Path;
use std::time::Duration;

use gradcode_core::optim::Objective;
use gradcode_core::simulator::RunResult;

pub use codec::{Frame, Message, WorkerAssignment};
pub use master::{serve, MasterOptions};
pub use worker::{run_worker, InjectedDelay, WorkerOptions, WorkerReport};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Builds the objective from `cfg`, listens on `addr` and runs the master.
pub fn serve_master(cfg: &ExperimentConfig, addr: &str) -> Result<RunResult> {
    let objective = crate::data::build_objective(cfg)?;
    let listener = TcpListener::bind(addr).map_err(|e| Error::Usage(format!("cannot listen on {addr}: {e}")))?;
    log::info!("master listening on {}", listener.local_addr()?);
    let opts = MasterOptions::with_timeout(Duration::from_secs_f64(cfg.timeout));
    serve(&*objective, cfg.run_spec(cfg.seed)?, listener, opts)
}

/// Objective source for a worker: a shard directory or an experiment config.
pub fn load_worker_objective(data: &Path, assignment: &WorkerAssignment) -> Result<Box<dyn Objective>> {
    if data.is_dir() {
        let manifest = crate::shard::read_manifest(data)?;
        let tasks: Vec<usize> = assignment.indices.iter().map(|&i| i as usize).collect();
        Ok(Box::new(crate::shard::load_tasks(data, &manifest, &tasks)?))
    } else {
        let cfg = ExperimentConfig::load(data)?;
        crate::data::build_objective(&cfg)
    }
}
