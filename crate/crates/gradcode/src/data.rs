//! CSV datasets, delay tables and objective construction.

use std::path::Path;

use gradcode_core::optim::{DataObjective, Dataset, Loss, Objective, Quadratic, QuadraticConfig};
use gradcode_core::simulator::DelayTable;

use crate::config::{ExperimentConfig, ObjectiveSpec};
use crate::error::{Error, Result};

/// Reads a headered numeric CSV. `label_column` is a header name or a 0-based index.
pub fn load_dataset(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Usage(format!("cannot read dataset {}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let label = headers
        .iter()
        .position(|h| h == label_column)
        .or_else(|| label_column.parse::<usize>().ok().filter(|&i| i < headers.len()))
        .ok_or_else(|| Error::Usage(format!("label column '{label_column}' not found in {}", path.display())))?;
    let cols = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Usage(format!(
                "row {}: expected {} fields, got {}",
                row + 1,
                headers.len(),
                record.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Usage(format!("row {}, column {j}: '{field}' is not a number", row + 1)))?;
            if j == label {
                labels.push(v);
            } else {
                features.push(v);
            }
        }
    }
    Ok(Dataset::new(features, labels, cols)?)
}

/// Header-less CSV: one row per round, one column per worker.
pub fn load_delay_table(path: &Path) -> Result<DelayTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Usage(format!("cannot read delay table {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Usage(format!("delay table entry '{f}' is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(DelayTable::new(rows)?)
}

/// Loads, optionally standardises and groups a dataset into `n` tasks.
pub fn dataset_objective(
    path: &Path,
    label_column: &str,
    loss: Loss,
    standardize: bool,
    n: usize,
) -> Result<DataObjective> {
    let mut data = load_dataset(path, label_column)?;
    if standardize {
        data.standardize();
    }
    let (obj, dropped) = DataObjective::new(data, loss)?.with_tasks(n)?;
    if dropped > 0 {
        log::warn!("dropping {dropped} trailing rows so that {n} tasks get equal shares");
    }
    Ok(obj)
}

pub fn quadratic_config(cfg: &ExperimentConfig) -> Option<QuadraticConfig> {
    match cfg.objective {
        ObjectiveSpec::Quadratic {
            dim,
            conditioning,
            noise,
            shared_design,
            sigma_radius,
            objective_seed,
        } => Some(QuadraticConfig {
            n: cfg.n,
            dim,
            conditioning,
            noise,
            shared_design,
            sigma_radius,
            seed: objective_seed,
        }),
        ObjectiveSpec::Dataset { .. } => None,
    }
}

/// The full objective described by `cfg`.
pub fn build_objective(cfg: &ExperimentConfig) -> Result<Box<dyn Objective>> {
    if let Some(q) = quadratic_config(cfg) {
        return Ok(Box::new(Quadratic::generate(&q)?));
    }
    let ObjectiveSpec::Dataset {
        loss,
        path,
        label_column,
        standardize,
    } = &cfg.objective
    else {
        unreachable!()
    };
    Ok(Box::new(dataset_objective(
        path,
        label_column,
        *loss,
        *standardize,
        cfg.n,
    )?))
}
