//! Splits a dataset into per-task files plus a manifest of the code layout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gradcode_core::codes::{AssignmentMatrix, CodeParams};
use gradcode_core::optim::{DataObjective, Dataset, Loss};
use serde::{Deserialize, Serialize};

use crate::data::load_dataset;
use crate::error::{Error, Result};
use crate::output::write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub block: usize,
    pub tasks: Vec<usize>,
    pub workers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub ell: usize,
    pub cols: usize,
    pub rows_per_task: usize,
    pub dropped_rows: usize,
    pub loss: Loss,
    pub standardized: bool,
    pub blocks: Vec<BlockEntry>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn task_file(i: usize) -> String {
    format!("task_{i:05}.csv")
}

pub struct ShardOptions<'a> {
    pub label_column: &'a str,
    pub params: CodeParams,
    pub loss: Loss,
    pub standardize: bool,
}

/// Writes `n` task files (`label,features...` per row, no header) and `manifest.json`.
pub fn shard(dataset: &Path, out_dir: &Path, opts: &ShardOptions) -> Result<Manifest> {
    let mut data = load_dataset(dataset, opts.label_column)?;
    let n = opts.params.n();
    if data.rows() < n {
        return Err(Error::Usage(format!(
            "dataset has {} rows, need at least n = {n}",
            data.rows()
        )));
    }
    if opts.standardize {
        data.standardize();
    }
    let per = data.rows() / n;
    let dropped = data.rows() - per * n;
    if dropped > 0 {
        log::warn!("dropping {dropped} trailing rows so that {n} tasks get equal shares");
    }
    for i in 0..n {
        let mut s = String::new();
        for r in i * per..(i + 1) * per {
            let _ = write!(s, "{}", data.label(r));
            for v in data.row(r) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        write(&out_dir.join(task_file(i)), &s)?;
    }
    let g = AssignmentMatrix::from_params(opts.params);
    let manifest = Manifest {
        n,
        k: opts.params.k(),
        c: opts.params.c(),
        ell: opts.params.ell(),
        cols: data.cols(),
        rows_per_task: per,
        dropped_rows: dropped,
        loss: opts.loss,
        standardized: opts.standardize,
        blocks: (0..opts.params.blocks())
            .map(|b| BlockEntry {
                block: b,
                tasks: g.block_tasks(b).collect(),
                workers: g.block_workers(b).collect(),
            })
            .collect(),
    };
    write(
        &out_dir.join(MANIFEST),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::file(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Objective over the given consecutive tasks, keeping global task numbering.
pub fn load_tasks(dir: &Path, manifest: &Manifest, tasks: &[usize]) -> Result<DataObjective> {
    let Some(&first) = tasks.first() else {
        return Err(Error::Usage("no tasks requested".into()));
    };
    if tasks
        .iter()
        .enumerate()
        .any(|(i, &t)| t != first + i || t >= manifest.n)
    {
        return Err(Error::Usage(format!(
            "tasks {tasks:?} are not a consecutive range below n = {}",
            manifest.n
        )));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for &t in tasks {
        let path = dir.join(task_file(t));
        let text = fs::read_to_string(&path).map_err(|e| Error::file(format!("reading {}", path.display()), e))?;
        for line in text.lines() {
            let mut fields = line.split(',').map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Usage(format!("{}: '{f}' is not a number", path.display())))
            });
            labels.push(fields.next().transpose()?.unwrap_or(f64::NAN));
            let row = fields.collect::<Result<Vec<_>>>()?;
            if row.len() != manifest.cols {
                return Err(Error::Usage(format!(
                    "{}: expected {} features per row",
                    path.display(),
                    manifest.cols
                )));
            }
            features.extend(row);
        }
    }
    let data = Dataset::new(features, labels, manifest.cols)?;
    Ok(DataObjective::partition(
        data,
        manifest.loss,
        manifest.rows_per_task,
        first,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gradcode_core::optim::{make_least_squares, Objective};
    use std::io::Write;

    fn csv(rows: usize) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x1,x2,y").unwrap();
        for r in 0..rows {
            writeln!(f, "{},{},{}", r as f64 * 0.1, 1.0 / (r + 1) as f64, r % 2).unwrap();
        }
        f
    }

    fn opts(n: usize, k: usize, c: usize) -> ShardOptions<'static> {
        ShardOptions {
            label_column: "y",
            params: CodeParams::new(n, k, c).unwrap(),
            loss: Loss::LeastSquares,
            standardize: true,
        }
    }

    #[test]
    fn shards_reload_to_the_same_gradients() {
        let f = csv(9);
        let dir = tempfile::tempdir().unwrap();
        let m = shard(f.path(), dir.path(), &opts(4, 4, 2)).unwrap();
        assert_eq!((m.rows_per_task, m.dropped_rows), (2, 1));
        assert_eq!(m.blocks[1].tasks, [2, 3]);
        assert_eq!(m.blocks[1].workers, [2, 3]);

        let mut data = load_dataset(f.path(), "y").unwrap();
        data.standardize();
        let (full, _) = make_least_squares(data).unwrap().with_tasks(4).unwrap();
        let part = load_tasks(dir.path(), &read_manifest(dir.path()).unwrap(), &[2, 3]).unwrap();
        let x = [0.3, -0.7];
        for i in 2..4 {
            assert_eq!(full.component_gradient(i, &x), part.component_gradient(i, &x));
        }
    }

    #[test]
    fn single_row_shards_and_idempotence() {
        let f = csv(4);
        let dir = tempfile::tempdir().unwrap();
        shard(f.path(), dir.path(), &opts(4, 4, 1)).unwrap();
        let first: Vec<_> = (0..4)
            .map(|i| fs::read(dir.path().join(task_file(i))).unwrap())
            .collect();
        assert!(first.iter().all(|b| b.iter().filter(|&&c| c == b'\n').count() == 1));
        let manifest = fs::read(dir.path().join(MANIFEST)).unwrap();
        shard(f.path(), dir.path(), &opts(4, 4, 1)).unwrap();
        for i in 0..4 {
            assert_eq!(fs::read(dir.path().join(task_file(i))).unwrap(), first[i]);
        }
        assert_eq!(fs::read(dir.path().join(MANIFEST)).unwrap(), manifest);
    }

    #[test]
    fn too_few_rows() {
        let f = csv(3);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            shard(f.path(), dir.path(), &opts(4, 4, 1)),
            Err(Error::Usage(_))
        ));
    }
}
