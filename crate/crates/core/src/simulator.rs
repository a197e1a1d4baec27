//! Deterministic replay of synchronous coded gradient descent.
//!
//! Each round samples one completion time per worker, walks the workers in
//! completion order until the waiting rule fires, keeps the first output per
//! block, combines the covered blocks and takes a gradient step. Everything
//! is a function of the run seed and the round number.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::{moments_exact, Method};
use crate::codes::{self, AssignmentMatrix, BlockCollector, CodeParams, Coverage};
use crate::error::{bail, Result};
use crate::linalg;
use crate::optim::{self, Objective, StepPolicy};
use crate::rng;
use crate::straggler::{exponential, DelayModel};

/// When the master stops waiting for workers in a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WaitPolicy {
    /// Every worker; only valid for `c = 1`, `ell = 1`.
    UncodedAll,
    /// Until every block is covered.
    EgcAllBlocks,
    /// Until `ceil(delta k)` workers finished or every block is covered.
    AgcFraction { delta: f64 },
}

impl WaitPolicy {
    pub fn for_method(method: Method, delta: f64) -> Self {
        match method {
            Method::Uncoded => WaitPolicy::UncodedAll,
            Method::Egc => WaitPolicy::EgcAllBlocks,
            Method::Agc => WaitPolicy::AgcFraction { delta },
        }
    }

    pub fn method(&self) -> Method {
        match self {
            WaitPolicy::UncodedAll => Method::Uncoded,
            WaitPolicy::EgcAllBlocks => Method::Egc,
            WaitPolicy::AgcFraction { .. } => Method::Agc,
        }
    }

    pub fn validate(&self, params: &CodeParams) -> Result<()> {
        match *self {
            WaitPolicy::UncodedAll if params.c() != 1 || params.ell() != 1 => {
                bail!(
                    Params,
                    "uncoded waiting needs c = 1 and k = n (c={}, ell={})",
                    params.c(),
                    params.ell()
                )
            }
            WaitPolicy::AgcFraction { delta } if !(delta > 0.0 && delta <= 1.0) => {
                bail!(Params, "delta must lie in (0, 1], got {delta}")
            }
            _ => Ok(()),
        }
    }

    /// Number of finishers after which the round closes even without full coverage.
    pub fn threshold(&self, k: usize) -> usize {
        match *self {
            WaitPolicy::AgcFraction { delta } => agc_threshold(delta, k),
            _ => k,
        }
    }
}

/// `ceil(delta k)`, tolerant to rounding in the product.
pub fn agc_threshold(delta: f64, k: usize) -> usize {
    let r = libm::ceil(delta * k as f64 - 1e-9) as usize;
    r.clamp(1, k)
}

/// Result of applying a waiting rule to one round's completion times.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitOutcome {
    /// Workers that finished before the rule fired, in completion order.
    pub finished: Vec<usize>,
    /// Completion time of the worker that triggered the rule.
    pub wall_time: f64,
    pub coverage: Coverage,
    /// First finisher of each covered block.
    pub kept: Vec<Option<usize>>,
}

/// Applies `policy` to completion `times` (one per worker). Ties go to the lower worker index.
pub fn resolve_wait(matrix: &AssignmentMatrix, policy: &WaitPolicy, times: &[f64]) -> WaitOutcome {
    let params = matrix.params();
    debug_assert_eq!(times.len(), params.k());
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let threshold = policy.threshold(params.k());

    let mut coverage = Coverage::none(params.blocks());
    let mut kept = vec![None; params.blocks()];
    let mut finished = Vec::with_capacity(threshold);
    let mut wall_time = 0.0;
    for &j in &order {
        finished.push(j);
        wall_time = times[j];
        let b = matrix.block_of(j);
        if coverage.mark(b) {
            kept[b] = Some(j);
        }
        if coverage.is_full() || finished.len() >= threshold {
            break;
        }
    }
    WaitOutcome {
        finished,
        wall_time,
        coverage,
        kept,
    }
}

/// Rows of per-worker completion times, one row per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTable {
    pub rows: Vec<Vec<f64>>,
}

impl DelayTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            bail!(Input, "delay table is empty");
        };
        let k = first.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != k) {
            bail!(
                Input,
                "delay table row {bad} has {} entries, expected {k}",
                rows[bad].len()
            );
        }
        if rows.iter().flatten().any(|v| v.is_nan() || *v < 0.0) {
            bail!(Input, "delay table entries must be non-negative");
        }
        Ok(Self { rows })
    }

    /// Row of round `t` (1-based).
    pub fn round(&self, t: u64) -> Result<&[f64]> {
        match self.rows.get((t as usize).wrapping_sub(1)) {
            Some(r) => Ok(r),
            None => bail!(Input, "delay table has {} rows, round {t} requested", self.rows.len()),
        }
    }
}

/// Where per-round completion times come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelaySource {
    /// `c/n + Exp(lambda n / c)` per worker.
    ShiftedExponential { lambda: f64 },
    /// Compute time `c * task_cost` plus an injected `Exp(lambda)` sleep.
    Injected { lambda: f64, task_cost: f64 },
    /// Fixed times.
    Table(DelayTable),
}

impl DelaySource {
    /// Completion times of all `k` workers in round `t` (1-based).
    pub fn round_times(&self, params: &CodeParams, seed: u64, t: u64) -> Result<Vec<f64>> {
        let k = params.k();
        match self {
            DelaySource::ShiftedExponential { lambda } => {
                let model = DelayModel::for_load(*lambda, params.n(), params.c())?;
                let mut rng = rng::round_stream(seed, t);
                Ok((0..k).map(|_| model.sample(&mut rng)).collect())
            }
            DelaySource::Injected { lambda, task_cost } => {
                if !(*lambda > 0.0) {
                    bail!(Params, "injected delay rate must be positive");
                }
                let base = params.c() as f64 * task_cost;
                let mut rng = rng::round_stream(seed, t);
                Ok((0..k).map(|_| base + exponential(*lambda, &mut rng)).collect())
            }
            DelaySource::Table(table) => {
                let row = table.round(t)?;
                if row.len() != k {
                    bail!(Input, "delay table has {} columns, k = {k}", row.len());
                }
                Ok(row.to_vec())
            }
        }
    }

    /// Injected sleep of worker `j` in round `t`, without the compute part.
    /// Matches the exponential part of [`DelaySource::round_times`] for `Injected`.
    pub fn injected_sleep(lambda: f64, seed: u64, t: u64, j: usize) -> f64 {
        let mut rng = rng::round_stream(seed, t);
        let mut v = 0.0;
        for _ in 0..=j {
            v = exponential(lambda, &mut rng);
        }
        v
    }
}

/// Starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    Zeros,
    /// `N(0, scale^2)` entries from the run seed.
    Gaussian {
        scale: f64,
    },
    Given {
        x: Vec<f64>,
    },
}

impl Init {
    pub fn point(&self, dim: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            Init::Zeros => Ok(vec![0.0; dim]),
            Init::Gaussian { scale } => {
                let mut rng = rng::stream(seed, rng::INIT_STREAM);
                Ok((0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
            }
            Init::Given { x } => {
                if x.len() != dim {
                    bail!(Input, "initial point has dimension {}, objective has {dim}", x.len());
                }
                Ok(x.clone())
            }
        }
    }
}

/// Gradient post-processing and step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRule {
    pub step: StepPolicy,
    /// Divide the recovered gradient by `1 - p`.
    pub debias: bool,
    /// Probability that a block is uncovered under the waiting rule.
    pub p: f64,
    pub beta: Option<f64>,
}

impl UpdateRule {
    /// Returns `(x_next, direction, gamma)` for round `t` (1-based).
    pub fn apply(&self, x: &[f64], g: &[f64], t: u64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let gamma = self.step.step_size(self.beta, self.p, t.saturating_sub(1))?;
        let direction = if self.debias {
            codes::debias(g, self.p)?
        } else {
            g.to_vec()
        };
        let next = optim::gd_step(x, &direction, gamma)?;
        Ok((next, direction, gamma))
    }
}

/// Everything that determines a run, apart from the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub params: CodeParams,
    pub policy: WaitPolicy,
    pub delays: DelaySource,
    pub step: StepPolicy,
    pub debias: bool,
    pub iterations: u64,
    pub seed: u64,
    pub init: Init,
}

/// Per-round trace entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Round number, 1-based.
    pub t: u64,
    pub finished_workers: Vec<usize>,
    pub covered_blocks: usize,
    pub wall_time: f64,
    /// `f(x_t)`, after this round's update.
    pub loss: f64,
    /// `||direction - grad f(x_{t-1})||`.
    pub grad_error: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub spec: RunSpec,
    pub seed: u64,
    pub initial_loss: f64,
    pub optimum_value: Option<f64>,
    pub records: Vec<IterationRecord>,
    pub total_time: f64,
    pub final_loss: f64,
    /// Largest component-gradient norm evaluated during the run.
    pub sigma_observed: f64,
    pub final_x: Vec<f64>,
}

impl RunResult {
    /// `f(x_t) - f*` for `t = 0..=T` (raw loss when `f*` is unknown).
    pub fn gaps(&self) -> Vec<f64> {
        let opt = self.optimum_value.unwrap_or(0.0);
        core::iter::once(self.initial_loss)
            .chain(self.records.iter().map(|r| r.loss))
            .map(|l| l - opt)
            .collect()
    }
}

/// Coded gradient descent over a fixed objective.
pub struct Simulator<'a, O: Objective + ?Sized> {
    objective: &'a O,
    matrix: AssignmentMatrix,
    spec: RunSpec,
    rule: UpdateRule,
}

/// Probability that a block is uncovered under `policy` (0 for exact rules).
pub fn uncovered_probability(params: &CodeParams, policy: &WaitPolicy) -> Result<f64> {
    match policy {
        WaitPolicy::AgcFraction { .. } => {
            let r = policy.threshold(params.k());
            Ok(moments_exact(params.k() as u64, params.ell() as u64, r as u64)?.p)
        }
        _ => Ok(0.0),
    }
}

impl<'a, O: Objective + ?Sized> Simulator<'a, O> {
    pub fn new(objective: &'a O, spec: RunSpec) -> Result<Self> {
        let params = spec.params;
        if objective.components() != params.n() {
            bail!(
                Params,
                "objective has {} components but the code has n = {}",
                objective.components(),
                params.n()
            );
        }
        spec.policy.validate(&params)?;
        let p = uncovered_probability(&params, &spec.policy)?;
        let rule = UpdateRule {
            step: spec.step,
            debias: spec.debias,
            p,
            beta: objective.smoothness(),
        };
        // surface missing constants before the first round
        rule.step.step_size(rule.beta, p, 0)?;
        Ok(Self {
            objective,
            matrix: AssignmentMatrix::from_params(params),
            spec,
            rule,
        })
    }

    pub fn matrix(&self) -> &AssignmentMatrix {
        &self.matrix
    }

    pub fn rule(&self) -> &UpdateRule {
        &self.rule
    }

    pub fn spec(&self) -> &RunSpec {
        &self.spec
    }

    pub fn initial_point(&self) -> Result<Vec<f64>> {
        self.spec.init.point(self.objective.dim(), self.spec.seed)
    }

    /// One round with times drawn from the configured source.
    pub fn run_iteration(&self, x: &[f64], t: u64) -> Result<(Vec<f64>, IterationRecord)> {
        let times = self.spec.delays.round_times(&self.spec.params, self.spec.seed, t)?;
        let (next, record, _) = self.run_iteration_with_times(x, t, &times)?;
        Ok((next, record))
    }

    /// One round with the given completion times. Also returns the largest
    /// component-gradient norm evaluated.
    pub fn run_iteration_with_times(
        &self,
        x: &[f64],
        t: u64,
        times: &[f64],
    ) -> Result<(Vec<f64>, IterationRecord, f64)> {
        let params = &self.spec.params;
        if times.len() != params.k() {
            bail!(Input, "{} completion times for k = {} workers", times.len(), params.k());
        }
        let outcome = resolve_wait(&self.matrix, &self.spec.policy, times);
        let dim = self.objective.dim();
        let mut collector = BlockCollector::new(params.blocks());
        let mut sigma: f64 = 0.0;
        for &j in &outcome.finished {
            let block = self.matrix.block_of(j);
            if collector.coverage().is_covered(block) {
                continue;
            }
            let mut y = vec![0.0; dim];
            sigma = sigma.max(optim::block_sum_tracked(self.objective, block, x, params.c(), &mut y)?);
            collector.offer(j, block, y);
        }
        let g = collector.combine(dim, params.n())?;
        let (next, direction, gamma) = self.rule.apply(x, &g, t)?;
        let truth = self.objective.full_gradient(x);
        let record = IterationRecord {
            t,
            covered_blocks: outcome.coverage.count(),
            wall_time: outcome.wall_time,
            loss: self.objective.value(&next),
            grad_error: linalg::norm(&linalg::sub(&direction, &truth)),
            gamma,
            finished_workers: outcome.finished,
        };
        Ok((next, record, sigma))
    }

    pub fn run(&self) -> Result<RunResult> {
        let mut x = self.initial_point()?;
        let initial_loss = self.objective.value(&x);
        let mut records = Vec::with_capacity(self.spec.iterations as usize);
        let mut sigma: f64 = 0.0;
        for t in 1..=self.spec.iterations {
            let times = self.spec.delays.round_times(&self.spec.params, self.spec.seed, t)?;
            let (next, record, s) = self.run_iteration_with_times(&x, t, &times)?;
            sigma = sigma.max(s);
            x = next;
            records.push(record);
        }
        let total_time = records.iter().map(|r| r.wall_time).sum();
        let final_loss = records.last().map_or(initial_loss, |r| r.loss);
        Ok(RunResult {
            spec: self.spec.clone(),
            seed: self.spec.seed,
            initial_loss,
            optimum_value: self.objective.optimum_value(),
            records,
            total_time,
            final_loss,
            sigma_observed: sigma,
            final_x: x,
        })
    }
}

pub fn run_experiment<O: Objective + ?Sized>(objective: &O, spec: RunSpec) -> Result<RunResult> {
    Simulator::new(objective, spec)?.run()
}

/// Mean and 95% normal confidence band across runs at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let m = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / m;
        let half = if m > 1.0 {
            let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
            1.96 * libm::sqrt(var / m)
        } else {
            0.0
        };
        Band {
            mean,
            lo: mean - half,
            hi: mean + half,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: u64,
    /// Loss gap `f - f*` (raw loss when `f*` is unknown).
    pub gap: Band,
    pub wall_time: Band,
    /// Cumulative time up to and including round `t`.
    pub elapsed: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub runs: usize,
    /// `t = 0..=T`; row 0 is the starting point.
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    /// Mean elapsed time at the first round whose mean gap is at most `threshold`.
    pub fn time_to_threshold(&self, threshold: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.gap.mean <= threshold)
            .map(|r| r.elapsed.mean)
    }

    /// How many times faster `self` reaches `threshold` than `baseline`.
    pub fn speedup_over(&self, baseline: &Summary, threshold: f64) -> Option<f64> {
        let ours = self.time_to_threshold(threshold)?;
        let theirs = baseline.time_to_threshold(threshold)?;
        Some(theirs / ours)
    }
}

/// Per-iteration bands over runs of the same length.
pub fn summarize(label: &str, results: &[RunResult]) -> Result<Summary> {
    let Some(first) = results.first() else {
        bail!(Input, "nothing to summarize");
    };
    let len = first.records.len();
    if results.iter().any(|r| r.records.len() != len) {
        bail!(Input, "runs have different lengths");
    }
    let gaps: Vec<Vec<f64>> = results.iter().map(RunResult::gaps).collect();
    let elapsed: Vec<Vec<f64>> = results
        .iter()
        .map(|r| {
            let mut acc = 0.0;
            core::iter::once(0.0)
                .chain(r.records.iter().map(|rec| {
                    acc += rec.wall_time;
                    acc
                }))
                .collect()
        })
        .collect();
    let rows = (0..=len)
        .map(|t| SummaryRow {
            t: t as u64,
            gap: Band::of(gaps.iter().map(move |g| g[t])),
            wall_time: Band::of(
                results
                    .iter()
                    .map(move |r| if t == 0 { 0.0 } else { r.records[t - 1].wall_time }),
            ),
            elapsed: Band::of(elapsed.iter().map(move |e| e[t])),
        })
        .collect();
    Ok(Summary {
        label: label.into(),
        runs: results.len(),
        rows,
    })
}
