//! Oracle suites behind `gradcode verify`.

use std::fmt;
use std::str::FromStr;

use gradcode_core::analysis::{moment_ratios, moments_exact, p_upper_bound, simplified_scaled_step_bound};
use gradcode_core::codes::{build_frc, coverage, AssignmentMatrix, CodeParams};
use gradcode_core::optim::{make_quadratic, Objective, StepPolicy};
use gradcode_core::rng;
use gradcode_core::simulator::{agc_threshold, resolve_wait, run_experiment, DelaySource, Init, RunSpec, WaitPolicy};
use gradcode_core::straggler::{
    expected_runtime_agc, expected_runtime_egc, expected_runtime_egc_exact, expected_runtime_uncoded,
};
use num_bigint::BigUint;
use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Moments,
    Convergence,
    Runtime,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Moments, Suite::Convergence, Suite::Runtime];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Moments => "moments",
            Suite::Convergence => "convergence",
            Suite::Runtime => "runtime",
        }
    }

    /// Smallest accepted budget, and the default.
    pub fn budget_range(self) -> (u64, u64) {
        match self {
            Suite::Moments => (1_000, 100_000),
            Suite::Convergence => (10, 50),
            Suite::Runtime => (10_000, 1_000_000),
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moments" => Ok(Suite::Moments),
            "convergence" => Ok(Suite::Convergence),
            "runtime" => Ok(Suite::Runtime),
            _ => Err(Error::Usage(format!(
                "unknown suite '{s}' (moments, convergence, runtime)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Draws, seeds or rounds depending on the suite; `None` uses the default.
    pub budget: Option<u64>,
    pub seed: u64,
    /// Shrinks the convergence envelope so the suite must fail (negative control).
    pub corrupt_bound: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub predicted: f64,
    pub std_err: Option<f64>,
    pub pass: bool,
    /// Reported but not counted toward the verdict.
    pub informational: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match (self.informational, self.pass) {
            (true, _) => "INFO",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        write!(
            f,
            "{verdict} {}: observed {:.6e}, predicted {:.6e}",
            self.name, self.observed, self.predicted
        )?;
        if let Some(se) = self.std_err {
            write!(f, ", se {se:.3e}")?;
        }
        Ok(())
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let (min, default) = suite.budget_range();
    let budget = opts.budget.unwrap_or(default);
    if budget < min {
        return Err(Error::Usage(format!(
            "{} suite needs a budget of at least {min}, got {budget}",
            suite.name()
        )));
    }
    match suite {
        Suite::Moments => moments_suite(budget, opts.seed),
        Suite::Convergence => convergence_suite(budget, opts),
        Suite::Runtime => runtime_suite(budget, opts.seed),
    }
}

/// Subsets of size `r` out of `k` workers in blocks of `ell`: how many leave block 0
/// uncovered, and how many leave block 0 or block 1 uncovered.
pub fn enumerate_uncovered(k: usize, ell: usize, r: usize) -> (u64, u64, u64) {
    let mut total = 0;
    let mut p = 0;
    let mut q = 0;
    let b0 = (1u64 << ell) - 1;
    let b1 = b0 << ell;
    for mask in 0u64..(1 << k) {
        if mask.count_ones() as usize != r {
            continue;
        }
        total += 1;
        let u0 = mask & b0 == 0;
        let u1 = 2 * ell <= k && mask & b1 == 0;
        p += u0 as u64;
        q += (u0 || u1) as u64;
    }
    (total, p, q)
}

fn moments_suite(draws: u64, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let mut cases = 0u64;
    let mut mismatches = 0u64;
    for k in 1..=12usize {
        for ell in (1..=k).filter(|l| k % l == 0) {
            for r in 1..=k {
                let (total, p, q) = enumerate_uncovered(k, ell, r);
                let m = moment_ratios(k as u64, ell as u64, r as u64)?;
                cases += 1;
                let p_ok = &m.p_num * BigUint::from(total) == BigUint::from(p) * &m.den;
                let q_ok = 2 * ell > k || &m.q_num * BigUint::from(total) == BigUint::from(q) * &m.den;
                mismatches += (!(p_ok && q_ok)) as u64;
            }
        }
    }
    checks.push(Check {
        name: format!("exact p, q vs enumeration over {cases} (k, ell, r) with k <= 12"),
        observed: mismatches as f64,
        predicted: 0.0,
        std_err: None,
        pass: mismatches == 0,
        informational: false,
    });

    let (k, ell, r) = (30usize, 3usize, 10usize);
    let g = build_frc(k, k, ell)?;
    let m = moments_exact(k as u64, ell as u64, r as u64)?;
    let mut rng = rng::stream(seed, rng::MONTE_CARLO_STREAM);
    let (mut y0, mut y01) = (0u64, 0u64);
    for _ in 0..draws {
        let s = index::sample(&mut rng, k, r).into_vec();
        let y = coverage(&g, &s)?;
        y0 += y.is_covered(0) as u64;
        y01 += (y.is_covered(0) && y.is_covered(1)) as u64;
    }
    let d = draws as f64;
    for (name, hits, expect) in [("E[Y_i]", y0, 1.0 - m.p), ("E[Y_i Y_j]", y01, 1.0 - m.q)] {
        let obs = hits as f64 / d;
        let se = (expect * (1.0 - expect) / d).sqrt();
        checks.push(Check {
            name: format!("{name} at k=30, ell=3, r=10 over {draws} draws"),
            observed: obs,
            predicted: expect,
            std_err: Some(se),
            pass: (obs - expect).abs() <= 4.0 * se,
            informational: false,
        });
    }

    let grid = p_bound_grid();
    let violations = grid
        .iter()
        .filter(|&&(n, k, c, r)| {
            let ell = k * c / n;
            moments_exact(k, ell, r)
                .map(|m| m.p > p_upper_bound(n, c, r))
                .unwrap_or(true)
        })
        .count();
    checks.push(Check {
        name: format!("p <= exp(-cr/n) on {} grid points", grid.len()),
        observed: violations as f64,
        predicted: 0.0,
        std_err: None,
        pass: violations == 0,
        informational: false,
    });
    Ok(checks)
}

/// 100 valid `(n, k, c, r)` with `n = k`.
pub fn p_bound_grid() -> Vec<(u64, u64, u64, u64)> {
    let mut grid = Vec::with_capacity(100);
    for n in [12u64, 24, 30, 60, 120] {
        let divisors: Vec<u64> = (1..=n).filter(|c| n % c == 0).collect();
        for &c in divisors.iter().take(5) {
            for frac in [0.1, 0.25, 0.5, 0.9] {
                let r = ((frac * n as f64).round() as u64).clamp(1, n);
                grid.push((n, n, c, r));
            }
        }
    }
    grid
}

/// Mean loss gap across `seeds` runs, with standard errors, per iteration `0..=T`.
pub fn mean_gap_trace(
    objective: &dyn Objective,
    spec: &RunSpec,
    seeds: u64,
    first_seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let runs: Vec<Vec<f64>> = (first_seed..first_seed + seeds)
        .into_par_iter()
        .map(|s| {
            let mut sp = spec.clone();
            sp.seed = s;
            run_experiment(objective, sp).map(|r| r.gaps())
        })
        .collect::<gradcode_core::Result<_>>()?;
    let len = runs[0].len();
    let m = runs.len() as f64;
    let mut mean = vec![0.0; len];
    let mut se = vec![0.0; len];
    for t in 0..len {
        let mu = runs.iter().map(|r| r[t]).sum::<f64>() / m;
        let var = runs.iter().map(|r| (r[t] - mu) * (r[t] - mu)).sum::<f64>() / (m - 1.0).max(1.0);
        mean[t] = mu;
        se[t] = (var / m).sqrt();
    }
    Ok((mean, se))
}

fn convergence_suite(seeds: u64, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let (n, delta, iterations) = (60usize, 0.4, 100u64);
    let q = make_quadratic(n, 10, 5.0, opts.seed)?;
    let k = q
        .constants()
        .ok_or_else(|| Error::Aborted("generated quadratic has no constants".into()))?;
    let mut checks = Vec::new();
    for c in [2usize, 3] {
        let r = agc_threshold(delta, n) as u64;
        let spec = RunSpec {
            params: CodeParams::new(n, n, c)?,
            policy: WaitPolicy::AgcFraction { delta },
            delays: DelaySource::ShiftedExponential { lambda: 1.0 / c as f64 },
            step: StepPolicy::ScaledInvBeta,
            debias: true,
            iterations,
            seed: 0,
            init: Init::Zeros,
        };
        let (mean, se) = mean_gap_trace(&q, &spec, seeds, opts.seed)?;
        let mut bound = simplified_scaled_step_bound(&k, n as u64, c as u64, r);
        if opts.corrupt_bound {
            bound.contraction *= 0.5;
            bound.floor *= 1e-6;
        }
        let delta0 = mean[0];
        let (worst_t, excess) = (0..mean.len())
            .map(|t| (t, mean[t] - 4.0 * se[t] - bound.eval(t as u64, delta0)))
            .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
        checks.push(Check {
            name: format!("mean gap under the scaled-step envelope, n=k={n}, c={c}, delta={delta}, {seeds} seeds (worst t={worst_t})"),
            observed: mean[worst_t],
            predicted: bound.eval(worst_t as u64, delta0),
            std_err: Some(se[worst_t]),
            pass: excess <= 0.0,
            informational: false,
        });
    }
    Ok(checks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats {
    pub mean: f64,
    pub std_err: f64,
    /// Fraction of rounds closed by the finisher count rather than by full coverage.
    pub threshold_fraction: f64,
}

/// Monte-Carlo round times of `policy` under the shifted-exponential model.
pub fn round_time_stats(
    params: CodeParams,
    policy: WaitPolicy,
    lambda: f64,
    rounds: u64,
    seed: u64,
) -> Result<RoundStats> {
    let matrix = AssignmentMatrix::from_params(params);
    let src = DelaySource::ShiftedExponential { lambda };
    let threshold = policy.threshold(params.k());
    let (sum, sq, hits) = (1..=rounds)
        .into_par_iter()
        .map(|t| -> gradcode_core::Result<(f64, f64, u64)> {
            let times = src.round_times(&params, seed, t)?;
            let out = resolve_wait(&matrix, &policy, &times);
            let by_count = out.finished.len() >= threshold && !out.coverage.is_full();
            Ok((out.wall_time, out.wall_time * out.wall_time, by_count as u64))
        })
        .try_reduce(|| (0.0, 0.0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1, a.2 + b.2)))?;
    let m = rounds as f64;
    let mean = sum / m;
    let var = (sq / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok(RoundStats {
        mean,
        std_err: (var / m).sqrt(),
        threshold_fraction: hits as f64 / m,
    })
}

fn relative_check(name: String, stats: RoundStats, predicted: f64, tol: f64) -> Check {
    Check {
        name,
        observed: stats.mean,
        predicted,
        std_err: Some(stats.std_err),
        pass: (stats.mean - predicted).abs() <= tol * predicted,
        informational: false,
    }
}

fn runtime_suite(rounds: u64, seed: u64) -> Result<Vec<Check>> {
    let n = 100usize;
    let mut checks = Vec::new();
    let p1 = CodeParams::new(n, n, 1)?;
    let s = round_time_stats(p1, WaitPolicy::UncodedAll, 1.0, rounds, seed)?;
    checks.push(relative_check(
        format!("uncoded round time, n={n}, lambda=1 (within 2%)"),
        s,
        expected_runtime_uncoded(n as u64, 1.0),
        0.02,
    ));
    for c in [1usize, 2, 4] {
        let lambda = 1.0 / c as f64;
        let params = CodeParams::new(n, n, c)?;
        let s = round_time_stats(params, WaitPolicy::EgcAllBlocks, lambda, rounds, seed)?;
        checks.push(relative_check(
            format!("exact-code round time c/n + H_(n/c)/(lambda n), c={c} (within 2%)"),
            s,
            expected_runtime_egc_exact(n as u64, c as u64, lambda)?,
            0.02,
        ));
        let printed = expected_runtime_egc(n as u64, c as u64, lambda)?;
        checks.push(Check {
            name: format!("exact-code round time vs c/n + (H_n - H_c)/(lambda n), c={c}"),
            observed: s.mean,
            predicted: printed,
            std_err: Some(s.std_err),
            pass: (s.mean - printed).abs() <= 0.02 * printed,
            informational: true,
        });
        for delta in [0.1, 0.3, 0.5] {
            let r = agc_threshold(delta, n);
            let s = round_time_stats(params, WaitPolicy::AgcFraction { delta }, lambda, rounds, seed)?;
            let bound = expected_runtime_agc(n as u64, c as u64, r as u64, lambda)?;
            let tight = s.threshold_fraction > 0.9;
            checks.push(Check {
                name: format!(
                    "approximate-code round time <= bound{}, c={c}, delta={delta} (closed by count in {:.1}% of rounds)",
                    if tight { " and within 5%" } else { "" },
                    100.0 * s.threshold_fraction
                ),
                observed: s.mean,
                predicted: bound,
                std_err: Some(s.std_err),
                pass: s.mean - 4.0 * s.std_err <= bound && (!tight || (bound - s.mean).abs() <= 0.05 * bound),
                informational: false,
            });
        }
    }
    Ok(checks)
}
