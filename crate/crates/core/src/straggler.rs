//! Shifted-exponential straggler model and the expected runtimes it implies.
//!
//! Time is measured in units of one uncoded full-gradient job. A worker that
//! holds a `1/B` share of the job finishes after `1/B + Exp(B * lambda)`.
//!
//! The closed-form runtimes assume `n = k`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::rng;

/// Shifted-exponential completion time of a `1/B` share of the job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    lambda: f64,
    blocks: usize,
}

impl DelayModel {
    /// `lambda` may be `+inf`, which removes the exponential tail.
    pub fn new(lambda: f64, blocks: usize) -> Result<Self> {
        if lambda.is_nan() || lambda <= 0.0 {
            bail!(Params, "straggling parameter must be positive, got {lambda}");
        }
        if blocks == 0 {
            bail!(Params, "number of task groups B must be at least 1");
        }
        Ok(Self { lambda, blocks })
    }

    /// Model for workers that each hold `c` of `n` tasks (`B = n / c`).
    pub fn for_load(lambda: f64, n: usize, c: usize) -> Result<Self> {
        if c == 0 || n % c != 0 {
            bail!(Params, "c must divide n (n={n}, c={c})");
        }
        Self::new(lambda, n / c)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Deterministic part of the runtime, `1/B`.
    pub fn shift(&self) -> f64 {
        1.0 / self.blocks as f64
    }

    /// Rate of the exponential tail, `B * lambda`.
    pub fn rate(&self) -> f64 {
        self.blocks as f64 * self.lambda
    }

    /// `P[T <= t]`.
    pub fn cdf(&self, t: f64) -> f64 {
        let tau = t - self.shift();
        if tau < 0.0 {
            0.0
        } else {
            1.0 - libm::exp(-self.rate() * tau)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.shift() + exponential(self.rate(), rng)
    }
}

/// One `Exp(rate)` draw; `rate = inf` gives 0.
pub(crate) fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate.is_infinite() {
        return 0.0;
    }
    Exp::new(rate).expect("positive rate").sample(rng)
}

/// Completion times of `k` workers together with the seed that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySample {
    pub times: Vec<f64>,
    pub seed: u64,
}

/// `k` i.i.d. completion times drawn from `model` using the Monte-Carlo stream of `seed`.
pub fn sample_times(model: &DelayModel, k: usize, seed: u64) -> DelaySample {
    let mut rng = rng::stream(seed, rng::MONTE_CARLO_STREAM);
    DelaySample {
        times: sample_times_with(model, k, &mut rng),
        seed,
    }
}

pub fn sample_times_with<R: Rng + ?Sized>(model: &DelayModel, k: usize, rng: &mut R) -> Vec<f64> {
    (0..k).map(|_| model.sample(rng)).collect()
}

/// `H_m = sum_{i=1}^m 1/i`, with `H_0 = 0`.
pub fn harmonic(m: u64) -> f64 {
    // smallest terms first
    (1..=m).rev().map(|i| 1.0 / i as f64).sum()
}

/// `E[Z_(r)] = (H_k - H_{k-r}) / lambda` for the `r`-th smallest of `k` i.i.d. `Exp(lambda)`.
pub fn expected_order_statistic(k: u64, r: u64, lambda: f64) -> Result<f64> {
    if r == 0 || r > k {
        bail!(Input, "order statistic index must satisfy 1 <= r <= k (r={r}, k={k})");
    }
    if lambda.is_nan() || lambda <= 0.0 {
        bail!(Input, "lambda must be positive, got {lambda}");
    }
    Ok(harmonic_diff(k, k - r) / lambda)
}

/// `H_hi - H_lo` summed directly over `lo+1..=hi`.
fn harmonic_diff(hi: u64, lo: u64) -> f64 {
    ((lo + 1)..=hi).rev().map(|i| 1.0 / i as f64).sum()
}

/// Expected round time of uncoded GD with `n = k` workers: `1/n + H_n / (lambda n)`.
pub fn expected_runtime_uncoded(n: u64, lambda: f64) -> f64 {
    let nf = n as f64;
    1.0 / nf + harmonic(n) / (lambda * nf)
}

/// Exact-code round time in the closed form `c/n + (H_n - H_c) / (lambda n)`.
///
/// This is the published expression. The mean of "max over blocks of the min
/// over replicas" is [`expected_runtime_egc_exact`]; the printed form is
/// always smaller.
pub fn expected_runtime_egc(n: u64, c: u64, lambda: f64) -> Result<f64> {
    check_divides(n, c)?;
    let nf = n as f64;
    Ok(c as f64 / nf + harmonic_diff(n, c) / (lambda * nf))
}

/// Mean of the exact-code round time: `c/n + H_{n/c} / (lambda n)`.
///
/// Each block finishes at `c/n` plus the minimum of `c` replicas' `Exp(lambda n / c)`
/// tails, which is `Exp(lambda n)`; the round ends at the last of `n/c` such blocks.
pub fn expected_runtime_egc_exact(n: u64, c: u64, lambda: f64) -> Result<f64> {
    check_divides(n, c)?;
    let nf = n as f64;
    Ok(c as f64 / nf + harmonic(n / c) / (lambda * nf))
}

/// Upper bound on the approximate-code round time: `c/n + c (H_n - H_{n-r}) / (lambda n)`.
pub fn expected_runtime_agc(n: u64, c: u64, r: u64, lambda: f64) -> Result<f64> {
    check_divides(n, c)?;
    if r == 0 || r > n {
        bail!(Input, "r must satisfy 1 <= r <= n (r={r}, n={n})");
    }
    let nf = n as f64;
    let cf = c as f64;
    Ok(cf / nf + cf / (lambda * nf) * harmonic_diff(n, n - r))
}

fn check_divides(n: u64, c: u64) -> Result<()> {
    if c == 0 || n == 0 || n % c != 0 {
        bail!(Input, "c must divide n (n={n}, c={c})");
    }
    Ok(())
}
