//! Closed-form analysis of approximate gradient codes.
//!
//! * coverage moments `p = P[block uncovered]` and
//!   `q = P[at least one of two blocks uncovered]` for a uniformly random set of
//!   `r` non-stragglers,
//! * convergence envelopes for the two analysed step sizes,
//! * the noise floor and time-to-accuracy bounds.
//!
//! Logarithms are natural throughout.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// `p` and `q` as reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub p: f64,
    pub q: f64,
}

impl Moments {
    pub const ZERO: Moments = Moments { p: 0.0, q: 0.0 };

    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            bail!(Domain, "moments must lie in [0, 1] (p={p}, q={q})");
        }
        Ok(Self { p, q })
    }
}

/// `p` and `q` as exact fractions over the common denominator `C(k, r)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentRatios {
    /// `C(k - ell, r)`
    pub p_num: BigUint,
    /// `2 C(k - ell, r) - C(k - 2 ell, r)`
    pub q_num: BigUint,
    /// `C(k, r)`
    pub den: BigUint,
}

impl MomentRatios {
    pub fn to_moments(&self) -> Moments {
        Moments {
            p: ratio_to_f64(&self.p_num, &self.den),
            q: ratio_to_f64(&self.q_num, &self.den),
        }
    }
}

/// `C(a, b)`, with `C(a, b) = 0` whenever `a < b` or `a < 0`.
pub fn binomial(a: i64, b: i64) -> BigUint {
    if b < 0 || a < 0 || a < b {
        return BigUint::zero();
    }
    let b = b.min(a - b) as u64;
    let a = a as u64;
    let mut acc = BigUint::one();
    for i in 1..=b {
        acc *= a - b + i;
        acc /= i;
    }
    acc
}

/// Converts `num / den` to `f64` without overflowing either side.
fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = den.bits().max(num.bits()).saturating_sub(1000);
    let (n, d) = if shift > 0 {
        (num >> shift, den >> shift)
    } else {
        (num.clone(), den.clone())
    };
    // both now fit in f64's exponent range
    n.to_f64().unwrap_or(f64::INFINITY) / d.to_f64().unwrap_or(f64::INFINITY)
}

/// Exact `p` and `q` fractions for `k` workers, repetition `ell`, and `r` non-stragglers.
pub fn moment_ratios(k: u64, ell: u64, r: u64) -> Result<MomentRatios> {
    if r == 0 || r > k {
        bail!(Input, "need 1 <= r <= k (r={r}, k={k})");
    }
    if ell == 0 || ell > k {
        bail!(Input, "need 1 <= ell <= k (ell={ell}, k={k})");
    }
    let (k, ell, r) = (k as i64, ell as i64, r as i64);
    let single = binomial(k - ell, r);
    let both = binomial(k - 2 * ell, r);
    Ok(MomentRatios {
        q_num: &single + &single - both,
        p_num: single,
        den: binomial(k, r),
    })
}

/// `p = C(k-ell, r) / C(k, r)`, `q = (2 C(k-ell, r) - C(k-2ell, r)) / C(k, r)`.
pub fn moments_exact(k: u64, ell: u64, r: u64) -> Result<Moments> {
    Ok(moment_ratios(k, ell, r)?.to_moments())
}

/// `e^{-c r / n}`, an upper bound on `p`.
pub fn p_upper_bound(n: u64, c: u64, r: u64) -> f64 {
    libm::exp(-(c as f64) * r as f64 / n as f64)
}

/// PL constant, smoothness constant and per-component gradient bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub mu: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl ProblemConstants {
    pub fn new(mu: f64, beta: f64, sigma: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= beta && beta.is_finite()) {
            bail!(Params, "need 0 < mu <= beta < inf (mu={mu}, beta={beta})");
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            bail!(Params, "sigma must be finite and non-negative, got {sigma}");
        }
        Ok(Self { mu, beta, sigma })
    }

    /// `kappa = mu / beta`.
    pub fn kappa(&self) -> f64 {
        self.mu / self.beta
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }
}

/// `Delta_T <= contraction^T * Delta_0 + floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    pub contraction: f64,
    pub floor: f64,
}

impl RateBound {
    pub fn eval(&self, t: u64, delta0: f64) -> f64 {
        powi(self.contraction, t) * delta0 + self.floor
    }
}

fn powi(base: f64, exp: u64) -> f64 {
    libm::pow(base, exp as f64)
}

fn check_p(m: &Moments) -> Result<f64> {
    if m.p >= 1.0 {
        bail!(Domain, "p = {} leaves no block covered; the bound is undefined", m.p);
    }
    Ok(1.0 - m.p)
}

/// Envelope for step size `1/beta` applied to the debiased gradient.
pub fn unit_step_bound(k: &ProblemConstants, m: &Moments, n: u64, c: u64) -> Result<RateBound> {
    let one_minus_p = check_p(m)?;
    let (nf, cf) = (n as f64, c as f64);
    let floor = k.sigma * k.sigma / (2.0 * one_minus_p * k.mu) * (m.p + (m.q - m.p) * cf / (one_minus_p * nf));
    Ok(RateBound {
        contraction: 1.0 - k.kappa(),
        floor,
    })
}

/// Envelope for step size `(1-p)/beta` applied to the debiased gradient.
pub fn scaled_step_bound(k: &ProblemConstants, m: &Moments, n: u64, c: u64) -> Result<RateBound> {
    let one_minus_p = check_p(m)?;
    let (nf, cf) = (n as f64, c as f64);
    let floor = (m.q - m.p) * cf * k.sigma * k.sigma / (2.0 * one_minus_p * k.mu * nf);
    Ok(RateBound {
        contraction: 1.0 - one_minus_p * k.kappa(),
        floor,
    })
}

pub fn convergence_bound_unit_step(
    k: &ProblemConstants,
    m: &Moments,
    n: u64,
    c: u64,
    t: u64,
    delta0: f64,
) -> Result<f64> {
    Ok(unit_step_bound(k, m, n, c)?.eval(t, delta0))
}

pub fn convergence_bound_scaled_step(
    k: &ProblemConstants,
    m: &Moments,
    n: u64,
    c: u64,
    t: u64,
    delta0: f64,
) -> Result<f64> {
    Ok(scaled_step_bound(k, m, n, c)?.eval(t, delta0))
}

/// Envelope with `p` replaced by `e^{-cr/n}` and `q` by `2p` (step `1/beta`).
///
/// Valid when `c >= n ln 2 / r`, i.e. `e^{-cr/n} <= 1/2`.
pub fn simplified_unit_step_bound(k: &ProblemConstants, n: u64, c: u64, r: u64) -> RateBound {
    let e = p_upper_bound(n, c, r);
    let s2 = k.sigma * k.sigma;
    RateBound {
        contraction: 1.0 - k.kappa(),
        floor: e * s2 / k.mu + 4.0 * c as f64 * e * s2 / (k.mu * n as f64),
    }
}

/// Envelope with `p` replaced by `e^{-cr/n}` and `q` by `2p` (step `(1-p)/beta`).
pub fn simplified_scaled_step_bound(k: &ProblemConstants, n: u64, c: u64, r: u64) -> RateBound {
    let e = p_upper_bound(n, c, r);
    RateBound {
        contraction: 1.0 - (1.0 - e) * k.kappa(),
        floor: 2.0 * c as f64 * e * k.sigma * k.sigma / (k.mu * n as f64),
    }
}

/// Whether the simplified envelopes apply (`c >= n ln 2 / r`).
pub fn simplified_bounds_apply(n: u64, c: u64, r: u64) -> bool {
    c as f64 >= n as f64 * core::f64::consts::LN_2 / r as f64
}

/// `eps_0 = 3 c e^{-cr/n} sigma^2 / (mu n)`.
pub fn noise_floor(k: &ProblemConstants, n: u64, c: u64, r: u64) -> f64 {
    3.0 * c as f64 * p_upper_bound(n, c, r) * k.sigma * k.sigma / (k.mu * n as f64)
}

/// How many iterations a linear rate needs to reach a target accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationRule {
    /// Exact gradients: `N >= log(Delta_0/eps) / log(1/(1-kappa))`.
    Exact,
    /// Approximate code with `eta = 1 - e^{-c delta}`:
    /// `N >= log(3 Delta_0/eps) / log(1/(1-eta kappa))`.
    Approximate { eta: f64 },
}

/// Smallest integer `N` satisfying the rule's inequality.
pub fn iterations_to_eps(kappa: f64, rule: IterationRule, delta0: f64, eps: f64) -> Result<u64> {
    if !(eps > 0.0) {
        bail!(Domain, "target accuracy must be positive, got {eps}");
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        bail!(Domain, "kappa must lie in (0, 1], got {kappa}");
    }
    let (factor, rate) = match rule {
        IterationRule::Exact => (1.0, kappa),
        IterationRule::Approximate { eta } => {
            if !(eta > 0.0 && eta <= 1.0) {
                bail!(Domain, "eta must lie in (0, 1], got {eta}");
            }
            (3.0, eta * kappa)
        }
    };
    let num = libm::log(factor * delta0 / eps);
    if num <= 0.0 || rate >= 1.0 {
        return Ok(0);
    }
    let den = -libm::log1p(-rate);
    // absorb rounding when the ratio is an integer
    Ok(libm::ceil(num / den - 1e-9).max(0.0) as u64)
}

/// Training method compared in the runtime analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Uncoded,
    Egc,
    Agc,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Uncoded => "uncoded",
            Method::Egc => "egc",
            Method::Agc => "agc",
        }
    }
}

impl core::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "uncoded" => Method::Uncoded,
            "egc" => Method::Egc,
            "agc" => Method::Agc,
            other => bail!(Input, "unknown method '{other}' (expected uncoded, egc or agc)"),
        })
    }
}

/// Upper bound on the expected round time with `lambda = 1/c`:
///
/// * uncoded: `(c log n + c + 1) / n`
/// * egc: `(c log(n/c) + c + 1) / n`
/// * agc: `(c^2 log(1/(1-delta)) + c^2 + c) / n`
pub fn per_iteration_time_bound(method: Method, n: u64, c: u64, delta: f64) -> Result<f64> {
    if n == 0 || c == 0 || n % c != 0 {
        bail!(Input, "c must divide n (n={n}, c={c})");
    }
    let (nf, cf) = (n as f64, c as f64);
    Ok(match method {
        Method::Uncoded => (cf * libm::log(nf) + cf + 1.0) / nf,
        Method::Egc => (cf * libm::log(nf / cf) + cf + 1.0) / nf,
        Method::Agc => {
            if !(delta > 0.0 && delta < 1.0) {
                bail!(Domain, "agc needs delta in (0, 1), got {delta}");
            }
            (cf * cf * libm::log(1.0 / (1.0 - delta)) + cf * cf + cf) / nf
        }
    })
}

/// Bound on the expected time to reach `eps`: iterations times the round-time bound.
///
/// Uncoded and EGC use step `1/beta`; AGC uses `(1-p)/beta` with `r = delta n`.
pub fn expected_time_to_eps(
    method: Method,
    k: &ProblemConstants,
    n: u64,
    c: u64,
    delta: f64,
    delta0: f64,
    eps: f64,
) -> Result<f64> {
    let per_iter = per_iteration_time_bound(method, n, c, delta)?;
    let rule = match method {
        Method::Uncoded | Method::Egc => IterationRule::Exact,
        Method::Agc => {
            let cd = c as f64 * delta;
            let eps0 = 3.0 * c as f64 * libm::exp(-cd) * k.sigma * k.sigma / (k.mu * n as f64);
            if eps < eps0 {
                bail!(
                    Domain,
                    "eps = {eps} is below the noise floor eps_0 = {eps0}; the agc bound does not reach it"
                );
            }
            IterationRule::Approximate {
                eta: 1.0 - libm::exp(-cd),
            }
        }
    };
    Ok(iterations_to_eps(k.kappa(), rule, delta0, eps)? as f64 * per_iter)
}
