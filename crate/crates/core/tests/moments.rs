//! Coverage moments against brute-force enumeration and sampling.

use gradcode_core::analysis::{binomial, moment_ratios, moments_exact, p_upper_bound};
use gradcode_core::codes::{build_frc, coverage};
use gradcode_core::rng;
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::seq::index;

/// Counts `r`-subsets of `k` workers leaving block 0 uncovered, and leaving
/// block 0 or block 1 uncovered, with blocks of `ell` consecutive workers.
fn enumerate(k: usize, ell: usize, r: usize) -> (u64, u64, u64) {
    let (mut total, mut p, mut q) = (0, 0, 0);
    let block0 = (1u32 << ell) - 1;
    let block1 = block0 << ell;
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize != r {
            continue;
        }
        total += 1;
        let a = mask & block0 == 0;
        let b = if 2 * ell <= k { mask & block1 == 0 } else { a };
        p += a as u64;
        q += (a || b) as u64;
    }
    (total, p, q)
}

#[test]
fn moments_match_enumeration_up_to_fourteen_workers() {
    for k in 1..=14usize {
        for ell in (1..=k).filter(|l| k % l == 0) {
            for r in 1..=k {
                let (total, p, q) = enumerate(k, ell, r);
                let ratios = moment_ratios(k as u64, ell as u64, r as u64).unwrap();
                // cross-multiplied, so a reduced fraction would also pass
                assert_eq!(
                    &ratios.p_num * BigUint::from(total),
                    BigUint::from(p) * &ratios.den,
                    "p at k={k} ell={ell} r={r}"
                );
                if 2 * ell <= k {
                    assert_eq!(
                        &ratios.q_num * BigUint::from(total),
                        BigUint::from(q) * &ratios.den,
                        "q at k={k} ell={ell} r={r}"
                    );
                }
            }
        }
    }
}

#[test]
fn binomial_values() {
    assert_eq!(binomial(5, 2), BigUint::from(10u32));
    assert_eq!(binomial(2, 5), BigUint::from(0u32));
    assert_eq!(binomial(-1, 0), BigUint::from(0u32));
    assert_eq!(binomial(7, 0), BigUint::from(1u32));
    // Pascal's rule
    for a in 1..40 {
        for b in 1..a {
            assert_eq!(binomial(a, b), binomial(a - 1, b - 1) + binomial(a - 1, b));
        }
    }
}

#[test]
fn sampled_indicators_match_moments() {
    let (k, ell, r) = (30usize, 3usize, 10usize);
    let g = build_frc(k, k, ell).unwrap();
    let m = moments_exact(k as u64, ell as u64, r as u64).unwrap();
    let draws = 100_000;
    let mut rng = rng::stream(11, rng::MONTE_CARLO_STREAM);
    let (mut y0, mut y01) = (0.0, 0.0);
    for _ in 0..draws {
        let s = index::sample(&mut rng, k, r).into_vec();
        let y = coverage(&g, &s).unwrap();
        y0 += y.is_covered(0) as u8 as f64;
        y01 += (y.is_covered(0) && y.is_covered(1)) as u8 as f64;
    }
    let n = draws as f64;
    for (obs, expect) in [(y0 / n, 1.0 - m.p), (y01 / n, 1.0 - m.q)] {
        let se = (expect * (1.0 - expect) / n).sqrt();
        assert!((obs - expect).abs() < 4.0 * se, "observed {obs}, expected {expect}");
    }
}

fn params() -> impl Strategy<Value = (u64, u64, u64, u64)> {
    // (n, k, c, r) with n = k and c | n
    (2u64..80)
        .prop_flat_map(|n| {
            let divisors: Vec<u64> = (1..=n).filter(|c| n % c == 0).collect();
            (Just(n), proptest::sample::select(divisors), 1..=n)
        })
        .prop_map(|(n, c, r)| (n, n, c, r))
}

proptest! {
    #[test]
    fn q_lies_between_p_and_two_p((_n, k, c, r) in params()) {
        let m = moments_exact(k, c, r).unwrap();
        prop_assert!(m.p >= 0.0 && m.q <= 1.0);
        prop_assert!(m.p <= m.q + 1e-15);
        prop_assert!(m.q <= 2.0 * m.p + 1e-15);
    }

    #[test]
    fn p_never_exceeds_exponential_bound((n, k, c, r) in params()) {
        let m = moments_exact(k, c, r).unwrap();
        prop_assert!(m.p <= p_upper_bound(n, c, r));
    }

    #[test]
    fn enough_finishers_always_cover((n, k, c, _r) in params(), seed in any::<u64>()) {
        let g = build_frc(n as usize, k as usize, c as usize).unwrap();
        let ell = g.params().ell();
        let r = k as usize - ell + 1;
        prop_assert_eq!(moments_exact(k, ell as u64, r as u64).unwrap().p, 0.0);
        let mut rng = rng::stream(seed, 0);
        let s = index::sample(&mut rng, k as usize, r).into_vec();
        prop_assert!(coverage(&g, &s).unwrap().is_full());
    }
}

#[test]
fn exponential_bound_on_wider_codes() {
    // n < k: ell = kc/n > c
    for (n, k, c) in [(10u64, 20u64, 2u64), (12, 36, 3), (8, 32, 4)] {
        let ell = k * c / n;
        for r in 1..=k {
            let m = moments_exact(k, ell, r).unwrap();
            // with ell = kc/n: p <= e^{-r ell / k}
            assert!(m.p <= (-(r as f64) * ell as f64 / k as f64).exp() + 1e-15);
        }
    }
}
