//! First and second moments of the recovered gradient under random stragglers.

use gradcode_core::analysis::moments_exact;
use gradcode_core::codes::{build_frc, combine, coverage};
use gradcode_core::linalg;
use gradcode_core::optim::{block_sum, make_quadratic, Objective};
use gradcode_core::rng;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn recovered_gradient_moments() {
    let (n, c, dim, r) = (30usize, 3usize, 10usize, 10usize);
    let q = make_quadratic(n, dim, 5.0, 21).unwrap();
    let g = build_frc(n, n, c).unwrap();
    let m = moments_exact(n as u64, c as u64, r as u64).unwrap();
    let mut rng = rng::stream(4, rng::MONTE_CARLO_STREAM);
    let x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let sums: Vec<Vec<f64>> = (0..n / c).map(|b| block_sum(&q, b, &x, c).unwrap()).collect();
    let grad = q.full_gradient(&x);

    let draws = 100_000;
    let mut mean = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let mut norms = Vec::with_capacity(draws);
    for _ in 0..draws {
        let s = index::sample(&mut rng, n, r).into_vec();
        let v = combine(&sums, &coverage(&g, &s).unwrap(), n).unwrap();
        for j in 0..dim {
            mean[j] += v[j];
            sq[j] += v[j] * v[j];
        }
        norms.push(linalg::dot(&v, &v));
    }
    let d = draws as f64;
    for j in 0..dim {
        let mu = mean[j] / d;
        let se = ((sq[j] / d - mu * mu) / d).sqrt();
        let expect = (1.0 - m.p) * grad[j];
        assert!((mu - expect).abs() < 4.0 * se, "coordinate {j}: {mu} vs {expect}");
    }
    let nm = norms.iter().sum::<f64>() / d;
    let se = (norms.iter().map(|v| (v - nm) * (v - nm)).sum::<f64>() / (d - 1.0) / d).sqrt();
    let blocks: f64 = sums.iter().map(|s| linalg::dot(s, s)).sum();
    let expect = (1.0 - m.q) * linalg::dot(&grad, &grad) + (m.q - m.p) / (n * n) as f64 * blocks;
    assert!((nm - expect).abs() < 4.0 * se, "second moment {nm} vs {expect}");
}
