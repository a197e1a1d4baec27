//! Central finite-difference checks of every objective's gradient.

use gradcode_core::linalg;
use gradcode_core::optim::{
    make_least_squares, make_logistic, make_quadratic, Dataset, Objective, Quadratic, QuadraticConfig,
};
use gradcode_core::rng;
use rand::Rng;
use rand_distr::StandardNormal;

fn finite_difference<O: Objective>(obj: &O, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[j] += h;
            down[j] -= h;
            (obj.value(&up) - obj.value(&down)) / (2.0 * h)
        })
        .collect()
}

fn check<O: Objective>(name: &str, obj: &O, seed: u64, scale: f64) {
    let mut rng = rng::stream(seed, 0);
    for point in 0..10 {
        let x: Vec<f64> = (0..obj.dim())
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let g = obj.full_gradient(&x);
        let fd = finite_difference(obj, &x, 1e-5);
        let err = linalg::norm(&linalg::sub(&g, &fd)) / linalg::norm(&fd).max(1e-8);
        assert!(err < 1e-5, "{name} point {point}: relative error {err}");
    }
}

fn random_dataset(rows: usize, cols: usize, seed: u64, binary: bool) -> Dataset {
    let mut rng = rng::stream(seed, 1);
    let features: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    let labels = (0..rows)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            if binary {
                (v > 0.0) as u8 as f64
            } else {
                v
            }
        })
        .collect();
    Dataset::new(features, labels, cols).unwrap()
}

#[test]
fn quadratic_gradients() {
    check("quadratic", &make_quadratic(12, 6, 10.0, 3).unwrap(), 1, 1.0);
    let mut cfg = QuadraticConfig::new(30, 10, 4.0, 8);
    cfg.shared_design = true;
    check("shared quadratic", &Quadratic::generate(&cfg).unwrap(), 2, 1.0);
}

#[test]
fn least_squares_gradients() {
    check(
        "least squares",
        &make_least_squares(random_dataset(40, 5, 4, false)).unwrap(),
        3,
        1.0,
    );
    let (grouped, dropped) = make_least_squares(random_dataset(43, 5, 5, false))
        .unwrap()
        .with_tasks(8)
        .unwrap();
    assert_eq!(dropped, 3);
    check("grouped least squares", &grouped, 4, 1.0);
}

#[test]
fn logistic_gradients() {
    check(
        "logistic",
        &make_logistic(random_dataset(40, 5, 6, true)).unwrap(),
        5,
        1.0,
    );
    // large margins exercise the stable softplus branches
    check(
        "logistic far",
        &make_logistic(random_dataset(40, 5, 7, true)).unwrap(),
        6,
        8.0,
    );
}

#[test]
fn block_sums_add_up_to_the_full_gradient() {
    let q = make_quadratic(12, 4, 3.0, 9).unwrap();
    let x = [0.3, -1.0, 2.0, 0.5];
    let mut total = [0.0; 4];
    for b in 0..4 {
        let s = gradcode_core::optim::block_sum(&q, b, &x, 3).unwrap();
        total.iter_mut().zip(&s).for_each(|(t, v)| *t += v / 12.0);
    }
    let full = q.full_gradient(&x);
    assert!(linalg::norm(&linalg::sub(&total, &full)) < 1e-12 * linalg::norm(&full));
}

/// Top Hessian eigenvalue by power iteration on gradient differences.
fn power_iteration<O: Objective>(obj: &O, x: &[f64], iters: usize) -> f64 {
    let g0 = obj.full_gradient(x);
    let mut v = vec![1.0; x.len()];
    let mut lambda = 0.0;
    for _ in 0..iters {
        let nv = linalg::norm(&v);
        v.iter_mut().for_each(|t| *t /= nv);
        let moved: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + b).collect();
        let hv = linalg::sub(&obj.full_gradient(&moved), &g0);
        lambda = linalg::dot(&v, &hv);
        v = hv;
    }
    lambda
}

#[test]
fn least_squares_smoothness_is_the_top_curvature() {
    let obj = make_least_squares(random_dataset(40, 5, 8, false)).unwrap();
    let beta = obj.smoothness().unwrap();
    let top = power_iteration(&obj, &[0.0; 5], 500);
    assert!((beta - top).abs() <= 1e-9 * top, "{beta} vs {top}");
}

#[test]
fn logistic_gradient_is_beta_lipschitz() {
    let obj = make_logistic(random_dataset(40, 5, 9, true)).unwrap();
    let beta = obj.smoothness().unwrap();
    let mut rng = rng::stream(10, 0);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let a: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1).collect();
        let ratio = linalg::norm(&linalg::sub(&obj.full_gradient(&a), &obj.full_gradient(&b)))
            / linalg::norm(&linalg::sub(&a, &b));
        worst = worst.max(ratio);
    }
    assert!(worst <= beta);
    // near the origin every example's curvature is close to 1/4
    assert!(worst > 0.5 * beta, "{worst} vs {beta}");
}
