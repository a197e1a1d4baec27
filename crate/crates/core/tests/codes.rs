//! Structural properties of the FRC assignment and gradient combination.

use gradcode_core::codes::{build_frc, combine, combine_received, BlockCollector, Coverage};
use proptest::prelude::*;

fn code() -> impl Strategy<Value = (usize, usize, usize)> {
    // (n, k, c) with c | n and n | kc
    (1usize..8, 1usize..5, 1usize..4).prop_map(|(blocks, c, ell)| (blocks * c, blocks * ell, c))
}

proptest! {
    #[test]
    fn supports_tile_the_tasks((n, k, c) in code()) {
        let g = build_frc(n, k, c).unwrap();
        let ell = g.params().ell();
        let dense = g.dense();
        prop_assert_eq!(dense.len(), n);
        for row in &dense {
            prop_assert_eq!(row.len(), k);
            prop_assert_eq!(row.iter().filter(|&&v| v == 1).count(), ell);
        }
        for j in 0..k {
            prop_assert_eq!(g.support(j).len(), c);
            prop_assert_eq!(g.support(j), g.block_tasks(g.block_of(j)));
            prop_assert!(g.block_workers(g.block_of(j)).contains(&j));
        }
    }

    #[test]
    fn combine_is_linear(
        (n, _k, c) in code(),
        mask in proptest::collection::vec(any::<bool>(), 8),
        a in -3.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let blocks = n / c;
        let y = Coverage::from_indicators(mask[..blocks].to_vec());
        let vecs = |s: u64| -> Vec<Vec<f64>> {
            (0..blocks).map(|b| (0..3).map(|d| ((s + b as u64 * 7 + d) % 13) as f64 - 6.0).collect()).collect()
        };
        let u = vecs(seed);
        let v = vecs(seed + 5);
        let w: Vec<Vec<f64>> = u.iter().zip(&v).map(|(x, z)| x.iter().zip(z).map(|(p, q)| a * p + q).collect()).collect();
        let gu = combine(&u, &y, n).unwrap();
        let gv = combine(&v, &y, n).unwrap();
        let gw = combine(&w, &y, n).unwrap();
        for d in 0..3 {
            prop_assert!((gw[d] - (a * gu[d] + gv[d])).abs() < 1e-12);
        }
    }

    #[test]
    fn collector_keeps_the_first_output(order in Just((0usize..6).collect::<Vec<_>>()).prop_shuffle()) {
        // n = 6, k = 6, c = 2: blocks {0,1}, {2,3}, {4,5}
        let g = build_frc(6, 6, 2).unwrap();
        let mut col = BlockCollector::new(3);
        for &j in &order {
            col.offer(j, g.block_of(j), vec![j as f64]);
        }
        for b in 0..3 {
            let first = order.iter().copied().find(|&j| g.block_of(j) == b).unwrap();
            prop_assert_eq!(col.senders()[b], Some(first));
        }
        let expect: f64 = (0..3).map(|b| col.senders()[b].unwrap() as f64).sum::<f64>() / 6.0;
        prop_assert_eq!(col.combine(1, 6).unwrap(), vec![expect]);
        let received: Vec<Option<Vec<f64>>> = col.senders().iter().map(|s| s.map(|j| vec![j as f64])).collect();
        prop_assert_eq!(combine_received(&received, 1, 6).unwrap(), vec![expect]);
    }
}
