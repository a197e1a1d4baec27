//! Fractional repetition codes.
//!
//! `FRC(n, k, c)` splits the `n` tasks into `n / c` contiguous blocks of `c`
//! tasks and replicates each block on `ell = k c / n` workers. Worker groups
//! are contiguous too: block `m` (0-based) is held by workers
//! `m * ell .. (m + 1) * ell`.
//!
//! All indices in this module are 0-based.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// `(n, k, c, ell)` for one FRC instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeParams {
    n: usize,
    k: usize,
    c: usize,
    ell: usize,
}

impl CodeParams {
    pub fn new(n: usize, k: usize, c: usize) -> Result<Self> {
        if n == 0 || k == 0 || c == 0 {
            bail!(Params, "n, k and c must be positive (n={n}, k={k}, c={c})");
        }
        if c > n {
            bail!(Params, "c must not exceed n (c={c}, n={n})");
        }
        if n % c != 0 {
            bail!(Params, "c must divide n (n={n}, c={c})");
        }
        if (k * c) % n != 0 {
            bail!(Params, "n must divide k*c (n={n}, k*c={})", k * c);
        }
        let ell = k * c / n;
        Ok(Self { n, k, c, ell })
    }

    /// Number of tasks.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of workers.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Tasks per worker.
    pub fn c(&self) -> usize {
        self.c
    }

    /// Repetition factor `k c / n`.
    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Number of blocks, `n / c`.
    pub fn blocks(&self) -> usize {
        self.n / self.c
    }
}

/// The function assignment matrix of `FRC(n, k, c)`, stored by its block structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMatrix {
    params: CodeParams,
}

/// Build the assignment matrix for `FRC(n, k, c)`.
pub fn build_frc(n: usize, k: usize, c: usize) -> Result<AssignmentMatrix> {
    Ok(AssignmentMatrix {
        params: CodeParams::new(n, k, c)?,
    })
}

impl AssignmentMatrix {
    pub fn from_params(params: CodeParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    /// Block held by `worker`.
    pub fn block_of(&self, worker: usize) -> usize {
        debug_assert!(worker < self.params.k);
        worker / self.params.ell
    }

    /// Workers replicating `block`.
    pub fn block_workers(&self, block: usize) -> Range<usize> {
        let ell = self.params.ell;
        block * ell..(block + 1) * ell
    }

    /// Tasks in `block`.
    pub fn block_tasks(&self, block: usize) -> Range<usize> {
        let c = self.params.c;
        block * c..(block + 1) * c
    }

    /// Support `U_j` of worker `j`: the tasks it computes.
    pub fn support(&self, worker: usize) -> Range<usize> {
        self.block_tasks(self.block_of(worker))
    }

    /// Dense `n x k` 0/1 matrix, row-major. Intended for inspection and tests.
    pub fn dense(&self) -> Vec<Vec<u8>> {
        let mut g = vec![vec![0u8; self.params.k]; self.params.n];
        for j in 0..self.params.k {
            for i in self.support(j) {
                g[i][j] = 1;
            }
        }
        g
    }
}

/// Which blocks have at least one non-straggler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    covered: Vec<bool>,
}

impl Coverage {
    pub fn none(blocks: usize) -> Self {
        Self {
            covered: vec![false; blocks],
        }
    }

    pub fn full(blocks: usize) -> Self {
        Self {
            covered: vec![true; blocks],
        }
    }

    pub fn from_indicators(covered: Vec<bool>) -> Self {
        Self { covered }
    }

    pub fn is_covered(&self, block: usize) -> bool {
        self.covered[block]
    }

    pub fn len(&self) -> usize {
        self.covered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covered.is_empty()
    }

    pub fn count(&self) -> usize {
        self.covered.iter().filter(|&&y| y).count()
    }

    pub fn is_full(&self) -> bool {
        self.covered.iter().all(|&y| y)
    }

    /// Marks `block` covered, returning whether it was newly covered.
    pub fn mark(&mut self, block: usize) -> bool {
        !core::mem::replace(&mut self.covered[block], true)
    }

    /// `y_i` as 0/1 values.
    pub fn indicators(&self) -> Vec<u8> {
        self.covered.iter().map(|&y| y as u8).collect()
    }
}

/// Coverage indicators `y` for a set of non-straggler workers.
pub fn coverage(matrix: &AssignmentMatrix, non_stragglers: &[usize]) -> Result<Coverage> {
    let k = matrix.params.k;
    let mut y = Coverage::none(matrix.params.blocks());
    for &j in non_stragglers {
        if j >= k {
            bail!(Input, "worker id {j} out of range (k={k})");
        }
        y.mark(matrix.block_of(j));
    }
    Ok(y)
}

/// `(1/n) sum_i y_i * block_sums[i]`, summed in ascending block order.
pub fn combine(block_sums: &[Vec<f64>], y: &Coverage, n: usize) -> Result<Vec<f64>> {
    if block_sums.len() != y.len() {
        bail!(Input, "expected {} block sums, got {}", y.len(), block_sums.len());
    }
    let dim = match block_sums.first() {
        Some(b) => b.len(),
        None => bail!(Input, "no blocks"),
    };
    if let Some(bad) = block_sums.iter().position(|b| b.len() != dim) {
        bail!(
            Input,
            "block {bad} has dimension {}, expected {dim}",
            block_sums[bad].len()
        );
    }
    let parts = block_sums
        .iter()
        .enumerate()
        .map(|(i, b)| y.is_covered(i).then_some(b.as_slice()));
    Ok(accumulate(parts, dim, n))
}

/// Same reduction as [`combine`], over blocks that may not have arrived.
///
/// Every caller that must agree bit-for-bit (simulator and network master)
/// goes through this function.
pub fn combine_received(received: &[Option<Vec<f64>>], dim: usize, n: usize) -> Result<Vec<f64>> {
    if let Some(bad) = received.iter().position(|b| b.as_ref().is_some_and(|v| v.len() != dim)) {
        bail!(Input, "block {bad} has wrong dimension (expected {dim})");
    }
    Ok(accumulate(received.iter().map(|b| b.as_deref()), dim, n))
}

fn accumulate<'a>(parts: impl Iterator<Item = Option<&'a [f64]>>, dim: usize, n: usize) -> Vec<f64> {
    let mut g = vec![0.0; dim];
    for block in parts.flatten() {
        for (acc, v) in g.iter_mut().zip(block) {
            *acc += v;
        }
    }
    let n = n as f64;
    for v in &mut g {
        *v /= n;
    }
    g
}

/// `g / (1 - p)`, the unbiased estimate of the full gradient.
pub fn debias(g: &[f64], p: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        bail!(Domain, "debiasing needs 0 <= p < 1, got p={p}");
    }
    let scale = 1.0 - p;
    Ok(g.iter().map(|v| v / scale).collect())
}

/// Per-round S_m bookkeeping: keeps the first output received for each block.
#[derive(Debug, Clone)]
pub struct BlockCollector {
    received: Vec<Option<Vec<f64>>>,
    sender: Vec<Option<usize>>,
    coverage: Coverage,
}

impl BlockCollector {
    pub fn new(blocks: usize) -> Self {
        Self {
            received: vec![None; blocks],
            sender: vec![None; blocks],
            coverage: Coverage::none(blocks),
        }
    }

    /// Offer worker output `y` for `block`. Returns `false` if the block already
    /// had an output this round (the new one is dropped).
    pub fn offer(&mut self, worker: usize, block: usize, y: Vec<f64>) -> bool {
        if self.received[block].is_some() {
            return false;
        }
        self.received[block] = Some(y);
        self.sender[block] = Some(worker);
        self.coverage.mark(block);
        true
    }

    pub fn coverage(&self) -> &Coverage {
        &self.coverage
    }

    /// Worker whose output was kept for each block.
    pub fn senders(&self) -> &[Option<usize>] {
        &self.sender
    }

    pub fn combine(&self, dim: usize, n: usize) -> Result<Vec<f64>> {
        combine_received(&self.received, dim, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn frc_4_4_2_groups() {
        let g = build_frc(4, 4, 2).unwrap();
        assert_eq!(g.params().ell(), 2);
        assert_eq!(g.support(0), 0..2);
        assert_eq!(g.support(1), 0..2);
        assert_eq!(g.support(2), 2..4);
        assert_eq!(g.support(3), 2..4);
    }

    #[test]
    fn frc_identity_when_c_is_one() {
        let g = build_frc(6, 6, 1).unwrap();
        assert_eq!(g.params().ell(), 1);
        for j in 0..6 {
            assert_eq!(g.support(j), j..j + 1);
        }
    }

    #[test]
    fn frc_4_8_2_dense() {
        let g = build_frc(4, 8, 2).unwrap();
        assert_eq!(g.params().ell(), 4);
        let dense = g.dense();
        let expected: [[u8; 8]; 4] = [
            [1, 1, 1, 1, 0, 0, 0, 0],
            [1, 1, 1, 1, 0, 0, 0, 0],
            [0, 0, 0, 0, 1, 1, 1, 1],
            [0, 0, 0, 0, 1, 1, 1, 1],
        ];
        for (row, exp) in dense.iter().zip(expected.iter()) {
            assert_eq!(row.as_slice(), exp.as_slice());
        }
    }

    #[test]
    fn frc_rejects_bad_divisibility() {
        assert!(matches!(build_frc(5, 5, 2), Err(Error::Params(m)) if m.contains("c must divide n")));
        assert!(matches!(build_frc(4, 3, 2), Err(Error::Params(m)) if m.contains("n must divide k*c")));
        assert!(build_frc(0, 1, 1).is_err());
        assert!(build_frc(2, 2, 4).is_err());
    }

    #[test]
    fn coverage_examples() {
        let g = build_frc(4, 4, 2).unwrap();
        assert_eq!(coverage(&g, &[0, 2]).unwrap().indicators(), [1, 1]);
        assert_eq!(coverage(&g, &[0, 1]).unwrap().indicators(), [1, 0]);
        assert!(coverage(&g, &[0, 1, 2, 3]).unwrap().is_full());
        assert!(matches!(coverage(&g, &[4]), Err(Error::Input(_))));
    }

    #[test]
    fn combine_examples() {
        // grad f_i(x) = i for i = 1..4, c = 2
        let blocks = [vec![3.0], vec![7.0]];
        let full = combine(&blocks, &Coverage::full(2), 4).unwrap();
        assert_eq!(full, [2.5]);
        let half = combine(&blocks, &Coverage::from_indicators(vec![true, false]), 4).unwrap();
        assert_eq!(half, [0.75]);
        let none = combine(&blocks, &Coverage::none(2), 4).unwrap();
        assert_eq!(none, [0.0]);
    }

    #[test]
    fn combine_rejects_mismatch() {
        let blocks = [vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(combine(&blocks, &Coverage::full(2), 4), Err(Error::Input(_))));
        assert!(combine(&blocks[..1], &Coverage::full(2), 4).is_err());
    }

    #[test]
    fn debias_examples() {
        assert_eq!(debias(&[1.0, 2.0], 0.0).unwrap(), [1.0, 2.0]);
        assert_eq!(debias(&[1.0, 0.0], 0.5).unwrap(), [2.0, 0.0]);
        let g = debias(&[0.75], 1.0 / 6.0).unwrap();
        assert!((g[0] - 0.9).abs() < 1e-15);
        assert!(matches!(debias(&[1.0], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn collector_keeps_first_output() {
        let mut s = BlockCollector::new(2);
        assert!(s.offer(1, 0, vec![3.0]));
        assert!(!s.offer(0, 0, vec![100.0]));
        assert_eq!(s.senders(), [Some(1), None]);
        assert_eq!(s.combine(1, 4).unwrap(), [0.75]);
        assert!(s.offer(2, 1, vec![7.0]));
        assert!(s.coverage().is_full());
        assert_eq!(s.combine(1, 4).unwrap(), [2.5]);
    }
}
