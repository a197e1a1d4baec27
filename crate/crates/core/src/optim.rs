//! Decomposable objectives `f = (1/n) sum_i f_i` and the gradient step.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::ProblemConstants;
use crate::error::{bail, Result};
use crate::linalg;
use crate::rng;

/// A finite sum of component functions with a per-component gradient oracle.
pub trait Objective: Send + Sync {
    /// Number of components `n`.
    fn components(&self) -> usize;

    fn dim(&self) -> usize;

    /// `out += grad f_i(x)`.
    fn add_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// `f(x) = (1/n) sum_i f_i(x)`.
    fn value(&self, x: &[f64]) -> f64;

    fn constants(&self) -> Option<ProblemConstants> {
        None
    }

    /// Smoothness constant `beta`, when known.
    fn smoothness(&self) -> Option<f64> {
        self.constants().map(|k| k.beta)
    }

    /// Known minimum value `f*`.
    fn optimum_value(&self) -> Option<f64> {
        None
    }

    fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.add_component_gradient(i, x, &mut g);
        g
    }

    /// `(1/n) sum_i grad f_i(x)`.
    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.components() {
            self.add_component_gradient(i, x, &mut g);
        }
        let n = self.components() as f64;
        for v in &mut g {
            *v /= n;
        }
        g
    }
}

impl<T: Objective + ?Sized> Objective for Box<T> {
    fn components(&self) -> usize {
        (**self).components()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn add_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        (**self).add_component_gradient(i, x, out)
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn constants(&self) -> Option<ProblemConstants> {
        (**self).constants()
    }
    fn smoothness(&self) -> Option<f64> {
        (**self).smoothness()
    }
    fn optimum_value(&self) -> Option<f64> {
        (**self).optimum_value()
    }
}

/// Unnormalised sum of the `c` component gradients of `block` (0-based).
pub fn block_sum<O: Objective + ?Sized>(objective: &O, block: usize, x: &[f64], c: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; objective.dim()];
    block_sum_tracked(objective, block, x, c, &mut out)?;
    Ok(out)
}

/// Like [`block_sum`], writing into `out` (which must start at zero) and
/// returning the largest component-gradient norm seen.
pub fn block_sum_tracked<O: Objective + ?Sized>(
    objective: &O,
    block: usize,
    x: &[f64],
    c: usize,
    out: &mut [f64],
) -> Result<f64> {
    let n = objective.components();
    if c == 0 || n % c != 0 {
        bail!(Input, "block size {c} does not divide n = {n}");
    }
    if block >= n / c {
        bail!(Input, "block index {block} out of range ({} blocks)", n / c);
    }
    if x.len() != objective.dim() || out.len() != objective.dim() {
        bail!(Input, "dimension mismatch: objective has dimension {}", objective.dim());
    }
    let mut tmp = vec![0.0; objective.dim()];
    let mut max_norm: f64 = 0.0;
    for i in block * c..(block + 1) * c {
        tmp.iter_mut().for_each(|v| *v = 0.0);
        objective.add_component_gradient(i, x, &mut tmp);
        max_norm = max_norm.max(linalg::norm(&tmp));
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }
    Ok(max_norm)
}

/// `x - gamma g`.
pub fn gd_step(x: &[f64], g: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if x.len() != g.len() {
        bail!(Input, "dimension mismatch: x has {}, g has {}", x.len(), g.len());
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        bail!(Input, "step size must be positive, got {gamma}");
    }
    Ok(x.iter().zip(g).map(|(xi, gi)| xi - gamma * gi).collect())
}

/// Iterate and iteration counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub x: Vec<f64>,
    pub t: u64,
}

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepPolicy {
    /// `1/beta`
    InvBeta,
    /// `(1-p)/beta`
    ScaledInvBeta,
    /// `gamma0 * rho^t`
    Schedule { gamma0: f64, rho: f64 },
}

impl StepPolicy {
    pub fn step_size(&self, beta: Option<f64>, p: f64, t: u64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            bail!(Domain, "need 0 <= p < 1, got {p}");
        }
        match *self {
            StepPolicy::InvBeta => Ok(1.0 / beta_of(beta)?),
            StepPolicy::ScaledInvBeta => Ok((1.0 - p) / beta_of(beta)?),
            StepPolicy::Schedule { gamma0, rho } => {
                if !(gamma0 > 0.0 && rho > 0.0) {
                    bail!(Params, "schedule needs gamma0 > 0 and rho > 0");
                }
                Ok(gamma0 * libm::pow(rho, t as f64))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepPolicy::InvBeta => "inv_beta",
            StepPolicy::ScaledInvBeta => "scaled_inv_beta",
            StepPolicy::Schedule { .. } => "schedule",
        }
    }
}

fn beta_of(beta: Option<f64>) -> Result<f64> {
    match beta {
        Some(b) if b > 0.0 && b.is_finite() => Ok(b),
        Some(b) => bail!(Params, "smoothness constant must be positive and finite, got {b}"),
        None => bail!(
            Params,
            "step policy needs the smoothness constant beta, which is unknown for this objective"
        ),
    }
}

// ---------------------------------------------------------------------------
// Quadratic
// ---------------------------------------------------------------------------

/// `f_i(x) = 1/2 ||A_i x - b_i||^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Quadratic {
    dim: usize,
    rows: usize,
    /// `n` matrices of shape `rows x dim`, row-major, concatenated.
    a: Vec<f64>,
    /// `n` vectors of length `rows`, concatenated.
    b: Vec<f64>,
    constants: Option<ProblemConstants>,
    minimizer: Vec<f64>,
    optimum: f64,
}

/// Parameters of a generated quadratic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticConfig {
    pub n: usize,
    pub dim: usize,
    /// Target `beta / mu`; must be finite and at least 1.
    pub conditioning: f64,
    /// Standard deviation of the target noise.
    pub noise: f64,
    /// Every component shares one design matrix and differs only in its targets.
    pub shared_design: bool,
    /// Radius of the ball around the minimiser on which `sigma` bounds the
    /// component gradients. `None` uses twice the distance from the origin to the minimiser.
    pub sigma_radius: Option<f64>,
    pub seed: u64,
}

impl QuadraticConfig {
    pub fn new(n: usize, dim: usize, conditioning: f64, seed: u64) -> Self {
        Self {
            n,
            dim,
            conditioning,
            noise: 0.1,
            shared_design: false,
            sigma_radius: None,
            seed,
        }
    }
}

/// Random quadratic with Hessian spectrum spread linearly over `[1, conditioning]`.
pub fn make_quadratic(n: usize, dim: usize, conditioning: f64, seed: u64) -> Result<Quadratic> {
    Quadratic::generate(&QuadraticConfig::new(n, dim, conditioning, seed))
}

impl Quadratic {
    /// Builds a quadratic from explicit `A_i` (each `rows x dim`) and `b_i`.
    pub fn from_parts(dim: usize, rows: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows == 0 {
            bail!(Params, "dimension and rows must be positive");
        }
        if a.len() % (rows * dim) != 0 || a.is_empty() {
            bail!(
                Params,
                "A has {} entries, not a multiple of rows*dim = {}",
                a.len(),
                rows * dim
            );
        }
        let n = a.len() / (rows * dim);
        if b.len() != n * rows {
            bail!(Params, "b has {} entries, expected {}", b.len(), n * rows);
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            bail!(Data, "non-finite entries in A or b");
        }
        let mut q = Self {
            dim,
            rows,
            a,
            b,
            constants: None,
            minimizer: vec![0.0; dim],
            optimum: 0.0,
        };
        q.analyse(None)?;
        Ok(q)
    }

    pub fn generate(cfg: &QuadraticConfig) -> Result<Self> {
        let QuadraticConfig {
            n,
            dim,
            conditioning,
            noise,
            shared_design,
            ..
        } = *cfg;
        if n == 0 || dim == 0 {
            bail!(Params, "n and dim must be at least 1");
        }
        if !(conditioning.is_finite() && conditioning >= 1.0) {
            bail!(Params, "conditioning must be finite and >= 1, got {conditioning}");
        }
        if !(noise.is_finite() && noise >= 0.0) {
            bail!(Params, "noise must be finite and non-negative");
        }
        let mut rng = rng::stream(cfg.seed, rng::OBJECTIVE_STREAM);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };

        let rows = if shared_design { dim } else { dim.div_ceil(n) };
        let per = rows * dim;
        let raw: Vec<f64> = if shared_design {
            let m: Vec<f64> = (0..per).map(|_| normal()).collect();
            m.iter().cycle().take(n * per).copied().collect()
        } else {
            (0..n * per).map(|_| normal()).collect()
        };

        // whiten the random design, then impose the target spectrum
        let h0 = mean_gram(&raw, n, rows, dim);
        let e0 = linalg::symmetric_eigen(&h0, dim);
        let (lo, hi) = (e0.values[0], e0.values[dim - 1]);
        if !(lo > 1e-10 * hi) {
            bail!(Params, "degenerate random design (eigenvalues {lo}, {hi})");
        }
        let inv_sqrt = e0.reconstruct_with(|v| 1.0 / libm::sqrt(v));
        let gauss: Vec<f64> = (0..dim * dim).map(|_| normal()).collect();
        let basis = linalg::orthonormalize(&gauss, dim)?;
        let spectrum: Vec<f64> = (0..dim)
            .map(|j| {
                if dim == 1 {
                    1.0
                } else {
                    1.0 + (conditioning - 1.0) * j as f64 / (dim - 1) as f64
                }
            })
            .collect();
        let target_sqrt = linalg::SymmetricEigen {
            values: spectrum,
            vectors: basis,
            dim,
        }
        .reconstruct_with(libm::sqrt);
        let w = linalg::matmul(&inv_sqrt, &target_sqrt, dim, dim, dim);

        let mut a = Vec::with_capacity(n * per);
        for i in 0..n {
            a.extend(linalg::matmul(&raw[i * per..(i + 1) * per], &w, rows, dim, dim));
        }
        let x_true: Vec<f64> = (0..dim).map(|_| normal()).collect();
        let mut b = Vec::with_capacity(n * rows);
        for i in 0..n {
            let ax = linalg::matvec(&a[i * per..(i + 1) * per], rows, dim, &x_true);
            b.extend(ax.into_iter().map(|v| v + noise * normal()));
        }

        let mut q = Self {
            dim,
            rows,
            a,
            b,
            constants: None,
            minimizer: vec![0.0; dim],
            optimum: 0.0,
        };
        q.analyse(cfg.sigma_radius)?;
        Ok(q)
    }

    /// Computes `mu`, `beta`, the minimiser, `f*` and the gradient bound `sigma`.
    fn analyse(&mut self, sigma_radius: Option<f64>) -> Result<()> {
        let (n, rows, dim) = (self.components(), self.rows, self.dim);
        let per = rows * dim;
        let h = mean_gram(&self.a, n, rows, dim);
        let eig = linalg::symmetric_eigen(&h, dim);
        let (mu, beta) = (eig.values[0], eig.values[dim - 1]);
        if !(mu > 1e-12 * beta.max(1e-300)) {
            // singular Hessian: f is still PL on its range but mu is not
            // available in closed form here
            self.constants = None;
            return Ok(());
        }
        let mut atb = vec![0.0; dim];
        for i in 0..n {
            linalg::add_matvec_t(
                &self.a[i * per..(i + 1) * per],
                rows,
                dim,
                &self.b[i * rows..(i + 1) * rows],
                &mut atb,
            );
        }
        atb.iter_mut().for_each(|v| *v /= n as f64);
        self.minimizer = linalg::cholesky_solve(&h, dim, &atb)?;
        self.optimum = self.value(&self.minimizer);

        // sup of ||grad f_i|| over the ball B(x*, R):
        // ||A_i^T A_i (x - x*) + A_i^T (A_i x* - b_i)|| <= ||A_i^T A_i|| R + ||grad f_i(x*)||
        let radius = sigma_radius.unwrap_or_else(|| 2.0 * linalg::norm(&self.minimizer));
        let mut sigma: f64 = 0.0;
        for i in 0..n {
            let ai = &self.a[i * per..(i + 1) * per];
            let top = *linalg::symmetric_eigen(&linalg::gram(ai, rows, dim), dim)
                .values
                .last()
                .unwrap_or(&0.0);
            let at_opt = linalg::norm(&self.component_gradient(i, &self.minimizer));
            sigma = sigma.max(top * radius + at_opt);
        }
        self.constants = Some(ProblemConstants::new(mu, beta, sigma)?);
        Ok(())
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    /// `(1/n) sum_i A_i^T A_i`.
    pub fn hessian(&self) -> Vec<f64> {
        mean_gram(&self.a, self.components(), self.rows, self.dim)
    }

    /// `sup ||grad f_i||` over the ball of radius `radius` around the minimiser.
    pub fn with_sigma_radius(mut self, radius: f64) -> Result<Self> {
        self.analyse(Some(radius))?;
        Ok(self)
    }
}

fn mean_gram(a: &[f64], n: usize, rows: usize, dim: usize) -> Vec<f64> {
    let per = rows * dim;
    let mut h = vec![0.0; dim * dim];
    for i in 0..n {
        for (acc, v) in h.iter_mut().zip(linalg::gram(&a[i * per..(i + 1) * per], rows, dim)) {
            *acc += v;
        }
    }
    h.iter_mut().for_each(|v| *v /= n as f64);
    h
}

impl Objective for Quadratic {
    fn components(&self) -> usize {
        self.b.len() / self.rows
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let per = self.rows * self.dim;
        let ai = &self.a[i * per..(i + 1) * per];
        let mut r = linalg::matvec(ai, self.rows, self.dim, x);
        for (rj, bj) in r.iter_mut().zip(&self.b[i * self.rows..(i + 1) * self.rows]) {
            *rj -= bj;
        }
        linalg::add_matvec_t(ai, self.rows, self.dim, &r, out);
    }

    fn value(&self, x: &[f64]) -> f64 {
        let per = self.rows * self.dim;
        let n = self.components();
        let total: f64 = (0..n)
            .map(|i| {
                let r = linalg::matvec(&self.a[i * per..(i + 1) * per], self.rows, self.dim, x);
                r.iter()
                    .zip(&self.b[i * self.rows..(i + 1) * self.rows])
                    .map(|(ri, bi)| (ri - bi) * (ri - bi))
                    .sum::<f64>()
                    * 0.5
            })
            .sum();
        total / n as f64
    }

    fn constants(&self) -> Option<ProblemConstants> {
        self.constants
    }

    fn optimum_value(&self) -> Option<f64> {
        self.constants.map(|_| self.optimum)
    }
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    cols: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 {
            bail!(Data, "dataset has no feature columns");
        }
        if features.len() != labels.len() * cols {
            bail!(
                Data,
                "{} feature values for {} rows of {cols} columns",
                features.len(),
                labels.len()
            );
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            bail!(Data, "non-finite feature in row {}", pos / cols);
        }
        if let Some(row) = labels.iter().position(|v| !v.is_finite()) {
            bail!(Data, "non-finite label in row {row}");
        }
        Ok(Self { features, labels, cols })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.cols..(i + 1) * self.cols]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Row-major `rows x cols` feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rescales every feature column to zero mean and unit variance.
    /// Constant columns are only centred.
    pub fn standardize(&mut self) {
        let rows = self.rows() as f64;
        for j in 0..self.cols {
            let mean = (0..self.rows()).map(|i| self.features[i * self.cols + j]).sum::<f64>() / rows;
            let var = (0..self.rows())
                .map(|i| {
                    let d = self.features[i * self.cols + j] - mean;
                    d * d
                })
                .sum::<f64>()
                / rows;
            let sd = libm::sqrt(var);
            let scale = if sd > 0.0 { sd } else { 1.0 };
            for i in 0..self.rows() {
                let v = &mut self.features[i * self.cols + j];
                *v = (*v - mean) / scale;
            }
        }
    }

    /// Keeps the first `rows` rows.
    pub fn truncate(&mut self, rows: usize) {
        self.labels.truncate(rows);
        self.features.truncate(rows * self.cols);
    }

    /// Copy of rows `range`.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Dataset {
        Dataset {
            features: self.features[range.start * self.cols..range.end * self.cols].to_vec(),
            labels: self.labels[range].to_vec(),
            cols: self.cols,
        }
    }
}

/// Which per-example loss a [`DataObjective`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `1/2 (a^T x - y)^2`
    LeastSquares,
    /// `log(1 + exp(-y' a^T x))`, `y' = 2y - 1`
    Logistic,
}

/// Empirical loss over a dataset; component `i` is the mean loss over a
/// contiguous group of `rows_per_component` rows.
#[derive(Debug, Clone)]
pub struct DataObjective {
    data: Dataset,
    loss: Loss,
    rows_per_component: usize,
    /// Offset added to component indices; lets a worker hold a slice of the
    /// global component range and keep global numbering.
    first_component: usize,
}

/// Least squares, one component per example.
pub fn make_least_squares(dataset: Dataset) -> Result<DataObjective> {
    DataObjective::new(dataset, Loss::LeastSquares)
}

/// Logistic regression, one component per example; labels must be 0 or 1.
pub fn make_logistic(dataset: Dataset) -> Result<DataObjective> {
    DataObjective::new(dataset, Loss::Logistic)
}

impl DataObjective {
    pub fn new(data: Dataset, loss: Loss) -> Result<Self> {
        if data.rows() == 0 {
            bail!(Data, "dataset is empty");
        }
        if loss == Loss::Logistic {
            if let Some(row) = (0..data.rows()).find(|&i| data.label(i) != 0.0 && data.label(i) != 1.0) {
                bail!(
                    Data,
                    "logistic labels must be 0 or 1; row {row} has {}",
                    data.label(row)
                );
            }
        }
        Ok(Self {
            data,
            loss,
            rows_per_component: 1,
            first_component: 0,
        })
    }

    /// Groups the rows into `n` tasks of `rows / n` rows each, dropping the remainder.
    /// Returns the number of dropped rows.
    pub fn with_tasks(mut self, n: usize) -> Result<(Self, usize)> {
        let rows = self.data.rows();
        if n == 0 || rows < n {
            bail!(Data, "need at least n = {n} rows, dataset has {rows}");
        }
        let per = rows / n;
        self.data.truncate(per * n);
        self.rows_per_component = per;
        Ok((self, rows - per * n))
    }

    /// Local view holding components `first .. first + count` of a larger
    /// objective; `data` must contain exactly those rows.
    pub fn partition(data: Dataset, loss: Loss, rows_per_component: usize, first: usize) -> Result<Self> {
        let mut obj = Self::new(data, loss)?;
        if rows_per_component == 0 || obj.data.rows() % rows_per_component != 0 {
            bail!(
                Data,
                "{} rows do not split into groups of {rows_per_component}",
                obj.data.rows()
            );
        }
        obj.rows_per_component = rows_per_component;
        obj.first_component = first;
        Ok(obj)
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn rows_per_component(&self) -> usize {
        self.rows_per_component
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    /// Global index of the first component held.
    pub fn first_component(&self) -> usize {
        self.first_component
    }

    fn example_loss(&self, row: usize, x: &[f64]) -> f64 {
        let z = linalg::dot(self.data.row(row), x);
        let y = self.data.label(row);
        match self.loss {
            Loss::LeastSquares => 0.5 * (z - y) * (z - y),
            Loss::Logistic => softplus(-(2.0 * y - 1.0) * z),
        }
    }

    /// `d loss / d z` for the example.
    fn example_slope(&self, row: usize, x: &[f64]) -> f64 {
        let z = linalg::dot(self.data.row(row), x);
        let y = self.data.label(row);
        match self.loss {
            Loss::LeastSquares => z - y,
            Loss::Logistic => {
                let s = 2.0 * y - 1.0;
                -s * sigmoid(-s * z)
            }
        }
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + libm::log1p(libm::exp(-t))
    } else {
        libm::log1p(libm::exp(t))
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

impl Objective for DataObjective {
    fn components(&self) -> usize {
        self.first_component + self.data.rows() / self.rows_per_component
    }

    fn dim(&self) -> usize {
        self.data.cols()
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let local = i
            .checked_sub(self.first_component)
            .expect("component not held by this partition");
        let m = self.rows_per_component;
        let scale = 1.0 / m as f64;
        for row in local * m..(local + 1) * m {
            let slope = self.example_slope(row, x) * scale;
            for (o, a) in out.iter_mut().zip(self.data.row(row)) {
                *o += slope * a;
            }
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let rows = self.data.rows();
        (0..rows).map(|r| self.example_loss(r, x)).sum::<f64>() / rows as f64
    }

    /// Largest eigenvalue of the Hessian bound `A^T A / rows` (a quarter of it for logistic loss).
    fn smoothness(&self) -> Option<f64> {
        let (rows, cols) = (self.data.rows(), self.data.cols());
        let gram = linalg::gram(self.data.features(), rows, cols);
        let top = linalg::symmetric_eigen(&gram, cols)
            .values
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            / rows as f64;
        let beta = match self.loss {
            Loss::LeastSquares => top,
            Loss::Logistic => top / 4.0,
        };
        (beta > 0.0).then_some(beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    /// grad f_i(x) = i (1-based), i.e. f_i(x) = i x.
    struct Linear(usize);

    impl Objective for Linear {
        fn components(&self) -> usize {
            self.0
        }
        fn dim(&self) -> usize {
            1
        }
        fn add_component_gradient(&self, i: usize, _x: &[f64], out: &mut [f64]) {
            out[0] += (i + 1) as f64;
        }
        fn value(&self, x: &[f64]) -> f64 {
            (1..=self.0).map(|i| i as f64 * x[0]).sum::<f64>() / self.0 as f64
        }
    }

    #[test]
    fn block_sums_of_linear_components() {
        let f = Linear(4);
        assert_eq!(block_sum(&f, 0, &[0.0], 2).unwrap(), [3.0]);
        assert_eq!(block_sum(&f, 1, &[0.0], 2).unwrap(), [7.0]);
        assert_eq!(block_sum(&f, 2, &[0.0], 1).unwrap(), f.component_gradient(2, &[0.0]));
        assert!(matches!(block_sum(&f, 2, &[0.0], 2), Err(Error::Input(_))));
        assert!(block_sum(&f, 0, &[0.0], 3).is_err());
        let total = (block_sum(&f, 0, &[0.0], 2).unwrap()[0] + block_sum(&f, 1, &[0.0], 2).unwrap()[0]) / 4.0;
        assert_eq!(total, f.full_gradient(&[0.0])[0]);
    }

    #[test]
    fn gd_step_examples() {
        assert_eq!(gd_step(&[1.0, 2.0], &[0.0, 0.0], 0.3).unwrap(), [1.0, 2.0]);
        assert_eq!(gd_step(&[1.0], &[1.0], 1.0).unwrap(), [0.0]);
        assert_eq!(gd_step(&[1.0, 1.0], &[2.0, -2.0], 0.5).unwrap(), [0.0, 2.0]);
        assert!(gd_step(&[1.0], &[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn step_policies() {
        let k = ProblemConstants::new(1.0, 2.0, 1.0).unwrap();
        assert_eq!(StepPolicy::InvBeta.step_size(Some(k.beta), 0.0, 0).unwrap(), 0.5);
        let g = StepPolicy::ScaledInvBeta.step_size(Some(k.beta), 1.0 / 6.0, 0).unwrap();
        assert!((g - 5.0 / 12.0).abs() < 1e-15);
        let s = StepPolicy::Schedule { gamma0: 0.1, rho: 0.99 };
        assert!((s.step_size(None, 0.0, 1).unwrap() - 0.099).abs() < 1e-15);
        assert!(matches!(
            StepPolicy::InvBeta.step_size(None, 0.0, 0),
            Err(Error::Params(_))
        ));
        assert!(StepPolicy::InvBeta.step_size(Some(k.beta), 1.0, 0).is_err());
    }

    #[test]
    fn identity_quadratic_converges_in_one_step() {
        let q = Quadratic::from_parts(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], vec![0.0; 3]).unwrap();
        let k = q.constants().unwrap();
        assert_eq!((k.mu, k.beta), (1.0, 1.0));
        assert_eq!(q.optimum_value(), Some(0.0));
        let x0 = [1.0, 1.0, 1.0];
        let x1 = gd_step(&x0, &q.full_gradient(&x0), 1.0 / k.beta).unwrap();
        assert_eq!(x1, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn generated_quadratic_has_requested_spectrum() {
        let q = make_quadratic(20, 5, 4.0, 11).unwrap();
        let k = q.constants().unwrap();
        assert!(k.mu <= k.beta);
        assert!((k.mu - 1.0).abs() < 1e-9 && (k.beta - 4.0).abs() < 1e-9, "{k:?}");
        let g = q.full_gradient(q.minimizer());
        assert!(linalg::norm(&g) < 1e-10);
        let shared = Quadratic::generate(&QuadraticConfig {
            shared_design: true,
            ..QuadraticConfig::new(6, 3, 2.0, 1)
        })
        .unwrap();
        let k = shared.constants().unwrap();
        assert!((k.mu - 1.0).abs() < 1e-9 && (k.beta - 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_conditioning_rejected() {
        assert!(matches!(make_quadratic(4, 2, 0.5, 0), Err(Error::Params(_))));
        assert!(make_quadratic(4, 2, f64::INFINITY, 0).is_err());
        assert!(make_quadratic(0, 2, 2.0, 0).is_err());
    }

    #[test]
    fn least_squares_single_sample() {
        let d = Dataset::new(vec![1.0], vec![0.0], 1).unwrap();
        let f = make_least_squares(d).unwrap();
        assert_eq!(f.component_gradient(0, &[2.0]), [2.0]);
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let d = Dataset::new(vec![1.0, 2.0, -3.0, 0.5], vec![1.0, 0.0], 2).unwrap();
        let f = make_logistic(d).unwrap();
        assert_eq!(f.component_gradient(0, &[0.0, 0.0]), [-0.5, -1.0]);
        assert_eq!(f.component_gradient(1, &[0.0, 0.0]), [-1.5, 0.25]);
        let bad = Dataset::new(vec![1.0], vec![2.0], 1).unwrap();
        assert!(matches!(make_logistic(bad), Err(Error::Data(_))));
    }

    #[test]
    fn tasks_group_rows_and_drop_remainder() {
        let d = Dataset::new((0..7).map(|v| v as f64).collect(), vec![0.0; 7], 1).unwrap();
        let (f, dropped) = make_least_squares(d).unwrap().with_tasks(3).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(f.components(), 3);
        // component 1 = mean over rows 2, 3: slope z - y = 2x, 3x times a
        assert_eq!(f.component_gradient(1, &[1.0]), [(4.0 + 9.0) / 2.0]);
    }

    #[test]
    fn standardize_centres_columns() {
        let mut d = Dataset::new(vec![1.0, 5.0, 3.0, 5.0], vec![0.0, 1.0], 2).unwrap();
        d.standardize();
        assert_eq!(d.row(0), [-1.0, 0.0]);
        assert_eq!(d.row(1), [1.0, 0.0]);
    }
}
