//! Least-squares identification of transition matrices.
//!
//! Every estimator minimizes `||Y1 - A Y0||_F` over the data pairs. Row `i`
//! of `A` only touches row `i` of `Y1`, so the problem splits into one
//! independent quadratic program per output pixel:
//!
//! ```text
//! minimize  a^T G a - 2 b_i^T a + c_i      G = Y0 Y0^T,  b_i = (Y1 Y0^T)[i, :],  c_i = ||Y1[i, :]||^2
//! ```
//!
//! The Gram matrix `G` is shared by all rows. Non-negative rows use a
//! Lawson-Hanson active set on the Gram form; simplex rows add the sum-to-one
//! equality to the same active set through its Lagrange multiplier.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::linalg::{Cholesky, GrowingCholesky};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FitMode {
    Ols,
    NonNeg,
    RowSum,
}

impl FitMode {
    pub const ALL: [FitMode; 3] = [FitMode::Ols, FitMode::NonNeg, FitMode::RowSum];

    pub fn code(self) -> u32 {
        match self {
            FitMode::Ols => 0,
            FitMode::NonNeg => 1,
            FitMode::RowSum => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(FitMode::Ols),
            1 => Some(FitMode::NonNeg),
            2 => Some(FitMode::RowSum),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FitMode::Ols => "ols",
            FitMode::NonNeg => "nonneg",
            FitMode::RowSum => "rowsum",
        }
    }
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ols" => Ok(FitMode::Ols),
            "nonneg" | "nnls" => Ok(FitMode::NonNeg),
            "rowsum" | "simplex" => Ok(FitMode::RowSum),
            other => Err(Error::Config(format!("unknown fit mode {other:?} (expected ols, nonneg or rowsum)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// OLS ridge weight, relative to `trace(G) / dim`.
    pub ridge: T,
    /// KKT tolerance, relative to `max(1, trace(G) / dim)`.
    pub kkt_tol: T,
    /// Active-set iterations allowed per row.
    pub max_iters: usize,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self { ridge: T::lit(1e-8), kkt_tol: T::lit(1e-6), max_iters: 5000 }
    }
}

/// Paired pre/post push vectors for one push-length bucket.
///
/// Stored sample-major: sample `s` occupies `pre[s * dim..(s + 1) * dim]`,
/// i.e. column `s` of the `dim x samples` data matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset<T> {
    dim: usize,
    samples: usize,
    pre: Vec<T>,
    post: Vec<T>,
    pub length_bucket: usize,
}

impl<T: Scalar> PairedDataset<T> {
    /// Builds a dataset from sample-major buffers. Values must be finite.
    pub fn new(dim: usize, pre: Vec<T>, post: Vec<T>, length_bucket: usize) -> Result<Self> {
        if dim == 0 || !pre.len().is_multiple_of(dim) || pre.len() != post.len() {
            return Err(Error::Dimension(format!(
                "pre ({}) and post ({}) buffers do not split into columns of length {dim}",
                pre.len(),
                post.len()
            )));
        }
        if let Some(v) = pre.iter().chain(&post).find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite data value {v}")));
        }
        Ok(Self { dim, samples: pre.len() / dim, pre, post, length_bucket })
    }

    /// Builds a dataset from `(before, after)` image pairs.
    pub fn from_image_pairs(pairs: &[(Image<T>, Image<T>)], length_bucket: usize) -> Result<Self> {
        let first = pairs.first().ok_or(Error::EmptyBucket(length_bucket))?;
        let n = first.0.n();
        let mut pre = Vec::with_capacity(pairs.len() * n * n);
        let mut post = Vec::with_capacity(pairs.len() * n * n);
        for (a, b) in pairs {
            for img in [a, b] {
                if img.n() != n {
                    return Err(Error::ResolutionMismatch { left: n, right: img.n() });
                }
            }
            pre.extend_from_slice(a.as_slice());
            post.extend_from_slice(b.as_slice());
        }
        Self::new(n * n, pre, post, length_bucket)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn samples(&self) -> usize {
        self.samples
    }

    #[inline]
    pub fn pre_column(&self, s: usize) -> &[T] {
        &self.pre[s * self.dim..(s + 1) * self.dim]
    }

    #[inline]
    pub fn post_column(&self, s: usize) -> &[T] {
        &self.post[s * self.dim..(s + 1) * self.dim]
    }

    /// Keeps the listed samples, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut pre = Vec::with_capacity(idx.len() * self.dim);
        let mut post = Vec::with_capacity(idx.len() * self.dim);
        for &s in idx {
            pre.extend_from_slice(self.pre_column(s));
            post.extend_from_slice(self.post_column(s));
        }
        Self { dim: self.dim, samples: idx.len(), pre, post, length_bucket: self.length_bucket }
    }
}

/// Second-moment statistics shared by all row problems.
#[derive(Clone, Debug)]
pub struct GramStats<T> {
    pub dim: usize,
    /// `Y0 Y0^T`, row-major.
    pub gram: Vec<T>,
    /// `Y1 Y0^T`, row-major: row `i` is the linear term of row problem `i`.
    pub cross: Vec<T>,
    /// `||Y1[i, :]||^2` per row.
    pub post_sq: Vec<T>,
    /// `max(1, trace(G) / dim)`.
    pub scale: T,
}

fn nonzeros<T: Scalar>(v: &[T]) -> Vec<(usize, T)> {
    v.iter().enumerate().filter(|(_, x)| **x != T::zero()).map(|(k, &x)| (k, x)).collect()
}

impl<T: Scalar> GramStats<T> {
    pub fn from_dataset(data: &PairedDataset<T>) -> Self {
        let n = data.dim;
        let mut gram = vec![T::zero(); n * n];
        let mut cross = vec![T::zero(); n * n];
        let mut post_sq = vec![T::zero(); n];
        for s in 0..data.samples {
            let pre = nonzeros(data.pre_column(s));
            let post = nonzeros(data.post_column(s));
            for &(a, va) in &pre {
                let row = &mut gram[a * n..(a + 1) * n];
                for &(b, vb) in pre.iter().take_while(|(b, _)| *b <= a) {
                    row[b] = row[b] + va * vb;
                }
            }
            for &(i, vi) in &post {
                post_sq[i] = post_sq[i] + vi * vi;
                let row = &mut cross[i * n..(i + 1) * n];
                for &(j, vj) in &pre {
                    row[j] = row[j] + vi * vj;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                gram[b * n + a] = gram[a * n + b];
            }
        }
        let trace: T = (0..n).map(|k| gram[k * n + k]).sum();
        let scale = (trace / T::from_usize_lossy(n)).max(T::one());
        Self { dim: n, gram, cross, post_sq, scale }
    }

    #[inline]
    pub fn gram_row(&self, k: usize) -> &[T] {
        &self.gram[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn cross_row(&self, i: usize) -> &[T] {
        &self.cross[i * self.dim..(i + 1) * self.dim]
    }

    /// Gradient of the half row objective, `G a - b_i`.
    pub fn row_gradient(&self, i: usize, a: &[T]) -> Vec<T> {
        let n = self.dim;
        let mut g: Vec<T> = self.cross_row(i).iter().map(|&b| -b).collect();
        for (k, &ak) in a.iter().enumerate() {
            if ak != T::zero() {
                for (gj, &gk) in g.iter_mut().zip(&self.gram[k * n..(k + 1) * n]) {
                    *gj = *gj + ak * gk;
                }
            }
        }
        g
    }
}

/// Learned linear map between vectorized images.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix<T> {
    dim: usize,
    data: Vec<T>,
    pub mode: FitMode,
    /// Absolute ridge weight the matrix was fitted with (zero unless OLS).
    /// Not serialized.
    pub ridge: T,
}

impl<T: Scalar> TransitionMatrix<T> {
    pub fn from_vec(dim: usize, data: Vec<T>, mode: FitMode) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Dimension(format!("{} entries cannot form a {dim}x{dim} matrix", data.len())));
        }
        Ok(Self { dim, data, mode, ridge: T::zero() })
    }

    pub fn identity(dim: usize, mode: FitMode) -> Self {
        Self::scaled_identity(dim, T::one(), mode)
    }

    pub fn scaled_identity(dim: usize, c: T, mode: FitMode) -> Self {
        let mut data = vec![T::zero(); dim * dim];
        for k in 0..dim {
            data[k * dim + k] = c;
        }
        Self { dim, data, mode, ridge: T::zero() }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `A y`, skipping zero entries of `y`.
    pub fn apply(&self, y: &[T]) -> Vec<T> {
        let nz = nonzeros(y);
        (0..self.dim)
            .map(|i| {
                let row = self.row(i);
                nz.iter().fold(T::zero(), |acc, &(j, v)| acc + row[j] * v)
            })
            .collect()
    }

    /// Column-major copy, used for fast products with sparse vectors.
    pub fn transposed(&self) -> Vec<T> {
        let n = self.dim;
        let mut t = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }
}

fn check_samples<T: Scalar>(data: &PairedDataset<T>) -> Result<()> {
    if data.samples == 0 {
        return Err(Error::EmptyBucket(data.length_bucket));
    }
    Ok(())
}

/// Ridge-regularized ordinary least squares via the normal equations,
/// `A = Y1 Y0^T (Y0 Y0^T + ridge I)^-1`.
pub fn fit_ols<T: Scalar>(data: &PairedDataset<T>, cfg: &SolverConfig<T>) -> Result<TransitionMatrix<T>> {
    check_samples(data)?;
    fit_ols_stats(&GramStats::from_dataset(data), cfg)
}

pub fn fit_ols_stats<T: Scalar>(stats: &GramStats<T>, cfg: &SolverConfig<T>) -> Result<TransitionMatrix<T>> {
    let n = stats.dim;
    let ridge = cfg.ridge * stats.scale;
    let mut reg = stats.gram.clone();
    for k in 0..n {
        reg[k * n + k] = reg[k * n + k] + ridge;
    }
    let chol = Cholesky::factor(&reg, n).map_err(|(index, pivot)| Error::Conditioning { index, pivot: pivot.as_f64() })?;
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut b = stats.cross_row(i).to_vec();
            if b.iter().any(|&v| v != T::zero()) {
                chol.solve_in_place(&mut b);
            }
            b
        })
        .collect();
    let mut m = TransitionMatrix::from_vec(n, rows.concat(), FitMode::Ols)?;
    m.ridge = ridge;
    Ok(m)
}

/// Per-row non-negative least squares.
pub fn fit_row_nonneg<T: Scalar>(data: &PairedDataset<T>, cfg: &SolverConfig<T>) -> Result<TransitionMatrix<T>> {
    check_samples(data)?;
    fit_constrained_stats(&GramStats::from_dataset(data), cfg, false)
}

/// Per-row least squares with each row on the probability simplex.
pub fn fit_row_sum1<T: Scalar>(data: &PairedDataset<T>, cfg: &SolverConfig<T>) -> Result<TransitionMatrix<T>> {
    check_samples(data)?;
    fit_constrained_stats(&GramStats::from_dataset(data), cfg, true)
}

pub fn fit<T: Scalar>(data: &PairedDataset<T>, mode: FitMode, cfg: &SolverConfig<T>) -> Result<TransitionMatrix<T>> {
    check_samples(data)?;
    fit_stats(&GramStats::from_dataset(data), mode, cfg)
}

pub fn fit_stats<T: Scalar>(stats: &GramStats<T>, mode: FitMode, cfg: &SolverConfig<T>) -> Result<TransitionMatrix<T>> {
    match mode {
        FitMode::Ols => fit_ols_stats(stats, cfg),
        FitMode::NonNeg => fit_constrained_stats(stats, cfg, false),
        FitMode::RowSum => fit_constrained_stats(stats, cfg, true),
    }
}

fn fit_constrained_stats<T: Scalar>(stats: &GramStats<T>, cfg: &SolverConfig<T>, simplex: bool) -> Result<TransitionMatrix<T>> {
    let n = stats.dim;
    let rows: Vec<Result<Vec<T>, (usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || ActiveSet::new(n),
            |ws, i| {
                let rhs = stats.cross_row(i);
                if !simplex && rhs.iter().all(|&v| v <= T::zero()) {
                    // zero is optimal when no column correlates positively
                    return Ok(vec![T::zero(); n]);
                }
                ws.solve(&stats.gram, rhs, stats.scale, cfg, simplex).map_err(|(iters, res)| (i, iters, res))
            },
        )
        .collect();
    let mut data = Vec::with_capacity(n * n);
    let mut worst: Option<(usize, usize, f64)> = None;
    for r in rows {
        match r {
            Ok(row) => data.extend(row),
            Err(e) => {
                if worst.is_none_or(|w| e.2 > w.2) {
                    worst = Some(e);
                }
            }
        }
    }
    if let Some((row, iters, residual)) = worst {
        return Err(Error::Convergence { iters, row, residual });
    }
    let mode = if simplex { FitMode::RowSum } else { FitMode::NonNeg };
    TransitionMatrix::from_vec(n, data, mode)
}

/// Solves one non-negative (optionally simplex-constrained) row problem
/// `min a^T G a - 2 rhs^T a`, returning the row.
pub fn solve_row<T: Scalar>(gram: &[T], rhs: &[T], simplex: bool, cfg: &SolverConfig<T>) -> Result<Vec<T>> {
    let n = rhs.len();
    if gram.len() != n * n {
        return Err(Error::Dimension(format!("gram has {} entries for {n} variables", gram.len())));
    }
    let trace: T = (0..n).map(|k| gram[k * n + k]).sum();
    let scale = (trace / T::from_usize_lossy(n.max(1))).max(T::one());
    ActiveSet::new(n).solve(gram, rhs, scale, cfg, simplex).map_err(|(iters, residual)| Error::Convergence { iters, row: 0, residual })
}

/// Reusable Lawson-Hanson workspace.
struct ActiveSet<T> {
    n: usize,
    x: Vec<T>,
    grad: Vec<T>,
    passive: Vec<usize>,
    in_passive: Vec<bool>,
    rejected: Vec<bool>,
    chol: GrowingCholesky<T>,
    cross: Vec<T>,
}

impl<T: Scalar> ActiveSet<T> {
    fn new(n: usize) -> Self {
        Self {
            n,
            x: vec![T::zero(); n],
            grad: vec![T::zero(); n],
            passive: Vec::new(),
            in_passive: vec![false; n],
            rejected: vec![false; n],
            chol: GrowingCholesky::new(n),
            cross: Vec::with_capacity(n),
        }
    }

    fn reset(&mut self) {
        self.x.iter_mut().for_each(|v| *v = T::zero());
        self.passive.clear();
        self.in_passive.iter_mut().for_each(|v| *v = false);
        self.rejected.iter_mut().for_each(|v| *v = false);
        self.chol.clear();
    }

    fn jitter(gram: &[T], n: usize, k: usize, scale: T) -> T {
        gram[k * n + k] + scale * T::lit(1e-13)
    }

    /// Appends `k` to the passive set; false when its column is dependent.
    fn try_push(&mut self, gram: &[T], k: usize, scale: T) -> bool {
        let n = self.n;
        self.cross.clear();
        self.cross.extend(self.passive.iter().map(|&p| gram[p * n + k]));
        let diag = Self::jitter(gram, n, k, scale);
        let min_pivot = (diag * T::lit(1e-11)).max(T::min_positive_value());
        if self.chol.push(&self.cross, diag, min_pivot) {
            self.passive.push(k);
            self.in_passive[k] = true;
            true
        } else {
            false
        }
    }

    fn refactor(&mut self, gram: &[T], scale: T) {
        let members = std::mem::take(&mut self.passive);
        self.chol.clear();
        for &k in &members {
            self.in_passive[k] = false;
        }
        for k in members {
            if !self.try_push(gram, k, scale) {
                // numerically dependent after removals; drop it
                self.x[k] = T::zero();
            }
        }
    }

    fn update_gradient(&mut self, gram: &[T], rhs: &[T]) {
        let n = self.n;
        for (g, &b) in self.grad.iter_mut().zip(rhs) {
            *g = -b;
        }
        for &k in &self.passive {
            let xk = self.x[k];
            if xk != T::zero() {
                for (g, &gk) in self.grad.iter_mut().zip(&gram[k * n..(k + 1) * n]) {
                    *g = *g + xk * gk;
                }
            }
        }
    }

    /// Minimizer restricted to the passive set (with the sum constraint when
    /// `simplex`), in passive order.
    fn subproblem(&self, rhs: &[T], simplex: bool) -> Vec<T> {
        let mut z: Vec<T> = self.passive.iter().map(|&k| rhs[k]).collect();
        self.chol.solve_in_place(&mut z);
        if simplex {
            let mut w = vec![T::one(); self.passive.len()];
            self.chol.solve_in_place(&mut w);
            let sz: T = z.iter().copied().sum();
            let sw: T = w.iter().copied().sum();
            let mu = (T::one() - sz) / sw;
            for (zi, wi) in z.iter_mut().zip(&w) {
                *zi = *zi + mu * *wi;
            }
        }
        z
    }

    /// Returns the row on success, the iteration count on failure.
    /// Iteration count and scaled complementarity residual of an unfinished solve.
    fn failure(&mut self, gram: &[T], rhs: &[T], scale: T, simplex: bool, iters: usize) -> (usize, f64) {
        self.update_gradient(gram, rhs);
        let level = if simplex && !self.passive.is_empty() {
            self.passive.iter().map(|&k| self.grad[k]).sum::<T>() / T::from_usize_lossy(self.passive.len())
        } else {
            T::zero()
        };
        let worst = (0..self.n).map(|k| self.x[k].min(self.grad[k] - level).abs()).fold(T::zero(), |m, v| m.max(v));
        (iters, (worst / scale).as_f64())
    }

    fn solve(&mut self, gram: &[T], rhs: &[T], scale: T, cfg: &SolverConfig<T>, simplex: bool) -> Result<Vec<T>, (usize, f64)> {
        let n = self.n;
        self.reset();
        let tol = cfg.kkt_tol * scale * T::lit(0.25);

        if simplex {
            // start from the best vertex of the simplex
            let mut best = 0;
            let mut best_val = T::infinity();
            for k in 0..n {
                let v = T::lit(0.5) * gram[k * n + k] - rhs[k];
                if v < best_val {
                    best_val = v;
                    best = k;
                }
            }
            let pushed = self.try_push(gram, best, scale);
            debug_assert!(pushed);
            self.x[best] = T::one();
        }

        let mut iters = 0;
        loop {
            iters += 1;
            if iters > cfg.max_iters {
                return Err(self.failure(gram, rhs, scale, simplex, iters - 1));
            }
            self.update_gradient(gram, rhs);
            // multiplier of the sum constraint: the passive gradients share one value at optimum
            let level = if simplex && !self.passive.is_empty() {
                let (lo, hi) = self
                    .passive
                    .iter()
                    .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &k| (lo.min(self.grad[k]), hi.max(self.grad[k])));
                (lo + hi) * T::lit(0.5)
            } else {
                T::zero()
            };

            // entering variable: steepest descent direction among the active bounds
            let mut entered = false;
            loop {
                let mut best: Option<(usize, T)> = None;
                for k in 0..n {
                    if self.in_passive[k] || self.rejected[k] {
                        continue;
                    }
                    let w = level - self.grad[k];
                    if w > tol && best.is_none_or(|(_, bw)| w > bw) {
                        best = Some((k, w));
                    }
                }
                let Some((k, _)) = best else { break };
                if self.try_push(gram, k, scale) {
                    entered = true;
                    break;
                }
                self.rejected[k] = true;
            }
            if !entered {
                return Ok(self.x.clone());
            }
            let newest = *self.passive.last().expect("just pushed");

            // inner loop: keep the iterate feasible
            loop {
                iters += 1;
                if iters > cfg.max_iters {
                    return Err(self.failure(gram, rhs, scale, simplex, iters - 1));
                }
                let z = self.subproblem(rhs, simplex);
                let tiny = T::lit(1e-15);
                if z.iter().all(|&v| v > tiny) {
                    for (&k, &v) in self.passive.iter().zip(&z) {
                        self.x[k] = v;
                    }
                    break;
                }
                // step toward z until the first passive entry hits zero
                let mut alpha = T::one();
                let mut blocking = usize::MAX;
                for (&k, &zk) in self.passive.iter().zip(&z) {
                    if zk <= tiny {
                        let xk = self.x[k];
                        let denom = xk - zk;
                        let a = if denom > T::zero() { xk / denom } else { T::zero() };
                        if a < alpha || blocking == usize::MAX {
                            alpha = a.min(alpha);
                            blocking = k;
                        }
                    }
                }
                let mut removed = vec![blocking];
                for (&k, &zk) in self.passive.iter().zip(&z) {
                    let xk = self.x[k] + alpha * (zk - self.x[k]);
                    self.x[k] = xk;
                    if k != blocking && xk <= tiny {
                        removed.push(k);
                    }
                }
                if removed == [newest] && alpha == T::zero() {
                    // the entering column cannot move; do not pick it again
                    self.rejected[newest] = true;
                }
                for &k in &removed {
                    self.x[k] = T::zero();
                    self.in_passive[k] = false;
                }
                self.passive.retain(|k| !removed.contains(k));
                if simplex {
                    if self.passive.is_empty() {
                        return Err(self.failure(gram, rhs, scale, simplex, iters));
                    }
                    // keep the iterate on the simplex after dropping round-off mass
                    let s: T = self.passive.iter().map(|&k| self.x[k]).sum();
                    if s > T::zero() {
                        for &k in &self.passive {
                            self.x[k] = self.x[k] / s;
                        }
                    }
                }
                self.refactor(gram, scale);
            }
        }
    }
}

/// Worst KKT violation over rows, relative to `max(1, trace(G) / dim)`.
///
/// * OLS: `|g|` with `g` the gradient of the (ridge-regularized) half objective.
/// * NonNeg: negative entries, negative gradient components, and gradient on the support.
/// * RowSum: as NonNeg with the gradient shifted by the sum multiplier, plus `|sum - 1|`.
pub fn kkt_residual<T: Scalar>(a: &TransitionMatrix<T>, data: &PairedDataset<T>) -> Result<T> {
    if a.dim != data.dim {
        return Err(Error::Dimension(format!("matrix dim {} vs data dim {}", a.dim, data.dim)));
    }
    Ok(kkt_residual_stats(a, &GramStats::from_dataset(data)))
}

pub fn kkt_residual_stats<T: Scalar>(a: &TransitionMatrix<T>, stats: &GramStats<T>) -> T {
    (0..a.dim).into_par_iter().map(|i| row_kkt(a, stats, i)).reduce(|| T::zero(), |x, y| x.max(y))
}

fn row_kkt<T: Scalar>(a: &TransitionMatrix<T>, stats: &GramStats<T>, i: usize) -> T {
    let row = a.row(i);
    let mut g = stats.row_gradient(i, row);
    let support = T::lit(SUPPORT_THRESHOLD);
    let worst = match a.mode {
        FitMode::Ols => {
            for (gj, &aj) in g.iter_mut().zip(row) {
                *gj = *gj + a.ridge * aj;
            }
            g.iter().fold(T::zero(), |m, v| m.max(v.abs()))
        }
        FitMode::NonNeg => complementarity(row, &g, T::zero(), support),
        FitMode::RowSum => {
            let (lo, hi) = row
                .iter()
                .zip(&g)
                .filter(|(&aj, _)| aj > support)
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), (_, &gj)| (lo.min(gj), hi.max(gj)));
            let level = if lo.is_finite() { (lo + hi) * T::lit(0.5) } else { g.iter().fold(T::infinity(), |m, &v| m.min(v)) };
            let sum: T = row.iter().copied().sum();
            complementarity(row, &g, level, support).max((sum - T::one()).abs() * stats.scale)
        }
    };
    worst / stats.scale
}

/// Entries above this count as part of a row's support in KKT checks.
const SUPPORT_THRESHOLD: f64 = 1e-9;

fn complementarity<T: Scalar>(row: &[T], g: &[T], level: T, support: T) -> T {
    let mut worst = T::zero();
    for (&aj, &gj) in row.iter().zip(g) {
        let shifted = gj - level;
        worst = worst.max(-aj).max(-shifted);
        if aj > support {
            worst = worst.max(shifted.abs());
        }
    }
    worst
}

/// `||Y1 - A Y0||_F` evaluated directly on the data.
pub fn objective<T: Scalar>(a: &TransitionMatrix<T>, data: &PairedDataset<T>) -> T {
    let ss: T = (0..data.samples)
        .map(|s| {
            let pred = a.apply(data.pre_column(s));
            pred.iter().zip(data.post_column(s)).map(|(&p, &y)| (p - y) * (p - y)).sum::<T>()
        })
        .sum();
    ss.sqrt()
}

/// Mean over samples of `||y1 - A y0||_2`.
pub fn mean_prediction_error<T: Scalar>(a: &TransitionMatrix<T>, data: &PairedDataset<T>) -> T {
    if data.samples == 0 {
        return T::zero();
    }
    let total: T = (0..data.samples)
        .map(|s| {
            let pred = a.apply(data.pre_column(s));
            pred.iter().zip(data.post_column(s)).map(|(&p, &y)| (p - y) * (p - y)).sum::<T>().sqrt()
        })
        .sum();
    total / T::from_usize_lossy(data.samples)
}
