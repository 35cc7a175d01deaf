//! Independent reference solvers used by the integration and acceptance tests.
#![allow(dead_code)]

use pushfore::lsq::PairedDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense Gaussian elimination with partial pivoting. `None` when singular.
pub fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-12 {
            return None;
        }
        for k in 0..n {
            a.swap(col * n + k, piv * n + k);
        }
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Some(x)
}

/// `a^T G a - 2 b^T a`.
pub fn quad(g: &[f64], b: &[f64], a: &[f64]) -> f64 {
    let n = b.len();
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            v += a[i] * g[i * n + j] * a[j];
        }
        v -= 2.0 * b[i] * a[i];
    }
    v
}

/// Minimum of `a^T G a - 2 b^T a` over `a >= 0` (and `sum a = 1` when
/// `simplex`), by enumerating every support set and keeping feasible
/// stationary points.
pub fn exhaustive_row(g: &[f64], b: &[f64], simplex: bool) -> (Vec<f64>, f64) {
    let n = b.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).collect();
        if simplex && s.is_empty() {
            continue;
        }
        let m = s.len() + usize::from(simplex);
        let mut sys = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for (r, &i) in s.iter().enumerate() {
            for (c, &j) in s.iter().enumerate() {
                sys[r * m + c] = g[i * n + j];
            }
            rhs[r] = b[i];
            if simplex {
                sys[r * m + s.len()] = 0.5;
                sys[s.len() * m + r] = 1.0;
            }
        }
        if simplex {
            rhs[s.len()] = 1.0;
        }
        let Some(x) = solve_dense(sys, rhs) else { continue };
        if x[..s.len()].iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut a = vec![0.0; n];
        for (r, &i) in s.iter().enumerate() {
            a[i] = x[r].max(0.0);
        }
        let obj = quad(g, b, &a);
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((a, obj));
        }
    }
    best.expect("the empty support is always feasible without the simplex constraint")
}

/// Gram `Y0 Y0^T` and cross `Y1 Y0^T`, both row-major, computed densely.
pub fn dense_moments(data: &PairedDataset<f64>) -> (Vec<f64>, Vec<f64>) {
    let d = data.dim();
    let mut g = vec![0.0; d * d];
    let mut c = vec![0.0; d * d];
    for s in 0..data.samples() {
        let (x, y) = (data.pre_column(s), data.post_column(s));
        for i in 0..d {
            for j in 0..d {
                g[i * d + j] += x[i] * x[j];
                c[i * d + j] += y[i] * x[j];
            }
        }
    }
    (g, c)
}

/// `||Y1 - A Y0||_F^2` for a row-major `d x d` matrix.
pub fn sq_objective(a: &[f64], data: &PairedDataset<f64>) -> f64 {
    let d = data.dim();
    (0..data.samples())
        .map(|s| {
            let (x, y) = (data.pre_column(s), data.post_column(s));
            (0..d)
                .map(|i| {
                    let p: f64 = (0..d).map(|j| a[i * d + j] * x[j]).sum();
                    (p - y[i]).powi(2)
                })
                .sum::<f64>()
        })
        .sum()
}

/// Monolithic non-negative least squares over all `d^2` entries at once,
/// by cyclic coordinate descent on the explicit `d^2 x d^2` Hessian
/// `kron(I, G)`. Knows nothing about the row structure.
pub fn monolithic_nnls(data: &PairedDataset<f64>, sweeps: usize) -> Vec<f64> {
    let d = data.dim();
    let (g, c) = dense_moments(data);
    let nv = d * d;
    // H[(i,j),(k,l)] = [i == k] G[j,l]; linear term q[(i,j)] = C[i,j]
    let mut h = vec![0.0; nv * nv];
    for i in 0..d {
        for j in 0..d {
            for l in 0..d {
                h[(i * d + j) * nv + i * d + l] = g[j * d + l];
            }
        }
    }
    let mut x = vec![0.0; nv];
    let mut grad: Vec<f64> = c.iter().map(|v| -v).collect(); // H x - q at x = 0
    for _ in 0..sweeps {
        let mut moved = 0.0f64;
        for v in 0..nv {
            let hvv = h[v * nv + v];
            if hvv <= 0.0 {
                continue;
            }
            let nx = (x[v] - grad[v] / hvv).max(0.0);
            let delta = nx - x[v];
            if delta != 0.0 {
                x[v] = nx;
                for w in 0..nv {
                    grad[w] += h[w * nv + v] * delta;
                }
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    x
}

/// Random dataset with pre entries in `[0, 1]` and post entries in `[lo, hi]`.
pub fn random_dataset(dim: usize, samples: usize, lo: f64, hi: f64, seed: u64) -> PairedDataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pre = (0..dim * samples).map(|_| rng.gen::<f64>()).collect();
    let post = (0..dim * samples).map(|_| rng.gen_range(lo..=hi)).collect();
    PairedDataset::new(dim, pre, post, 0).unwrap()
}

/// Random `dim x dim` row problem `(G, b)` built from `samples` random columns.
pub fn random_row_problem(dim: usize, samples: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let data = random_dataset(dim, samples, -0.5, 1.0, seed);
    let (g, c) = dense_moments(&data);
    (g, c[..dim].to_vec())
}
