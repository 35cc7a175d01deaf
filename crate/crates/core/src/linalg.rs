//! Small dense Cholesky factors.

use crate::scalar::Scalar;

/// Dense lower-triangular Cholesky factor stored row-major in a square buffer.
#[derive(Clone, Debug)]
pub(crate) struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors a symmetric positive definite `n x n` row-major matrix.
    /// On failure returns the offending pivot index and value.
    pub fn factor(a: &[T], n: usize) -> Result<Self, (usize, T)> {
        let mut l = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                for k in 0..j {
                    s = s - ri[k] * rj[k];
                }
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err((i, s));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = b[i];
            for k in 0..i {
                s = s - row[k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s = s - self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// Cholesky factor of a principal submatrix that grows one index at a time.
#[derive(Clone, Debug)]
pub(crate) struct GrowingCholesky<T> {
    cap: usize,
    size: usize,
    l: Vec<T>,
}

impl<T: Scalar> GrowingCholesky<T> {
    pub fn new(cap: usize) -> Self {
        Self { cap, size: 0, l: vec![T::zero(); cap * cap] }
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn clear(&mut self) {
        self.size = 0;
    }

    #[inline]
    fn stride(&self) -> usize {
        self.cap
    }

    /// Appends a row/column with cross terms against the current indices
    /// and diagonal `diag = G[new, new]`. Rejects (returns false) when the new
    /// pivot is below `min_pivot`, leaving the factor unchanged.
    pub fn push(&mut self, cross: &[T], diag: T, min_pivot: T) -> bool {
        debug_assert_eq!(cross.len(), self.size);
        if self.size == self.cap {
            return false;
        }
        let s = self.stride();
        let k = self.size;
        let mut row = vec![T::zero(); k];
        for i in 0..k {
            let mut v = cross[i];
            let li = &self.l[i * s..i * s + i];
            for t in 0..i {
                v = v - li[t] * row[t];
            }
            row[i] = v / self.l[i * s + i];
        }
        let d = diag - row.iter().map(|&v| v * v).sum::<T>();
        if !(d > min_pivot) || !d.is_finite() {
            return false;
        }
        self.l[k * s..k * s + k].copy_from_slice(&row);
        self.l[k * s + k] = d.sqrt();
        self.size += 1;
        true
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.size;
        let s = self.stride();
        for i in 0..n {
            let row = &self.l[i * s..i * s + i];
            let mut v = b[i];
            for k in 0..i {
                v = v - row[k] * b[k];
            }
            b[i] = v / self.l[i * s + i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in i + 1..n {
                v = v - self.l[k * s + i] * b[k];
            }
            b[i] = v / self.l[i * s + i];
        }
    }
}
