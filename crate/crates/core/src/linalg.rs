//! Dense least squares by Householder QR with column pivoting.
//!
//! Columns whose pivot falls below `tol * |R_11|` are treated as numerically
//! dependent. In that case the minimum-norm solution is obtained from a
//! complete orthogonal decomposition: the leading `rank` rows of `R` are
//! factored once more from the right, which annihilates the trailing block.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a matrix from row-major nested rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![T::zero(); self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.col(j)) {
                *o += a * xj;
            }
        }
        out
    }

    /// Multiplies row `i` by `scale[i]`.
    pub fn scale_rows(&mut self, scale: &[T]) {
        assert_eq!(scale.len(), self.rows);
        for j in 0..self.cols {
            for (a, &s) in self.col_mut(j).iter_mut().zip(scale) {
                *a *= s;
            }
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(a * self.rows + i, b * self.rows + i);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.rows + i]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.rows + i]
    }
}

/// Solution of `min ||A x - b||`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares<T> {
    pub x: Vec<T>,
    /// Numerical rank of `A`.
    pub rank: usize,
}

impl<T> LeastSquares<T> {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.x.len()
    }
}

/// Least-squares solve with the default rank tolerance.
pub fn lstsq<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<LeastSquares<T>> {
    lstsq_with_tol(a, b, T::rank_tolerance())
}

/// Householder reflector `I - beta v v^T` acting on rows `start..`.
struct Reflector<T> {
    start: usize,
    v: Vec<T>,
    beta: T,
}

impl<T: Real> Reflector<T> {
    /// Builds the reflector mapping `x` onto `alpha e_1`; returns it with `alpha`.
    fn annihilate(start: usize, x: &[T]) -> (Self, T) {
        let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() {
            return (
                Self {
                    start,
                    v: vec![T::zero(); x.len()],
                    beta: T::zero(),
                },
                T::zero(),
            );
        }
        let alpha = if x[0] > T::zero() { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vtv: T = v.iter().map(|&e| e * e).sum();
        let beta = if vtv > T::zero() { T::lit(2.0) / vtv } else { T::zero() };
        (Self { start, v, beta }, alpha)
    }

    fn apply(&self, y: &mut [T]) {
        if self.beta == T::zero() {
            return;
        }
        let tail = &mut y[self.start..self.start + self.v.len()];
        let s = self.beta * self.v.iter().zip(tail.iter()).map(|(&v, &t)| v * t).sum::<T>();
        for (t, &v) in tail.iter_mut().zip(&self.v) {
            *t -= s * v;
        }
    }
}

pub fn lstsq_with_tol<T: Real>(a: &Matrix<T>, b: &[T], tol: T) -> Result<LeastSquares<T>> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::Contract(format!("right-hand side has {} rows, matrix {}", b.len(), m)));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("design matrix"));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observations"));
    }
    if n == 0 {
        return Ok(LeastSquares { x: Vec::new(), rank: 0 });
    }

    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);

    for k in 0..steps {
        // pivot: largest remaining column norm below row k
        let mut best = k;
        let mut best_norm = T::neg_infinity();
        for j in k..n {
            let nrm: T = r.col(j)[k..].iter().map(|&v| v * v).sum();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        r.swap_cols(k, best);
        perm.swap(k, best);

        let (h, alpha) = Reflector::annihilate(k, &r.col(k)[k..]);
        for j in k + 1..n {
            h.apply(r.col_mut(j));
        }
        h.apply(&mut qtb);
        let col = r.col_mut(k);
        col[k] = alpha;
        for v in &mut col[k + 1..] {
            *v = T::zero();
        }
    }

    let lead = r[(0, 0)].abs();
    let rank = (0..steps)
        .take_while(|&k| lead > T::zero() && r[(k, k)].abs() > tol * lead)
        .count();

    let mut z = vec![T::zero(); n];
    if rank == n {
        back_substitute(&r, &qtb[..n], &mut z);
    } else if rank > 0 {
        min_norm_solve(&r, &qtb[..rank], rank, &mut z);
    }

    let mut x = vec![T::zero(); n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = z[k];
    }
    Ok(LeastSquares { x, rank })
}

/// Solves the leading `n x n` upper triangle of `r` against `c`.
fn back_substitute<T: Real>(r: &Matrix<T>, c: &[T], x: &mut [T]) {
    let n = c.len();
    for i in (0..n).rev() {
        let mut s = c[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
}

/// Minimum-norm solution of `R[0..rank, 0..n] z = c`.
///
/// Factor `R_top^T = Z S` with `S` upper triangular; then `R_top = S^T Z^T`
/// and the minimum-norm solution is `Z [S^-T c; 0]`.
fn min_norm_solve<T: Real>(r: &Matrix<T>, c: &[T], rank: usize, z: &mut [T]) {
    let n = r.cols();
    // rt is n x rank, column i holds row i of R_top
    let mut rt = Matrix::zeros(n, rank);
    for i in 0..rank {
        for j in i..n {
            rt[(j, i)] = r[(i, j)];
        }
    }
    let mut reflectors = Vec::with_capacity(rank);
    for k in 0..rank {
        let (h, alpha) = Reflector::annihilate(k, &rt.col(k)[k..]);
        for j in k + 1..rank {
            h.apply(rt.col_mut(j));
        }
        rt[(k, k)] = alpha;
        reflectors.push(h);
    }
    // S^T w = c, forward substitution with S = upper triangle of rt
    let mut w = vec![T::zero(); n];
    for i in 0..rank {
        let mut s = c[i];
        for j in 0..i {
            s -= rt[(j, i)] * w[j];
        }
        w[i] = s / rt[(i, i)];
    }
    // Z = H_0 H_1 .. H_{rank-1}; apply right to left
    for h in reflectors.iter().rev() {
        h.apply(&mut w);
    }
    z.copy_from_slice(&w);
}
