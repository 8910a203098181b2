//! Row-major dense matrices with a blocked LU factorisation.
//!
//! The trailing update of the factorisation goes through `matrixmultiply`,
//! which is what makes per-patch solves of a few thousand unknowns cheap.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self * other` through `matrixmultiply::dgemm`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm_acc(
            self.rows,
            self.cols,
            other.cols,
            1.0,
            &self.data,
            self.cols,
            &other.data,
            other.cols,
            0.0,
            &mut out.data,
            other.cols,
        );
        out
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn lu(self) -> Result<LuFactor> {
        LuFactor::new(self)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `c = alpha * a * b + beta * c` on row-major slices with explicit leading dimensions.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    lda: usize,
    b: &[f64],
    ldb: usize,
    beta: f64,
    c: &mut [f64],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= (m - 1) * lda + k || k == 0);
    assert!(b.len() >= k.saturating_sub(1) * ldb + n || k == 0);
    assert!(c.len() >= (m - 1) * ldc + n);
    // SAFETY: bounds asserted above; the three slices are distinct borrows.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            lda as isize,
            1,
            b.as_ptr(),
            ldb as isize,
            1,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

const BLOCK: usize = 64;

/// `P A = L U` with unit lower-triangular `L`, stored in place.
#[derive(Debug, Clone)]
pub struct LuFactor {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactor {
    pub fn new(a: Matrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::Shape(format!(
                "LU of a {}x{} matrix",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut lu = a.data;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if n > 0 && scale == 0.0 {
            return Err(Error::Singular("zero matrix".into()));
        }
        let tiny = scale * f64::EPSILON * 1e-3;

        let mut k0 = 0;
        while k0 < n {
            let kb = BLOCK.min(n - k0);
            let kend = k0 + kb;
            // panel
            for k in k0..kend {
                let mut p = k;
                let mut best = lu[k * n + k].abs();
                for i in k + 1..n {
                    let v = lu[i * n + k].abs();
                    if v > best {
                        best = v;
                        p = i;
                    }
                }
                if best <= tiny || !best.is_finite() {
                    return Err(Error::Singular(format!(
                        "pivot {best:.3e} at column {k} of {n} (scale {scale:.3e})"
                    )));
                }
                if p != k {
                    for j in 0..n {
                        lu.swap(k * n + j, p * n + j);
                    }
                    perm.swap(k, p);
                }
                let pivot = lu[k * n + k];
                for i in k + 1..n {
                    let l = lu[i * n + k] / pivot;
                    lu[i * n + k] = l;
                    if l != 0.0 {
                        for j in k + 1..kend {
                            lu[i * n + j] -= l * lu[k * n + j];
                        }
                    }
                }
            }
            if kend < n {
                // U12 = L11^{-1} A12
                for k in k0..kend {
                    for i in k + 1..kend {
                        let l = lu[i * n + k];
                        if l != 0.0 {
                            let (top, bottom) = lu.split_at_mut(i * n);
                            let src = &top[k * n + kend..k * n + n];
                            let dst = &mut bottom[kend..n];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d -= l * s;
                            }
                        }
                    }
                }
                // A22 -= L21 U12
                let m = n - kend;
                let (head, tail) = lu.split_at_mut(kend * n);
                let u12 = &head[k0 * n + kend..];
                let mut l21 = Vec::with_capacity(m * kb);
                for i in 0..m {
                    l21.extend_from_slice(&tail[i * n + k0..i * n + kend]);
                }
                gemm_acc(m, kb, m, -1.0, &l21, kb, u12, n, 1.0, &mut tail[kend..], n);
            }
            k0 = kend;
        }
        Ok(Self { n, lu, perm })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Ratio of largest to smallest pivot magnitude; a cheap conditioning proxy.
    pub fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.n).map(|i| self.lu[i * self.n + i].abs()).collect();
        let mx = d.iter().cloned().fold(0.0, f64::max);
        let mn = d.iter().cloned().fold(f64::INFINITY, f64::min);
        mx / mn
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Matrix::from_vec(b.len(), 1, b.to_vec());
        self.solve_in_place(&mut m);
        m.into_vec()
    }

    /// Overwrites `b` (n × r) with `A^{-1} b`.
    pub fn solve_in_place(&self, b: &mut Matrix) {
        let n = self.n;
        assert_eq!(b.rows, n);
        let r = b.cols;
        let mut x = vec![0.0; n * r];
        for (i, &p) in self.perm.iter().enumerate() {
            x[i * r..(i + 1) * r].copy_from_slice(&b.data[p * r..(p + 1) * r]);
        }
        for i in 1..n {
            let (done, rest) = x.split_at_mut(i * r);
            let xi = &mut rest[..r];
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l != 0.0 {
                    for (d, s) in xi.iter_mut().zip(&done[k * r..(k + 1) * r]) {
                        *d -= l * s;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            let (head, rest) = x.split_at_mut((i + 1) * r);
            let xi = &mut head[i * r..];
            for k in i + 1..n {
                let u = self.lu[i * n + k];
                if u != 0.0 {
                    let src = &rest[(k - i - 1) * r..(k - i) * r];
                    for (d, s) in xi.iter_mut().zip(src) {
                        *d -= u * s;
                    }
                }
            }
            let piv = self.lu[i * n + i];
            xi.iter_mut().for_each(|v| *v /= piv);
        }
        b.data = x;
    }
}
