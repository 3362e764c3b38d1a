//! Dense row-major `f64` matrices and the handful of kernels the reader needs.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer does not match {rows}x{cols}");
        Mat { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(cols: usize, rows: &[R]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols);
            data.extend_from_slice(r.as_ref());
        }
        Mat { rows: rows.len(), cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// New matrix made of the listed rows, in the listed order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Mat { rows: idx.len(), cols: self.cols, data }
    }

    /// `[self | other]` column-wise.
    pub fn hconcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Mat { rows: self.rows, cols, data }
    }

    /// Splits columns at `at` into `(left, right)`.
    pub fn hsplit(&self, at: usize) -> (Mat, Mat) {
        let mut left = Mat::zeros(self.rows, at);
        let mut right = Mat::zeros(self.rows, self.cols - at);
        for i in 0..self.rows {
            let r = self.row(i);
            left.row_mut(i).copy_from_slice(&r[..at]);
            right.row_mut(i).copy_from_slice(&r[at..]);
        }
        (left, right)
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows, rhs.cols);
        gemm_nn_acc(&mut out, self, rhs);
        out
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.cols);
        let mut out = Mat::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (j, oj) in o.iter_mut().enumerate() {
                *oj = dot(a, rhs.row(j));
            }
        }
        out
    }

    /// `self · v` for a column vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `vᵀ · self`, i.e. the weighted sum of rows.
    pub fn vecmat(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![0.0; self.cols];
        for (i, &w) in v.iter().enumerate() {
            axpy(&mut out, w, self.row(i));
        }
        out
    }
}

/// `out += a · b`.
pub fn gemm_nn_acc(out: &mut Mat, a: &Mat, b: &Mat) {
    assert_eq!(a.cols, b.rows);
    assert_eq!((out.rows, out.cols), (a.rows, b.cols));
    let n = b.cols;
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        let orow = &mut out.data[i * n..(i + 1) * n];
        axpy_rows(orow, arow, &b.data, n);
    }
}

/// `y += Σ_k w[k] · rows[k]`, four rows per sweep over `y`.
fn axpy_rows(y: &mut [f64], w: &[f64], rows: &[f64], n: usize) {
    let mut k = 0;
    while k + 4 <= w.len() {
        let (w0, w1, w2, w3) = (w[k], w[k + 1], w[k + 2], w[k + 3]);
        let r = &rows[k * n..(k + 4) * n];
        let (r0, rest) = r.split_at(n);
        let (r1, rest) = rest.split_at(n);
        let (r2, r3) = rest.split_at(n);
        for ((((yj, a), b), c), d) in y.iter_mut().zip(r0).zip(r1).zip(r2).zip(r3) {
            *yj += (w0 * a + w1 * b) + (w2 * c + w3 * d);
        }
        k += 4;
    }
    for (k, &wk) in w.iter().enumerate().skip(k) {
        axpy(y, wk, &rows[k * n..(k + 1) * n]);
    }
}

/// `out += aᵀ · b`.
pub fn gemm_tn_acc(out: &mut Mat, a: &Mat, b: &Mat) {
    assert_eq!(a.rows, b.rows);
    assert_eq!((out.rows, out.cols), (a.cols, b.cols));
    let n = b.cols;
    let mut r = 0;
    while r < a.rows {
        let block = (a.rows - r).min(4);
        let brows = &b.data[r * n..(r + block) * n];
        for i in 0..a.cols {
            let mut w = [0.0; 4];
            for (l, wl) in w.iter_mut().take(block).enumerate() {
                *wl = a.data[(r + l) * a.cols + i];
            }
            axpy_rows(&mut out.data[i * n..(i + 1) * n], &w[..block], brows, n);
        }
        r += block;
    }
}

/// `out += a · bᵀ`.
pub fn gemm_nt_acc(out: &mut Mat, a: &Mat, b: &Mat) {
    assert_eq!(a.cols, b.cols);
    assert_eq!((out.rows, out.cols), (a.rows, b.rows));
    let m = b.rows;
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * m..(i + 1) * m];
        let mut j = 0;
        while j + 4 <= m {
            let d = dot4(arow, [b.row(j), b.row(j + 1), b.row(j + 2), b.row(j + 3)]);
            for (o, v) in orow[j..j + 4].iter_mut().zip(d) {
                *o += v;
            }
            j += 4;
        }
        for (j, o) in orow.iter_mut().enumerate().skip(j) {
            *o += dot(arow, b.row(j));
        }
    }
}

/// Four dot products sharing the left operand.
#[inline]
fn dot4(a: &[f64], b: [&[f64]; 4]) -> [f64; 4] {
    let mut acc = [[0.0f64; 2]; 4];
    let pairs = a.len() / 2;
    for p in 0..pairs {
        let (x0, x1) = (a[2 * p], a[2 * p + 1]);
        for (l, row) in b.iter().enumerate() {
            acc[l][0] += x0 * row[2 * p];
            acc[l][1] += x1 * row[2 * p + 1];
        }
    }
    let mut out = [0.0; 4];
    for (l, row) in b.iter().enumerate() {
        out[l] = acc[l][0] + acc[l][1];
        if a.len() % 2 == 1 {
            out[l] += a[a.len() - 1] * row[a.len() - 1];
        }
    }
    out
}

/// `out += x yᵀ`.
pub fn outer_acc(out: &mut Mat, x: &[f64], y: &[f64]) {
    assert_eq!((out.rows, out.cols), (x.len(), y.len()));
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(out.row_mut(i), xi, y);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent lanes so the loop vectorizes.
    let mut acc = [0.0f64; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Numerically stable softmax. An empty slice yields an empty vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Backward pass of softmax: given `p = softmax(z)` and `dL/dp`, returns `dL/dz`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner = dot(p, dp);
    p.iter().zip(dp).map(|(pi, gi)| pi * (gi - inner)).collect()
}
