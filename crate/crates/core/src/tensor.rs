use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Vectors are stored as single columns; a batch of vectors is a matrix whose
/// columns are the examples.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Usage(format!(
                "tensor of shape [{rows}, {cols}] needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Column vector.
    pub fn column(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Usage("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of column `c`.
    pub fn column_values(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

/// Row-major transpose of `[rows×cols]`.
fn transposed(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for (i, row) in x.chunks_exact(cols).take(rows).enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j * rows + i] = *v;
        }
    }
    t
}

// The kernels below keep their inner loops along `p`/`q` (hidden sizes)
// rather than `r` (the batch), which is usually small.

/// `out += a · b` for row-major `a: [p×q]`, `b: [q×r]`, `out: [p×r]`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], p: usize, q: usize, r: usize) {
    if r == 1 {
        for (o, a_row) in out[..p].iter_mut().zip(a.chunks_exact(q)) {
            *o += dot(a_row, &b[..q]);
        }
        return;
    }
    let bt = transposed(b, q, r);
    for (a_row, out_row) in a.chunks_exact(q).zip(out.chunks_exact_mut(r)).take(p) {
        for (o, b_col) in out_row.iter_mut().zip(bt.chunks_exact(q)) {
            *o += dot(a_row, b_col);
        }
    }
}

/// `out += a · bᵀ` for `a: [p×r]`, `b: [q×r]`, `out: [p×q]`.
pub(crate) fn matmul_bt_acc(a: &[f64], b: &[f64], out: &mut [f64], p: usize, q: usize, r: usize) {
    if r == 1 {
        // outer product
        for (ai, out_row) in a[..p].iter().zip(out.chunks_exact_mut(q)) {
            axpy(*ai, &b[..q], out_row);
        }
        return;
    }
    // sum of r outer products
    let at = transposed(a, p, r);
    let bt = transposed(b, q, r);
    for (a_col, b_col) in at.chunks_exact(p).zip(bt.chunks_exact(q)) {
        for (ai, out_row) in a_col.iter().zip(out.chunks_exact_mut(q)) {
            if *ai != 0.0 {
                axpy(*ai, b_col, out_row);
            }
        }
    }
}

/// `out += aᵀ · b` for `a: [p×q]`, `b: [p×r]`, `out: [q×r]`.
pub(crate) fn matmul_at_acc(a: &[f64], b: &[f64], out: &mut [f64], p: usize, q: usize, r: usize) {
    if r == 1 {
        for (bi, a_row) in b[..p].iter().zip(a.chunks_exact(q)) {
            axpy(*bi, a_row, out);
        }
        return;
    }
    let bt = transposed(b, p, r);
    let mut col = vec![0.0; q];
    for (c, b_col) in bt.chunks_exact(p).enumerate() {
        col.iter_mut().for_each(|v| *v = 0.0);
        for (bi, a_row) in b_col.iter().zip(a.chunks_exact(q)) {
            if *bi != 0.0 {
                axpy(*bi, a_row, &mut col);
            }
        }
        for (k, v) in col.iter().enumerate() {
            out[k * r + c] += v;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn transpose(t: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(t.cols(), t.rows());
        for i in 0..t.rows() {
            for j in 0..t.cols() {
                out.set(j, i, t.get(i, j));
            }
        }
        out
    }

    #[test]
    fn kernels_agree_with_naive_product() {
        let a = Tensor::from_vec(3, 5, (0..15).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        for r in [1, 4] {
            let b = Tensor::from_vec(5, r, (0..5 * r).map(|v| (v as f64 * 0.91).cos()).collect())
                .unwrap();
            let mut out = vec![0.0; 3 * r];
            matmul_acc(a.data(), b.data(), &mut out, 3, 5, r);
            let expect = naive(&a, &b);
            for (x, y) in out.iter().zip(expect.data()) {
                assert!((x - y).abs() < 1e-12);
            }
            // a·(bᵀ)ᵀ and (aᵀ)ᵀ·b through the transposed kernels
            let bt = transpose(&b);
            let mut out = vec![0.0; 3 * r];
            matmul_bt_acc(a.data(), bt.data(), &mut out, 3, r, 5);
            for (x, y) in out.iter().zip(expect.data()) {
                assert!((x - y).abs() < 1e-12);
            }
            let at = transpose(&a);
            let mut out = vec![0.0; 3 * r];
            matmul_at_acc(at.data(), b.data(), &mut out, 5, 3, r);
            for (x, y) in out.iter().zip(expect.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outer_products() {
        let a = [1.0, -2.0, 0.5];
        let b = [3.0, 4.0];
        let mut out = vec![0.0; 6];
        matmul_bt_acc(&a, &b, &mut out, 3, 2, 1);
        assert_eq!(out, vec![3.0, 4.0, -6.0, -8.0, 1.5, 2.0]);
        let mut out = vec![0.0; 2];
        matmul_at_acc(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &a, &mut out, 3, 2, 1);
        assert_eq!(out, vec![1.0 - 6.0 + 2.5, 2.0 - 8.0 + 3.0]);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(2, 2, vec![1.0; 3]).is_err());
    }
}
