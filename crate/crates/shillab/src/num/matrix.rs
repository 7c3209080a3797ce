//! Dense row-major f64 matrices and the handful of elementwise ops the
//! models need. Everything is plain loops; shapes stay small enough that a
//! cache-friendly ikj matmul is all the tuning required.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMatrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { context })
        }
    }

    /// Standard matrix product `self * b`.
    pub fn matmul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: b.shape(),
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, b.cols);
        // ikj order: the inner loop walks contiguous rows of b and out.
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (k, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                for (o, &bkj) in orow.iter_mut().zip(brow.iter()) {
                    *o += aik * bkj;
                }
            }
        }
        out.check_finite("matmul output")?;
        Ok(out)
    }

    /// `self^T * b` without materializing the transpose.
    pub fn matmul_tn(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != b.rows {
            return Err(Error::Shape {
                op: "matmul_tn",
                left: self.shape(),
                right: b.shape(),
            });
        }
        let mut out = DenseMatrix::zeros(self.cols, b.cols);
        for r in 0..self.rows {
            let arow = self.row(r);
            let brow = b.row(r);
            for (i, &ari) in arow.iter().enumerate() {
                if ari == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += ari * bv;
                }
            }
        }
        out.check_finite("matmul_tn output")?;
        Ok(out)
    }

    /// `self * b^T`.
    pub fn matmul_nt(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.cols {
            return Err(Error::Shape {
                op: "matmul_nt",
                left: self.shape(),
                right: b.shape(),
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..b.rows {
                let brow = b.row(j);
                let mut acc = 0.0;
                for (&av, &bv) in arow.iter().zip(brow.iter()) {
                    acc += av * bv;
                }
                out.data[i * b.rows + j] = acc;
            }
        }
        out.check_finite("matmul_nt output")?;
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(b, "add", |x, y| x + y)
    }

    pub fn sub(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(b, "sub", |x, y| x - y)
    }

    pub fn hadamard(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(b, "hadamard", |x, y| x * y)
    }

    fn zip_with(
        &self,
        b: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix> {
        if self.shape() != b.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: b.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self += alpha * b`, in place.
    pub fn scaled_add_assign(&mut self, alpha: f64, b: &DenseMatrix) -> Result<()> {
        if self.shape() != b.shape() {
            return Err(Error::Shape {
                op: "scaled_add_assign",
                left: self.shape(),
                right: b.shape(),
            });
        }
        for (x, &y) in self.data.iter_mut().zip(b.data.iter()) {
            *x += alpha * y;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * alpha).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Adds a 1 x cols row vector to every row.
    pub fn add_row_broadcast(&self, bias: &DenseMatrix) -> Result<DenseMatrix> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::Shape {
                op: "add_row_broadcast",
                left: self.shape(),
                right: bias.shape(),
            });
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (o, &b) in out.row_mut(r).iter_mut().zip(bias.data.iter()) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Sums each column into a 1 x cols vector.
    pub fn col_sums(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, &v) in out.data.iter_mut().zip(self.row(r).iter()) {
                *o += v;
            }
        }
        out
    }

    /// Mean of the rows as a 1 x cols vector. Zero matrix for zero rows.
    pub fn row_mean(&self) -> DenseMatrix {
        if self.rows == 0 {
            return DenseMatrix::zeros(1, self.cols);
        }
        self.col_sums().scale(1.0 / self.rows as f64)
    }

    pub fn dot_row(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
    }

    /// Squared Frobenius distance between two same-shaped matrices.
    pub fn sq_distance(&self, b: &DenseMatrix) -> f64 {
        debug_assert_eq!(self.shape(), b.shape());
        self.data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }
}

/// Row-wise softmax of `scale * m`, stabilized by subtracting each row's max.
/// Rows sum to 1 up to rounding for inputs of any magnitude.
pub fn softmax_rows(m: &DenseMatrix, scale: f64) -> DenseMatrix {
    let mut out = m.scale(scale);
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// log(softmax(m)) per row, stabilized via log-sum-exp.
pub fn log_softmax_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Numerically safe log(sigmoid(x)).
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

/// L2-normalizes a vector in place; leaves the zero vector untouched.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let a = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let id = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(a.matmul(&id).unwrap(), a);

        let v = DenseMatrix::from_vec(2, 1, vec![5.0, 7.0]);
        assert_eq!(id.matmul(&v).unwrap(), v);
    }

    #[test]
    fn matmul_hand_case() {
        let a = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let ones = DenseMatrix::from_vec(2, 1, vec![1.0, 1.0]);
        let out = a.matmul(&ones).unwrap();
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 2);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("2x2"), "{msg}");
    }

    #[test]
    fn matmul_transposed_variants_agree() {
        let a = DenseMatrix::from_vec(3, 2, vec![1.0, -2.0, 0.5, 3.0, -1.0, 4.0]);
        let b = DenseMatrix::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect());
        let tn = a.matmul_tn(&b).unwrap();
        let explicit = a.transpose().matmul(&b).unwrap();
        assert!(tn.sq_distance(&explicit) < 1e-24);

        let c = DenseMatrix::from_vec(5, 2, (0..10).map(|i| (i as f64).sin()).collect());
        let nt = a.matmul_nt(&c).unwrap();
        let explicit = a.matmul(&c.transpose()).unwrap();
        assert!(nt.sq_distance(&explicit) < 1e-24);
    }

    #[test]
    fn softmax_zero_row_is_uniform() {
        let m = DenseMatrix::zeros(1, 4);
        let s = softmax_rows(&m, 1.0);
        for &v in s.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let m = DenseMatrix::from_vec(1, 2, vec![(2.0f64).ln(), 0.0]);
        let s = softmax_rows(&m, 1.0);
        assert!((s.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.get(0, 1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_large_magnitudes_no_overflow() {
        let m = DenseMatrix::from_vec(1, 2, vec![1000.0, 0.0]);
        let s = softmax_rows(&m, 1.0);
        assert!(s.is_finite());
        assert!(s.get(0, 0) > 1.0 - 1e-12);
        assert!(s.get(0, 1) < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one_up_to_1e4() {
        let mut state = 0x1234u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64 / (1u64 << 31) as f64 - 0.5) * 2e4
        };
        for _ in 0..50 {
            let m = DenseMatrix::from_vec(3, 5, (0..15).map(|_| next()).collect());
            let s = softmax_rows(&m, 1.0);
            for r in 0..3 {
                let sum: f64 = s.row(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "row sum {sum}");
            }
        }
    }

    #[test]
    fn sigmoid_and_log_sigmoid_are_stable() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(800.0).is_finite());
        assert!(sigmoid(-800.0).is_finite());
        assert!(log_sigmoid(-800.0).is_finite());
        assert!((log_sigmoid(3.0) - sigmoid(3.0).ln()).abs() < 1e-12);
    }
}
