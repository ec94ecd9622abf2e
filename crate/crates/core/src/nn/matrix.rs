//! Dense row-major `f64` matrices and the kernels shared by the tape and the
//! tape-free inference path. Both paths call the same kernels in the same
//! order, so a forward pass evaluates bit-identically on either.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn row(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn reshaped(mut self, rows: usize, cols: usize) -> Self {
        assert_eq!(rows * cols, self.data.len());
        self.rows = rows;
        self.cols = cols;
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul inner dimensions");
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm(
        a.rows,
        a.cols,
        b.cols,
        &a.data,
        (a.cols, 1),
        &b.data,
        (b.cols, 1),
        &mut c.data,
        0.0,
    );
    c
}

/// `c += aᵀ · b`.
pub(crate) fn matmul_tn_acc(a: &Matrix, b: &Matrix, c: &mut [f64]) {
    assert_eq!(a.rows, b.rows);
    assert_eq!(c.len(), a.cols * b.cols);
    gemm(
        a.cols,
        a.rows,
        b.cols,
        &a.data,
        (1, a.cols),
        &b.data,
        (b.cols, 1),
        c,
        1.0,
    );
}

/// `c += a · bᵀ`.
pub(crate) fn matmul_nt_acc(a: &Matrix, b: &Matrix, c: &mut [f64]) {
    assert_eq!(a.cols, b.cols);
    assert_eq!(c.len(), a.rows * b.rows);
    gemm(
        a.rows,
        a.cols,
        b.rows,
        &a.data,
        (a.cols, 1),
        &b.data,
        (1, b.cols),
        c,
        1.0,
    );
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.fill(0.0);
        }
        return;
    }
    // SAFETY: the strides describe the dense buffers checked by the callers
    // (a: m×k, b: k×n, c: m×n row-major), and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `x + bias`, bias broadcast over rows.
pub fn add_row(x: &Matrix, bias: &Matrix) -> Matrix {
    assert_eq!(bias.rows, 1);
    assert_eq!(x.cols, bias.cols);
    let mut out = x.clone();
    for row in out.data.chunks_exact_mut(x.cols) {
        for (v, b) in row.iter_mut().zip(&bias.data) {
            *v += b;
        }
    }
    out
}

pub fn zip_with(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    assert_eq!(a.shape(), b.shape(), "elementwise shapes");
    Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

/// `x[i] + table[idx[i]]` row-wise.
pub fn add_gathered(x: &Matrix, table: &Matrix, idx: &[usize]) -> Matrix {
    assert_eq!(x.cols, table.cols);
    assert_eq!(x.rows, idx.len());
    let mut out = x.clone();
    for (row, &i) in out.data.chunks_exact_mut(x.cols).zip(idx) {
        for (v, t) in row.iter_mut().zip(table.row_slice(i)) {
            *v += t;
        }
    }
    out
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.data_mut()[i * b.cols() + j] = s;
            }
        }
        c
    }

    fn filled(rows: usize, cols: usize, seed: f64) -> Matrix {
        let data = (0..rows * cols)
            .map(|i| ((i as f64 + seed) * 0.37).sin())
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn gemm_variants_match_naive() {
        let a = filled(7, 5, 0.1);
        let b = filled(5, 3, 0.7);
        let c = matmul(&a, &b);
        let n = naive(&a, &b);
        for (x, y) in c.data().iter().zip(n.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        // aᵀ·g with a: 7×5, g: 7×3
        let g = filled(7, 3, 2.0);
        let mut acc = vec![0.0; 15];
        matmul_tn_acc(&a, &g, &mut acc);
        let at = Matrix::from_vec(5, 7, (0..35).map(|i| a.get(i % 7, i / 7)).collect()).unwrap();
        let n = naive(&at, &g);
        for (x, y) in acc.iter().zip(n.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        // g·bᵀ with g: 7×3, b: 5×3
        let b2 = filled(5, 3, 4.0);
        let mut acc = vec![0.0; 35];
        matmul_nt_acc(&g, &b2, &mut acc);
        let bt = Matrix::from_vec(3, 5, (0..15).map(|i| b2.get(i % 5, i / 5)).collect()).unwrap();
        let n = naive(&g, &bt);
        for (x, y) in acc.iter().zip(n.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_rows_do_not_depend_on_batch() {
        let a = filled(33, 40, 0.3);
        let b = filled(40, 64, 1.3);
        let full = matmul(&a, &b);
        for r in [0, 7, 32] {
            let single = matmul(&Matrix::row(a.row_slice(r)), &b);
            assert_eq!(single.data(), full.row_slice(r));
        }
    }

    #[test]
    fn activations() {
        assert_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        assert!(softplus(-50.0) > 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert_eq!(relu(-2.0), 0.0);
    }
}
