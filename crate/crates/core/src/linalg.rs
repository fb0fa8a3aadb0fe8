//! Small dense/sparse linear algebra kernels used by the encoder and the
//! regression back-ends.

use ndarray::{Array1, Array2, ArrayView2};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    pub fn from_dense(m: ArrayView2<'_, f64>) -> Self {
        let (n_rows, n_cols) = m.dim();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in m.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.n_cols, rhs.nrows(), "sparse matmul shape mismatch");
        let mut out = Array2::<f64>::zeros((self.n_rows, rhs.ncols()));
        for i in 0..self.n_rows {
            let mut out_row = out.row_mut(i);
            for (j, a) in self.row(i) {
                out_row.scaled_add(a, &rhs.row(j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }
}

/// Outcome of a least-squares solve.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub coef: Array1<f64>,
    /// True when the design was rank deficient and the ridge fallback was used.
    pub ridge: bool,
}

/// Householder QR factorization `a = q r`, returned as the reflectors applied
/// in place plus the diagonal of `r`.
struct HouseholderQr {
    qr: Array2<f64>,
    r_diag: Vec<f64>,
}

impl HouseholderQr {
    fn new(a: ArrayView2<'_, f64>) -> Self {
        let mut qr = a.to_owned();
        let (m, n) = qr.dim();
        let mut r_diag = vec![0.0; n];
        for k in 0..n.min(m) {
            let mut norm = 0.0f64;
            for i in k..m {
                norm = norm.hypot(qr[[i, k]]);
            }
            if norm != 0.0 {
                if qr[[k, k]] < 0.0 {
                    norm = -norm;
                }
                for i in k..m {
                    qr[[i, k]] /= norm;
                }
                qr[[k, k]] += 1.0;
                for j in (k + 1)..n {
                    let mut s = 0.0;
                    for i in k..m {
                        s += qr[[i, k]] * qr[[i, j]];
                    }
                    s = -s / qr[[k, k]];
                    for i in k..m {
                        let v = qr[[i, k]];
                        qr[[i, j]] += s * v;
                    }
                }
            }
            r_diag[k] = -norm;
        }
        Self { qr, r_diag }
    }

    fn full_rank(&self, rel_tol: f64) -> bool {
        let max = self.r_diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
        max > 0.0 && self.r_diag.iter().all(|d| d.abs() > rel_tol * max)
    }

    fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let (m, n) = self.qr.dim();
        let mut y = b.clone();
        for k in 0..n {
            let mut s = 0.0;
            for i in k..m {
                s += self.qr[[i, k]] * y[i];
            }
            s = -s / self.qr[[k, k]];
            for i in k..m {
                y[i] += s * self.qr[[i, k]];
            }
        }
        let mut x = Array1::<f64>::zeros(n);
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in (k + 1)..n {
                s -= self.qr[[k, j]] * x[j];
            }
            x[k] = s / self.r_diag[k];
        }
        x
    }
}

/// Cholesky solve of a symmetric positive-definite system. Returns `None`
/// when the matrix is not numerically positive definite.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

/// Least squares `min ‖x·β − y‖²` via Householder QR. On rank deficiency
/// (relative pivot below `1e-10`) falls back to ridge-regularized normal
/// equations with penalty `ridge_lambda`.
pub fn lstsq(x: ArrayView2<'_, f64>, y: &Array1<f64>, ridge_lambda: f64) -> Option<LstsqSolution> {
    let (m, n) = x.dim();
    if m >= n {
        let qr = HouseholderQr::new(x);
        if qr.full_rank(1e-10) {
            return Some(LstsqSolution {
                coef: qr.solve(y),
                ridge: false,
            });
        }
    }
    let mut gram = x.t().dot(&x);
    for i in 0..n {
        gram[[i, i]] += ridge_lambda;
    }
    let rhs = x.t().dot(y);
    cholesky_solve(&gram, &rhs).map(|coef| LstsqSolution { coef, ridge: true })
}
