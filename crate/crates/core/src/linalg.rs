//! Dense column-major matrices and a rank-revealing least-squares solver.
//!
//! The QR factorization walks the columns in their given order and defers
//! any column whose remaining norm falls below `ALIAS_TOLERANCE` times the
//! largest column norm. Deferred columns are reported as aliased and get a
//! zero coefficient, so when columns are linearly dependent it is always
//! the later copy that is dropped.

use crate::error::{Error, Result};

/// Relative pivot tolerance for declaring a column aliased.
pub const ALIAS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from columns of equal length.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "column length mismatch");
            data.extend_from_slice(c);
        }
        Matrix {
            rows,
            cols: columns.len(),
            data,
        }
    }

    /// Builds a matrix from row-major data.
    pub fn from_rows(rows: usize, cols: usize, row_major: &[f64]) -> Self {
        assert_eq!(row_major.len(), rows * cols);
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, row_major[i * cols + j]);
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for &c in cols {
            data.extend_from_slice(self.column(c));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    pub fn append_column(&mut self, col: &[f64]) {
        assert_eq!(col.len(), self.rows);
        self.data.extend_from_slice(col);
        self.cols += 1;
    }

    /// `selfᵀ · other`.
    pub fn transpose_mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for i in 0..self.cols {
            for j in 0..other.cols {
                out.set(i, j, dot(self.column(i), other.column(j)));
            }
        }
        out
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &b) in v.iter().enumerate() {
            if b != 0.0 {
                for (o, x) in out.iter_mut().zip(self.column(j)) {
                    *o += b * x;
                }
            }
        }
        out
    }

    /// `selfᵀ · v`.
    pub fn transpose_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.cols).map(|j| dot(self.column(j), v)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder QR with in-order pivoting of rank-deficient columns.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Transformed copy of the input: the upper triangle of the kept
    /// columns holds R.
    work: Matrix,
    /// Householder vectors, one per kept column, acting on rows `k..`.
    reflectors: Vec<(Vec<f64>, f64)>,
    /// Original indices of the kept columns, in pivot order.
    kept: Vec<usize>,
    aliased: Vec<usize>,
}

impl PivotedQr {
    pub fn new(x: &Matrix) -> Self {
        let (n, p) = (x.rows, x.cols);
        let mut work = x.clone();
        let max_norm = (0..p)
            .map(|j| dot(x.column(j), x.column(j)).sqrt())
            .fold(0.0, f64::max);
        let tol = ALIAS_TOLERANCE * max_norm;
        let mut reflectors = Vec::new();
        let mut kept = Vec::new();
        let mut aliased = Vec::new();
        for j in 0..p {
            let k = kept.len();
            if k >= n {
                aliased.push(j);
                continue;
            }
            let norm = {
                let c = &work.column(j)[k..];
                dot(c, c).sqrt()
            };
            if max_norm == 0.0 || norm <= tol {
                aliased.push(j);
                continue;
            }
            let col = work.column(j);
            let alpha = if col[k] >= 0.0 { -norm } else { norm };
            let mut v = col[k..].to_vec();
            v[0] -= alpha;
            let vtv = dot(&v, &v);
            let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
            {
                let c = work.column_mut(j);
                c[k] = alpha;
                for x in &mut c[k + 1..] {
                    *x = 0.0;
                }
            }
            for jj in j + 1..p {
                let c = &mut work.column_mut(jj)[k..];
                let s = beta * dot(&v, c);
                if s != 0.0 {
                    for (ci, vi) in c.iter_mut().zip(&v) {
                        *ci -= s * vi;
                    }
                }
            }
            reflectors.push((v, beta));
            kept.push(j);
        }
        PivotedQr {
            work,
            reflectors,
            kept,
            aliased,
        }
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    pub fn aliased(&self) -> &[usize] {
        &self.aliased
    }

    /// `Qᵀ y`.
    pub fn qt_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut z = y.to_vec();
        for (k, (v, beta)) in self.reflectors.iter().enumerate() {
            let s = beta * dot(v, &z[k..]);
            if s != 0.0 {
                for (zi, vi) in z[k..].iter_mut().zip(v) {
                    *zi -= s * vi;
                }
            }
        }
        z
    }

    #[inline]
    fn r(&self, i: usize, k: usize) -> f64 {
        self.work.get(i, self.kept[k])
    }

    /// Least-squares coefficients in original column order (aliased = 0).
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let z = self.qt_mul(y);
        let r = self.rank();
        let mut b = vec![0.0; r];
        for i in (0..r).rev() {
            let mut s = z[i];
            for k in i + 1..r {
                s -= self.r(i, k) * b[k];
            }
            b[i] = s / self.r(i, i);
        }
        let mut out = vec![0.0; self.work.cols];
        for (k, &j) in self.kept.iter().enumerate() {
            out[j] = b[k];
        }
        out
    }

    /// Diagonal of (XᵀX)⁻¹ restricted to kept columns; NaN for aliased.
    pub fn unscaled_variances(&self) -> Vec<f64> {
        let r = self.rank();
        // Rinv is upper triangular; diag((RᵀR)⁻¹) = row sums of Rinv².
        let mut rinv = vec![0.0; r * r];
        for c in 0..r {
            rinv[c * r + c] = 1.0 / self.r(c, c);
            for i in (0..c).rev() {
                let mut s = 0.0;
                for k in i + 1..=c {
                    s += self.r(i, k) * rinv[k * r + c];
                }
                rinv[i * r + c] = -s / self.r(i, i);
            }
        }
        let mut out = vec![f64::NAN; self.work.cols];
        for (i, &j) in self.kept.iter().enumerate() {
            out[j] = (i..r).map(|c| rinv[i * r + c].powi(2)).sum();
        }
        out
    }
}

/// Result of a (weighted) least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Weighted residual sum of squares.
    pub rss: f64,
    pub rank: usize,
    pub aliased: Vec<usize>,
    /// Diagonal of (XᵀWX)⁻¹; NaN for aliased columns.
    pub unscaled_variances: Vec<f64>,
}

/// Minimizes Σ wᵢ (yᵢ − xᵢβ)².
pub fn least_squares(x: &Matrix, y: &[f64], weights: Option<&[f64]>) -> Result<LeastSquares> {
    if x.rows == 0 {
        return Err(Error::InvalidInput("least squares with zero rows".into()));
    }
    if y.len() != x.rows {
        return Err(Error::InvalidInput(format!(
            "design has {} rows but response has {}",
            x.rows,
            y.len()
        )));
    }
    let (xs, ys) = match weights {
        None => (None, None),
        Some(w) => {
            if w.len() != x.rows || w.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
            }
            let sw: Vec<f64> = w.iter().map(|w| w.sqrt()).collect();
            let mut xs = x.clone();
            for j in 0..x.cols {
                for (v, s) in xs.column_mut(j).iter_mut().zip(&sw) {
                    *v *= s;
                }
            }
            let ys: Vec<f64> = y.iter().zip(&sw).map(|(y, s)| y * s).collect();
            (Some(xs), Some(ys))
        }
    };
    let xw = xs.as_ref().unwrap_or(x);
    let yw = ys.as_deref().unwrap_or(y);
    let qr = PivotedQr::new(xw);
    if qr.rank() == 0 {
        return Err(Error::Degenerate("all columns aliased".into()));
    }
    let coefficients = qr.solve(yw);
    let fitted = x.mul_vec(&coefficients);
    let rss = match weights {
        None => y.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum(),
        Some(w) => y
            .iter()
            .zip(&fitted)
            .zip(w)
            .map(|((y, f), w)| w * (y - f).powi(2))
            .sum(),
    };
    Ok(LeastSquares {
        coefficients,
        fitted,
        rss,
        rank: qr.rank(),
        aliased: qr.aliased().to_vec(),
        unscaled_variances: qr.unscaled_variances(),
    })
}
