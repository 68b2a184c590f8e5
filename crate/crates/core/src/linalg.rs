//! Small dense linear algebra: a row-major square matrix and a lower
//! Cholesky factor that grows one bordered row at a time.

/// Diagonal jitter ladder tried when a factorization breaks down.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Row-major dense matrix.
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = A`, stored row-packed so that
/// appending a bordered row costs `O(n²)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cholesky {
    rows: Vec<Vec<f64>>,
}

impl Cholesky {
    pub fn new() -> Self {
        Cholesky { rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Entry `L[i][j]`, zero above the diagonal.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.rows[i][j]
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.rows[i][i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Borders the factor with a new row of `A`: `col` holds `A[n][0..n]`
    /// and `diag` holds `A[n][n]`. Returns `false` (leaving the factor
    /// untouched) when the extended matrix is not numerically positive
    /// definite.
    pub fn push(&mut self, col: &[f64], diag: f64) -> bool {
        debug_assert_eq!(col.len(), self.dim());
        let mut row = self.solve_lower(col);
        let d2 = diag - row.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > 0.0) || !d2.is_finite() {
            return false;
        }
        row.push(d2.sqrt());
        self.rows.push(row);
        true
    }

    /// Factors a symmetric matrix given entrywise, adding `jitter` to the
    /// diagonal.
    pub fn factor_with(n: usize, jitter: f64, entry: impl Fn(usize, usize) -> f64) -> Option<Self> {
        let mut chol = Cholesky::new();
        let mut col = Vec::with_capacity(n);
        for i in 0..n {
            col.clear();
            col.extend((0..i).map(|j| entry(i, j)));
            if !chol.push(&col, entry(i, i) + jitter) {
                return None;
            }
        }
        Some(chol)
    }

    pub fn factor(a: &Matrix, jitter: f64) -> Option<Self> {
        Cholesky::factor_with(a.rows(), jitter, |i, j| a.get(i, j))
    }

    /// Walks [`JITTER_LADDER`] until the factorization succeeds; returns the
    /// factor and the jitter that was needed.
    pub fn factor_escalating(
        n: usize,
        entry: impl Fn(usize, usize) -> f64,
    ) -> Option<(Self, f64)> {
        JITTER_LADDER
            .iter()
            .find_map(|&j| Cholesky::factor_with(n, j, &entry).map(|c| (c, j)))
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert!(b.len() >= n);
        let mut x = Vec::with_capacity(n);
        for i in 0..n {
            let row = &self.rows[i];
            let s: f64 = row[..i].iter().zip(&x).map(|(l, v)| l * v).sum();
            x.push((b[i] - s) / row[i]);
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b[..n].to_vec();
        for i in (0..n).rev() {
            x[i] /= self.rows[i][i];
            let xi = x[i];
            for (j, l) in self.rows[i][..i].iter().enumerate() {
                x[j] -= l * xi;
            }
        }
        x
    }

    /// Solves `A x = b` with `A = L Lᵀ`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `ln det A = 2 Σ ln L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.rows.iter().enumerate().map(|(i, r)| r[i].ln()).sum::<f64>()
    }

    /// Computes `L z`.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(z).map(|(l, v)| l * v).sum())
            .collect()
    }
}
