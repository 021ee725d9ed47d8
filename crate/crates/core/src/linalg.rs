//! Dense symmetric helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type DenseSymMatrix = DMatrix<f64>;
pub type DenseVector = DVector<f64>;

/// Smallest admissible ratio `L_ii^2 / A_ii` in a Cholesky factorization.
/// Below it the new basis direction is numerically a combination of the
/// previous ones and the factor is rejected.
pub const PIVOT_RATIO_TOL: f64 = 1e-13;

/// Ratio of extreme eigenvalue magnitudes. Only used for diagnostics.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let ev = a.clone().symmetric_eigenvalues();
    let max = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factorization that reports failure instead of falling back to a
/// pseudo-inverse.
pub fn spd_factor(a: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let diag: Vec<f64> = a.diagonal().iter().copied().collect();
    let fail = |a: &DMatrix<f64>| Error::Factorization { what: what.to_string(), condition: condition_estimate(a) };
    let copy = a.clone();
    let chol = a.cholesky().ok_or_else(|| fail(&copy))?;
    let l = chol.l_dirty();
    for (i, &d) in diag.iter().enumerate() {
        let lii = l[(i, i)];
        if !(d > 0.0) || !(lii * lii >= PIVOT_RATIO_TOL * d) {
            return Err(fail(&copy));
        }
    }
    Ok(chol)
}

pub fn spd_solve(a: DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    Ok(spd_factor(a, what)?.solve(rhs))
}

/// Fills the lower triangle from the upper one.
pub(crate) fn mirror_upper(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
}

/// Symmetric positive definite tridiagonal matrix with an in-place
/// `L D L^T`-free Cholesky factor (`L` bidiagonal).
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    l_diag: Vec<f64>,
    l_sub: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>, what: &str) -> Result<Self> {
        let n = diag.len();
        assert_eq!(off.len(), n.saturating_sub(1));
        let mut l_diag = vec![0.0; n];
        let mut l_sub = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut d = diag[i];
            if i > 0 {
                l_sub[i - 1] = off[i - 1] / l_diag[i - 1];
                d -= l_sub[i - 1] * l_sub[i - 1];
            }
            if !(d > PIVOT_RATIO_TOL * diag[i]) {
                let full = Self::dense_of(&diag, &off);
                return Err(Error::Factorization { what: what.to_string(), condition: condition_estimate(&full) });
            }
            l_diag[i] = d.sqrt();
        }
        Ok(Self { diag, off, l_diag, l_sub })
    }

    fn dense_of(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
        let n = diag.len();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = diag[i];
            if i + 1 < n {
                a[(i, i + 1)] = off[i];
                a[(i + 1, i)] = off[i];
            }
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        Self::dense_of(&self.diag, &self.off)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(n, |i, _| {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            s
        })
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(x))
    }

    /// Solves `L y = b` in place for every column.
    pub fn solve_lower_in_place(&self, b: &mut DMatrix<f64>) {
        let n = self.dim();
        for mut col in b.column_iter_mut() {
            for i in 0..n {
                let mut v = col[i];
                if i > 0 {
                    v -= self.l_sub[i - 1] * col[i - 1];
                }
                col[i] = v / self.l_diag[i];
            }
        }
    }

    /// Solves `L^T x = y` in place for every column.
    pub fn solve_upper_in_place(&self, b: &mut DMatrix<f64>) {
        let n = self.dim();
        for mut col in b.column_iter_mut() {
            for i in (0..n).rev() {
                let mut v = col[i];
                if i + 1 < n {
                    v -= self.l_sub[i] * col[i + 1];
                }
                col[i] = v / self.l_diag[i];
            }
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        self.solve_lower_in_place(&mut m);
        self.solve_upper_in_place(&mut m);
        DVector::from_column_slice(m.as_slice())
    }
}
