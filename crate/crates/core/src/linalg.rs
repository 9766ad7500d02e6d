//! Thin wrappers over `faer` dense factorizations.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Pivot ratio below which a factorization is reported singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

pub fn zeros(rows: usize, cols: usize) -> Mat<f64> {
    Mat::zeros(rows, cols)
}

pub struct Lu {
    lu: PartialPivLu<f64>,
    n: usize,
    pivot_ratio: f64,
}

impl Lu {
    pub fn new(a: &Mat<f64>) -> Result<Lu> {
        assert_eq!(a.nrows(), a.ncols());
        let n = a.nrows();
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = u[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let pivot_ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        if !pivot_ratio.is_finite() || pivot_ratio < SINGULAR_PIVOT_RATIO {
            return Err(Error::SingularJacobian { pivot_ratio });
        }
        Ok(Lu { lu, n, pivot_ratio })
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Dense solve `A x = b`.
pub fn solve(a: &Mat<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    Ok(Lu::new(a)?.solve(rhs))
}

/// Right singular vector of the smallest singular value, with the singular
/// values in nonincreasing order.
pub fn null_vector(a: &Mat<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let svd = a.svd().map_err(|e| Error::Eigen(format!("svd: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let v = svd.V();
    let last = v.ncols() - 1;
    Ok(((0..v.nrows()).map(|i| v[(i, last)]).collect(), s))
}

pub fn singular_values(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.singular_values().map_err(|e| Error::Eigen(format!("svd: {e:?}")))
}

/// Eigenvalues and right eigenvectors of a real matrix.
pub fn eigen(a: &Mat<f64>) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    if (0..a.nrows()).any(|i| (0..a.ncols()).any(|j| !a[(i, j)].is_finite())) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let evd = a.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let vecs = (0..u.ncols())
        .map(|j| (0..u.nrows()).map(|i| u[(i, j)]).collect())
        .collect();
    Ok((s, vecs))
}
