//! Eigen-floored symmetric matrix functions shared by the Gram, regression
//! and Q computations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with a relative eigenvalue floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlooredEigen {
    pub eigvals: Vec<f64>,
    pub eigvecs: DMatrix<f64>,
    /// Relative threshold: eigenvalues below `floor * max_eigval` are dropped.
    pub floor: f64,
}

impl FlooredEigen {
    pub fn new(m: &DMatrix<f64>, floor: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                context: "symmetric eigendecomposition",
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if let Some(i) = m.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "symmetric matrix",
                index: i,
            });
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        Ok(Self {
            eigvals: eig.eigenvalues.iter().copied().collect(),
            eigvecs: eig.eigenvectors,
            floor,
        })
    }

    pub fn max_eig(&self) -> f64 {
        self.eigvals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_eig(&self) -> f64 {
        self.eigvals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn threshold(&self) -> f64 {
        self.floor * self.max_eig()
    }

    fn kept(&self, v: f64) -> bool {
        let max = self.max_eig();
        max > 0.0 && v > 0.0 && v >= self.threshold()
    }

    pub fn retained(&self) -> usize {
        self.eigvals.iter().filter(|&&v| self.kept(v)).count()
    }

    /// Ratio of largest to smallest retained eigenvalue.
    pub fn condition(&self) -> f64 {
        let kept: Vec<f64> = self.eigvals.iter().copied().filter(|&v| self.kept(v)).collect();
        if kept.is_empty() {
            return f64::INFINITY;
        }
        let hi = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = kept.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    /// `V diag(f(lambda)) V'` over the retained eigenspace.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.eigvals.len();
        let mut out = DMatrix::zeros(n, n);
        for (k, &v) in self.eigvals.iter().enumerate() {
            if !self.kept(v) {
                continue;
            }
            let col = self.eigvecs.column(k);
            out += col * col.transpose() * f(v);
        }
        out
    }

    pub fn pinv(&self) -> DMatrix<f64> {
        self.apply_fn(|v| 1.0 / v)
    }

    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        self.apply_fn(|v| 1.0 / v.sqrt())
    }

    /// Projector onto the retained eigenspace.
    pub fn projector(&self) -> DMatrix<f64> {
        self.apply_fn(|_| 1.0)
    }
}

/// `a ⊗ I_k`.
pub fn kron_identity(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(r * k, c * k);
    for i in 0..r {
        for j in 0..c {
            for l in 0..k {
                out[(i * k + l, j * k + l)] = a[(i, j)];
            }
        }
    }
    out
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
