//! Series least squares: the varying-coefficient regression for `g` and the
//! conditional characteristic function estimator `h^`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{hermite_values_into, BSplineBasis, HermiteBasis};
use crate::error::{Error, Result};
use crate::linalg::FlooredEigen;
use crate::quadrature::NuQuadrature;

/// Observed sample `(Y, X, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// `n x (d-1)` regressors with random slopes.
    pub x: DMatrix<f64>,
    /// `n x q` covariates driving the varying coefficients.
    pub w: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyInput("dataset"));
        }
        if x.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "dataset x rows",
                expected: n,
                got: x.nrows(),
            });
        }
        if w.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "dataset w rows",
                expected: n,
                got: w.nrows(),
            });
        }
        if x.ncols() == 0 || w.ncols() == 0 {
            return Err(Error::EmptyInput("dataset needs at least one x and one w column"));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "y", index: i });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "x", index: i % n });
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "w", index: i % n });
        }
        Ok(Self { y, x, w })
    }

    /// Scalar X and scalar W.
    pub fn from_columns(y: Vec<f64>, x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let (nx, nw) = (x.len(), w.len());
        Self::new(y, DMatrix::from_vec(nx, 1, x), DMatrix::from_vec(nw, 1, w))
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of random coefficients `d` (intercept plus slopes).
    pub fn d(&self) -> usize {
        self.x.ncols() + 1
    }

    pub fn x1(&self) -> Vec<f64> {
        self.x.column(0).iter().copied().collect()
    }

    pub fn w1(&self) -> Vec<f64> {
        self.w.column(0).iter().copied().collect()
    }

    fn require_scalar(&self) -> Result<()> {
        if self.x.ncols() != 1 {
            return Err(Error::DimensionMismatch {
                context: "scalar x required",
                expected: 1,
                got: self.x.ncols(),
            });
        }
        if self.w.ncols() != 1 {
            return Err(Error::DimensionMismatch {
                context: "scalar w required",
                expected: 1,
                got: self.w.ncols(),
            });
        }
        Ok(())
    }
}

/// Regressors `p^K(w)` used for each varying coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoefBasis {
    Spline(BSplineBasis),
    /// Raw `[1, w]`: the misspecified linear-coefficient fit.
    Linear,
}

impl CoefBasis {
    pub fn dim(&self) -> usize {
        match self {
            CoefBasis::Spline(b) => b.dim(),
            CoefBasis::Linear => 2,
        }
    }

    pub fn eval(&self, w: f64) -> Vec<f64> {
        match self {
            CoefBasis::Spline(b) => b.eval(w),
            CoefBasis::Linear => vec![1.0, w],
        }
    }
}

/// Fitted varying coefficients `g_0, ..., g_{d-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaryingCoefFit {
    pub basis: CoefBasis,
    /// `d x dim` coefficients, one row per `g_l`.
    pub coefs: DMatrix<f64>,
    /// Smallest eigenvalue of the stacked Gram matrix.
    pub pd_min_eig: f64,
    /// Condition number over the retained eigenspace.
    pub pd_condition: f64,
}

impl VaryingCoefFit {
    /// `g ≡ 0` with a linear basis, for known-coefficient experiments.
    pub fn zero(d: usize) -> Self {
        Self {
            basis: CoefBasis::Linear,
            coefs: DMatrix::zeros(d, 2),
            pd_min_eig: f64::NAN,
            pd_condition: f64::NAN,
        }
    }

    pub fn d(&self) -> usize {
        self.coefs.nrows()
    }

    /// `(g_0(w), ..., g_{d-1}(w))`.
    pub fn coefficients_at(&self, w: f64) -> Vec<f64> {
        let p = DVector::from_vec(self.basis.eval(w));
        (&self.coefs * p).iter().copied().collect()
    }

    /// `g(s) = g_0(w) + sum_l x_l g_l(w)`.
    pub fn predict(&self, x: &[f64], w: f64) -> f64 {
        let g = self.coefficients_at(w);
        g[0] + g[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_all(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n())
            .map(|j| {
                let x: Vec<f64> = data.x.row(j).iter().copied().collect();
                self.predict(&x, data.w[(j, 0)])
            })
            .collect()
    }
}

/// Series least squares over `p_d^K(s) = (p^K(w)', x_1 p^K(w)', ...)'`.
pub fn fit_varying_coefs(data: &Dataset, basis: CoefBasis, floor: f64) -> Result<VaryingCoefFit> {
    data.require_scalar()?;
    let n = data.n();
    let d = data.d();
    let m = basis.dim();
    if n <= d * m {
        return Err(Error::DegenerateDesign(format!(
            "{n} observations cannot identify {} varying-coefficient parameters",
            d * m
        )));
    }
    let mut design = DMatrix::zeros(n, d * m);
    for j in 0..n {
        let p = basis.eval(data.w[(j, 0)]);
        for (k, &v) in p.iter().enumerate() {
            design[(j, k)] = v;
            for l in 1..d {
                design[(j, l * m + k)] = data.x[(j, l - 1)] * v;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    let gram = design.tr_mul(&design) * inv_n;
    let eig = FlooredEigen::new(&gram, floor)?;
    if eig.retained() == 0 {
        return Err(Error::DegenerateDesign("stacked Gram matrix has no eigenvalue above the floor".into()));
    }
    let rhs = design.tr_mul(&DVector::from_column_slice(&data.y)) * inv_n;
    let theta = eig.pinv() * rhs;
    let mut coefs = DMatrix::zeros(d, m);
    for l in 0..d {
        for k in 0..m {
            coefs[(l, k)] = theta[l * m + k];
        }
    }
    Ok(VaryingCoefFit {
        basis,
        coefs,
        pd_min_eig: eig.min_eig(),
        pd_condition: eig.condition(),
    })
}

/// Eigen-floored inverse of `P^ = n^{-1} sum_j p^K(X_j) p^K(X_j)'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramInverse {
    pub basis: HermiteBasis,
    pub gram: DMatrix<f64>,
    pub eigen: FlooredEigen,
    pub pinv: DMatrix<f64>,
}

impl GramInverse {
    pub fn retained(&self) -> usize {
        self.eigen.retained()
    }

    pub fn min_eig(&self) -> f64 {
        self.eigen.min_eig()
    }
}

/// `n x K` matrix of Hermite evaluations at the sample points.
pub fn hermite_design(x: &[f64], basis: HermiteBasis) -> DMatrix<f64> {
    let k = basis.order();
    let mut out = DMatrix::zeros(x.len(), k);
    let mut buf = vec![0.0; k];
    for (j, &xj) in x.iter().enumerate() {
        hermite_values_into(xj, &mut buf);
        for (c, &v) in buf.iter().enumerate() {
            out[(j, c)] = v;
        }
    }
    out
}

pub fn fit_gram(x: &[f64], basis: HermiteBasis, floor: f64) -> Result<GramInverse> {
    if x.is_empty() {
        return Err(Error::EmptyInput("gram sample"));
    }
    let p = hermite_design(x, basis);
    let gram = p.tr_mul(&p) / x.len() as f64;
    let eigen = FlooredEigen::new(&gram, floor)?;
    let pinv = eigen.pinv();
    Ok(GramInverse {
        basis,
        gram,
        eigen,
        pinv,
    })
}

/// Access to a conditional characteristic function `h(x, t)` at the nodes of a
/// weighting quadrature.
pub trait CcfSurface: Sync {
    fn node_count(&self) -> usize;
    /// `h(x, t_node)`.
    fn value(&self, node: usize, x: f64) -> Complex64;
}

/// Series estimate `h^(x, t) = p^K(x)' gamma^(t)` at the `nu` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CcfEstimate {
    pub basis: HermiteBasis,
    pub nodes: Vec<f64>,
    /// `nodes x K` coefficient rows `gamma^(t_i)'`.
    pub gamma: DMatrix<Complex64>,
    /// `n x nodes` residual characteristic functions `rho^_j(t_i)`.
    pub residual: DMatrix<Complex64>,
    /// `n x K` Hermite design `p^K(X_j)'`.
    pub design: DMatrix<f64>,
    /// `max |h^|` over the sample and nodes; may exceed one.
    pub max_modulus: f64,
}

impl CcfEstimate {
    pub fn h(&self, node: usize, x: f64) -> Complex64 {
        let p = self.basis.eval_all(x);
        p.iter()
            .enumerate()
            .map(|(k, &v)| self.gamma[(node, k)] * v)
            .sum()
    }

    pub fn n(&self) -> usize {
        self.residual.nrows()
    }
}

impl CcfSurface for CcfEstimate {
    fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn value(&self, node: usize, x: f64) -> Complex64 {
        self.h(node, x)
    }
}

/// Known `h(x, t)` evaluated at the nodes of `nu`.
pub struct ExactCcf<'a, F> {
    pub nu: &'a NuQuadrature,
    pub h: F,
}

impl<F: Fn(f64, f64) -> Complex64 + Sync> CcfSurface for ExactCcf<'_, F> {
    fn node_count(&self) -> usize {
        self.nu.len()
    }

    fn value(&self, node: usize, x: f64) -> Complex64 {
        (self.h)(x, self.nu.nodes[node])
    }
}

pub fn fit_ccf(
    data: &Dataset,
    gfit: &VaryingCoefFit,
    basis: HermiteBasis,
    nu: &NuQuadrature,
    gram: &GramInverse,
) -> Result<CcfEstimate> {
    data.require_scalar()?;
    if gram.basis != basis {
        return Err(Error::DimensionMismatch {
            context: "gram basis order",
            expected: basis.order(),
            got: gram.basis.order(),
        });
    }
    if gfit.d() != data.d() {
        return Err(Error::DimensionMismatch {
            context: "varying coefficient count",
            expected: data.d(),
            got: gfit.d(),
        });
    }
    let residuals: Vec<f64> = data
        .y
        .iter()
        .zip(gfit.predict_all(data))
        .map(|(y, g)| y - g)
        .collect();
    Ok(ccf_from_residuals(&residuals, &data.x1(), basis, nu, gram))
}

/// `h^` from precomputed residuals `Y_j - g^(S_j)`.
pub fn ccf_from_residuals(
    residuals: &[f64],
    x: &[f64],
    basis: HermiteBasis,
    nu: &NuQuadrature,
    gram: &GramInverse,
) -> CcfEstimate {
    let n = residuals.len();
    let k = basis.order();
    let design = hermite_design(x, basis);
    let half = nu.half();
    let inv_n = 1.0 / n as f64;

    // positive nodes only; negative nodes follow by conjugation
    let per_node: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..half)
        .into_par_iter()
        .map(|i| {
            let t = nu.nodes[i];
            let e: Vec<Complex64> = residuals
                .iter()
                .map(|&r| Complex64::from_polar(1.0, t * r))
                .collect();
            let mut moment = vec![Complex64::new(0.0, 0.0); k];
            for (j, ej) in e.iter().enumerate() {
                for (c, m) in moment.iter_mut().enumerate() {
                    *m += ej * design[(j, c)];
                }
            }
            let gamma: Vec<Complex64> = (0..k)
                .map(|a| {
                    (0..k)
                        .map(|b| moment[b] * (gram.pinv[(a, b)] * inv_n))
                        .sum()
                })
                .collect();
            let rho: Vec<Complex64> = (0..n)
                .map(|j| {
                    let fitted: Complex64 = (0..k).map(|c| gamma[c] * design[(j, c)]).sum();
                    e[j] - fitted
                })
                .collect();
            (gamma, rho)
        })
        .collect();

    let mut gamma = DMatrix::zeros(nu.len(), k);
    let mut residual = DMatrix::zeros(n, nu.len());
    let mut max_modulus: f64 = 0.0;
    for (i, (g, rho)) in per_node.iter().enumerate() {
        let m = nu.mirror(i);
        for c in 0..k {
            gamma[(i, c)] = g[c];
            gamma[(m, c)] = g[c].conj();
        }
        for j in 0..n {
            residual[(j, i)] = rho[j];
            residual[(j, m)] = rho[j].conj();
            let fitted: Complex64 = (0..k).map(|c| g[c] * design[(j, c)]).sum();
            max_modulus = max_modulus.max(fitted.norm());
        }
    }
    CcfEstimate {
        basis,
        nodes: nu.nodes.clone(),
        gamma,
        residual,
        design,
        max_modulus,
    }
}
