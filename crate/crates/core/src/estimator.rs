//! Closed-form double series least squares estimator of the joint density of
//! the varying random coefficients and of the slope marginal.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{hermite_values_into, i_pow, kron, HermiteBasis, TensorHermite};
use crate::error::{Error, Result};
use crate::linalg::{kron_identity, FlooredEigen};
use crate::quadrature::{grid_integrate, NuQuadrature, UniformGrid, XQuadrature};
use crate::regression::CcfSurface;

/// `q~^K(-u) = conj(q~^K(u))`, i.e. `(-i)^{k-1} q_k(u)`.
pub(crate) fn tilde_neg_into(u: f64, buf: &mut [f64], out: &mut [Complex64]) {
    hermite_values_into(u, buf);
    for (k, (o, &v)) in out.iter_mut().zip(buf.iter()).enumerate() {
        *o = i_pow(k).conj() * v;
    }
}

pub(crate) fn tilde_neg(u: f64, order: usize) -> Vec<Complex64> {
    let mut buf = vec![0.0; order];
    let mut out = vec![Complex64::new(0.0, 0.0); order];
    tilde_neg_into(u, &mut buf, &mut out);
    out
}

/// `Q = Q0 ⊗ I_{K1}` for the tensor Hermite sieve, with eigen-floored inverses of `Q0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QMatrices {
    pub basis: TensorHermite,
    pub d: usize,
    pub q0: DMatrix<f64>,
    pub eigen: FlooredEigen,
    pub q0_inv: DMatrix<f64>,
    pub q0_inv_sqrt: DMatrix<f64>,
    /// Largest imaginary part discarded while forming `Q0`.
    pub max_imag: f64,
}

impl QMatrices {
    pub fn eigvals_q0(&self) -> &[f64] {
        &self.eigen.eigvals
    }

    pub fn condition(&self) -> f64 {
        self.eigen.condition()
    }

    /// Full `K x K` matrix `Q0 ⊗ I_{K1}`.
    pub fn q_full(&self) -> DMatrix<f64> {
        kron_identity(&self.q0, self.basis.k1)
    }

    pub fn q_inv_full(&self) -> DMatrix<f64> {
        kron_identity(&self.q0_inv, self.basis.k1)
    }

    pub fn q_inv_sqrt_full(&self) -> DMatrix<f64> {
        kron_identity(&self.q0_inv_sqrt, self.basis.k1)
    }

    /// `(M ⊗ I_{K1}) v` without forming the Kronecker product.
    pub(crate) fn apply_kron(m: &DMatrix<f64>, k1: usize, v: &[Complex64]) -> Vec<Complex64> {
        let k0 = m.nrows();
        let mut out = vec![Complex64::new(0.0, 0.0); k0 * k1];
        for a in 0..k0 {
            for b in 0..k0 {
                let c = m[(a, b)];
                if c == 0.0 {
                    continue;
                }
                for l in 0..k1 {
                    out[a * k1 + l] += v[b * k1 + l] * c;
                }
            }
        }
        out
    }
}

/// `Q0 = (2 pi)^{d/2} int |t|^{1-d} q~^{K0}(-t) q~^{K0}(t)' dnu(t)`.
pub fn build_q0(k0: usize, nu: &NuQuadrature, d: usize) -> Result<(DMatrix<f64>, f64)> {
    if d < 2 {
        return Err(Error::InvalidConfig(format!("d must be at least 2, got {d}")));
    }
    let basis = HermiteBasis::new(k0)?;
    let scale = (2.0 * PI).powf(d as f64 / 2.0);
    let mut acc = DMatrix::<Complex64>::zeros(k0, k0);
    for (&t, &w) in nu.nodes.iter().zip(&nu.weights) {
        let pos = basis.tilde_all(t);
        let neg = tilde_neg(t, k0);
        let wt = w * t.abs().powi(1 - d as i32) * scale;
        for a in 0..k0 {
            for b in 0..k0 {
                acc[(a, b)] += neg[a] * pos[b] * wt;
            }
        }
    }
    let max_imag = acc.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    Ok((acc.map(|c| c.re), max_imag))
}

pub fn build_q(basis: TensorHermite, nu: &NuQuadrature, d: usize, floor: f64) -> Result<QMatrices> {
    let (q0, max_imag) = build_q0(basis.k0, nu, d)?;
    let eigen = FlooredEigen::new(&q0, floor)?;
    if eigen.retained() == 0 {
        return Err(Error::SingularQ(format!(
            "no eigenvalue of Q0 above relative floor {floor}"
        )));
    }
    Ok(QMatrices {
        basis,
        d,
        q0_inv: eigen.pinv(),
        q0_inv_sqrt: eigen.inv_sqrt(),
        q0,
        eigen,
        max_imag,
    })
}

/// Minimum eigenvalue of `Q0` for each `K0 = 1..=k0_max`, with a log-log line fit
/// over `K0 >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenDecay {
    pub k0: Vec<usize>,
    pub min_eig: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn q0_eigen_decay(k0_max: usize, nu: &NuQuadrature, d: usize) -> Result<EigenDecay> {
    if k0_max == 0 || k0_max > 25 {
        return Err(Error::InvalidConfig(format!(
            "k0_max must lie in 1..=25, got {k0_max}"
        )));
    }
    let mut k0s = Vec::with_capacity(k0_max);
    let mut mins = Vec::with_capacity(k0_max);
    for k0 in 1..=k0_max {
        let (q0, _) = build_q0(k0, nu, d)?;
        let e = FlooredEigen::new(&q0, 0.0)?;
        k0s.push(k0);
        mins.push(e.min_eig());
    }
    let pts: Vec<(f64, f64)> = k0s
        .iter()
        .zip(&mins)
        .filter(|(&k, &v)| k >= 2 && v > 0.0)
        .map(|(&k, &v)| ((k as f64).ln(), v.ln()))
        .collect();
    let (slope, intercept, r_squared) = line_fit(&pts);
    Ok(EigenDecay {
        k0: k0s,
        min_eig: mins,
        slope,
        intercept,
        r_squared,
    })
}

fn line_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    (slope, intercept, 1.0 - sse / syy)
}

/// Estimated joint density `f^_B(b, w) = beta^' q^K(b - g^(w))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub beta: Vec<f64>,
    pub g_at_w: Vec<f64>,
    pub basis: TensorHermite,
    pub max_imag: f64,
    pub q0_condition: f64,
}

impl DensityEstimate {
    /// `f^_A(a0, a1)`.
    pub fn eval_a(&self, a0: f64, a1: f64) -> f64 {
        let q = self.basis.eval(a0, &[a1]).expect("scalar slope");
        q.iter().zip(&self.beta).map(|(a, b)| a * b).sum()
    }

    /// `f^_B(b0, b1, w)` at the fitted `w`.
    pub fn eval(&self, b0: f64, b1: f64) -> f64 {
        self.eval_a(b0 - self.g_at_w[0], b1 - self.g_at_w[1])
    }

    /// Rows index `b0_points`, columns `b1_points`.
    pub fn eval_grid(&self, b0_points: &[f64], b1_points: &[f64]) -> DMatrix<f64> {
        let h0 = self.basis.intercept();
        let h1 = self.basis.slope();
        let q0s: Vec<Vec<f64>> = b0_points.iter().map(|b| h0.eval_all(b - self.g_at_w[0])).collect();
        let q1s: Vec<Vec<f64>> = b1_points.iter().map(|b| h1.eval_all(b - self.g_at_w[1])).collect();
        let k1 = self.basis.k1;
        DMatrix::from_fn(b0_points.len(), b1_points.len(), |r, c| {
            let mut s = 0.0;
            for (a, qa) in q0s[r].iter().enumerate() {
                for (b, qb) in q1s[c].iter().enumerate() {
                    s += self.beta[a * k1 + b] * qa * qb;
                }
            }
            s
        })
    }

    /// Exact slope marginal `int f^_B(b0, ., w) db0`.
    pub fn slope_marginal(&self) -> VrsDensityEstimate {
        let c = self.basis.intercept().integrals();
        let k1 = self.basis.k1;
        let beta1 = (0..k1)
            .map(|l| c.iter().enumerate().map(|(a, ca)| ca * self.beta[a * k1 + l]).sum())
            .collect();
        VrsDensityEstimate {
            beta1,
            g1_at_w: self.g_at_w[1],
            basis: self.basis.slope(),
            max_imag: self.max_imag,
        }
    }

    /// Same estimate, relocated to a different `g^(w)`.
    pub fn with_shift(&self, g_at_w: Vec<f64>) -> Self {
        Self {
            g_at_w,
            ..self.clone()
        }
    }

    pub fn functional(&self, f: &LinearFunctional) -> Result<f64> {
        let ell = f.coefficients(self.basis, &self.g_at_w)?;
        Ok(ell.iter().zip(&self.beta).map(|(a, b)| a * b).sum())
    }
}

/// Estimated slope density `f^_{B1}(b1, w) = beta1' q^{K1}(b1 - g^_1(w))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrsDensityEstimate {
    pub beta1: Vec<f64>,
    pub g1_at_w: f64,
    pub basis: HermiteBasis,
    pub max_imag: f64,
}

impl VrsDensityEstimate {
    pub fn eval(&self, b1: f64) -> f64 {
        let q = self.basis.eval_all(b1 - self.g1_at_w);
        q.iter().zip(&self.beta1).map(|(a, b)| a * b).sum()
    }

    pub fn eval_grid(&self, points: &[f64]) -> Vec<f64> {
        points.iter().map(|&b| self.eval(b)).collect()
    }
}

/// Zeroes negative values; presentation only.
pub fn clip_negative(values: &mut [f64]) {
    for v in values {
        *v = v.max(0.0);
    }
}

/// Linear functionals `l(f_B(., w))` expressed through their action on `q^K(. - g(w))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LinearFunctional {
    /// `f_B(b0, b1, w)`.
    PointEval { b0: f64, b1: f64 },
    /// `f_{B1}(b1, w) = int f_B(b0, b1, w) db0`.
    SlopeDensity { b1: f64 },
    /// `f_Y(y, s) = int f_B(y - x b1, b1, w) db1`, integrated over `|b1 - g1(w)| <= bound`.
    PotentialOutcome { y: f64, x: f64, bound: f64, nodes: usize },
    /// `int omega(y) f_Y(y, s) dy` with `omega` tabulated on `grid`.
    WeightedAverage {
        x: f64,
        grid: UniformGrid,
        weights: Vec<f64>,
        bound: f64,
        nodes: usize,
    },
}

impl LinearFunctional {
    /// Coefficient vector `l(q^K(. - g))`, so that `l(f^) = beta' l(q^K)`.
    pub fn coefficients(&self, basis: TensorHermite, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != 2 {
            return Err(Error::DimensionMismatch {
                context: "functional shift g(w)",
                expected: 2,
                got: g.len(),
            });
        }
        let h0 = basis.intercept();
        let h1 = basis.slope();
        let out = match self {
            LinearFunctional::PointEval { b0, b1 } => basis.eval(b0 - g[0], &[b1 - g[1]])?,
            LinearFunctional::SlopeDensity { b1 } => kron(&h0.integrals(), &h1.eval_all(b1 - g[1])),
            LinearFunctional::PotentialOutcome { y, x, bound, nodes } => {
                let quad = XQuadrature::new(*bound, *nodes)?;
                let mut acc = vec![0.0; basis.dim()];
                for (&a1, &wq) in quad.nodes.iter().zip(&quad.weights) {
                    // b1 = a1 + g1
                    let q0 = h0.eval_all(y - x * (a1 + g[1]) - g[0]);
                    let q1 = h1.eval_all(a1);
                    for (o, v) in acc.iter_mut().zip(kron(&q0, &q1)) {
                        *o += wq * v;
                    }
                }
                acc
            }
            LinearFunctional::WeightedAverage {
                x,
                grid,
                weights,
                bound,
                nodes,
            } => {
                if weights.len() != grid.count {
                    return Err(Error::DimensionMismatch {
                        context: "weighted average weights",
                        expected: grid.count,
                        got: weights.len(),
                    });
                }
                if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "functional weights",
                        index: i,
                    });
                }
                let per_y: Vec<Vec<f64>> = grid
                    .points()
                    .iter()
                    .zip(weights)
                    .map(|(&y, &om)| {
                        LinearFunctional::PotentialOutcome {
                            y,
                            x: *x,
                            bound: *bound,
                            nodes: *nodes,
                        }
                        .coefficients(basis, g)
                        .map(|v| v.into_iter().map(|c| c * om).collect())
                    })
                    .collect::<Result<_>>()?;
                (0..basis.dim())
                    .map(|k| {
                        let col: Vec<f64> = per_y.iter().map(|v| v[k]).collect();
                        grid_integrate(&col, grid)
                    })
                    .collect::<Result<_>>()?
            }
        };
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "functional coefficients",
                index: i,
            });
        }
        Ok(out)
    }
}

/// `f^_Y(y, s)` on `ygrid` for scalar `x`.
pub fn potential_outcome_density(
    est: &DensityEstimate,
    x: f64,
    ygrid: &[f64],
    bound: f64,
    nodes: usize,
) -> Result<Vec<f64>> {
    ygrid
        .iter()
        .map(|&y| est.functional(&LinearFunctional::PotentialOutcome { y, x, bound, nodes }))
        .collect()
}

/// `int q~^{K1}(-t x) h(x, t) dx` at node `i`.
fn slope_projection(ccf: &impl CcfSurface, node: usize, t: f64, k1: usize, xquad: &XQuadrature) -> Vec<Complex64> {
    let mut buf = vec![0.0; k1];
    let mut tn = vec![Complex64::new(0.0, 0.0); k1];
    let mut acc = vec![Complex64::new(0.0, 0.0); k1];
    for (&x, &wx) in xquad.nodes.iter().zip(&xquad.weights) {
        tilde_neg_into(t * x, &mut buf, &mut tn);
        let h = ccf.value(node, x) * wx;
        for (a, v) in acc.iter_mut().zip(&tn) {
            *a += v * h;
        }
    }
    acc
}

fn check_nodes(ccf: &impl CcfSurface, nu: &NuQuadrature) -> Result<()> {
    if ccf.node_count() != nu.len() {
        return Err(Error::DimensionMismatch {
            context: "ccf node count vs nu quadrature",
            expected: nu.len(),
            got: ccf.node_count(),
        });
    }
    Ok(())
}

/// `beta^ = Q^{-1} int int q~^K(-t, -tx) h(x, t) dnu(t) dx`.
pub fn fit_vrc_density(
    ccf: &impl CcfSurface,
    q: &QMatrices,
    xquad: &XQuadrature,
    nu: &NuQuadrature,
    g_at_w: &[f64],
) -> Result<DensityEstimate> {
    check_nodes(ccf, nu)?;
    if g_at_w.len() != q.d {
        return Err(Error::DimensionMismatch {
            context: "g(w) length",
            expected: q.d,
            got: g_at_w.len(),
        });
    }
    let TensorHermite { k0, k1 } = q.basis;
    let parts: Vec<Vec<Complex64>> = (0..nu.len())
        .into_par_iter()
        .map(|i| {
            let t = nu.nodes[i];
            let s = slope_projection(ccf, i, t, k1, xquad);
            let a = tilde_neg(t, k0);
            kron(&a, &s).into_iter().map(|v| v * nu.weights[i]).collect()
        })
        .collect();
    let mut rhs = vec![Complex64::new(0.0, 0.0); k0 * k1];
    for p in &parts {
        for (r, v) in rhs.iter_mut().zip(p) {
            *r += v;
        }
    }
    let beta_c = QMatrices::apply_kron(&q.q0_inv, k1, &rhs);
    let max_imag = beta_c.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    Ok(DensityEstimate {
        beta: beta_c.iter().map(|c| c.re).collect(),
        g_at_w: g_at_w.to_vec(),
        basis: q.basis,
        max_imag,
        q0_condition: q.condition(),
    })
}

/// `b_{K0}(t) = int q^{K0}(a)' Q0^{-1} q~^{K0}(-t) da`.
pub fn b_k0(q: &QMatrices, t: f64) -> Complex64 {
    let k0 = q.basis.k0;
    let c = DVector::from_vec(q.basis.intercept().integrals());
    let row = q.q0_inv.tr_mul(&c);
    tilde_neg(t, k0)
        .iter()
        .zip(row.iter())
        .map(|(v, r)| v * *r)
        .sum()
}

/// `beta1^ = int int b_{K0}(t) q~^{K1}(-tx) h(x, t) dnu(t) dx`.
pub fn fit_vrs_density(
    ccf: &impl CcfSurface,
    q: &QMatrices,
    xquad: &XQuadrature,
    nu: &NuQuadrature,
    g_at_w: &[f64],
) -> Result<VrsDensityEstimate> {
    check_nodes(ccf, nu)?;
    if g_at_w.len() != q.d {
        return Err(Error::DimensionMismatch {
            context: "g(w) length",
            expected: q.d,
            got: g_at_w.len(),
        });
    }
    let k1 = q.basis.k1;
    let parts: Vec<Vec<Complex64>> = (0..nu.len())
        .into_par_iter()
        .map(|i| {
            let t = nu.nodes[i];
            let b = b_k0(q, t) * nu.weights[i];
            slope_projection(ccf, i, t, k1, xquad)
                .into_iter()
                .map(|v| v * b)
                .collect()
        })
        .collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); k1];
    for p in &parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    Ok(VrsDensityEstimate {
        beta1: acc.iter().map(|c| c.re).collect(),
        g1_at_w: g_at_w[1],
        basis: q.basis.slope(),
        max_imag: acc.iter().map(|c| c.im.abs()).fold(0.0, f64::max),
    })
}
