//! Hermite functions, their tensor products, and B-spline bases.
//!
//! Hermite functions are indexed from 1: `q_1(t) = pi^{-1/4} exp(-t^2/2)`.
//! They are evaluated with the three-term recurrence on the weighted
//! functions, which stays stable for orders well beyond 20.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `i^m` for integer `m >= 0`.
pub fn i_pow(m: usize) -> Complex64 {
    match m % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Writes `q_1(t), ..., q_K(t)` into `out` (length K).
pub fn hermite_values_into(t: f64, out: &mut [f64]) {
    let k_max = out.len();
    if k_max == 0 {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * t * t).exp();
    if out[0] == 0.0 {
        out.fill(0.0);
        return;
    }
    if k_max > 1 {
        out[1] = std::f64::consts::SQRT_2 * t * out[0];
    }
    for k in 2..k_max {
        // q_{k+1} = t sqrt(2/k) q_k - sqrt((k-1)/k) q_{k-1}, with k counted from 1
        let kf = k as f64;
        out[k] = t * (2.0 / kf).sqrt() * out[k - 1] - ((kf - 1.0) / kf).sqrt() * out[k - 2];
    }
}

/// Orthonormal Hermite functions `q_1..q_K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HermiteBasis {
    order: usize,
}

impl HermiteBasis {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidOrder { k: 0, max: 0 });
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn check(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.order {
            Err(Error::InvalidOrder { k, max: self.order })
        } else {
            Ok(())
        }
    }

    /// `q_k(t)`.
    pub fn eval(&self, k: usize, t: f64) -> Result<f64> {
        self.check(k)?;
        let mut buf = vec![0.0; k];
        hermite_values_into(t, &mut buf);
        Ok(buf[k - 1])
    }

    /// The full vector `q^K(t)`.
    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.order];
        hermite_values_into(t, &mut out);
        out
    }

    /// Fourier transform `(F q_k)(t) = int exp(itu) q_k(u) du = sqrt(2 pi) i^{k-1} q_k(t)`.
    pub fn fourier(&self, k: usize, t: f64) -> Result<Complex64> {
        let v = self.eval(k, t)?;
        Ok(i_pow(k - 1) * ((2.0 * PI).sqrt() * v))
    }

    /// Normalized transform `q~_k(t) = i^{k-1} q_k(t)` for all k.
    pub fn tilde_all(&self, t: f64) -> Vec<Complex64> {
        self.eval_all(t)
            .into_iter()
            .enumerate()
            .map(|(k, v)| i_pow(k) * v)
            .collect()
    }

    /// `int q_k(a) da`, which equals `(F q_k)(0)`; zero for even k.
    pub fn integral(&self, k: usize) -> Result<f64> {
        Ok(self.fourier(k, 0.0)?.re)
    }

    pub fn integrals(&self) -> Vec<f64> {
        (1..=self.order)
            .map(|k| self.integral(k).expect("k within order"))
            .collect()
    }
}

/// Intercept-major tensor product `q^{K0}(a0) ⊗ q^{K1}(a1)` for a scalar slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorHermite {
    pub k0: usize,
    pub k1: usize,
}

impl TensorHermite {
    pub fn new(k0: usize, k1: usize) -> Result<Self> {
        if k0 == 0 || k1 == 0 {
            return Err(Error::InvalidOrder { k: 0, max: 0 });
        }
        Ok(Self { k0, k1 })
    }

    /// Total dimension `K = K0 * K1`.
    pub fn dim(&self) -> usize {
        self.k0 * self.k1
    }

    pub fn intercept(&self) -> HermiteBasis {
        HermiteBasis { order: self.k0 }
    }

    pub fn slope(&self) -> HermiteBasis {
        HermiteBasis { order: self.k1 }
    }

    /// 0-based position of the pair `(j0, j1)` (both 1-based).
    pub fn index(&self, j0: usize, j1: usize) -> usize {
        (j0 - 1) * self.k1 + (j1 - 1)
    }

    pub fn eval(&self, a0: f64, a1: &[f64]) -> Result<Vec<f64>> {
        if a1.len() != 1 {
            return Err(Error::DimensionMismatch {
                context: "tensor_eval slope argument",
                expected: 1,
                got: a1.len(),
            });
        }
        Ok(kron(&self.intercept().eval_all(a0), &self.slope().eval_all(a1[0])))
    }
}

/// Kronecker product of two vectors, left factor major.
pub fn kron<T: Copy + std::ops::Mul<Output = T>>(left: &[T], right: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(left.len() * right.len());
    for &l in left {
        out.extend(right.iter().map(|&r| l * r));
    }
    out
}

/// Clamped B-spline basis with evenly spaced interior knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    degree: usize,
    interior_knots: Vec<f64>,
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(degree: usize, interior_knots: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidConfig("spline degree must be at least 1".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "spline boundary [{lo}, {hi}] must be a finite nonempty interval"
            )));
        }
        if interior_knots.windows(2).any(|w| w[0] > w[1])
            || interior_knots.iter().any(|&k| !(k > lo && k < hi))
        {
            return Err(Error::InvalidConfig(
                "interior knots must be sorted and lie strictly inside the boundary".into(),
            ));
        }
        let mut knots = vec![lo; degree + 1];
        knots.extend_from_slice(&interior_knots);
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self {
            degree,
            interior_knots,
            lo,
            hi,
            knots,
        })
    }

    /// `n_interior` knots placed evenly inside `[lo, hi]`.
    pub fn uniform(degree: usize, n_interior: usize, lo: f64, hi: f64) -> Result<Self> {
        let step = (hi - lo) / (n_interior + 1) as f64;
        let interior = (1..=n_interior).map(|i| lo + step * i as f64).collect();
        Self::new(degree, interior, lo, hi)
    }

    /// Evenly spaced knots over the sample range of `w`.
    pub fn from_sample(degree: usize, n_interior: usize, w: &[f64]) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::EmptyInput("spline sample"));
        }
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::uniform(degree, n_interior, lo, hi)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn dim(&self) -> usize {
        self.interior_knots.len() + self.degree + 1
    }

    /// Full (clamped) knot vector.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Basis values at `w`; arguments outside the boundary are clamped.
    pub fn eval(&self, w: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let p = self.degree;
        let x = w.clamp(self.lo, self.hi);
        // knot span: largest s with knots[s] <= x < knots[s+1], capped at the last span
        let last = self.dim() - 1;
        let span = if x >= self.hi {
            last
        } else {
            let mut s = p;
            while s < last && self.knots[s + 1] <= x {
                s += 1;
            }
            s
        };
        // de Boor triangular scheme for the p+1 nonzero functions
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (j, v) in n.into_iter().enumerate() {
            out[span - p + j] = v;
        }
        out
    }

    /// Design matrix with one row per element of `w_values`.
    pub fn design(&self, w_values: &[f64]) -> Result<DMatrix<f64>> {
        if w_values.is_empty() {
            return Err(Error::EmptyInput("bspline design"));
        }
        let m = self.dim();
        let mut out = DMatrix::zeros(w_values.len(), m);
        for (i, &w) in w_values.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    what: "bspline argument",
                    index: i,
                });
            }
            for (j, v) in self.eval(w).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}
