//! Quadrature rules: the mirrored log-normal weighting measure in `t`, the
//! truncated Lebesgue measure in `x`, and uniform-grid integration.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss-Hermite rule for `int f(x) exp(-x^2) dx` (physicists' weight).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // ascending order
    x.reverse();
    w.reverse();
    (x, w)
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Mirrored `Lognormal(0, sigma_nu^2)` weighting measure.
///
/// The first half of `nodes` holds the positive log-normal nodes; entry
/// `i + half` is `-nodes[i]` with the same weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuQuadrature {
    pub sigma_nu: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NuQuadrature {
    pub fn new(sigma_nu: f64, n_nodes: usize) -> Result<Self> {
        if !(sigma_nu.is_finite() && sigma_nu > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma_nu must be positive, got {sigma_nu}")));
        }
        if n_nodes < 8 || n_nodes % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "nu quadrature needs an even node count >= 8, got {n_nodes}"
            )));
        }
        let half = n_nodes / 2;
        let (gx, gw) = gauss_hermite(half);
        let norm: f64 = gw.iter().sum();
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut weights = Vec::with_capacity(n_nodes);
        for (&x, &w) in gx.iter().zip(&gw) {
            // standard normal point u = sqrt(2) x
            nodes.push((sigma_nu * std::f64::consts::SQRT_2 * x).exp());
            weights.push(0.5 * w / norm);
        }
        for i in 0..half {
            nodes.push(-nodes[i]);
            weights.push(weights[i]);
        }
        Ok(Self {
            sigma_nu,
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn half(&self) -> usize {
        self.nodes.len() / 2
    }

    /// Index of the node at `-t_i`.
    pub fn mirror(&self, i: usize) -> usize {
        let h = self.half();
        if i < h {
            i + h
        } else {
            i - h
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, (&t, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(t);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite {
                    what: "nu integrand",
                    index: i,
                });
            }
            acc += v * w;
        }
        Ok(acc)
    }

    pub fn integrate_real(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        Ok(self.integrate(|t| Complex64::new(f(t), 0.0))?.re)
    }
}

/// Quadrature for the x-integral over the truncated domain `[-bound, bound]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XQuadrature {
    pub bound: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl XQuadrature {
    /// Gauss-Legendre with `n_nodes` points on `[-bound, bound]`.
    pub fn new(bound: f64, n_nodes: usize) -> Result<Self> {
        Self::composite(bound, 1, n_nodes)
    }

    /// Composite Gauss-Legendre: `panels` equal panels of `order` points each.
    pub fn composite(bound: f64, panels: usize, order: usize) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidConfig(format!("x bound must be positive, got {bound}")));
        }
        if panels == 0 || order == 0 {
            return Err(Error::InvalidConfig("x quadrature needs at least one node".into()));
        }
        let (gx, gw) = gauss_legendre(order);
        let width = 2.0 * bound / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let mid = -bound + width * (p as f64 + 0.5);
            for (&x, &w) in gx.iter().zip(&gw) {
                nodes.push(mid + 0.5 * width * x);
                weights.push(0.5 * width * w);
            }
        }
        Ok(Self {
            bound,
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates a vector-valued function; every call of `f` must return `dim` values.
    pub fn integrate(&self, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; dim];
        for (i, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(x);
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "x integrand",
                    expected: dim,
                    got: v.len(),
                });
            }
            for (a, b) in acc.iter_mut().zip(v) {
                if !b.is_finite() {
                    return Err(Error::NonFinite {
                        what: "x integrand",
                        index: i,
                    });
                }
                *a += w * b;
            }
        }
        Ok(acc)
    }
}

/// Uniform grid `lo, lo + h, ..., hi` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!("grid [{lo}, {hi}] is not a finite interval")));
        }
        if count < 2 {
            return Err(Error::InvalidConfig(format!("grid needs at least 2 points, got {count}")));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.hi
                } else {
                    self.lo + h * i as f64
                }
            })
            .collect()
    }
}

/// Composite Simpson on a uniform grid; with an odd number of intervals the
/// last interval is handled by the trapezoid rule.
pub fn grid_integrate(values: &[f64], grid: &UniformGrid) -> Result<f64> {
    if values.len() != grid.count {
        return Err(Error::DimensionMismatch {
            context: "grid_integrate",
            expected: grid.count,
            got: values.len(),
        });
    }
    if grid.count < 3 {
        return Err(Error::InvalidConfig("grid integration needs at least 3 points".into()));
    }
    let h = grid.step();
    let intervals = grid.count - 1;
    let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 1 };
    let mut acc = 0.0;
    let mut i = 0;
    while i < simpson_end {
        acc += h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
        i += 2;
    }
    if simpson_end < intervals {
        acc += 0.5 * h * (values[intervals - 1] + values[intervals]);
    }
    Ok(acc)
}
