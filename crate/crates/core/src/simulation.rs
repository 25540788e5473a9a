//! Data-generating processes, brute-force oracles and Monte Carlo experiments.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{kron, HermiteBasis, TensorHermite};
use crate::config::SieveConfig;
use crate::error::{Error, Result};
use crate::estimator::LinearFunctional;
use crate::pipeline::{CoefMode, SieveModel};
use crate::quadrature::{grid_integrate, NuQuadrature, UniformGrid, XQuadrature};
use crate::regression::Dataset;

/// Law of the random slope component `A1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeLaw {
    /// `0.5 N(-1.5, 2) + 0.5 N(1.5, 1)` (second argument a variance).
    NormalMixture,
    /// `Gamma(3, 1)`.
    Gamma31,
    PointMass(f64),
}

impl SlopeLaw {
    pub fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            SlopeLaw::NormalMixture => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<f64>() < 0.5 {
                    -1.5 + 2f64.sqrt() * z
                } else {
                    1.5 + z
                }
            }
            SlopeLaw::Gamma31 => Gamma::new(3.0, 1.0).expect("valid gamma").sample(rng),
            SlopeLaw::PointMass(c) => c,
        }
    }

    /// Density of `A1`; `None` for the point mass.
    pub fn density(&self, a: f64) -> Option<f64> {
        match *self {
            SlopeLaw::NormalMixture => Some(0.5 * normal_pdf(a, -1.5, 2.0) + 0.5 * normal_pdf(a, 1.5, 1.0)),
            SlopeLaw::Gamma31 => Some(if a > 0.0 { 0.5 * a * a * (-a).exp() } else { 0.0 }),
            SlopeLaw::PointMass(_) => None,
        }
    }
}

impl fmt::Display for SlopeLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlopeLaw::NormalMixture => f.write_str("mixture"),
            SlopeLaw::Gamma31 => f.write_str("gamma"),
            SlopeLaw::PointMass(c) => write!(f, "point:{c}"),
        }
    }
}

impl FromStr for SlopeLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "mixture" | "normal_mixture" => Ok(SlopeLaw::NormalMixture),
            "gamma" | "gamma31" => Ok(SlopeLaw::Gamma31),
            _ => match s.strip_prefix("point:") {
                Some(c) => c
                    .parse()
                    .map(SlopeLaw::PointMass)
                    .map_err(|_| Error::InvalidConfig(format!("bad point mass location {c:?}"))),
                None => Err(Error::InvalidConfig(format!("unknown slope law {s:?}"))),
            },
        }
    }
}

/// Shape of the varying slope mean `g1(w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum G1Kind {
    Sin,
    /// `exp(|w|) - 1`.
    ExpAbs,
    /// `2 w^2`.
    Quadratic,
    Zero,
}

impl G1Kind {
    pub fn eval(self, w: f64) -> f64 {
        match self {
            G1Kind::Sin => w.sin(),
            G1Kind::ExpAbs => w.abs().exp() - 1.0,
            G1Kind::Quadratic => 2.0 * w * w,
            G1Kind::Zero => 0.0,
        }
    }

    /// Interior knot count used for this shape in the Monte Carlo design.
    pub fn default_knots(self) -> Option<usize> {
        match self {
            G1Kind::Sin => Some(3),
            G1Kind::ExpAbs => Some(5),
            _ => None,
        }
    }
}

impl fmt::Display for G1Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            G1Kind::Sin => "sin",
            G1Kind::ExpAbs => "expabs",
            G1Kind::Quadratic => "quadratic",
            G1Kind::Zero => "zero",
        })
    }
}

impl FromStr for G1Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sin" => Ok(G1Kind::Sin),
            "expabs" | "exp" => Ok(G1Kind::ExpAbs),
            "quadratic" | "quad" => Ok(G1Kind::Quadratic),
            "zero" | "0" => Ok(G1Kind::Zero),
            other => Err(Error::InvalidConfig(format!("unknown g1 kind {other:?}"))),
        }
    }
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// `Y = A0 + X (g1(W) + A1)` with `X ~ N(0, sigma2_x)`, `W ~ N(0, 1)` independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub slope_law: SlopeLaw,
    pub g1_kind: G1Kind,
    pub sigma2_x: f64,
    pub n: usize,
    pub seed: u64,
    /// Variance of the normal intercept `A0`.
    pub intercept_var: f64,
}

impl DgpSpec {
    pub fn new(slope_law: SlopeLaw, g1_kind: G1Kind, sigma2_x: f64, n: usize, seed: u64) -> Self {
        Self {
            slope_law,
            g1_kind,
            sigma2_x,
            n,
            seed,
            intercept_var: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if !(self.sigma2_x > 0.0 && self.sigma2_x.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma2 must be positive, got {}", self.sigma2_x)));
        }
        if !(self.intercept_var >= 0.0 && self.intercept_var.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "intercept variance must be nonnegative, got {}",
                self.intercept_var
            )));
        }
        Ok(())
    }
}

/// A simulated sample together with its latent coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: Dataset,
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
}

pub fn generate_with_latent(spec: &DgpSpec) -> Result<Simulated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sx = spec.sigma2_x.sqrt();
    let s0 = spec.intercept_var.sqrt();
    let n = spec.n;
    let (mut y, mut x, mut w) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut a0s, mut a1s) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let xi = sx * rng.sample::<f64, _>(StandardNormal);
        let wi: f64 = rng.sample(StandardNormal);
        let a0 = s0 * rng.sample::<f64, _>(StandardNormal);
        let a1 = spec.slope_law.draw(&mut rng);
        y.push(a0 + xi * (spec.g1_kind.eval(wi) + a1));
        x.push(xi);
        w.push(wi);
        a0s.push(a0);
        a1s.push(a1);
    }
    Ok(Simulated {
        data: Dataset::from_columns(y, x, w)?,
        a0: a0s,
        a1: a1s,
    })
}

pub fn generate(spec: &DgpSpec) -> Result<Dataset> {
    generate_with_latent(spec).map(|s| s.data)
}

/// `f_{B1}(b, w)` on `points`.
pub fn true_vrs_density(spec: &DgpSpec, w: f64, points: &[f64]) -> Result<Vec<f64>> {
    let shift = spec.g1_kind.eval(w);
    points
        .iter()
        .map(|&b| {
            spec.slope_law
                .density(b - shift)
                .ok_or_else(|| Error::InvalidConfig("point-mass slope law has no density".into()))
        })
        .collect()
}

/// Deterministic seed for sub-experiment `parts` of master seed `master`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Truncation of the brute-force inversion integral over `t` and `u = t x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub t_bound: f64,
    pub t_points: usize,
    pub u_bound: f64,
    pub u_points: usize,
    /// Largest sup-norm change tolerated when the domain is doubled.
    pub tol: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            t_bound: 30.0,
            t_points: 2000,
            u_bound: 12.0,
            u_points: 1200,
            tol: 1e-4,
        }
    }
}

fn trapezoid(bound: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 * bound / (points - 1) as f64;
    let nodes = (0..points).map(|i| -bound + h * i as f64).collect();
    let weights = (0..points)
        .map(|i| if i == 0 || i + 1 == points { 0.5 * h } else { h })
        .collect();
    (nodes, weights)
}

fn inversion_pass(
    h: &(impl Fn(f64, f64) -> Complex64 + Sync),
    a0: &[f64],
    a1: &[f64],
    t_bound: f64,
    t_points: usize,
    u_bound: f64,
    u_points: usize,
) -> DMatrix<f64> {
    let (ts, tw) = trapezoid(t_bound, t_points);
    let (us, uw) = trapezoid(u_bound, u_points);
    // e^{-i u a1} weighted, shared across t
    let phase1: Vec<Vec<Complex64>> = us
        .iter()
        .zip(&uw)
        .map(|(&u, &w)| a1.iter().map(|&b| Complex64::from_polar(w, -u * b)).collect())
        .collect();
    let m1 = a1.len();
    let partial: Vec<Vec<Complex64>> = ts
        .par_iter()
        .zip(&tw)
        .map(|(&t, &wt)| {
            let mut inner = vec![Complex64::new(0.0, 0.0); m1];
            for (&u, ph) in us.iter().zip(&phase1) {
                let hv = h(u / t, t);
                for (acc, p) in inner.iter_mut().zip(ph) {
                    *acc += hv * p;
                }
            }
            let mut out = vec![Complex64::new(0.0, 0.0); a0.len() * m1];
            for (r, &b0) in a0.iter().enumerate() {
                let e = Complex64::from_polar(wt, -t * b0);
                for c in 0..m1 {
                    out[r * m1 + c] = e * inner[c];
                }
            }
            out
        })
        .collect();
    let scale = 1.0 / (4.0 * PI * PI);
    DMatrix::from_fn(a0.len(), m1, |r, c| {
        partial.iter().map(|p| p[r * m1 + c].re).sum::<f64>() * scale
    })
}

/// Density of `B^w = g(w) + A` by direct numerical inversion of `h(x, t)`, with
/// `d = 2`: `(2 pi)^{-2} int int |t| e^{-it(b0 - g0 + x (b1 - g1))} h(x, t) dt dx`.
///
/// The `x` integral is taken over `|t x| <= u_bound` (substituting `u = t x`).
/// Rows index `b0`, columns `b1`.
pub fn oracle_fourier_inversion(
    h: impl Fn(f64, f64) -> Complex64 + Sync,
    gshift: [f64; 2],
    b0: &[f64],
    b1: &[f64],
    grid: &OracleGrid,
) -> Result<DMatrix<f64>> {
    if b0.is_empty() || b1.is_empty() {
        return Err(Error::EmptyInput("oracle evaluation grid"));
    }
    if grid.t_points < 4 || grid.u_points < 3 {
        return Err(Error::InvalidConfig("oracle grids need at least 4 t points and 3 u points".into()));
    }
    // the substituted integrand is singular at t = 0, which an even count avoids
    if grid.t_points % 2 == 1 {
        return Err(Error::InvalidConfig("oracle t grid needs an even point count".into()));
    }
    let a0: Vec<f64> = b0.iter().map(|b| b - gshift[0]).collect();
    let a1: Vec<f64> = b1.iter().map(|b| b - gshift[1]).collect();
    let base = inversion_pass(&h, &a0, &a1, grid.t_bound, grid.t_points, grid.u_bound, grid.u_points);
    let wide = inversion_pass(
        &h,
        &a0,
        &a1,
        2.0 * grid.t_bound,
        2 * grid.t_points,
        2.0 * grid.u_bound,
        2 * grid.u_points - 1,
    );
    let change = (&base - &wide).abs().max();
    if !(change <= grid.tol) {
        return Err(Error::Divergence { change, tol: grid.tol });
    }
    Ok(base)
}

/// `Q` built directly as `(2 pi)^{-d/2} int int (Fq^K)(-t, -tx) (Fq^K)(t, tx)' dnu dx`
/// without the Kronecker shortcut. The `x` range at node `t` is `|t x| <= u_bound`.
pub fn direct_q_matrix(basis: TensorHermite, nu: &NuQuadrature, u_bound: f64, panels: usize) -> Result<DMatrix<f64>> {
    let h0 = basis.intercept();
    let h1 = basis.slope();
    let k = basis.dim();
    let root = (2.0 * PI).sqrt();
    let fourier = |b: HermiteBasis, t: f64| -> Vec<Complex64> { b.tilde_all(t).into_iter().map(|v| v * root).collect() };
    let parts: Vec<Result<DMatrix<Complex64>>> = nu
        .nodes
        .par_iter()
        .zip(&nu.weights)
        .map(|(&t, &wt)| {
            let xq = XQuadrature::composite(u_bound / t.abs(), panels, 16)?;
            let f0n = fourier(h0, -t);
            let f0p = fourier(h0, t);
            let mut acc = DMatrix::<Complex64>::zeros(k, k);
            for (&x, &wx) in xq.nodes.iter().zip(&xq.weights) {
                let neg = kron(&f0n, &fourier(h1, -t * x));
                let pos = kron(&f0p, &fourier(h1, t * x));
                let s = wt * wx;
                for a in 0..k {
                    let na = neg[a] * s;
                    for b in 0..k {
                        acc[(a, b)] += na * pos[b];
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = DMatrix::<Complex64>::zeros(k, k);
    for p in parts {
        total += p?;
    }
    Ok(total.map(|c| c.re / (2.0 * PI)))
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseSpec {
    pub slope_law: SlopeLaw,
    pub g1_kinds: Vec<G1Kind>,
    pub sigma2: Vec<f64>,
    pub k1: Vec<usize>,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    pub config: SieveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseCell {
    pub g1_kind: G1Kind,
    pub sigma2: f64,
    pub k1: usize,
    pub mise: f64,
    /// Smallest MISE among the `k1` values for this `(g1_kind, sigma2)`.
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseReport {
    pub cells: Vec<MiseCell>,
    pub reps: usize,
    pub n: usize,
    pub grid: UniformGrid,
}

impl MiseReport {
    pub fn get(&self, g1_kind: G1Kind, sigma2: f64, k1: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.g1_kind == g1_kind && c.sigma2 == sigma2 && c.k1 == k1)
            .map(|c| c.mise)
    }

    pub fn best(&self, g1_kind: G1Kind, sigma2: f64) -> Option<&MiseCell> {
        self.cells
            .iter()
            .find(|c| c.g1_kind == g1_kind && c.sigma2 == sigma2 && c.best)
    }
}

fn knot_config(base: &SieveConfig, g1: G1Kind, k1: usize) -> SieveConfig {
    SieveConfig {
        k1,
        spline_knots: g1.default_knots().unwrap_or(base.spline_knots),
        ..base.clone()
    }
}

/// Mean integrated squared error of the slope density at `w = 0` over the
/// config grid, for every `(g1, sigma2, k1)` combination.
pub fn mise_benchmark(spec: &MiseSpec) -> Result<MiseReport> {
    if spec.reps == 0 || spec.k1.is_empty() || spec.sigma2.is_empty() || spec.g1_kinds.is_empty() {
        return Err(Error::InvalidConfig("mise benchmark needs reps, k1, sigma2 and g1 values".into()));
    }
    let grid = spec.config.grid()?;
    let points = grid.points();
    let mut cells = Vec::new();
    for (gi, &g1) in spec.g1_kinds.iter().enumerate() {
        let models: Vec<SieveModel> = spec
            .k1
            .iter()
            .map(|&k1| SieveModel::new(knot_config(&spec.config, g1, k1)))
            .collect::<Result<_>>()?;
        for (si, &s2) in spec.sigma2.iter().enumerate() {
            let template = DgpSpec::new(spec.slope_law, g1, s2, spec.n, 0);
            let truth = true_vrs_density(&template, 0.0, &points)?;
            let per_rep: Vec<Vec<f64>> = (0..spec.reps)
                .into_par_iter()
                .map(|rep| {
                    let dgp = DgpSpec {
                        seed: derive_seed(spec.seed, &[gi as u64, si as u64, rep as u64]),
                        ..template
                    };
                    let data = generate(&dgp)?;
                    models
                        .iter()
                        .map(|m| {
                            let fit = m.fit(&data, 0.0, CoefMode::Spline)?;
                            let est = fit.vrs(m)?;
                            let sq: Vec<f64> = points
                                .iter()
                                .zip(&truth)
                                .map(|(&b, &f)| (est.eval(b) - f).powi(2))
                                .collect();
                            grid_integrate(&sq, &grid)
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            let mises: Vec<f64> = (0..spec.k1.len())
                .map(|k| per_rep.iter().map(|r| r[k]).sum::<f64>() / spec.reps as f64)
                .collect();
            let best = mises
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i);
            for (k, (&k1, &mise)) in spec.k1.iter().zip(&mises).enumerate() {
                cells.push(MiseCell {
                    g1_kind: g1,
                    sigma2: s2,
                    k1,
                    mise,
                    best: Some(k) == best,
                });
            }
        }
    }
    Ok(MiseReport {
        cells,
        reps: spec.reps,
        n: spec.n,
        grid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecSpec {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub config: SieveConfig,
}

impl Default for MisspecSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            reps: 200,
            seed: 0,
            sigma2: 1.0,
            config: SieveConfig {
                k1: 7,
                ..SieveConfig::default()
            },
        }
    }
}

/// Median and pointwise 95% Monte Carlo envelope of `f^_{B1}(., 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmCurves {
    pub mode: CoefMode,
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Integrated squared distance between the median curve and the truth.
    pub median_ise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecReport {
    pub points: Vec<f64>,
    pub truth: Vec<f64>,
    pub arms: Vec<ArmCurves>,
}

/// `g1(w) = 2 w^2` with mixture slopes and `A0 ~ N(0, 1/2)`, estimated once
/// with `g` linear in `w` and once with splines.
pub fn misspecification_experiment(spec: &MisspecSpec) -> Result<MisspecReport> {
    if spec.reps == 0 {
        return Err(Error::InvalidConfig("reps must be positive".into()));
    }
    let model = SieveModel::new(spec.config.clone())?;
    let grid = spec.config.grid()?;
    let points = grid.points();
    let template = DgpSpec {
        intercept_var: 0.5,
        ..DgpSpec::new(SlopeLaw::NormalMixture, G1Kind::Quadratic, spec.sigma2, spec.n, 0)
    };
    let truth = true_vrs_density(&template, 0.0, &points)?;
    let modes = [CoefMode::Linear, CoefMode::Spline];
    let curves: Vec<Vec<Vec<f64>>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let data = generate(&DgpSpec {
                seed: derive_seed(spec.seed, &[rep as u64]),
                ..template
            })?;
            modes
                .iter()
                .map(|&mode| Ok(model.fit(&data, 0.0, mode)?.vrs(&model)?.eval_grid(&points)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut arms = Vec::new();
    for (a, &mode) in modes.iter().enumerate() {
        let mut median = Vec::with_capacity(points.len());
        let mut lo = Vec::with_capacity(points.len());
        let mut hi = Vec::with_capacity(points.len());
        for p in 0..points.len() {
            let mut v: Vec<f64> = curves.iter().map(|c| c[a][p]).collect();
            v.sort_by(f64::total_cmp);
            median.push(quantile(&v, 0.5));
            lo.push(quantile(&v, 0.025));
            hi.push(quantile(&v, 0.975));
        }
        let sq: Vec<f64> = median.iter().zip(&truth).map(|(m, t)| (m - t).powi(2)).collect();
        arms.push(ArmCurves {
            mode,
            median_ise: grid_integrate(&sq, &grid)?,
            median,
            lo,
            hi,
        });
    }
    Ok(MisspecReport { points, truth, arms })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSpec {
    pub slope_law: SlopeLaw,
    pub g1_kind: G1Kind,
    pub sigma2: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Slope value of the pointwise statistic.
    pub point: f64,
    /// Uniform band over `band_points` evenly spaced slope values in `[band_lo, band_hi]`;
    /// skipped when `with_bands` is false.
    pub with_bands: bool,
    pub band_lo: f64,
    pub band_hi: f64,
    pub band_points: usize,
    pub config: SieveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// `(f^_{B1}(point, 0) - f_{B1}(point, 0)) / se` per replication.
    pub studentized: Vec<f64>,
    pub pointwise_covered: Vec<bool>,
    pub uniform_covered: Vec<bool>,
    pub critical_values: Vec<f64>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

impl CoverageReport {
    pub fn studentized_mean_sd(&self) -> (f64, f64) {
        mean_sd(&self.studentized)
    }

    pub fn pointwise_coverage(&self) -> f64 {
        rate(&self.pointwise_covered)
    }

    pub fn uniform_coverage(&self) -> f64 {
        rate(&self.uniform_covered)
    }
}

fn rate(v: &[bool]) -> f64 {
    v.iter().filter(|&&b| b).count() as f64 / v.len() as f64
}

/// Repeated fits at `w = 0` recording the studentized slope-density statistic,
/// pointwise interval coverage and bootstrap band coverage.
pub fn coverage_experiment(spec: &CoverageSpec) -> Result<CoverageReport> {
    if spec.reps == 0 {
        return Err(Error::InvalidConfig("reps must be positive".into()));
    }
    let config = knot_config(&spec.config, spec.g1_kind, spec.config.k1);
    let model = SieveModel::new(config)?;
    let template = DgpSpec::new(spec.slope_law, spec.g1_kind, spec.sigma2, spec.n, 0);
    let truth0 = true_vrs_density(&template, 0.0, &[spec.point])?[0];
    let band_grid = UniformGrid::new(spec.band_lo, spec.band_hi, spec.band_points)?;
    let band_pts = band_grid.points();
    let band_truth = true_vrs_density(&template, 0.0, &band_pts)?;
    let functionals: Vec<LinearFunctional> = band_pts
        .iter()
        .map(|&b1| LinearFunctional::SlopeDensity { b1 })
        .collect();
    let alpha = model.config.alpha;

    let rows: Vec<(f64, bool, Option<(bool, f64)>)> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let data = generate(&DgpSpec {
                seed: derive_seed(spec.seed, &[rep as u64]),
                ..template
            })?;
            let fit = model.fit(&data, 0.0, CoefMode::Spline)?;
            let kit = fit.variance_kit(&model)?;
            let ci = fit.interval(&kit, &LinearFunctional::SlopeDensity { b1: spec.point }, alpha)?;
            let t = (ci.estimate - truth0) / ci.se;
            let covered = ci.lo <= truth0 && truth0 <= ci.hi;
            let band = if spec.with_bands {
                let b = fit.band(&model, &kit, &functionals, derive_seed(spec.seed, &[rep as u64, 1]))?;
                Some((b.covers(&band_truth), b.critical_value))
            } else {
                None
            };
            Ok((t, covered, band))
        })
        .collect::<Result<_>>()?;

    Ok(CoverageReport {
        studentized: rows.iter().map(|r| r.0).collect(),
        pointwise_covered: rows.iter().map(|r| r.1).collect(),
        uniform_covered: rows.iter().filter_map(|r| r.2.map(|b| b.0)).collect(),
        critical_values: rows.iter().filter_map(|r| r.2.map(|b| b.1)).collect(),
    })
}
