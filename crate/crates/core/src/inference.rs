//! Sieve variance, pointwise intervals and multiplier-bootstrap uniform bands.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::HermiteBasis;
use crate::estimator::{tilde_neg_into, DensityEstimate, LinearFunctional, QMatrices};
use crate::error::{Error, Result};
use crate::quadrature::{NuQuadrature, XQuadrature};
use crate::regression::{CcfEstimate, GramInverse};

/// Variances below this (after dividing by `n`) are excluded from band suprema.
pub const MIN_BAND_VARIANCE: f64 = 1e-12;

/// Per-observation scores and the plug-in sieve variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveVarianceKit {
    /// `n x K` rows `u_j'`.
    pub u: DMatrix<f64>,
    /// `n x K` rows `(Q^{-1/2} u_j)'`.
    pub scores: DMatrix<f64>,
    /// `Sigma^ = n^{-1} sum u_j u_j'`.
    pub sigma_hat: DMatrix<f64>,
    /// `Q^{-1/2} Sigma^ Q^{-1/2}`.
    pub sandwich: DMatrix<f64>,
    /// Largest imaginary residue discarded from `u_j`.
    pub max_imag: f64,
}

impl SieveVarianceKit {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// `v^ = l' Q^{-1/2} Sigma^ Q^{-1/2} l`.
    pub fn variance(&self, ell: &[f64]) -> f64 {
        let l = DVector::from_column_slice(ell);
        (l.transpose() * &self.sandwich * &l)[(0, 0)]
    }
}

/// `int q~^{K1}(-t x) p^{K1}(x)' dx`.
fn slope_kernel(t: f64, k1: usize, p: HermiteBasis, xquad: &XQuadrature) -> DMatrix<Complex64> {
    let mut buf = vec![0.0; k1];
    let mut tn = vec![Complex64::new(0.0, 0.0); k1];
    let mut m = DMatrix::zeros(k1, p.order());
    for (&x, &wx) in xquad.nodes.iter().zip(&xquad.weights) {
        tilde_neg_into(t * x, &mut buf, &mut tn);
        let px = p.eval_all(x);
        for a in 0..k1 {
            let v = tn[a] * wx;
            for (c, &pc) in px.iter().enumerate() {
                m[(a, c)] += v * pc;
            }
        }
    }
    m
}

pub fn build_variance_kit(
    ccf: &CcfEstimate,
    q: &QMatrices,
    gram: &GramInverse,
    xquad: &XQuadrature,
    nu: &NuQuadrature,
) -> Result<SieveVarianceKit> {
    let k0 = q.basis.k0;
    let k1 = q.basis.k1;
    if ccf.nodes.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            context: "ccf node count vs nu quadrature",
            expected: nu.len(),
            got: ccf.nodes.len(),
        });
    }
    if ccf.basis != gram.basis || ccf.basis.order() != k1 {
        return Err(Error::DimensionMismatch {
            context: "ccf basis order vs K1",
            expected: k1,
            got: ccf.basis.order(),
        });
    }
    let n = ccf.n();
    let kdim = k0 * k1;

    // R(t_i) = (Q0^{-1/2} q~^{K0}(-t_i)) ⊗ M(t_i)
    let mut buf0 = vec![0.0; k0];
    let mut a = vec![Complex64::new(0.0, 0.0); k0];
    let per_node: Vec<(Vec<Complex64>, DMatrix<Complex64>)> = nu
        .nodes
        .iter()
        .map(|&t| {
            tilde_neg_into(t, &mut buf0, &mut a);
            let c = (0..k0)
                .map(|r| (0..k0).map(|s| a[s] * q.q0_inv_sqrt[(r, s)]).sum())
                .collect();
            (c, slope_kernel(t, k1, ccf.basis, xquad))
        })
        .collect();
    // rows P^- p(X_j)
    let dp = &ccf.design * &gram.pinv;

    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut acc = vec![Complex64::new(0.0, 0.0); kdim];
            let mut z = vec![Complex64::new(0.0, 0.0); k1];
            for (i, (c, m)) in per_node.iter().enumerate() {
                let s = ccf.residual[(j, i)] * nu.weights[i];
                for (l, zl) in z.iter_mut().enumerate() {
                    *zl = (0..dp.ncols()).map(|col| m[(l, col)] * dp[(j, col)]).sum::<Complex64>() * s;
                }
                for (r, cr) in c.iter().enumerate() {
                    for (l, zl) in z.iter().enumerate() {
                        acc[r * k1 + l] += cr * zl;
                    }
                }
            }
            let im = acc.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
            (acc.iter().map(|v| v.re).collect(), im)
        })
        .collect();

    let mut u = DMatrix::zeros(n, kdim);
    let mut max_imag: f64 = 0.0;
    for (j, (row, im)) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            u[(j, k)] = *v;
        }
        max_imag = max_imag.max(*im);
    }
    let sigma = u.tr_mul(&u) / n as f64;
    let sigma_hat = (&sigma + sigma.transpose()) * 0.5;
    let qis = q.q_inv_sqrt_full();
    let sandwich = &qis * &sigma_hat * &qis;
    let sandwich = (&sandwich + sandwich.transpose()) * 0.5;
    let scores = &u * &qis;
    if let Some(i) = sandwich.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "sieve variance",
            index: i,
        });
    }
    Ok(SieveVarianceKit {
        u,
        scores,
        sigma_hat,
        sandwich,
        max_imag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// `l(f^) ± z_{1-alpha/2} sqrt(v^ / n)` for the coefficient vector `ell`.
pub fn interval_for(est: &DensityEstimate, kit: &SieveVarianceKit, ell: &[f64], alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    if ell.len() != est.beta.len() {
        return Err(Error::DimensionMismatch {
            context: "functional coefficients",
            expected: est.beta.len(),
            got: ell.len(),
        });
    }
    let estimate: f64 = ell.iter().zip(&est.beta).map(|(a, b)| a * b).sum();
    let se = (kit.variance(ell).max(0.0) / kit.n() as f64).sqrt();
    let z = if alpha >= 1.0 { 0.0 } else { normal_quantile(1.0 - alpha / 2.0) };
    Ok(Interval {
        estimate,
        se,
        lo: estimate - z * se,
        hi: estimate + z * se,
    })
}

pub fn pointwise_ci(est: &DensityEstimate, kit: &SieveVarianceKit, b0: f64, b1: f64, alpha: f64) -> Result<Interval> {
    functional_ci(est, kit, &LinearFunctional::PointEval { b0, b1 }, alpha)
}

pub fn functional_ci(
    est: &DensityEstimate,
    kit: &SieveVarianceKit,
    functional: &LinearFunctional,
    alpha: f64,
) -> Result<Interval> {
    let ell = functional.coefficients(est.basis, &est.g_at_w)?;
    interval_for(est, kit, &ell, alpha)
}

/// Distribution of the bootstrap multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Mammen,
    Rademacher,
    Normal,
}

impl WeightKind {
    pub fn draw(self, rng: &mut impl Rng) -> f64 {
        match self {
            WeightKind::Mammen => {
                let s5 = 5f64.sqrt();
                let p = (1.0 + s5) / (2.0 * s5);
                if rng.random::<f64>() < p {
                    (1.0 - s5) / 2.0
                } else {
                    (1.0 + s5) / 2.0
                }
            }
            WeightKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            WeightKind::Normal => rng.sample(StandardNormal),
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightKind::Mammen => "mammen",
            WeightKind::Rademacher => "rademacher",
            WeightKind::Normal => "normal",
        })
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mammen" => Ok(WeightKind::Mammen),
            "rademacher" => Ok(WeightKind::Rademacher),
            "normal" | "gaussian" => Ok(WeightKind::Normal),
            other => Err(Error::InvalidConfig(format!("unknown weight kind {other:?}"))),
        }
    }
}

/// Counter-based generator for bootstrap draw `draw`.
pub fn draw_rng(seed: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    rng
}

/// `n` multipliers from the stream of draw `draw`.
pub fn sample_weights(kind: WeightKind, n: usize, seed: u64, draw: u64) -> Vec<f64> {
    let mut rng = draw_rng(seed, draw);
    (0..n).map(|_| kind.draw(&mut rng)).collect()
}

/// Empirical `level` quantile: the `ceil(level * B)`-th order statistic.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let k = (level * sorted.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    if k == 0 || sorted.is_empty() {
        0.0
    } else {
        sorted[k.min(sorted.len()) - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    pub alpha: f64,
    pub n_draws: usize,
    pub weight_kind: WeightKind,
    pub seed: u64,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    /// Whether the point entered the supremum.
    pub active: Vec<bool>,
    pub sup_stats: Vec<f64>,
    pub critical_value: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BootstrapBand {
    /// Recomputes the band at another level from the same draws.
    pub fn at_level(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let mut sorted = self.sup_stats.clone();
        sorted.sort_by(f64::total_cmp);
        let cv = empirical_quantile(&sorted, 1.0 - alpha);
        Ok(Self {
            alpha,
            critical_value: cv,
            lo: self.estimate.iter().zip(&self.se).map(|(e, s)| e - cv * s).collect(),
            hi: self.estimate.iter().zip(&self.se).map(|(e, s)| e + cv * s).collect(),
            ..self.clone()
        })
    }

    pub fn covers(&self, truth: &[f64]) -> bool {
        truth
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(t, (l, h))| l <= t && t <= h)
    }
}

/// Uniform band over the functionals given as rows of `ells`.
pub fn bootstrap_band(
    est: &DensityEstimate,
    kit: &SieveVarianceKit,
    ells: &DMatrix<f64>,
    alpha: f64,
    n_draws: usize,
    weight_kind: WeightKind,
    seed: u64,
) -> Result<BootstrapBand> {
    check_alpha(alpha)?;
    if n_draws < 2 {
        return Err(Error::InvalidConfig(format!("n_draws must be at least 2, got {n_draws}")));
    }
    if ells.nrows() == 0 {
        return Err(Error::EmptyInput("band grid"));
    }
    if ells.ncols() != est.beta.len() {
        return Err(Error::DimensionMismatch {
            context: "band functional coefficients",
            expected: est.beta.len(),
            got: ells.ncols(),
        });
    }
    let n = kit.n();
    let nf = n as f64;
    let estimate: Vec<f64> = (ells * DVector::from_column_slice(&est.beta)).iter().copied().collect();
    let var: Vec<f64> = ells
        .row_iter()
        .map(|r| kit.variance(&r.iter().copied().collect::<Vec<_>>()).max(0.0))
        .collect();
    let se: Vec<f64> = var.iter().map(|v| (v / nf).sqrt()).collect();
    let active: Vec<bool> = var.iter().map(|v| v / nf > MIN_BAND_VARIANCE).collect();
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let scale = 1.0 / nf.sqrt();

    let sup_stats: Vec<f64> = (0..n_draws as u64)
        .into_par_iter()
        .map(|d| {
            let eps = sample_weights(weight_kind, n, seed, d);
            let mut s = DVector::zeros(kit.scores.ncols());
            for (j, e) in eps.iter().enumerate() {
                for k in 0..s.len() {
                    s[k] += kit.scores[(j, k)] * e;
                }
            }
            s *= scale;
            let z = ells * s;
            z.iter()
                .zip(&sd)
                .zip(&active)
                .filter(|(_, &a)| a)
                .map(|((zb, sb), _)| (zb / sb).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut sorted = sup_stats.clone();
    sorted.sort_by(f64::total_cmp);
    let cv = empirical_quantile(&sorted, 1.0 - alpha);
    Ok(BootstrapBand {
        alpha,
        n_draws,
        weight_kind,
        seed,
        lo: estimate.iter().zip(&se).map(|(e, s)| e - cv * s).collect(),
        hi: estimate.iter().zip(&se).map(|(e, s)| e + cv * s).collect(),
        estimate,
        se,
        active,
        sup_stats,
        critical_value: cv,
    })
}

/// Stacks coefficient vectors `l(q^K(. - g(w)))` for each functional.
pub fn functional_matrix(est: &DensityEstimate, functionals: &[LinearFunctional]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(functionals.len(), est.beta.len());
    for (r, f) in functionals.iter().enumerate() {
        for (c, v) in f.coefficients(est.basis, &est.g_at_w)?.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::TensorHermite;
    use approx::assert_abs_diff_eq;

    fn toy_kit(n: usize, k: usize) -> SieveVarianceKit {
        let u = DMatrix::from_fn(n, k, |j, c| ((j * 7 + c * 3) % 11) as f64 / 5.0 - 1.0);
        let sigma_hat = u.tr_mul(&u) / n as f64;
        SieveVarianceKit {
            scores: u.clone(),
            sandwich: sigma_hat.clone(),
            sigma_hat,
            u,
            max_imag: 0.0,
        }
    }

    fn toy_est(k: usize) -> DensityEstimate {
        DensityEstimate {
            beta: (0..k).map(|i| 0.1 * i as f64).collect(),
            g_at_w: vec![0.0, 0.0],
            basis: TensorHermite::new(1, k).unwrap(),
            max_imag: 0.0,
            q0_condition: 1.0,
        }
    }

    #[test]
    fn mammen_moments() {
        let w = sample_weights(WeightKind::Mammen, 200_000, 3, 0);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
        let s5 = 5f64.sqrt();
        assert!(w.iter().all(|&x| x == (1.0 - s5) / 2.0 || x == (1.0 + s5) / 2.0));
        // E eps^3 = 1 for the two-point law
        let third = w.iter().map(|x| x.powi(3)).sum::<f64>() / w.len() as f64;
        assert!((third - 1.0).abs() < 0.05);
    }

    #[test]
    fn weight_kinds_parse() {
        for k in [WeightKind::Mammen, WeightKind::Rademacher, WeightKind::Normal] {
            assert_eq!(k.to_string().parse::<WeightKind>().unwrap(), k);
        }
        assert!("wild".parse::<WeightKind>().is_err());
        let r = sample_weights(WeightKind::Rademacher, 1000, 1, 4);
        assert!(r.iter().all(|&x| x == 1.0 || x == -1.0));
    }

    #[test]
    fn quantile_rule() {
        let s: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(empirical_quantile(&s, 0.95), 95.0);
        assert_eq!(empirical_quantile(&s, 0.951), 96.0);
        assert_eq!(empirical_quantile(&s, 0.0), 0.0);
        assert_eq!(empirical_quantile(&s, 1.0), 100.0);
    }

    #[test]
    fn alpha_one_degenerates() {
        let kit = toy_kit(50, 3);
        let est = toy_est(3);
        let ci = interval_for(&est, &kit, &[1.0, 0.5, -0.2], 1.0).unwrap();
        assert_eq!(ci.lo, ci.estimate);
        assert_eq!(ci.hi, ci.estimate);
        assert!(interval_for(&est, &kit, &[1.0, 0.5, -0.2], 0.0).is_err());
    }

    #[test]
    fn band_width_and_determinism() {
        let kit = toy_kit(80, 4);
        let est = toy_est(4);
        let ells = DMatrix::from_fn(6, 4, |r, c| ((r + 1) * (c + 2)) as f64 / 10.0 - 0.3);
        let b1 = bootstrap_band(&est, &kit, &ells, 0.05, 300, WeightKind::Mammen, 11).unwrap();
        let b2 = bootstrap_band(&est, &kit, &ells, 0.05, 300, WeightKind::Mammen, 11).unwrap();
        assert_eq!(b1.sup_stats, b2.sup_stats);
        for i in 0..6 {
            assert_abs_diff_eq!(b1.hi[i] - b1.lo[i], 2.0 * b1.critical_value * b1.se[i], epsilon = 1e-12);
            assert!(b1.lo[i] <= b1.estimate[i] && b1.estimate[i] <= b1.hi[i]);
        }
        let wide = b1.at_level(0.01).unwrap();
        let narrow = b1.at_level(0.5).unwrap();
        assert!(wide.critical_value >= b1.critical_value && b1.critical_value >= narrow.critical_value);
        assert!(bootstrap_band(&est, &kit, &ells, 0.05, 1, WeightKind::Mammen, 11).is_err());
    }

    #[test]
    fn singleton_band_at_least_pointwise_typically() {
        let kit = toy_kit(200, 2);
        let est = toy_est(2);
        let ells = DMatrix::from_row_slice(1, 2, &[1.0, 0.3]);
        let band = bootstrap_band(&est, &kit, &ells, 0.05, 2000, WeightKind::Normal, 5).unwrap();
        let ci = interval_for(&est, &kit, &[1.0, 0.3], 0.05).unwrap();
        // sup over one point: a quantile of |N(0, ~1)| near 1.96
        assert!((band.critical_value - 1.96).abs() < 0.2, "{}", band.critical_value);
        assert_abs_diff_eq!(band.se[0], ci.se, epsilon = 1e-14);
    }
}
