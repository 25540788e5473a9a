//! End-to-end fit: varying coefficients, conditional characteristic function,
//! sieve inversion and its variance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BSplineBasis, HermiteBasis, TensorHermite};
use crate::config::SieveConfig;
use crate::error::Result;
use crate::estimator::{
    build_q, fit_vrc_density, fit_vrs_density, DensityEstimate, LinearFunctional, QMatrices,
    VrsDensityEstimate,
};
use crate::inference::{
    bootstrap_band, build_variance_kit, functional_ci, functional_matrix, BootstrapBand, Interval,
    SieveVarianceKit,
};
use crate::quadrature::{NuQuadrature, XQuadrature};
use crate::regression::{
    fit_ccf, fit_gram, fit_varying_coefs, CcfEstimate, CoefBasis, Dataset, GramInverse,
    VaryingCoefFit,
};

/// How the varying coefficients `g` are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefMode {
    #[default]
    Spline,
    /// Coefficients linear in `w` (ordinary least squares).
    Linear,
}

/// Quadratures and `Q` built once from a config and reused across datasets.
#[derive(Debug, Clone)]
pub struct SieveModel {
    pub config: SieveConfig,
    pub nu: NuQuadrature,
    pub xquad: XQuadrature,
    pub q: QMatrices,
}

impl SieveModel {
    pub fn new(config: SieveConfig) -> Result<Self> {
        config.validate()?;
        let nu = NuQuadrature::new(config.sigma_nu, config.nu_nodes)?;
        let xquad = XQuadrature::new(config.x_bound, config.x_nodes)?;
        let basis = TensorHermite::new(config.k0, config.k1)?;
        let q = build_q(basis, &nu, 2, config.eigen_floor)?;
        Ok(Self { config, nu, xquad, q })
    }

    pub fn coef_basis(&self, data: &Dataset, mode: CoefMode) -> Result<CoefBasis> {
        Ok(match mode {
            CoefMode::Spline => CoefBasis::Spline(BSplineBasis::from_sample(
                self.config.spline_degree,
                self.config.spline_knots,
                &data.w1(),
            )?),
            CoefMode::Linear => CoefBasis::Linear,
        })
    }

    pub fn fit(&self, data: &Dataset, w0: f64, mode: CoefMode) -> Result<FittedSieve> {
        let gfit = fit_varying_coefs(data, self.coef_basis(data, mode)?, self.config.eigen_floor)?;
        self.fit_with(data, gfit, w0)
    }

    /// Fit given an already estimated (or known) `g`.
    pub fn fit_with(&self, data: &Dataset, gfit: VaryingCoefFit, w0: f64) -> Result<FittedSieve> {
        let hb = HermiteBasis::new(self.config.k1)?;
        let gram = fit_gram(&data.x1(), hb, self.config.eigen_floor)?;
        let ccf = fit_ccf(data, &gfit, hb, &self.nu, &gram)?;
        let g_at_w = gfit.coefficients_at(w0);
        let joint = fit_vrc_density(&ccf, &self.q, &self.xquad, &self.nu, &g_at_w)?;
        Ok(FittedSieve {
            w0,
            gfit,
            gram,
            ccf,
            joint,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FittedSieve {
    pub w0: f64,
    pub gfit: VaryingCoefFit,
    pub gram: GramInverse,
    pub ccf: CcfEstimate,
    pub joint: DensityEstimate,
}

impl FittedSieve {
    pub fn vrs(&self, model: &SieveModel) -> Result<VrsDensityEstimate> {
        fit_vrs_density(&self.ccf, &model.q, &model.xquad, &model.nu, &self.joint.g_at_w)
    }

    pub fn variance_kit(&self, model: &SieveModel) -> Result<SieveVarianceKit> {
        build_variance_kit(&self.ccf, &model.q, &self.gram, &model.xquad, &model.nu)
    }

    pub fn interval(&self, kit: &SieveVarianceKit, f: &LinearFunctional, alpha: f64) -> Result<Interval> {
        functional_ci(&self.joint, kit, f, alpha)
    }

    pub fn band(
        &self,
        model: &SieveModel,
        kit: &SieveVarianceKit,
        functionals: &[LinearFunctional],
        seed: u64,
    ) -> Result<BootstrapBand> {
        let ells: DMatrix<f64> = functional_matrix(&self.joint, functionals)?;
        bootstrap_band(
            &self.joint,
            kit,
            &ells,
            model.config.alpha,
            model.config.boot_draws,
            model.config.weight_kind,
            seed,
        )
    }
}
