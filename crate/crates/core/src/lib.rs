//! Sieve minimum-distance estimation of varying random coefficient densities.
//!
//! The model is `Y = B0 + B1 X` with `B_l = g_l(W) + A_l`. The varying
//! coefficients `g` are fitted by B-spline series regression, the conditional
//! characteristic function of `Y - g(S)` given `X` by Hermite series regression,
//! and the density of `A` by a closed-form Hermite sieve inversion.

pub mod basis;
pub mod config;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod linalg;
pub mod pipeline;
pub mod quadrature;
pub mod regression;
pub mod simulation;

pub use basis::{BSplineBasis, HermiteBasis, TensorHermite};
pub use config::SieveConfig;
pub use pipeline::{CoefMode, FittedSieve, SieveModel};
pub use error::{Error, Result};
pub use estimator::{DensityEstimate, LinearFunctional, QMatrices, VrsDensityEstimate};
pub use inference::{BootstrapBand, SieveVarianceKit, WeightKind};

pub use quadrature::{NuQuadrature, UniformGrid, XQuadrature};
pub use regression::{CcfEstimate, Dataset, GramInverse, VaryingCoefFit};
