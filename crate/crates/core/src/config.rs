use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::WeightKind;
use crate::quadrature::UniformGrid;

/// Tuning parameters shared by every stage of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SieveConfig {
    pub k0: usize,
    pub k1: usize,
    pub sigma_nu: f64,
    pub nu_nodes: usize,
    pub x_nodes: usize,
    pub x_bound: f64,
    pub eigen_floor: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_count: usize,
    pub spline_degree: usize,
    pub spline_knots: usize,
    pub boot_draws: usize,
    pub weight_kind: WeightKind,
    pub alpha: f64,
    pub seed: u64,
    /// Half-width of the slope integral in potential-outcome functionals.
    pub b1_bound: f64,
    pub b1_nodes: usize,
}

impl Default for SieveConfig {
    fn default() -> Self {
        Self {
            k0: 1,
            k1: 5,
            sigma_nu: 0.25,
            nu_nodes: 40,
            x_nodes: 80,
            x_bound: 10.0,
            eigen_floor: 1e-10,
            grid_lo: -5.0,
            grid_hi: 5.0,
            grid_count: 201,
            spline_degree: 2,
            spline_knots: 3,
            boot_draws: 1000,
            weight_kind: WeightKind::Mammen,
            alpha: 0.05,
            seed: 0,
            b1_bound: 8.0,
            b1_nodes: 256,
        }
    }
}

impl SieveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k0 == 0 || self.k1 == 0 {
            return bad(format!("k0 and k1 must be positive (got {}, {})", self.k0, self.k1));
        }
        if !(self.sigma_nu > 0.0 && self.sigma_nu.is_finite()) {
            return bad(format!("sigma_nu must be positive, got {}", self.sigma_nu));
        }
        if self.nu_nodes < 8 || self.nu_nodes % 2 == 1 {
            return bad(format!("nu_nodes must be even and at least 8, got {}", self.nu_nodes));
        }
        if self.x_nodes == 0 || self.b1_nodes == 0 {
            return bad("x_nodes and b1_nodes must be positive".into());
        }
        if !(self.x_bound > 0.0 && self.x_bound.is_finite()) {
            return bad(format!("x_bound must be positive, got {}", self.x_bound));
        }
        if !(self.b1_bound > 0.0 && self.b1_bound.is_finite()) {
            return bad(format!("b1_bound must be positive, got {}", self.b1_bound));
        }
        if !(self.eigen_floor >= 0.0 && self.eigen_floor < 1.0) {
            return bad(format!("eigen_floor must lie in [0, 1), got {}", self.eigen_floor));
        }
        if self.grid_count < 3 || !(self.grid_lo < self.grid_hi) {
            return bad(format!(
                "grid needs lo < hi and at least 3 points (got {}..{} x {})",
                self.grid_lo, self.grid_hi, self.grid_count
            ));
        }
        if self.spline_degree == 0 {
            return bad("spline_degree must be positive".into());
        }
        if self.boot_draws < 2 {
            return bad(format!("boot_draws must be at least 2, got {}", self.boot_draws));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<UniformGrid> {
        UniformGrid::new(self.grid_lo, self.grid_hi, self.grid_count)
    }

    /// Sets a field from its textual value; used for config files and
    /// environment overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("cannot parse {key} = {value:?}")))
        }
        match key {
            "k0" => self.k0 = parse(key, value)?,
            "k1" => self.k1 = parse(key, value)?,
            "sigma_nu" => self.sigma_nu = parse(key, value)?,
            "nu_nodes" => self.nu_nodes = parse(key, value)?,
            "x_nodes" => self.x_nodes = parse(key, value)?,
            "x_bound" => self.x_bound = parse(key, value)?,
            "eigen_floor" => self.eigen_floor = parse(key, value)?,
            "grid_lo" => self.grid_lo = parse(key, value)?,
            "grid_hi" => self.grid_hi = parse(key, value)?,
            "grid_count" => self.grid_count = parse(key, value)?,
            "spline_degree" => self.spline_degree = parse(key, value)?,
            "spline_knots" => self.spline_knots = parse(key, value)?,
            "boot_draws" => self.boot_draws = parse(key, value)?,
            "weight_kind" => self.weight_kind = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "b1_bound" => self.b1_bound = parse(key, value)?,
            "b1_nodes" => self.b1_nodes = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 18] = [
        "k0",
        "k1",
        "sigma_nu",
        "nu_nodes",
        "x_nodes",
        "x_bound",
        "eigen_floor",
        "grid_lo",
        "grid_hi",
        "grid_count",
        "spline_degree",
        "spline_knots",
        "boot_draws",
        "weight_kind",
        "alpha",
        "seed",
        "b1_bound",
        "b1_nodes",
    ];
}
