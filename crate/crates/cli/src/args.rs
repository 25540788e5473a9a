use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vrc", version, about = "Sieve estimation of varying random coefficient densities")]
pub struct Cli {
    /// Flat `key = value` file with config defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (defaults to all cores); results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub tuning: TuningArgs,

    #[command(subcommand)]
    pub command: Command,
}

/// Overrides for every config key. Each also reads `VRC_<KEY>` from the environment.
#[derive(Debug, Clone, Default, Args)]
pub struct TuningArgs {
    #[arg(long, global = true)]
    pub k0: Option<usize>,
    /// Slope sieve dimension; `mise` accepts a comma-separated list.
    #[arg(long, global = true, value_delimiter = ',')]
    pub k1: Vec<usize>,
    #[arg(long, global = true)]
    pub sigma_nu: Option<f64>,
    #[arg(long, global = true)]
    pub nu_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub x_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub x_bound: Option<f64>,
    #[arg(long, global = true)]
    pub eigen_floor: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid_lo: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid_hi: Option<f64>,
    #[arg(long, global = true)]
    pub grid_count: Option<usize>,
    #[arg(long, global = true)]
    pub spline_degree: Option<usize>,
    #[arg(long, global = true)]
    pub spline_knots: Option<usize>,
    /// Bootstrap draws.
    #[arg(long = "boot", global = true)]
    pub boot_draws: Option<usize>,
    /// Bootstrap multipliers: mammen, rademacher or normal.
    #[arg(long = "weights", global = true)]
    pub weight_kind: Option<String>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub b1_bound: Option<f64>,
    #[arg(long, global = true)]
    pub b1_nodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Slope density `f_{B1}(., w)`.
    Vrs,
    /// Joint density `f_B(., ., w)` on the grid squared.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoefArg {
    Spline,
    Linear,
}

impl From<CoefArg> for sieve_vrc::CoefMode {
    fn from(c: CoefArg) -> Self {
        match c {
            CoefArg::Spline => sieve_vrc::CoefMode::Spline,
            CoefArg::Linear => sieve_vrc::CoefMode::Linear,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV with header `y,x1,w1`.
    #[arg(long)]
    pub data: PathBuf,
    /// Covariate value `w` at which densities are evaluated.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub w0: f64,
    /// Estimator of the varying coefficients.
    #[arg(long, value_enum, default_value_t = CoefArg::Spline)]
    pub coef: CoefArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a sample from a Monte Carlo design and write it as CSV.
    Simulate {
        /// mixture, gamma or point:<c>.
        #[arg(long, default_value = "mixture")]
        dgp: String,
        /// sin, expabs, quadratic or zero.
        #[arg(long, default_value = "sin")]
        g1: String,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        intercept_var: f64,
    },
    /// Fit the sieve estimator and write coefficients and the density on the grid.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Target::Vrs)]
        target: Target,
        /// Zero negative density values in `f_hat`.
        #[arg(long)]
        clip: bool,
    },
    /// Slope density with pointwise intervals and bootstrap uniform bands.
    Bands {
        #[command(flatten)]
        data: DataArgs,
        /// Band grid; defaults to the density grid.
        #[arg(long, allow_hyphen_values = true)]
        band_lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        band_hi: Option<f64>,
        #[arg(long)]
        band_count: Option<usize>,
    },
    /// Monte Carlo MISE table for the slope density at `w = 0`.
    Mise {
        #[arg(long, default_value = "mixture")]
        dgp: String,
        #[arg(long, value_delimiter = ',', default_value = "sin")]
        g1: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        sigma2: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Smallest eigenvalue of `Q0` for growing intercept dimension.
    Eigs {
        #[arg(long, default_value_t = 20)]
        k0_max: usize,
    },
    /// Potential outcome density `f_Y(y, x, w)` on the grid with intervals.
    Potential {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    /// Slope density under linear versus spline estimation of `g1(w) = 2 w^2`.
    Misspec {
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
    },
}
