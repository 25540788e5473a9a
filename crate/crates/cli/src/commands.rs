use serde_json::{json, Value};

use sieve_vrc::estimator::{clip_negative, potential_outcome_density, q0_eigen_decay, LinearFunctional};
use sieve_vrc::inference::interval_for;
use sieve_vrc::simulation::{
    generate, mise_benchmark, misspecification_experiment, DgpSpec, G1Kind, MiseSpec, MisspecSpec, SlopeLaw,
};
use sieve_vrc::{CoefMode, FittedSieve, NuQuadrature, SieveConfig, SieveModel, UniformGrid};

use crate::args::{Command, DataArgs, Target};
use crate::error::{CliError, Result};
use crate::io::{read_dataset, write_dataset};
use crate::settings::Resolved;

/// Largest imaginary residue accepted in a reported fit.
const MAX_IMAG: f64 = 1e-6;

pub fn run(command: &Command, settings: &Resolved) -> Result<Vec<u8>> {
    if settings.k1_list.len() > 1 && !matches!(command, Command::Mise { .. }) {
        return Err(CliError::Usage("a list of --k1 values is only accepted by `mise`".into()));
    }
    let cfg = &settings.config;
    match command {
        Command::Simulate {
            dgp,
            g1,
            sigma2,
            n,
            intercept_var,
        } => {
            let spec = DgpSpec {
                intercept_var: *intercept_var,
                ..DgpSpec::new(dgp.parse()?, g1.parse()?, *sigma2, *n, cfg.seed)
            };
            write_dataset(&generate(&spec)?)
        }
        Command::Estimate { data, target, clip } => estimate(cfg, data, *target, *clip),
        Command::Bands {
            data,
            band_lo,
            band_hi,
            band_count,
        } => bands(cfg, data, *band_lo, *band_hi, *band_count),
        Command::Mise {
            dgp,
            g1,
            sigma2,
            reps,
            n,
        } => mise(settings, dgp, g1, sigma2, *reps, *n),
        Command::Eigs { k0_max } => eigs(cfg, *k0_max),
        Command::Potential { data, x } => potential(cfg, data, *x),
        Command::Misspec { reps, n, sigma2 } => misspec(settings, *reps, *n, *sigma2),
    }
}

fn to_json(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn fit(cfg: &SieveConfig, args: &DataArgs) -> Result<(SieveModel, FittedSieve)> {
    let data = read_dataset(&args.data)?;
    let model = SieveModel::new(cfg.clone())?;
    let fit = model.fit(&data, args.w0, CoefMode::from(args.coef))?;
    if !(fit.joint.max_imag < MAX_IMAG) {
        return Err(CliError::Numeric(format!(
            "imaginary residue {:.3e} exceeds {MAX_IMAG:e}",
            fit.joint.max_imag
        )));
    }
    Ok((model, fit))
}

fn diagnostics(fit: &FittedSieve) -> Value {
    json!({
        "n": fit.ccf.n(),
        "max_imag": fit.joint.max_imag,
        "q0_condition": fit.joint.q0_condition,
        "p_min_eig": fit.gram.min_eig(),
        "p_retained": fit.gram.retained(),
        "pd_min_eig": fit.gfit.pd_min_eig,
        "pd_condition": fit.gfit.pd_condition,
        "ccf_max_modulus": fit.ccf.max_modulus,
    })
}

fn coef_name(args: &DataArgs) -> &'static str {
    match CoefMode::from(args.coef) {
        CoefMode::Spline => "spline",
        CoefMode::Linear => "linear",
    }
}

fn estimate(cfg: &SieveConfig, args: &DataArgs, target: Target, clip: bool) -> Result<Vec<u8>> {
    let (model, fit) = fit(cfg, args)?;
    let grid = cfg.grid()?.points();
    let (f_hat, beta, target_name) = match target {
        Target::Vrs => {
            let vrs = fit.vrs(&model)?;
            let mut f = vrs.eval_grid(&grid);
            if clip {
                clip_negative(&mut f);
            }
            (json!(f), vrs.beta1, "vrs")
        }
        Target::Joint => {
            let m = fit.joint.eval_grid(&grid, &grid);
            let rows: Vec<Vec<f64>> = (0..m.nrows())
                .map(|r| {
                    let mut row: Vec<f64> = m.row(r).iter().copied().collect();
                    if clip {
                        clip_negative(&mut row);
                    }
                    row
                })
                .collect();
            (json!(rows), fit.joint.beta.clone(), "joint")
        }
    };
    Ok(to_json(&json!({
        "command": "estimate",
        "target": target_name,
        "coef": coef_name(args),
        "w0": args.w0,
        "clip": clip,
        "config": cfg,
        "k0": cfg.k0,
        "k1": cfg.k1,
        "grid": grid,
        "f_hat": f_hat,
        "g_hat_at_w": fit.joint.g_at_w,
        "beta_hat": beta,
        "diagnostics": diagnostics(&fit),
    })))
}

fn summary(v: &[f64]) -> Value {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let sd = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let q = |p: f64| sieve_vrc::inference::empirical_quantile(&s, p);
    json!({
        "n_draws": s.len(),
        "mean": mean,
        "sd": sd,
        "min": s[0],
        "max": s[s.len() - 1],
        "q50": q(0.5),
        "q90": q(0.9),
        "q95": q(0.95),
        "q99": q(0.99),
    })
}

fn bands(cfg: &SieveConfig, args: &DataArgs, lo: Option<f64>, hi: Option<f64>, count: Option<usize>) -> Result<Vec<u8>> {
    let (model, fit) = fit(cfg, args)?;
    let band_grid = UniformGrid::new(
        lo.unwrap_or(cfg.grid_lo),
        hi.unwrap_or(cfg.grid_hi),
        count.unwrap_or(cfg.grid_count),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let points = band_grid.points();
    let functionals: Vec<LinearFunctional> = points.iter().map(|&b1| LinearFunctional::SlopeDensity { b1 }).collect();
    let kit = fit.variance_kit(&model)?;
    let band = fit.band(&model, &kit, &functionals, cfg.seed)?;
    let pointwise: Vec<_> = functionals
        .iter()
        .map(|f| fit.interval(&kit, f, cfg.alpha))
        .collect::<std::result::Result<_, _>>()?;
    Ok(to_json(&json!({
        "command": "bands",
        "target": "vrs",
        "coef": coef_name(args),
        "w0": args.w0,
        "config": cfg,
        "grid": points,
        "f_hat": band.estimate,
        "g_hat_at_w": fit.joint.g_at_w,
        "beta_hat": fit.joint.slope_marginal().beta1,
        "se": band.se,
        "pointwise_lo": pointwise.iter().map(|c| c.lo).collect::<Vec<_>>(),
        "pointwise_hi": pointwise.iter().map(|c| c.hi).collect::<Vec<_>>(),
        "band_lo": band.lo,
        "band_hi": band.hi,
        "active": band.active,
        "critical_value": band.critical_value,
        "alpha": band.alpha,
        "weight_kind": band.weight_kind,
        "sup_stats": summary(&band.sup_stats),
        "diagnostics": diagnostics(&fit),
    })))
}

fn potential(cfg: &SieveConfig, args: &DataArgs, x: f64) -> Result<Vec<u8>> {
    let (model, fit) = fit(cfg, args)?;
    let kit = fit.variance_kit(&model)?;
    let ys = cfg.grid()?.points();
    let f_hat = potential_outcome_density(&fit.joint, x, &ys, cfg.b1_bound, cfg.b1_nodes)?;
    let cis: Vec<_> = ys
        .iter()
        .map(|&y| {
            let f = LinearFunctional::PotentialOutcome {
                y,
                x,
                bound: cfg.b1_bound,
                nodes: cfg.b1_nodes,
            };
            let ell = f.coefficients(fit.joint.basis, &fit.joint.g_at_w)?;
            interval_for(&fit.joint, &kit, &ell, cfg.alpha)
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(to_json(&json!({
        "command": "potential",
        "coef": coef_name(args),
        "w0": args.w0,
        "x": x,
        "config": cfg,
        "y": ys,
        "f_hat": f_hat,
        "se": cis.iter().map(|c| c.se).collect::<Vec<_>>(),
        "lo": cis.iter().map(|c| c.lo).collect::<Vec<_>>(),
        "hi": cis.iter().map(|c| c.hi).collect::<Vec<_>>(),
        "alpha": cfg.alpha,
        "g_hat_at_w": fit.joint.g_at_w,
        "diagnostics": diagnostics(&fit),
    })))
}

fn mise(settings: &Resolved, dgp: &str, g1: &[String], sigma2: &[f64], reps: usize, n: usize) -> Result<Vec<u8>> {
    let k1 = if !settings.k1_list.is_empty() {
        settings.k1_list.clone()
    } else if settings.is_set("k1") {
        vec![settings.config.k1]
    } else {
        vec![4, 5, 6, 7]
    };
    let slope_law: SlopeLaw = dgp.parse()?;
    let g1_kinds: Vec<G1Kind> = g1.iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>()?;
    let report = mise_benchmark(&MiseSpec {
        slope_law,
        g1_kinds,
        sigma2: sigma2.to_vec(),
        k1,
        reps,
        n,
        seed: settings.config.seed,
        config: settings.config.clone(),
    })?;
    let mut out = String::from("g1,sigma2,k1,mise,best\n");
    for c in &report.cells {
        out.push_str(&format!("{},{},{},{},{}\n", c.g1_kind, c.sigma2, c.k1, c.mise, c.best));
    }
    Ok(out.into_bytes())
}

fn eigs(cfg: &SieveConfig, k0_max: usize) -> Result<Vec<u8>> {
    let nu = NuQuadrature::new(cfg.sigma_nu, cfg.nu_nodes)?;
    let decay = q0_eigen_decay(k0_max, &nu, 2)?;
    eprintln!(
        "log-log fit over K0 >= 2: slope {:.4}, intercept {:.4}, R^2 {:.4}",
        decay.slope, decay.intercept, decay.r_squared
    );
    let mut out = String::from("k0,min_eig\n");
    for (k, v) in decay.k0.iter().zip(&decay.min_eig) {
        out.push_str(&format!("{k},{v}\n"));
    }
    Ok(out.into_bytes())
}

fn misspec(settings: &Resolved, reps: usize, n: usize, sigma2: f64) -> Result<Vec<u8>> {
    let mut config = settings.config.clone();
    if !settings.is_set("k1") {
        config.k1 = MisspecSpec::default().config.k1;
    }
    let report = misspecification_experiment(&MisspecSpec {
        n,
        reps,
        seed: config.seed,
        sigma2,
        config,
    })?;
    let mut out = String::from("arm,b,truth,median,lo,hi\n");
    for arm in &report.arms {
        let name = match arm.mode {
            CoefMode::Spline => "spline",
            CoefMode::Linear => "linear",
        };
        for (i, b) in report.points.iter().enumerate() {
            out.push_str(&format!(
                "{name},{b},{},{},{},{}\n",
                report.truth[i], arm.median[i], arm.lo[i], arm.hi[i]
            ));
        }
    }
    Ok(out.into_bytes())
}
