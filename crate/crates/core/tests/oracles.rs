use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;

use sieve_vrc::basis::TensorHermite;
use sieve_vrc::estimator::{build_q, fit_vrc_density, LinearFunctional};
use sieve_vrc::inference::{functional_ci, pointwise_ci};
use sieve_vrc::pipeline::{CoefMode, SieveModel};
use sieve_vrc::quadrature::{grid_integrate, NuQuadrature, UniformGrid, XQuadrature};
use sieve_vrc::regression::{fit_ccf, fit_gram, fit_varying_coefs, CoefBasis, Dataset, ExactCcf, VaryingCoefFit};
use sieve_vrc::simulation::{
    direct_q_matrix, generate, generate_with_latent, misspecification_experiment, oracle_fourier_inversion,
    true_vrs_density, DgpSpec, G1Kind, MisspecSpec, OracleGrid, SlopeLaw,
};
use sieve_vrc::{BSplineBasis, HermiteBasis, SieveConfig};

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn gaussian_h(x: f64, t: f64) -> Complex64 {
    Complex64::new((-0.5 * t * t * (1.0 + x * x)).exp(), 0.0)
}

#[test]
fn kronecker_structure_of_q() {
    let nu = NuQuadrature::new(0.25, 80).unwrap();
    for k0 in 1..=3 {
        for k1 in [1, 3, 5] {
            let basis = TensorHermite::new(k0, k1).unwrap();
            let q = build_q(basis, &nu, 2, 1e-10).unwrap();
            let direct = direct_q_matrix(basis, &nu, 15.0, 200).unwrap();
            let rel = (&direct - q.q_full()).norm() / direct.norm();
            assert!(rel < 1e-8, "K0={k0} K1={k1}: {rel:e}");
        }
    }
}

#[test]
fn two_routes_to_the_gaussian_density() {
    let nu = NuQuadrature::new(0.25, 80).unwrap();
    let xq = XQuadrature::new(10.0, 400).unwrap();
    let q = build_q(TensorHermite::new(1, 1).unwrap(), &nu, 2, 1e-10).unwrap();
    let est = fit_vrc_density(&ExactCcf { nu: &nu, h: gaussian_h }, &q, &xq, &nu, &[0.0, 0.0]).unwrap();
    let pts: Vec<f64> = (0..=12).map(|i| -3.0 + 0.5 * i as f64).collect();
    let inv = oracle_fourier_inversion(gaussian_h, [0.0, 0.0], &pts, &pts, &OracleGrid::default()).unwrap();
    let sieve = est.eval_grid(&pts, &pts);
    let truth = DMatrix::from_fn(pts.len(), pts.len(), |r, c| phi(pts[r]) * phi(pts[c]));
    assert!((&inv - &truth).abs().max() < 1e-3);
    assert!((&sieve - &truth).abs().max() < 1e-3);
    assert!((&inv - &sieve).abs().max() < 2e-3);

    let shifted = oracle_fourier_inversion(
        gaussian_h,
        [1.0, 2.0],
        &pts.iter().map(|b| b + 1.0).collect::<Vec<_>>(),
        &pts.iter().map(|b| b + 2.0).collect::<Vec<_>>(),
        &OracleGrid::default(),
    )
    .unwrap();
    assert!((&shifted - &inv).abs().max() < 1e-12);
}

#[test]
fn spline_fit_recovers_sine_coefficient() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let n = 1000;
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut w = Vec::new();
    for _ in 0..n {
        let xi: f64 = rng.sample(rand_distr::StandardNormal);
        let wi: f64 = rng.sample(rand_distr::StandardNormal);
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        y.push(1.0 + xi * wi.sin() + 0.3 * e);
        x.push(xi);
        w.push(wi);
    }
    let data = Dataset::from_columns(y.clone(), x.clone(), w.clone()).unwrap();
    let basis = BSplineBasis::from_sample(2, 3, &w).unwrap();
    let fit = fit_varying_coefs(&data, CoefBasis::Spline(basis.clone()), 1e-10).unwrap();
    let (lo, hi) = basis.boundary();
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let wi = lo + (hi - lo) * i as f64 / 200.0;
        worst = worst.max((fit.coefficients_at(wi)[1] - wi.sin()).abs());
    }
    let mut central: f64 = 0.0;
    for i in 0..=200 {
        let wi = -2.0 + 0.02 * i as f64;
        central = central.max((fit.coefficients_at(wi)[1] - wi.sin()).abs());
    }
    assert!(central < 0.15, "sup error {central} on [-2, 2], {worst} on the sample range");

    // normal equations solved densely by LU
    let m = basis.dim();
    let design = DMatrix::from_fn(n, 2 * m, |j, c| {
        let p = basis.eval(w[j]);
        if c < m { p[c] } else { x[j] * p[c - m] }
    });
    let lhs = design.tr_mul(&design);
    let rhs = design.tr_mul(&nalgebra::DVector::from_vec(y));
    let theta = lhs.lu().solve(&rhs).unwrap();
    for l in 0..2 {
        for k in 0..m {
            assert_abs_diff_eq!(fit.coefs[(l, k)], theta[l * m + k], epsilon = 1e-8);
        }
    }
}

#[test]
fn linear_mode_misfits_a_quadratic() {
    let mut spec = DgpSpec::new(SlopeLaw::NormalMixture, G1Kind::Quadratic, 1.0, 2000, 8);
    spec.intercept_var = 0.5;
    let data = generate(&spec).unwrap();
    let ols = fit_varying_coefs(&data, CoefBasis::Linear, 1e-10).unwrap();
    let g = |w: f64| ols.coefficients_at(w)[1];
    // exactly linear in w...
    assert_abs_diff_eq!(g(1.0) - g(0.0), g(2.0) - g(1.0), epsilon = 1e-10);
    // ...and therefore biased at w = 0, where 2 w^2 vanishes but its linear projection does not
    assert!(g(0.0) > 1.0, "{}", g(0.0));
}

#[test]
fn ccf_estimate_tracks_gaussian_truth() {
    let sim = generate_with_latent(&DgpSpec {
        intercept_var: 1.0,
        ..DgpSpec::new(SlopeLaw::NormalMixture, G1Kind::Zero, 1.0, 5000, 21)
    })
    .unwrap();
    // replace the slope by a standard normal draw: A0 + A1 X with A0, A1 iid N(0, 1)
    let x = sim.data.x1();
    let a1: Vec<f64> = sim.a0.iter().rev().copied().collect();
    let y: Vec<f64> = (0..x.len()).map(|j| sim.a0[j] + a1[j] * x[j]).collect();
    let data = Dataset::from_columns(y, x.clone(), sim.data.w1()).unwrap();
    let nu = NuQuadrature::new(0.25, 80).unwrap();
    let hb = HermiteBasis::new(5).unwrap();
    let gram = fit_gram(&x, hb, 1e-10).unwrap();
    let ccf = fit_ccf(&data, &VaryingCoefFit::zero(2), hb, &nu, &gram).unwrap();
    let mut se = 0.0;
    let mut count = 0.0;
    for i in 0..nu.len() {
        for j in 0..=20 {
            let xv = -2.0 + 0.2 * j as f64;
            se += (ccf.h(i, xv) - gaussian_h(xv, nu.nodes[i])).norm_sqr();
            count += 1.0;
        }
    }
    assert!(se / count < 1e-2, "{}", se / count);
}

#[test]
fn variance_kit_degenerate_and_stable_cases() {
    let nu = NuQuadrature::new(0.25, 80).unwrap();
    let xq = XQuadrature::new(10.0, 400).unwrap();
    let q = build_q(TensorHermite::new(1, 1).unwrap(), &nu, 2, 1e-10).unwrap();
    let one = Dataset::from_columns(vec![0.7], vec![0.3], vec![0.0]).unwrap();
    let hb = HermiteBasis::new(1).unwrap();
    let gram = fit_gram(&one.x1(), hb, 1e-10).unwrap();
    let ccf = fit_ccf(&one, &VaryingCoefFit::zero(2), hb, &nu, &gram).unwrap();
    let kit = sieve_vrc::inference::build_variance_kit(&ccf, &q, &gram, &xq, &nu).unwrap();
    assert!(kit.u.iter().all(|v| v.abs() < 1e-12));
    assert!(kit.sigma_hat.iter().all(|v| v.abs() < 1e-20));

    let vhat = |seed: u64| {
        let sim = generate_with_latent(&DgpSpec::new(SlopeLaw::NormalMixture, G1Kind::Zero, 1.0, 2000, seed)).unwrap();
        let x = sim.data.x1();
        let n = x.len();
        let a1: Vec<f64> = (0..n).map(|j| sim.a0[(j + 1) % n]).collect();
        let y: Vec<f64> = (0..n).map(|j| sim.a0[j] + a1[j] * x[j]).collect();
        let data = Dataset::from_columns(y, x.clone(), sim.data.w1()).unwrap();
        let gram = fit_gram(&x, hb, 1e-10).unwrap();
        let ccf = fit_ccf(&data, &VaryingCoefFit::zero(2), hb, &nu, &gram).unwrap();
        let kit = sieve_vrc::inference::build_variance_kit(&ccf, &q, &gram, &xq, &nu).unwrap();
        let ell = LinearFunctional::PointEval { b0: 0.0, b1: 0.0 }
            .coefficients(q.basis, &[0.0, 0.0])
            .unwrap();
        kit.variance(&ell)
    };
    let (v1, v2) = (vhat(1), vhat(2));
    assert!(v1 > 0.0 && (v1 / v2 - 1.0).abs() < 0.25, "{v1} {v2}");
}

#[test]
fn functional_intervals_are_consistent() {
    let model = SieveModel::new(SieveConfig::default()).unwrap();
    let data = generate(&DgpSpec::new(SlopeLaw::NormalMixture, G1Kind::Sin, 1.0, 1000, 4)).unwrap();
    let fit = model.fit(&data, 0.0, CoefMode::Spline).unwrap();
    let kit = fit.variance_kit(&model).unwrap();
    let est = &fit.joint;

    let a = pointwise_ci(est, &kit, 0.2, -0.4, 0.05).unwrap();
    let b = functional_ci(est, &kit, &LinearFunctional::PointEval { b0: 0.2, b1: -0.4 }, 0.05).unwrap();
    assert_eq!(a, b);
    assert_abs_diff_eq!(a.estimate, est.eval(0.2, -0.4), epsilon = 1e-14);

    // convolution collapses at x = 0 to the intercept marginal
    let po = functional_ci(
        est,
        &kit,
        &LinearFunctional::PotentialOutcome { y: 0.5, x: 0.0, bound: 8.0, nodes: 256 },
        0.05,
    )
    .unwrap();
    let intercept_coefs: Vec<f64> = {
        let h0 = est.basis.intercept().eval_all(0.5 - est.g_at_w[0]);
        let c1 = est.basis.slope().integrals();
        sieve_vrc::basis::kron(&h0, &c1)
    };
    let direct = sieve_vrc::inference::interval_for(est, &kit, &intercept_coefs, 0.05).unwrap();
    assert_abs_diff_eq!(po.estimate, direct.estimate, epsilon = 1e-8);
    assert_abs_diff_eq!(po.se, direct.se, epsilon = 1e-8);

    let grid = UniformGrid::new(-5.0, 5.0, 201).unwrap();
    let mass = functional_ci(
        est,
        &kit,
        &LinearFunctional::WeightedAverage { x: 1.0, grid, weights: vec![1.0; 201], bound: 8.0, nodes: 256 },
        0.05,
    )
    .unwrap();
    assert!((mass.estimate - 1.0).abs() < 0.1, "{mass:?}");

    let vrs = fit.vrs(&model).unwrap();
    let vals = vrs.eval_grid(&grid.points());
    let total = grid_integrate(&vals, &grid).unwrap();
    assert!((0.9..=1.1).contains(&total), "{total}");
    // Gaussian-peaked truth: the estimate is largest near the mixture modes
    let truth = true_vrs_density(&DgpSpec::new(SlopeLaw::NormalMixture, G1Kind::Sin, 1.0, 1, 0), 0.0, &grid.points()).unwrap();
    let ise: f64 = grid_integrate(&vals.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).collect::<Vec<_>>(), &grid).unwrap();
    assert!(ise < 0.05, "{ise}");
}

#[test]
fn slope_moments() {
    let n = 1_000_000;
    let mix = generate_with_latent(&DgpSpec::new(SlopeLaw::NormalMixture, G1Kind::Zero, 1.0, n, 9)).unwrap();
    let gam = generate_with_latent(&DgpSpec::new(SlopeLaw::Gamma31, G1Kind::Zero, 1.0, n, 9)).unwrap();
    let moments = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64)
    };
    let (m, v) = moments(&mix.a1);
    assert!(m.abs() < 0.01 && (v - 3.75).abs() < 0.03, "{m} {v}");
    let (m, v) = moments(&gam.a1);
    assert!((m - 3.0).abs() < 0.01 && (v - 3.0).abs() < 0.03, "{m} {v}");
}

#[test]
fn misspecified_coefficients_distort_the_density() {
    let spec = MisspecSpec { reps: 40, seed: 4, ..Default::default() };
    let report = misspecification_experiment(&spec).unwrap();
    let ols = &report.arms[0];
    let spline = &report.arms[1];
    assert!(ols.median_ise > 2.0 * spline.median_ise, "{} {}", ols.median_ise, spline.median_ise);
    let mid = report.points.iter().position(|&b| b == 0.0).unwrap();
    assert!(spline.lo[mid] <= report.truth[mid] && report.truth[mid] <= spline.hi[mid]);

    let single = misspecification_experiment(&MisspecSpec { reps: 1, n: 300, ..spec }).unwrap();
    for arm in &single.arms {
        assert_eq!(arm.lo, arm.median);
        assert_eq!(arm.hi, arm.median);
    }
}
