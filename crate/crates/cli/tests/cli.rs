use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sieve_vrc::basis::HermiteBasis;
use sieve_vrc::simulation::{generate_with_latent, DgpSpec, G1Kind, SlopeLaw};
use sieve_vrc::{DensityEstimate, TensorHermite};

fn vrc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrc"))
        .args(args)
        .env_remove("VRC_K1")
        .output()
        .expect("binary runs")
}

fn vrc_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vrc"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json_of(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn p(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &tempfile::TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = p(dir, name);
    let mut args = vec!["simulate", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&vrc(&args));
    out
}

/// `A0 + A1 X` with `A0, A1` independent standard normals and `g = 0`.
fn gaussian_csv(dir: &tempfile::TempDir, n: usize) -> PathBuf {
    let sim = generate_with_latent(&DgpSpec::new(SlopeLaw::NormalMixture, G1Kind::Zero, 1.0, n, 31)).unwrap();
    let mut text = String::from("y,x1,w1\n");
    for j in 0..n {
        let a1 = sim.a0[(j + 1) % n];
        let x = sim.data.x[(j, 0)];
        text.push_str(&format!("{},{},{}\n", sim.a0[j] + a1 * x, x, sim.data.w[(j, 0)]));
    }
    let path = p(dir, "gauss.csv");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(&dir, "a.csv", &["--dgp", "mixture", "--g1", "sin", "--sigma2", "1", "--n", "1000", "--seed", "7"]);
    let b = simulate(&dir, "b.csv", &["--dgp", "mixture", "--g1", "sin", "--sigma2", "1", "--n", "1000", "--seed", "7"]);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next(), Some("y,x1,w1"));
    assert_eq!(text.lines().count(), 1001);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn gamma_slope_variance_from_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(&dir, "g.csv", &["--dgp", "gamma", "--g1", "zero", "--n", "40000", "--seed", "3"]);
    let text = fs::read_to_string(path).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
            (v[0], v[1])
        })
        .collect();
    // E[(Y - 3X)^2 | X] = Var(A0) + Var(A1) X^2; regress on (1, X^2)
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(y, x) in &rows {
        let e2 = (y - 3.0 * x).powi(2);
        let x2 = x * x;
        s11 += 1.0;
        s12 += x2;
        s22 += x2 * x2;
        r1 += e2;
        r2 += e2 * x2;
    }
    let det = s11 * s22 - s12 * s12;
    let slope = (s11 * r2 - s12 * r1) / det;
    assert!((slope - 3.0).abs() < 0.3, "{slope}");
}

#[test]
fn estimate_gaussian_peaks_near_zero_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(&dir, 2000);
    let out = p(&dir, "est.json");
    ok(&vrc(&["estimate", "--data", s(&data), "--w0", "0", "--k1", "5", "--out", s(&out)]));
    let j = json_of(&out);
    let grid = floats(&j["grid"]);
    let f = floats(&j["f_hat"]);
    let peak = grid[f.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
    assert!(peak.abs() < 0.5, "peak at {peak}");

    // beta_hat + config reproduce f_hat
    let beta = floats(&j["beta_hat"]);
    let k1 = j["config"]["k1"].as_u64().unwrap() as usize;
    let g1 = floats(&j["g_hat_at_w"])[1];
    let basis = HermiteBasis::new(k1).unwrap();
    for (b, fv) in grid.iter().zip(&f) {
        let q = basis.eval_all(b - g1);
        let v: f64 = q.iter().zip(&beta).map(|(a, c)| a * c).sum();
        assert!((v - fv).abs() < 1e-12);
    }
    assert!(j["diagnostics"]["max_imag"].as_f64().unwrap() < 1e-6);
    assert!(j["diagnostics"]["p_min_eig"].as_f64().unwrap() > 0.0);
}

#[test]
fn joint_target_marginalizes_to_vrs() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(&dir, "m.csv", &["--n", "800", "--seed", "2"]);
    let vrs = p(&dir, "vrs.json");
    let joint = p(&dir, "joint.json");
    ok(&vrc(&["estimate", "--data", s(&data), "--k0", "2", "--target", "vrs", "--out", s(&vrs)]));
    ok(&vrc(&["estimate", "--data", s(&data), "--k0", "2", "--target", "joint", "--grid-count", "41", "--out", s(&joint)]));
    let v = json_of(&vrs);
    let jt = json_of(&joint);
    let est = DensityEstimate {
        beta: floats(&jt["beta_hat"]),
        g_at_w: floats(&jt["g_hat_at_w"]),
        basis: TensorHermite::new(2, 5).unwrap(),
        max_imag: 0.0,
        q0_condition: 1.0,
    };
    let marg = est.slope_marginal();
    for (b, f) in floats(&v["grid"]).iter().zip(floats(&v["f_hat"])) {
        assert!((marg.eval(*b) - f).abs() < 1e-6);
    }
    // joint grid rows follow b0, columns b1
    let rows = jt["f_hat"].as_array().unwrap();
    assert_eq!(rows.len(), 41);
    let g = floats(&jt["grid"]);
    let f_35 = rows[3].as_array().unwrap()[5].as_f64().unwrap();
    assert!((f_35 - est.eval(g[3], g[5])).abs() < 1e-12);
}

#[test]
fn malformed_csv_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = p(&dir, "bad.csv");
    fs::write(&path, "y,x1,w1\n1,2,3\n1,2,zz\n").unwrap();
    let out = vrc(&["estimate", "--data", s(&path)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
    fs::write(&path, "y,x\n1,2\n").unwrap();
    assert_eq!(vrc(&["estimate", "--data", s(&path)]).status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vrc(&["estimate"]).status.code(), Some(2));
    assert_eq!(vrc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(vrc(&["eigs", "--nu-nodes", "41"]).status.code(), Some(2));
    assert_eq!(vrc(&["simulate", "--dgp", "beta"]).status.code(), Some(2));
    // five rows cannot identify twelve spline coefficients
    let data = simulate(&dir, "tiny.csv", &["--n", "5"]);
    let out = vrc(&["estimate", "--data", s(&data)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let out = vrc(&["simulate", "--n", "5", "--out", s(&dir.path().join("no/such/dir.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bands_contain_estimate_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(&dir, "d.csv", &["--n", "600", "--seed", "5"]);
    let run = |name: &str, alpha: &str| {
        let out = p(&dir, name);
        ok(&vrc(&[
            "bands", "--data", s(&data), "--alpha", alpha, "--boot", "100", "--weights", "mammen", "--seed", "1",
            "--grid-count", "81", "--out", s(&out),
        ]));
        json_of(&out)
    };
    let a = run("a.json", "0.05");
    let b = run("b.json", "0.05");
    let c = run("c.json", "0.3");
    assert_eq!(a["critical_value"], b["critical_value"]);
    let (f, lo, hi) = (floats(&a["f_hat"]), floats(&a["band_lo"]), floats(&a["band_hi"]));
    for i in 0..f.len() {
        assert!(lo[i] <= f[i] && f[i] <= hi[i]);
    }
    assert!(c["critical_value"].as_f64().unwrap() <= a["critical_value"].as_f64().unwrap());
    let width = |j: &Value| {
        floats(&j["band_hi"]).iter().zip(floats(&j["band_lo"])).map(|(h, l)| h - l).sum::<f64>()
    };
    assert!(width(&c) < width(&a));
}

#[test]
fn mise_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(&dir, "m.csv");
    let args = ["mise", "--g1", "sin", "--sigma2", "1", "--k1", "4,5,6,7", "--reps", "1", "--n", "400", "--seed", "3"];
    let mut with_out = args.to_vec();
    with_out.extend_from_slice(&["--out", s(&out)]);
    ok(&vrc(&with_out));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "g1,sigma2,k1,mise,best");
    assert_eq!(lines.len(), 5);
    assert_eq!(lines.iter().filter(|l| l.ends_with(",true")).count(), 1);
    let again = vrc(&args);
    ok(&again);
    assert_eq!(again.stdout, fs::read(&out).unwrap());
}

#[test]
fn eigs_and_potential() {
    let dir = tempfile::tempdir().unwrap();
    let out = vrc(&["eigs", "--k0-max", "20"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(String::from_utf8_lossy(&out.stderr).contains("R^2"));

    let data = gaussian_csv(&dir, 1500);
    let pot = p(&dir, "pot.json");
    ok(&vrc(&["potential", "--data", s(&data), "--x", "1", "--k1", "3", "--out", s(&pot)]));
    let j = json_of(&pot);
    let y = floats(&j["y"]);
    let f = floats(&j["f_hat"]);
    let i0 = y.iter().position(|&v| v == 0.0).unwrap();
    // Y | X = 1 is N(0, 2)
    assert!((f[i0] - 1.0 / (4.0 * std::f64::consts::PI).sqrt()).abs() < 0.05, "{}", f[i0]);
    let (lo, hi) = (floats(&j["lo"]), floats(&j["hi"]));
    assert!(lo[i0] <= f[i0] && f[i0] <= hi[i0]);
}

#[test]
fn config_precedence_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(&dir, "d.csv", &["--n", "500", "--seed", "4"]);
    let cfg = p(&dir, "run.cfg");
    fs::write(&cfg, "k1 = 6\nalpha = 0.1\nspline_knots = 4\n").unwrap();
    let out = p(&dir, "o.json");
    let args = ["estimate", "--data", s(&data), "--config", s(&cfg), "--out", s(&out)];

    ok(&vrc_env(&args, &[]));
    let j = json_of(&out);
    assert_eq!(j["config"]["k1"], 6);
    assert_eq!(j["config"]["spline_knots"], 4);
    assert_eq!(j["config"]["k0"], 1);

    ok(&vrc_env(&args, &[("VRC_K1", "7"), ("VRC_K0", "2")]));
    let j = json_of(&out);
    assert_eq!(j["config"]["k1"], 7);
    assert_eq!(j["config"]["k0"], 2);
    assert_eq!(j["config"]["alpha"], 0.1);

    let mut with_flag = args.to_vec();
    with_flag.extend_from_slice(&["--k1", "3"]);
    ok(&vrc_env(&with_flag, &[("VRC_K1", "7")]));
    assert_eq!(json_of(&out)["config"]["k1"], 3);
}

#[test]
fn misspec_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(&dir, "mis.csv");
    ok(&vrc(&["misspec", "--reps", "1", "--n", "400", "--grid-count", "11", "--out", s(&out)]));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "arm,b,truth,median,lo,hi");
    assert_eq!(lines.len(), 1 + 2 * 11);
    for l in &lines[1..] {
        let c: Vec<&str> = l.split(',').collect();
        // single replication: envelope collapses onto the curve
        assert_eq!(c[3], c[4]);
        assert_eq!(c[3], c[5]);
    }
}
