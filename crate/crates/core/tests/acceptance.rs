//! One test per acceptance criterion. Each prints a PASS or FAIL line with the
//! measured numbers before asserting.

use std::path::Path;
use std::process::Command as Proc;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use circle_rds::dynamics::{lyapunov_birkhoff, trichotomy_report, Regime, TrichotomyConfig};
use circle_rds::hypothesis::{preflight, PreflightSettings, Verdict};
use circle_rds::koopman::{
    default_q_grid, gamma_root, l1_to_histogram, linearized_eigen_residual, moment_curve,
    moment_lyapunov_mc_many, orbit_histogram, pushforward_lebesgue, stationary_density,
    TwistedOperator,
};
use circle_rds::occupation::{
    diagonal_mass_fit, distance_histogram_chains, excursion_counts, log_growth_fit,
    ExcursionDesign, MASS_WINDOW,
};
use circle_rds::passage::{
    escape_time_design, theta_at_zero_exponent, verify_positive_exponent_tail,
    verify_zero_exponent_bounds, ZeroExponentDesign,
};
use circle_rds::{CircleMap, NoiseQuadrature, NoiseStream};

const GRID: usize = 2048;

// runtimes are only meaningful when the criteria do not share the machine
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn nu06() -> CircleMap {
    CircleMap::example_nu(0.6).unwrap()
}

fn spectral(map: &CircleMap, theta: f64, n: usize) -> TwistedOperator {
    TwistedOperator::new(map, &NoiseQuadrature::standard(theta).unwrap(), n).unwrap()
}

fn verdict(name: &str, checks: &[(&str, bool)], elapsed: Duration, limit: Duration) {
    let timed = elapsed <= limit;
    let ok = timed && checks.iter().all(|c| c.1);
    println!(
        "{} {name} ({:.1} s, limit {} s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    for (what, pass) in checks {
        println!("    [{}] {what}", if *pass { "ok" } else { "x" });
    }
    println!("    [{}] runtime", if timed { "ok" } else { "x" });
    assert!(ok, "{name} failed");
}

#[test]
fn lyapunov_endpoints() {
    let _guard = serial();
    let t = Instant::now();
    let map = nu06();
    let thetas: Vec<f64> = (0..9).map(|k| 0.1 + 0.05 * k as f64).collect();
    let est: Vec<_> = thetas
        .iter()
        .map(|&th| lyapunov_birkhoff(&map, &mut NoiseStream::new(th, 1), None, 10_000_000, 10_000).unwrap())
        .collect();
    let (lo, hi) = (&est[0], &est[8]);
    let monotone = est
        .windows(2)
        .all(|w| w[1].lambda_hat >= w[0].lambda_hat - 2.0 * (w[0].stderr + w[1].stderr));
    verdict(
        "lyapunov endpoints",
        &[
            (&format!("lambda(0.1) = {:.4} in -0.40 +- 0.05", lo.lambda_hat), (lo.lambda_hat + 0.40).abs() <= 0.05),
            (&format!("lambda(0.5) = {:.4} in 0.45 +- 0.05", hi.lambda_hat), (hi.lambda_hat - 0.45).abs() <= 0.05),
            ("monotone across 9 noise levels up to 2 stderr", monotone),
        ],
        t.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn spot_values() {
    let _guard = serial();
    let t = Instant::now();
    let map = nu06();
    let l = |th: f64| lyapunov_birkhoff(&map, &mut NoiseStream::new(th, 2), None, 10_000_000, 10_000).unwrap();
    let (a, b) = (l(0.2), l(0.17));
    verdict(
        "spot values",
        &[
            (&format!("lambda(0.2) = {:.4} in 0.11 +- 0.02", a.lambda_hat), (a.lambda_hat - 0.11).abs() <= 0.02),
            (&format!("|lambda(0.17)| = {:.4} <= 0.02", b.lambda_hat.abs()), b.lambda_hat.abs() <= 0.02),
        ],
        t.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn exact_map_oracle() {
    let _guard = serial();
    let t = Instant::now();
    let map = CircleMap::affine_doubling();
    let ln2 = 2f64.ln();
    let b = lyapunov_birkhoff(&map, &mut NoiseStream::new(0.3, 3), None, 100_000, 0).unwrap();
    let op = spectral(&map, 0.3, 256);
    let worst = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
        .iter()
        .map(|&q| (op.moment_lyapunov(q).unwrap() - q * ln2).abs())
        .fold(0.0, f64::max);
    let curve = moment_curve(&op, &default_q_grid(0.02, &[])).unwrap();
    verdict(
        "exact-map oracle",
        &[
            (&format!("|lambda - ln 2| = {:.1e} <= 1e-12", (b.lambda_hat - ln2).abs()), (b.lambda_hat - ln2).abs() <= 1e-12),
            (&format!("max |Lambda(q) - q ln 2| = {worst:.1e} <= 1e-8"), worst <= 1e-8),
            (&format!("|V| = {:.1e} <= 1e-6", curve.v.abs()), curve.v.abs() <= 1e-6),
        ],
        t.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn spectral_consistency() {
    let _guard = serial();
    let t = Instant::now();
    let map = nu06();
    let theta = 0.2;
    let op = spectral(&map, theta, GRID);
    let grid = default_q_grid(0.02, &[0.25, 0.5, 1.0, 1.5, 2.0]);
    let curve = moment_curve(&op, &grid).unwrap();

    let l0 = curve.at(0.0).unwrap().abs();
    let convex = curve.lambda.windows(3).zip(curve.q_grid.windows(3)).all(|(l, q)| {
        let s1 = (l[1] - l[0]) / (q[1] - q[0]);
        let s2 = (l[2] - l[1]) / (q[2] - q[1]);
        s2 >= s1 - 1e-10
    });
    let tangent = curve
        .q_grid
        .iter()
        .zip(&curve.lambda)
        .map(|(&q, &l)| l - curve.lambda0 * q)
        .fold(f64::INFINITY, f64::min);

    let b = lyapunov_birkhoff(&map, &mut NoiseStream::new(theta, 4), None, 10_000_000, 10_000).unwrap();
    let birkhoff_tol = (3.0 * b.stderr).max(5e-3);

    let qs = [-1.0, -0.5, 0.5, 1.0];
    let mc = moment_lyapunov_mc_many(&map, &NoiseStream::new(theta, 5), &qs, 16, 1_000_000).unwrap();
    let worst_z = qs
        .iter()
        .zip(&mc)
        .map(|(&q, e)| ((e.estimate - op.moment_lyapunov(q).unwrap()) / e.stderr).abs())
        .fold(0.0, f64::max);

    let xs: Vec<f64> = (0..GRID).step_by(37).map(|i| i as f64 / GRID as f64).collect();
    let us = [1e-3, 1.0, 1e3];
    let eigen = [-1.0, 0.5, 1.0, 2.0]
        .iter()
        .map(|&q| {
            let e = op.dominant_eig(q).unwrap();
            linearized_eigen_residual(&op, q, &e.phi, e.rho, &xs, &us)
        })
        .fold(0.0, f64::max);

    let fine = spectral(&map, theta, 2 * GRID);
    let doubling = [-2.0, -1.0, 1.0, 2.0]
        .iter()
        .map(|&q| (fine.moment_lyapunov(q).unwrap() - op.moment_lyapunov(q).unwrap()).abs())
        .fold(0.0, f64::max);

    verdict(
        "spectral consistency",
        &[
            (&format!("|Lambda(0)| = {l0:.1e} <= 1e-10"), l0 <= 1e-10),
            ("discrete convexity on the q grid", convex),
            (&format!("min Lambda(q) - lambda0 q = {tangent:.1e} >= -1e-8"), tangent >= -1e-8),
            (
                &format!("|lambda0 - birkhoff| = {:.1e} <= {birkhoff_tol:.1e}", (curve.lambda0 - b.lambda_hat).abs()),
                (curve.lambda0 - b.lambda_hat).abs() <= birkhoff_tol,
            ),
            (&format!("max |z| of Monte Carlo Lambda = {worst_z:.2} <= 3"), worst_z <= 3.0),
            (&format!("eigen-identity relative residual {eigen:.1e} <= 1e-8"), eigen <= 1e-8),
            (&format!("grid doubling change {doubling:.1e} <= 1e-8"), doubling <= 1e-8),
        ],
        t.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn full_noise_density() {
    let _guard = serial();
    let t = Instant::now();
    let map = nu06();
    let rho = stationary_density(&map, &NoiseQuadrature::standard(0.5).unwrap(), GRID, 1e-13, 500).unwrap();
    let push = pushforward_lebesgue(&map, GRID).unwrap();
    let sup = rho
        .values
        .iter()
        .zip(&push.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let hist = orbit_histogram(&map, &mut NoiseStream::new(0.5, 6), 10_000_000, 10_000, 128);
    let l1 = l1_to_histogram(&rho, &hist);
    verdict(
        "full-noise density",
        &[
            (&format!("sup distance to pushforward {sup:.1e} <= 1e-6"), sup <= 1e-6),
            (&format!("L1 to 1e7-iterate histogram {l1:.4} < 0.02"), l1 < 0.02),
        ],
        t.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn zero_exponent_passage() {
    let _guard = serial();
    let t = Instant::now();
    let map = nu06();
    let theta = theta_at_zero_exponent(&map, 0.12, 0.3, 1024, 192).unwrap();
    let design = ZeroExponentDesign::default();
    let r = verify_zero_exponent_bounds(&map, theta, &design).unwrap();
    let v = moment_curve(&spectral(&map, theta, GRID), &default_q_grid(0.02, &[])).unwrap().v;
    let c = r.stop_coefficients[0];
    let min_ratio = design.log_ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    verdict(
        "zero-exponent passage",
        &[
            (&format!("|lambda_hat| = {:.1e} < 0.01 at theta {theta:.6}", r.lambda_hat.abs()), r.lambda_hat.abs() < 0.01),
            (&format!("min ln(delta/eps) = {min_ratio} >= 8"), min_ratio >= 8.0),
            (&format!("samples per cell {} >= 1e4", design.count), design.count >= 10_000),
            (
                &format!("slope of P(lower first) {:.4} in [0.9, 1.1]", r.probability_fit.slope),
                (0.9..=1.1).contains(&r.probability_fit.slope),
            ),
            (
                &format!("stop coefficient {c:.4} within 25% of 1/V = {:.4}", 1.0 / v),
                (c * v - 1.0).abs() <= 0.25,
            ),
            (&format!("censored fraction {:.4} < 0.01", r.max_censored_fraction), r.max_censored_fraction < 0.01),
        ],
        t.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn positive_exponent_passage() {
    let _guard = serial();
    let t = Instant::now();
    let map = nu06();
    let theta = 0.2;
    let esc = escape_time_design(&map, theta, 0.05, &[2.0, 4.0, 6.0], 10_000, 7).unwrap();
    let op = spectral(&map, theta, GRID);
    let curve = moment_curve(&op, &default_q_grid(0.02, &[])).unwrap();
    let gamma = gamma_root(&op, curve.lambda0, 1e-6).unwrap();
    let offsets: Vec<f64> = (1..=10).map(|k| 2.0 * k as f64).collect();
    let tail = verify_positive_exponent_tail(&map, theta, 0.004, 0.05, 0.1, &offsets, 40_000, 8).unwrap();
    let slope_err = (esc.fit.slope * esc.lambda_hat - 1.0).abs();
    let tail_err = (tail.exponent - gamma).abs() / gamma.abs();
    verdict(
        "positive-exponent passage",
        &[
            (
                &format!("escape slope {:.3} vs 1/lambda {:.3}: relative error {slope_err:.3} <= 0.15", esc.fit.slope, 1.0 / esc.lambda_hat),
                slope_err <= 0.15,
            ),
            (
                &format!("tail exponent {:.4} vs gamma {gamma:.4}: relative error {tail_err:.3} <= 0.2", tail.exponent),
                tail_err <= 0.2,
            ),
        ],
        t.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn measure_growth() {
    let _guard = serial();
    let t = Instant::now();
    let map = nu06();

    let theta0 = theta_at_zero_exponent(&map, 0.12, 0.3, 1024, 192).unwrap();
    let fit_with = |excursions: usize| {
        let design = ExcursionDesign::geometric(0.05, 0.1, 20, excursions);
        let stats = excursion_counts(&map, &NoiseStream::new(theta0, 9), &design).unwrap();
        log_growth_fit(&stats, 200, 9).unwrap()
    };
    let small = fit_with(2000);
    let large = fit_with(4000);
    let stable = (large.slope / small.slope - 1.0).abs() <= 0.25;

    let theta = 0.2;
    let op = spectral(&map, theta, GRID);
    let curve = moment_curve(&op, &default_q_grid(0.02, &[])).unwrap();
    let gamma = gamma_root(&op, curve.lambda0, 1e-6).unwrap();
    let gamma_ok = -0.5 < gamma && gamma < 0.0;
    let lambda = lyapunov_birkhoff(&map, &mut NoiseStream::new(theta, 10), None, 10_000_000, 10_000).unwrap();
    let hist = distance_histogram_chains(&map, &NoiseStream::new(theta, 11), 16, 1_000_000, 1000, 1e-7, 60).unwrap();
    let mass = diagonal_mass_fit(&hist, lambda.lambda_hat, Some(gamma), MASS_WINDOW).unwrap();
    let mass_err = (mass.exponent - gamma.abs()).abs();

    verdict(
        "measure growth",
        &[
            (
                &format!("excursion slope {:.3} with CI ({:.3}, {:.3}) excluding 0", small.slope, small.ci.0, small.ci.1),
                small.slope > 0.0 && small.ci.0 > 0.0,
            ),
            (&format!("doubled budget slope {:.3} within 25%", large.slope), stable),
            (&format!("gamma = {gamma:.4} in (-1/2, 0)"), gamma_ok),
            (
                &format!("mass exponent {:.4} vs |gamma| {:.4}: difference {mass_err:.4} <= 0.1", mass.exponent, gamma.abs()),
                mass_err <= 0.1,
            ),
        ],
        t.elapsed(),
        Duration::from_secs(900),
    );
}

#[test]
fn trichotomy() {
    let _guard = serial();
    let t = Instant::now();
    let map = nu06();
    let cfg = TrichotomyConfig::default();
    let sync = trichotomy_report(&map, 0.1, &cfg).unwrap();
    let inter = trichotomy_report(&map, 0.17, &cfg).unwrap();
    let chaos = trichotomy_report(&map, 0.2, &cfg).unwrap();
    let sync_max = sync.seeds.iter().map(|s| s.tail_max).fold(0.0, f64::max);
    let chaos_min = chaos.seeds.iter().map(|s| s.tail_min).fold(0.0, f64::max);
    let chaos_avg = chaos.seeds.iter().map(|s| s.time_avg).fold(f64::INFINITY, f64::min);
    verdict(
        "trichotomy",
        &[
            (&format!("ensemble size {} = 32", cfg.ensemble), cfg.ensemble == 32),
            (&format!("theta 0.1 is {:?}", sync.regime), sync.regime == Regime::Synchronising),
            (
                &format!("theta 0.17 is {:?}", inter.regime),
                matches!(inter.regime, Regime::Intermittent | Regime::Inconclusive),
            ),
            (&format!("theta 0.2 is {:?}", chaos.regime), chaos.regime == Regime::Chaotic),
            (&format!("synchronising final-window max {sync_max:.1e} < 1e-6"), sync_max < 1e-6),
            (&format!("chaotic final-window min, worst seed {chaos_min:.1e} < 1e-4"), chaos_min < 1e-4),
            (&format!("chaotic time average, worst seed {chaos_avg:.4} > 0.05"), chaos_avg > 0.05),
        ],
        t.elapsed(),
        Duration::from_secs(300),
    );
}

const DETERMINISM_CONFIG: &str = r#"
seed = 1234
[grid]
n = 256
[preflight]
h2_grid = 128
scan_grid = 128
[lyapunov]
n = 100000
[sweep]
thetas = [0.15, 0.3]
include_affine = true
[two_point]
n = 5000
series = 3
trichotomy = true
trichotomy_n = 100000
[density]
orbit_n = 100000
[moment]
mc_n = 8
mc_ensemble = 4000
birkhoff_n = 100000
[passage]
epsilon = 0.001
delta = 0.1
d0 = 0.01
count = 1000
designs = true
escape_log_offsets = [2.0, 3.0]
tail_log_offsets = [2.0, 4.0]
tail_count = 2000
[measure_growth]
hist_chains = 4
hist_n = 1000000
[dist_hist]
n = 1000000
chains = 4
"#;

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn determinism() {
    let _guard = serial();
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, DETERMINISM_CONFIG).unwrap();
    let subcommands = [
        "preflight", "lyapunov", "two-point", "density", "moment", "gamma", "passage",
        "measure-growth", "dist-hist", "sweep",
    ];
    let mut checks = Vec::new();
    for cmd in subcommands {
        let mut runs = Vec::new();
        for workers in [1, 8] {
            let out = tmp.path().join(format!("{cmd}-{workers}"));
            let status = Proc::new(env!("CARGO_BIN_EXE_circle-rds"))
                .arg(cmd)
                .arg("--config")
                .arg(&config)
                .args(["--workers", &workers.to_string(), "--theta", "0.2"])
                .arg("--out")
                .arg(&out)
                .status()
                .unwrap();
            let manifest = out.join("manifest.json").exists();
            runs.push((status.success() && manifest, csv_files(&out)));
        }
        let ok = runs[0].0 && runs[1].0 && runs[0].1 == runs[1].1;
        let files = runs[0].1.len();
        checks.push((format!("{cmd}: {files} csv files identical at 1 and 8 workers"), ok));
    }
    let checks: Vec<(&str, bool)> = checks.iter().map(|(s, b)| (s.as_str(), *b)).collect();
    verdict("determinism", &checks, t.elapsed(), Duration::from_secs(1800));
}

#[test]
fn preflight_verdicts() {
    let _guard = serial();
    let t = Instant::now();
    let s = PreflightSettings::default();
    let ex = preflight(&nu06(), 0.2, &s).unwrap();
    let af = preflight(&CircleMap::affine_doubling(), 0.2, &s).unwrap();
    verdict(
        "preflight",
        &[
            (&format!("example family at theta 0.2: {:?}", ex.verdicts()), ex.verdicts().iter().all(|v| *v == Verdict::Pass)),
            (&format!("affine H3 {:?}", af.h3.verdict), af.h3.verdict == Verdict::Fail),
            (&format!("affine H5 {:?}", af.h5.verdict), af.h5.verdict == Verdict::Fail),
        ],
        t.elapsed(),
        Duration::from_secs(120),
    );
}
