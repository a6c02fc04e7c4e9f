use rayon::prelude::*;
use serde::Serialize;

use super::{Command, ExpResult, ExperimentError, RunContext};
use crate::circle_map::{CircleMap, MapSpec};
use crate::dynamics::{distance_series, lyapunov_birkhoff, trichotomy_report, Regime, TrichotomyConfig};
use crate::error::Error;
use crate::koopman::{
    default_q_grid, gamma_root, l1_to_histogram, moment_curve, moment_lyapunov_mc_many,
    orbit_histogram, pushforward_lebesgue, stationary_density, PowerIteration, TwistedOperator,
};
use crate::noise::{NoiseQuadrature, NoiseStream, QuadratureKind};
use crate::occupation::{
    diagonal_mass_fit, distance_histogram_chains, excursion_counts, log_growth_fit,
    DistanceHistogram, ExcursionDesign,
};
use crate::passage::{
    escape_time_design, passage_ensemble, theta_at_zero_exponent, verify_positive_exponent_tail,
    verify_zero_exponent_bounds, Band, ZeroExponentDesign,
};
use crate::wrap;

/// Exponents inside this band count as zero when choosing a design.
const ZERO_BAND: f64 = 0.01;
const REGIME_BIRKHOFF_N: u64 = 4_000_000;

pub(super) fn dispatch(cmd: Command, ctx: &mut RunContext) -> ExpResult<()> {
    match cmd {
        Command::Preflight => run_preflight(ctx),
        Command::Lyapunov => run_lyapunov(ctx),
        Command::Sweep => run_sweep(ctx),
        Command::TwoPoint => run_two_point(ctx),
        Command::Density => run_density(ctx),
        Command::Moment => run_moment(ctx),
        Command::Gamma => run_gamma(ctx),
        Command::Passage => run_passage_report(ctx),
        Command::MeasureGrowth => run_measure_growth(ctx),
        Command::DistHist => run_dist_hist(ctx),
    }
}

fn thetas(ctx: &RunContext) -> ExpResult<Vec<f64>> {
    let t = ctx.cfg.noise.thetas();
    if t.is_empty() {
        return Err(ExperimentError::Config("noise.theta or noise.thetas is required".into()));
    }
    Ok(t)
}

/// The single noise level of a run: the configured one, or the zero of the
/// spectral exponent inside `noise.zero_exponent_bracket`.
fn single_theta(ctx: &mut RunContext) -> ExpResult<f64> {
    let theta = match ctx.cfg.noise.zero_exponent_bracket {
        Some([lo, hi]) => {
            let t = theta_at_zero_exponent(&ctx.map, lo, hi, 1024, ctx.cfg.grid.quadrature_nodes)?;
            ctx.notes.push(format!("theta tuned to the zero of the exponent: {t}"));
            t
        }
        None => {
            let t = thetas(ctx)?;
            if t.len() != 1 {
                return Err(ExperimentError::Config(
                    "this subcommand takes a single noise.theta".into(),
                ));
            }
            t[0]
        }
    };
    ctx.thetas.push(theta);
    Ok(theta)
}

fn operator(ctx: &RunContext, map: &CircleMap, theta: f64) -> ExpResult<TwistedOperator> {
    let quad = NoiseQuadrature::new(theta, ctx.cfg.grid.quadrature_nodes, QuadratureKind::GaussLegendre)?;
    Ok(TwistedOperator::new(map, &quad, ctx.cfg.grid.n)?.with_power(PowerIteration {
        tol: ctx.cfg.power_iter.tol,
        max_iter: ctx.cfg.power_iter.max_iter,
    }))
}

fn tag(theta: f64) -> String {
    format!("theta{theta}")
}

fn run_preflight(ctx: &mut RunContext) -> ExpResult<()> {
    let map = ctx.map.clone();
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for theta in thetas(ctx)? {
        ctx.thetas.push(theta);
        let r = crate::hypothesis::preflight(&map, theta, &ctx.cfg.preflight.settings())?;
        ctx.hashes.push(r.hash());
        if !r.no_failures() {
            failed.push(format!("theta = {theta}: {:?}", r.verdicts()));
        }
        reports.push(r);
    }
    ctx.write_json("preflight.json", &reports)?;
    if !failed.is_empty() && !ctx.force {
        return Err(ExperimentError::Preflight(failed.join("; ")));
    }
    Ok(())
}

#[derive(Serialize)]
struct LyapunovRow {
    family: &'static str,
    nu: Option<f64>,
    theta: f64,
    n: u64,
    seed: u64,
    lambda_hat: f64,
    stderr: f64,
}

fn lyapunov_rows(ctx: &RunContext, cases: &[(MapSpec, f64)]) -> ExpResult<Vec<LyapunovRow>> {
    let (n, burn_in, seed) = (ctx.cfg.lyapunov.n, ctx.cfg.lyapunov.burn_in, ctx.cfg.seed);
    cases
        .par_iter()
        .map(|(spec, theta)| {
            let map = spec.build()?;
            let mut s = NoiseStream::new(*theta, seed);
            let e = lyapunov_birkhoff(&map, &mut s, None, n, burn_in)?;
            Ok(LyapunovRow {
                family: spec.family_name(),
                nu: Some(spec.nu()).filter(|v| v.is_finite()),
                theta: *theta,
                n,
                seed,
                lambda_hat: e.lambda_hat,
                stderr: e.stderr,
            })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(Into::into)
}

fn run_lyapunov(ctx: &mut RunContext) -> ExpResult<()> {
    let map = ctx.map.clone();
    let ts = thetas(ctx)?;
    let gated: Vec<_> = ts.iter().map(|&t| (map.clone(), t)).collect();
    ctx.gate_all(&gated)?;
    ctx.thetas.extend(&ts);
    let cases: Vec<(MapSpec, f64)> = ts.iter().map(|&t| (ctx.cfg.map.clone(), t)).collect();
    let rows = lyapunov_rows(ctx, &cases)?;
    ctx.write_csv("lyapunov.csv", rows)
}

fn run_sweep(ctx: &mut RunContext) -> ExpResult<()> {
    let sweep = ctx.cfg.sweep.clone();
    let mut cases = Vec::new();
    for &nu in &sweep.nus {
        for &t in &sweep.thetas {
            cases.push((MapSpec::ExampleNu { nu }, t));
        }
    }
    if sweep.include_affine {
        for &t in &sweep.thetas {
            cases.push((MapSpec::AffineDoubling, t));
        }
    }
    let gated = cases
        .iter()
        .filter(|(spec, _)| !matches!(spec, MapSpec::AffineDoubling))
        .map(|(spec, t)| Ok((spec.build()?, *t)))
        .collect::<Result<Vec<_>, Error>>()?;
    ctx.gate_all(&gated)?;
    if sweep.include_affine {
        ctx.notes
            .push("affine rows are a reference baseline and skip the hypothesis gate".into());
    }
    ctx.thetas = sweep.thetas.clone();
    let rows = lyapunov_rows(ctx, &cases)?;
    ctx.write_csv("lyapunov.csv", rows)
}

#[derive(Serialize)]
struct SeriesRow {
    k: usize,
    d_k: f64,
}

#[derive(Serialize)]
struct TrichotomyRow {
    theta: f64,
    regime: Regime,
    lambda_hat: f64,
    stderr: f64,
    median_time_avg: f64,
    median_tail_min: f64,
    median_tail_max: f64,
    median_laminar_fraction: f64,
}

fn run_two_point(ctx: &mut RunContext) -> ExpResult<()> {
    let map = ctx.map.clone();
    let tp = ctx.cfg.two_point.clone();
    let ts = thetas(ctx)?;
    for &theta in &ts {
        ctx.gate(&map, theta)?;
        ctx.thetas.push(theta);
        let root = NoiseStream::new(theta, ctx.cfg.seed);
        let series = (0..tp.series)
            .into_par_iter()
            .map(|i| {
                let mut s = root.child(i, tp.series);
                let x0 = s.next_unit();
                let y0 = wrap(x0 + 0.05 + 0.4 * s.next_unit());
                distance_series(&map, &mut s, x0, y0, tp.n, tp.window)
            })
            .collect::<Result<Vec<_>, Error>>()?;
        for (i, ds) in series.iter().enumerate() {
            if let Some(k) = ds.merged_at {
                ctx.notes
                    .push(format!("orbit merged: theta = {theta}, series {i}, iterate {k}"));
            }
            let rows = ds.d.iter().enumerate().map(|(k, &d_k)| SeriesRow { k, d_k });
            ctx.write_csv(&format!("two_point_{}_s{i}.csv", tag(theta)), rows)?;
        }
    }
    if tp.trichotomy {
        let cfg = TrichotomyConfig {
            n: tp.trichotomy_n,
            ensemble: tp.trichotomy_ensemble,
            window: tp.window,
            seed: ctx.cfg.seed,
            ..TrichotomyConfig::default()
        };
        let reports = ts
            .iter()
            .map(|&t| trichotomy_report(&map, t, &cfg))
            .collect::<Result<Vec<_>, Error>>()?;
        let rows: Vec<TrichotomyRow> = reports
            .iter()
            .map(|r| TrichotomyRow {
                theta: r.theta,
                regime: r.regime,
                lambda_hat: r.lambda_hat,
                stderr: r.stderr,
                median_time_avg: r.median_time_avg,
                median_tail_min: r.median_tail_min,
                median_tail_max: r.median_tail_max,
                median_laminar_fraction: r.median_laminar_fraction,
            })
            .collect();
        ctx.write_csv("trichotomy.csv", rows)?;
        ctx.write_json("trichotomy.json", &reports)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DensityRow {
    x: f64,
    rho: f64,
}

#[derive(Serialize)]
struct BinRow {
    x_lo: f64,
    x_hi: f64,
    density: f64,
}

#[derive(Serialize)]
struct DensitySummary {
    theta: f64,
    grid_n: usize,
    integral: f64,
    orbit_n: usize,
    l1_to_orbit_histogram: f64,
    /// only at full noise, where the density is the pushforward of Lebesgue
    sup_to_pushforward: Option<f64>,
}

fn run_density(ctx: &mut RunContext) -> ExpResult<()> {
    let map = ctx.map.clone();
    let dc = ctx.cfg.density.clone();
    for theta in thetas(ctx)? {
        ctx.gate(&map, theta)?;
        ctx.thetas.push(theta);
        let quad = NoiseQuadrature::new(theta, ctx.cfg.grid.quadrature_nodes, QuadratureKind::GaussLegendre)?;
        let rho = stationary_density(&map, &quad, ctx.cfg.grid.n, dc.tol, dc.max_iter)?;
        let mut s = NoiseStream::new(theta, ctx.cfg.seed);
        let hist = orbit_histogram(&map, &mut s, dc.orbit_n, 10_000, dc.bins);
        let sup = if theta == 0.5 {
            let push = pushforward_lebesgue(&map, ctx.cfg.grid.n)?;
            Some(
                rho.values
                    .iter()
                    .zip(&push.values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            )
        } else {
            None
        };
        let summary = DensitySummary {
            theta,
            grid_n: rho.len(),
            integral: rho.integral(),
            orbit_n: dc.orbit_n,
            l1_to_orbit_histogram: l1_to_histogram(&rho, &hist),
            sup_to_pushforward: sup,
        };
        let rows = (0..rho.len()).map(|i| DensityRow {
            x: rho.node(i),
            rho: rho.values[i],
        });
        ctx.write_csv(&format!("density_{}.csv", tag(theta)), rows)?;
        let w = 1.0 / dc.bins as f64;
        let bins = hist.iter().enumerate().map(|(b, &h)| BinRow {
            x_lo: b as f64 * w,
            x_hi: (b + 1) as f64 * w,
            density: h,
        });
        ctx.write_csv(&format!("orbit_histogram_{}.csv", tag(theta)), bins)?;
        ctx.write_json(&format!("density_{}.json", tag(theta)), &summary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MomentRow {
    q: f64,
    #[serde(rename = "Lambda")]
    lambda: f64,
    residual: f64,
}

#[derive(Serialize)]
struct McCheck {
    q: f64,
    spectral: f64,
    mc: f64,
    mc_stderr: f64,
    z: f64,
}

#[derive(Serialize)]
struct MomentSummary {
    theta: f64,
    grid_n: usize,
    quadrature_nodes: usize,
    lambda0: f64,
    v: f64,
    gamma: Option<f64>,
    gamma_note: Option<String>,
    birkhoff_lambda: f64,
    birkhoff_stderr: f64,
    mc: Vec<McCheck>,
}

fn gamma_or_note(op: &TwistedOperator, lambda0: f64) -> ExpResult<(Option<f64>, Option<String>)> {
    match gamma_root(op, lambda0, 1e-6) {
        Ok(g) => Ok((Some(g), None)),
        Err(e @ Error::NoBracket { .. }) => Ok((None, Some(e.to_string()))),
        Err(e) => Err(e.into()),
    }
}

fn run_moment(ctx: &mut RunContext) -> ExpResult<()> {
    let map = ctx.map.clone();
    let mc = ctx.cfg.moment.clone();
    let extra: Vec<f64> = ctx
        .cfg
        .q_grid
        .clone()
        .unwrap_or_else(|| vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0]);
    let q_grid = default_q_grid(0.02, &extra);
    for theta in thetas(ctx)? {
        ctx.gate(&map, theta)?;
        ctx.thetas.push(theta);
        let op = operator(ctx, &map, theta)?;
        let curve = moment_curve(&op, &q_grid)?;
        let (gamma, gamma_note) = gamma_or_note(&op, curve.lambda0)?;
        let mut s = NoiseStream::new(theta, ctx.cfg.seed);
        let b = lyapunov_birkhoff(&map, &mut s, None, mc.birkhoff_n, 10_000)?;
        let checks = if mc.mc_q.is_empty() {
            Vec::new()
        } else {
            let est = moment_lyapunov_mc_many(
                &map,
                &NoiseStream::new(theta, ctx.cfg.seed ^ 0x6d63),
                &mc.mc_q,
                mc.mc_n,
                mc.mc_ensemble,
            )?;
            mc.mc_q
                .iter()
                .zip(est)
                .map(|(&q, e)| {
                    let spectral = op.moment_lyapunov(q)?;
                    Ok(McCheck {
                        q,
                        spectral,
                        mc: e.estimate,
                        mc_stderr: e.stderr,
                        z: (e.estimate - spectral) / e.stderr,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?
        };
        let rows = curve
            .q_grid
            .iter()
            .zip(&curve.lambda)
            .zip(&curve.residuals)
            .map(|((&q, &lambda), &residual)| MomentRow { q, lambda, residual });
        ctx.write_csv(&format!("moment_curve_{}.csv", tag(theta)), rows)?;
        let summary = MomentSummary {
            theta,
            grid_n: ctx.cfg.grid.n,
            quadrature_nodes: ctx.cfg.grid.quadrature_nodes,
            lambda0: curve.lambda0,
            v: curve.v,
            gamma,
            gamma_note,
            birkhoff_lambda: b.lambda_hat,
            birkhoff_stderr: b.stderr,
            mc: checks,
        };
        ctx.write_json(&format!("moment_{}.json", tag(theta)), &summary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GammaRow {
    family: &'static str,
    nu: Option<f64>,
    theta: f64,
    lambda0: f64,
    v: f64,
    gamma: Option<f64>,
}

fn run_gamma(ctx: &mut RunContext) -> ExpResult<()> {
    let map = ctx.map.clone();
    let q_grid = default_q_grid(0.02, &[]);
    let mut rows = Vec::new();
    for theta in thetas(ctx)? {
        ctx.gate(&map, theta)?;
        ctx.thetas.push(theta);
        let op = operator(ctx, &map, theta)?;
        let curve = moment_curve(&op, &q_grid)?;
        let (gamma, note) = gamma_or_note(&op, curve.lambda0)?;
        if let Some(n) = note {
            ctx.notes.push(format!("theta = {theta}: {n}"));
        }
        rows.push(GammaRow {
            family: ctx.cfg.map.family_name(),
            nu: Some(ctx.cfg.map.nu()).filter(|v| v.is_finite()),
            theta,
            lambda0: curve.lambda0,
            v: curve.v,
            gamma,
        });
    }
    ctx.write_csv("gamma.csv", rows)
}

#[derive(Serialize)]
struct PassageRow {
    epsilon: f64,
    delta: f64,
    d0: f64,
    seed: u64,
    tau_minus: Option<u64>,
    tau_plus: Option<u64>,
    first: &'static str,
    censored: bool,
}

#[derive(Serialize)]
struct EscapeRow {
    delta: f64,
    d0: f64,
    log_ratio: f64,
    mean: f64,
    stderr: f64,
    censored_fraction: f64,
}

#[derive(Serialize)]
struct TailRow {
    d0: f64,
    delta: f64,
    log_ratio: f64,
    p_minus_hat: f64,
    hits: usize,
}

#[derive(Serialize)]
struct ZeroCellRow {
    delta: f64,
    log_ratio: f64,
    fraction: f64,
    ln_eps: f64,
    ln_d0: f64,
    p_minus_hat: f64,
    p_lo: f64,
    p_hi: f64,
    mean_min_stop: f64,
    mean_min_stop_stderr: f64,
    censored_fraction: f64,
}

fn run_passage_report(ctx: &mut RunContext) -> ExpResult<()> {
    let map = ctx.map.clone();
    let pc = ctx.cfg.passage.clone();
    let theta = single_theta(ctx)?;
    ctx.gate(&map, theta)?;
    let seed = ctx.cfg.seed;
    let mut did = false;
    if let (Some(eps), Some(delta), Some(d0)) = (pc.epsilon, pc.delta, pc.d0) {
        did = true;
        let bounds = map.bounds(256)?;
        let band = Band::new(eps, delta, &bounds)?;
        let e = passage_ensemble(&map, &bounds, &NoiseStream::new(theta, seed), &band, d0, pc.count, pc.max_iter)?;
        let rows = e.samples.iter().map(|s| PassageRow {
            epsilon: eps,
            delta,
            d0,
            seed,
            tau_minus: s.tau_minus,
            tau_plus: s.tau_plus,
            first: s.first.as_str(),
            censored: s.first == crate::passage::First::Censored,
        });
        ctx.write_csv("passage.csv", rows)?;
        let mut summary = e.clone();
        summary.samples.clear();
        ctx.write_json("passage_summary.json", &summary)?;
    }
    if pc.designs {
        did = true;
        let mut s = NoiseStream::new(theta, seed ^ 0x5eed);
        let lyap = lyapunov_birkhoff(&map, &mut s, None, REGIME_BIRKHOFF_N, 100_000)?;
        if lyap.lambda_hat.abs() < ZERO_BAND {
            let design = ZeroExponentDesign {
                deltas: pc.zero_deltas.clone(),
                log_ratios: pc.zero_log_ratios.clone(),
                fractions: pc.zero_fractions.clone(),
                count: pc.count,
                max_iter: pc.max_iter,
                seed,
            };
            let report = verify_zero_exponent_bounds(&map, theta, &design)?;
            let rows = report.cells.iter().map(|c| ZeroCellRow {
                delta: c.delta,
                log_ratio: c.log_ratio,
                fraction: c.fraction,
                ln_eps: c.ln_eps,
                ln_d0: c.ln_d0,
                p_minus_hat: c.p_minus_hat,
                p_lo: c.p_minus_ci.0,
                p_hi: c.p_minus_ci.1,
                mean_min_stop: c.mean_min_stop,
                mean_min_stop_stderr: c.mean_min_stop_stderr,
                censored_fraction: c.censored_fraction,
            });
            ctx.write_csv("passage_zero.csv", rows)?;
            let op = operator(ctx, &map, theta)?;
            let curve = moment_curve(&op, &default_q_grid(0.02, &[]))?;
            ctx.write_json(
                "passage_report.json",
                &serde_json::json!({
                    "theta": theta,
                    "regime": "zero",
                    "spectral_lambda0": curve.lambda0,
                    "spectral_v": curve.v,
                    "report": report,
                }),
            )?;
        } else if lyap.lambda_hat > 3.0 * lyap.stderr {
            let esc = escape_time_design(&map, theta, pc.escape_delta, &pc.escape_log_offsets, pc.count, seed)?;
            let rows = esc.points.iter().zip(&pc.escape_log_offsets).map(|(p, &k)| EscapeRow {
                delta: esc.delta,
                d0: p.d0,
                log_ratio: k,
                mean: p.mean,
                stderr: p.stderr,
                censored_fraction: p.censored_fraction,
            });
            ctx.write_csv("passage_escape.csv", rows)?;
            let tail = verify_positive_exponent_tail(
                &map,
                theta,
                pc.tail_d0,
                pc.tail_delta,
                pc.kappa,
                &pc.tail_log_offsets,
                pc.tail_count,
                seed,
            )?;
            let rows = tail.points.iter().map(|&(k, p, hits)| TailRow {
                d0: tail.d0,
                delta: tail.delta,
                log_ratio: k,
                p_minus_hat: p,
                hits,
            });
            ctx.write_csv("passage_tail.csv", rows)?;
            let op = operator(ctx, &map, theta)?;
            let curve = moment_curve(&op, &default_q_grid(0.02, &[]))?;
            let (gamma, _) = gamma_or_note(&op, curve.lambda0)?;
            ctx.write_json(
                "passage_report.json",
                &serde_json::json!({
                    "theta": theta,
                    "regime": "positive",
                    "spectral_lambda0": curve.lambda0,
                    "spectral_gamma": gamma,
                    "escape": esc,
                    "tail": tail,
                }),
            )?;
        } else {
            ctx.notes.push(format!(
                "exponent {} is negative: no passage design applies",
                lyap.lambda_hat
            ));
        }
    }
    if !did {
        return Err(ExperimentError::Config(
            "passage needs epsilon, delta and d0, or designs = true".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct HistRow {
    edge_lo: f64,
    edge_hi: f64,
    count: u64,
}

#[derive(Serialize)]
struct ExcursionRow {
    excursion_id: usize,
    eps: f64,
    count: u64,
}

fn hist_rows(h: &DistanceHistogram) -> Vec<HistRow> {
    h.counts
        .iter()
        .zip(h.edges.windows(2))
        .map(|(&count, e)| HistRow {
            edge_lo: e[0],
            edge_hi: e[1],
            count,
        })
        .collect()
}

fn run_measure_growth(ctx: &mut RunContext) -> ExpResult<()> {
    let map = ctx.map.clone();
    let mg = ctx.cfg.measure_growth.clone();
    let theta = single_theta(ctx)?;
    ctx.gate(&map, theta)?;
    let seed = ctx.cfg.seed;
    let mut s = NoiseStream::new(theta, seed ^ 0x5eed);
    let lyap = lyapunov_birkhoff(&map, &mut s, None, REGIME_BIRKHOFF_N, 100_000)?;
    let root = NoiseStream::new(theta, seed);
    if lyap.lambda_hat.abs() < ZERO_BAND {
        let mut design = ExcursionDesign::geometric(mg.delta, mg.kappa, mg.levels, mg.excursions);
        design.chains = mg.chains;
        design.max_len = mg.max_len;
        let stats = excursion_counts(&map, &root, &design)?;
        let fit = log_growth_fit(&stats, mg.resamples, seed)?;
        let rows = stats.excursions.iter().enumerate().flat_map(|(id, e)| {
            stats
                .eps_grid
                .iter()
                .zip(&e.counts)
                .map(move |(&eps, &count)| ExcursionRow {
                    excursion_id: id,
                    eps,
                    count,
                })
        });
        ctx.write_csv("excursions.csv", rows)?;
        ctx.write_json(
            "growth.json",
            &serde_json::json!({
                "theta": theta,
                "regime": "zero",
                "lambda_hat": lyap.lambda_hat,
                "mean_entry_depth": stats.mean_entry_depth(),
                "mean_counts": stats.mean_counts(),
                "eps_grid": stats.eps_grid,
                "fit": fit,
            }),
        )?;
    } else if lyap.lambda_hat > 3.0 * lyap.stderr {
        let op = operator(ctx, &map, theta)?;
        let curve = moment_curve(&op, &default_q_grid(0.02, &[]))?;
        let (gamma, note) = gamma_or_note(&op, curve.lambda0)?;
        let h = distance_histogram_chains(&map, &root, mg.hist_chains, mg.hist_n, 1000, mg.eps_min, mg.bins)?;
        ctx.write_csv("histogram.csv", hist_rows(&h))?;
        let fit = diagonal_mass_fit(&h, lyap.lambda_hat, gamma, (mg.window[0], mg.window[1]));
        ctx.write_json(
            "growth.json",
            &serde_json::json!({
                "theta": theta,
                "regime": "positive",
                "lambda_hat": lyap.lambda_hat,
                "spectral_gamma": gamma,
                "gamma_note": note,
                "mass_fit": fit.as_ref().ok(),
                "mass_fit_error": fit.as_ref().err().map(|e| e.to_string()),
            }),
        )?;
    } else {
        return Err(ExperimentError::Config(format!(
            "measure-growth needs a zero or positive exponent, got {}",
            lyap.lambda_hat
        )));
    }
    Ok(())
}

fn run_dist_hist(ctx: &mut RunContext) -> ExpResult<()> {
    let map = ctx.map.clone();
    let dh = ctx.cfg.dist_hist.clone();
    let theta = single_theta(ctx)?;
    ctx.gate(&map, theta)?;
    let root = NoiseStream::new(theta, ctx.cfg.seed);
    let h = distance_histogram_chains(&map, &root, dh.chains, dh.n, dh.burn_in, dh.eps_min, dh.bins)?;
    ctx.write_csv("histogram.csv", hist_rows(&h))
}
