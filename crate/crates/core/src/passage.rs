//! First-passage statistics of the two-point motion inside a distance band
//! `eps < d < delta` around the diagonal.

use rayon::prelude::*;
use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};

use crate::circle_map::{CircleMap, MapBounds};
use crate::dynamics::lyapunov_birkhoff;
use crate::error::{invalid, Error, Result};
use crate::koopman::TwistedOperator;
use crate::noise::{NoiseQuadrature, NoiseStream, QuadratureKind};
use crate::pair::PairState;
use crate::stats::{self, LinearFit};

/// Iterates spent relaxing a uniform start point towards the stationary law.
pub const STATIONARY_BURN_IN: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum First {
    Minus,
    Plus,
    Censored,
}

impl First {
    pub fn as_str(&self) -> &'static str {
        match self {
            First::Minus => "minus",
            First::Plus => "plus",
            First::Censored => "censored",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassageSample {
    pub d0: f64,
    pub tau_minus: Option<u64>,
    pub tau_plus: Option<u64>,
    pub first: First,
    pub steps: u64,
    /// log of the distance at the stopping time
    pub exit_ln_distance: f64,
    /// smallest log-distance seen before stopping
    pub min_ln_distance: f64,
}

/// Validated passage band `0 <= eps < delta <= r_min`; `eps = 0` disables
/// the lower barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub epsilon: f64,
    pub delta: f64,
    ln_eps: f64,
    ln_delta: f64,
}

impl Band {
    pub fn new(epsilon: f64, delta: f64, bounds: &MapBounds) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon < delta && delta <= bounds.r_min) {
            return Err(Error::BadBand {
                epsilon,
                d0: f64::NAN,
                delta,
                r_min: bounds.r_min,
            });
        }
        Ok(Self {
            epsilon,
            delta,
            ln_eps: epsilon.ln(),
            ln_delta: delta.ln(),
        })
    }

    /// Band given in log form, for lower barriers below the double range.
    pub fn from_logs(ln_eps: f64, delta: f64, bounds: &MapBounds) -> Result<Self> {
        let mut b = Self::new(0.0, delta, bounds)?;
        if !(ln_eps < b.ln_delta) {
            return Err(Error::BadBand {
                epsilon: ln_eps.exp(),
                d0: f64::NAN,
                delta,
                r_min: bounds.r_min,
            });
        }
        b.ln_eps = ln_eps;
        b.epsilon = ln_eps.exp();
        Ok(b)
    }

    pub fn ln_epsilon(&self) -> f64 {
        self.ln_eps
    }

    fn check_start(&self, ln_d0: f64, bounds: &MapBounds) -> Result<()> {
        if !(ln_d0 > self.ln_eps && ln_d0 < self.ln_delta) {
            return Err(Error::BadBand {
                epsilon: self.epsilon,
                d0: ln_d0.exp(),
                delta: self.delta,
                r_min: bounds.r_min,
            });
        }
        Ok(())
    }
}

/// Iterate the pair until `d < eps` (minus) or `d > delta` (plus).
pub fn run_passage(
    map: &CircleMap,
    stream: &mut NoiseStream,
    start: PairState,
    band: &Band,
    max_iter: u64,
) -> PassageSample {
    let mut pair = start;
    let d0 = start.distance();
    let mut min_ln = start.ln_distance();
    for k in 1..=max_iter {
        pair.step(map, stream.next());
        let ln_d = pair.ln_distance();
        min_ln = min_ln.min(ln_d);
        if ln_d < band.ln_eps {
            return PassageSample {
                d0,
                tau_minus: Some(k),
                tau_plus: None,
                first: First::Minus,
                steps: k,
                exit_ln_distance: ln_d,
                min_ln_distance: min_ln,
            };
        }
        if ln_d > band.ln_delta {
            return PassageSample {
                d0,
                tau_minus: None,
                tau_plus: Some(k),
                first: First::Plus,
                steps: k,
                exit_ln_distance: ln_d,
                min_ln_distance: min_ln,
            };
        }
    }
    PassageSample {
        d0,
        tau_minus: None,
        tau_plus: None,
        first: First::Censored,
        steps: max_iter,
        exit_ln_distance: pair.ln_distance(),
        min_ln_distance: min_ln,
    }
}

/// Checked entry point taking two circle points.
pub fn run_passage_from_points(
    map: &CircleMap,
    bounds: &MapBounds,
    stream: &mut NoiseStream,
    x0: f64,
    y0: f64,
    band: &Band,
    max_iter: u64,
) -> Result<PassageSample> {
    let start = PairState::new(x0, y0);
    band.check_start(start.ln_distance(), bounds)?;
    Ok(run_passage(map, stream, start, band, max_iter))
}

/// Start pair for sample stream `s`: base point relaxed towards the stationary
/// law, partner at log-distance `ln_d0` on a random side.
pub fn stationary_start(map: &CircleMap, s: &mut NoiseStream, ln_d0: f64) -> PairState {
    let mut x = s.next_unit();
    for _ in 0..STATIONARY_BURN_IN {
        x = crate::dynamics::step(map, x, s.next());
    }
    let sign = if s.next_unit() < 0.5 { -1.0 } else { 1.0 };
    PairState::from_offset(x, sign * ln_d0.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageEnsemble {
    pub epsilon: f64,
    pub delta: f64,
    pub d0: f64,
    pub samples: Vec<PassageSample>,
    pub p_minus_hat: f64,
    pub p_minus_ci: (f64, f64),
    pub mean_min_stop: f64,
    pub mean_min_stop_stderr: f64,
    pub censored_fraction: f64,
}

impl PassageEnsemble {
    fn from_samples(band: &Band, d0: f64, samples: Vec<PassageSample>) -> Self {
        let done: Vec<&PassageSample> =
            samples.iter().filter(|s| s.first != First::Censored).collect();
        let minus = done.iter().filter(|s| s.first == First::Minus).count();
        let stops: Vec<f64> = done.iter().map(|s| s.steps as f64).collect();
        let (mean_min_stop, se) = stats::mean_stderr(&stops);
        Self {
            epsilon: band.epsilon,
            delta: band.delta,
            d0,
            p_minus_hat: minus as f64 / done.len().max(1) as f64,
            p_minus_ci: stats::wilson_interval(minus, done.len()),
            mean_min_stop,
            mean_min_stop_stderr: se,
            censored_fraction: (samples.len() - done.len()) as f64 / samples.len() as f64,
            samples,
        }
    }
}

/// `count` independent passages from distance `d0`; sample `i` uses child
/// stream `i` of `root`, so results do not depend on the thread count.
pub fn passage_ensemble(
    map: &CircleMap,
    bounds: &MapBounds,
    root: &NoiseStream,
    band: &Band,
    d0: f64,
    count: usize,
    max_iter: u64,
) -> Result<PassageEnsemble> {
    if count < 1000 {
        return invalid(format!("passage_ensemble needs count >= 1000, got {count}"));
    }
    band.check_start(d0.ln(), bounds)?;
    let samples: Vec<PassageSample> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut s = root.child(i, count);
            let start = stationary_start(map, &mut s, d0.ln());
            run_passage(map, &mut s, start, band, max_iter)
        })
        .collect();
    Ok(PassageEnsemble::from_samples(band, d0, samples))
}

/// Noise level in `[lo, hi]` where the exponent vanishes, located with Brent's
/// method on the spectral `Lambda'(0)` (deterministic and accurate to ~1e-9,
/// unlike a Birkhoff average).
pub fn theta_at_zero_exponent(
    map: &CircleMap,
    lo: f64,
    hi: f64,
    grid_n: usize,
    quad_n: usize,
) -> Result<f64> {
    let lam = |theta: f64| -> f64 {
        let quad = match NoiseQuadrature::new(theta, quad_n, QuadratureKind::GaussLegendre) {
            Ok(q) => q,
            Err(_) => return f64::NAN,
        };
        let op = match TwistedOperator::new(map, &quad, grid_n) {
            Ok(o) => o,
            Err(_) => return f64::NAN,
        };
        spectral_exponent(&op).unwrap_or(f64::NAN)
    };
    let mut conv = SimpleConvergency {
        eps: 1e-9,
        max_iter: 60,
    };
    find_root_brent(lo, hi, lam, &mut conv).map_err(|_| Error::NoConvergence {
        what: "zero-exponent noise level",
        iterations: 60,
    })
}

/// `Lambda'(0)` from four eigenvalues (Richardson-extrapolated central difference).
pub fn spectral_exponent(op: &TwistedOperator) -> Result<f64> {
    let h = 0.02;
    let l = |q: f64| op.moment_lyapunov(q);
    let d1 = (l(h)? - l(-h)?) / (2.0 * h);
    let d2 = (l(2.0 * h)? - l(-2.0 * h)?) / (4.0 * h);
    Ok((4.0 * d1 - d2) / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroExponentDesign {
    pub deltas: Vec<f64>,
    /// values of `ln(delta / eps)`
    pub log_ratios: Vec<f64>,
    /// values of `ln(delta / d0) / ln(delta / eps)`
    pub fractions: Vec<f64>,
    pub count: usize,
    pub max_iter: u64,
    pub seed: u64,
}

impl Default for ZeroExponentDesign {
    fn default() -> Self {
        Self {
            deltas: vec![0.02, 0.035, 0.05],
            log_ratios: vec![40.0, 45.0, 50.0],
            fractions: vec![0.2, 0.35, 0.5, 0.65, 0.8],
            count: 10_000,
            max_iter: 10_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroExponentCell {
    pub delta: f64,
    pub log_ratio: f64,
    pub fraction: f64,
    pub ln_eps: f64,
    pub ln_d0: f64,
    pub p_minus_hat: f64,
    pub p_minus_ci: (f64, f64),
    pub mean_min_stop: f64,
    pub mean_min_stop_stderr: f64,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroExponentReport {
    pub theta: f64,
    pub lambda_hat: f64,
    pub cells: Vec<ZeroExponentCell>,
    /// `p_minus_hat` against `ln(delta/d0) / ln(delta/eps)`
    pub probability_fit: LinearFit,
    /// `max |p_minus_hat - ln(delta/d0)/ln(delta/eps)| * ln(delta/eps) / 2`
    pub k_fit: f64,
    /// max deviation from the linear law, per `ln(delta/eps)`
    pub envelope_by_log_ratio: Vec<(f64, f64)>,
    /// coefficients of `E[min stop] ~ c_p P + c_e |ln eps| + c_0`,
    /// `P = ln(delta/d0) ln(d0/eps)`
    pub stop_coefficients: [f64; 3],
    pub stop_coefficient_stderr: [f64; 3],
    pub max_censored_fraction: f64,
}

/// Run the zero-exponent design at `theta` and fit the two linear laws.
///
/// Lower barriers far below the double range are handled in log form, so
/// `ln(delta/eps)` can be large. Fails unless the Birkhoff exponent at `theta`
/// is below `0.01` in magnitude.
pub fn verify_zero_exponent_bounds(
    map: &CircleMap,
    theta: f64,
    design: &ZeroExponentDesign,
) -> Result<ZeroExponentReport> {
    let bounds = map.bounds(256)?;
    let mut s = NoiseStream::new(theta, design.seed ^ 0x5eed);
    let lyap = lyapunov_birkhoff(map, &mut s, None, 4_000_000, 100_000)?;
    if lyap.lambda_hat.abs() >= 0.01 {
        return invalid(format!(
            "zero-exponent design needs |lambda_hat| < 0.01, got {}",
            lyap.lambda_hat
        ));
    }
    let root = NoiseStream::new(theta, design.seed);
    let cells_spec: Vec<(f64, f64, f64)> = design
        .deltas
        .iter()
        .flat_map(|&d| {
            design.log_ratios.iter().flat_map(move |&l| {
                design.fractions.iter().map(move |&f| (d, l, f))
            })
        })
        .collect();
    let ncell = cells_spec.len();
    let mut cells = Vec::with_capacity(ncell);
    for (c, &(delta, log_ratio, fraction)) in cells_spec.iter().enumerate() {
        let ln_eps = delta.ln() - log_ratio;
        let ln_d0 = delta.ln() - fraction * log_ratio;
        let band = Band::from_logs(ln_eps, delta, &bounds)?;
        let cell_root = root.child(c, ncell);
        let samples: Vec<PassageSample> = (0..design.count)
            .into_par_iter()
            .map(|i| {
                let mut st = cell_root.child(i, design.count);
                let start = stationary_start(map, &mut st, ln_d0);
                run_passage(map, &mut st, start, &band, design.max_iter)
            })
            .collect();
        let e = PassageEnsemble::from_samples(&band, ln_d0.exp(), samples);
        cells.push(ZeroExponentCell {
            delta,
            log_ratio,
            fraction,
            ln_eps,
            ln_d0,
            p_minus_hat: e.p_minus_hat,
            p_minus_ci: e.p_minus_ci,
            mean_min_stop: e.mean_min_stop,
            mean_min_stop_stderr: e.mean_min_stop_stderr,
            censored_fraction: e.censored_fraction,
        });
    }
    let x: Vec<f64> = cells.iter().map(|c| c.fraction).collect();
    let y: Vec<f64> = cells.iter().map(|c| c.p_minus_hat).collect();
    let probability_fit = stats::linear_fit(&x, &y);
    let k_fit = cells
        .iter()
        .map(|c| (c.p_minus_hat - c.fraction).abs() * c.log_ratio / 2.0)
        .fold(0.0, f64::max);
    let envelope_by_log_ratio = design
        .log_ratios
        .iter()
        .map(|&l| {
            let env = cells
                .iter()
                .filter(|c| c.log_ratio == l)
                .map(|c| (c.p_minus_hat - c.fraction).abs())
                .fold(0.0, f64::max);
            (l, env)
        })
        .collect();
    let product: Vec<f64> = cells
        .iter()
        .map(|c| (c.delta.ln() - c.ln_d0) * (c.ln_d0 - c.ln_eps))
        .collect();
    let abs_ln_eps: Vec<f64> = cells.iter().map(|c| -c.ln_eps).collect();
    let stops: Vec<f64> = cells.iter().map(|c| c.mean_min_stop).collect();
    let w: Vec<f64> = cells
        .iter()
        .map(|c| 1.0 / c.mean_min_stop_stderr.powi(2).max(1e-12))
        .collect();
    let fit = stats::least_squares(
        &[product, abs_ln_eps, vec![1.0; ncell]],
        &stops,
        Some(&w),
    );
    Ok(ZeroExponentReport {
        theta,
        lambda_hat: lyap.lambda_hat,
        probability_fit,
        k_fit,
        envelope_by_log_ratio,
        stop_coefficients: [fit.coefficients[0], fit.coefficients[1], fit.coefficients[2]],
        stop_coefficient_stderr: [fit.stderr[0], fit.stderr[1], fit.stderr[2]],
        max_censored_fraction: cells.iter().map(|c| c.censored_fraction).fold(0.0, f64::max),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeTime {
    pub d0: f64,
    pub mean: f64,
    pub stderr: f64,
    pub censored_fraction: f64,
}

/// Mean of the first time `d > delta` starting from distance `d0`.
pub fn escape_time_positive(
    map: &CircleMap,
    bounds: &MapBounds,
    root: &NoiseStream,
    d0: f64,
    delta: f64,
    count: usize,
    max_iter: u64,
) -> Result<EscapeTime> {
    let band = Band::new(0.0, delta, bounds)?;
    let e = passage_ensemble(map, bounds, root, &band, d0, count, max_iter)?;
    Ok(EscapeTime {
        d0,
        mean: e.mean_min_stop,
        stderr: e.mean_min_stop_stderr,
        censored_fraction: e.censored_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub delta: f64,
    pub lambda_hat: f64,
    pub lambda_stderr: f64,
    pub points: Vec<EscapeTime>,
    /// mean escape time against `ln(delta/d0)`
    pub fit: LinearFit,
}

/// Escape times at `d0 = delta e^{-k}` for each `k` in `log_offsets`,
/// regressed on `ln(delta / d0)`.
pub fn escape_time_design(
    map: &CircleMap,
    theta: f64,
    delta: f64,
    log_offsets: &[f64],
    count: usize,
    seed: u64,
) -> Result<EscapeReport> {
    let bounds = map.bounds(256)?;
    let mut s = NoiseStream::new(theta, seed ^ 0x5eed);
    let lyap = lyapunov_birkhoff(map, &mut s, None, 4_000_000, 100_000)?;
    if lyap.lambda_hat <= 3.0 * lyap.stderr {
        return invalid("escape-time design needs a positive exponent");
    }
    let root = NoiseStream::new(theta, seed);
    let points = log_offsets
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            escape_time_positive(
                map,
                &bounds,
                &root.child(i, log_offsets.len()),
                delta * (-k).exp(),
                delta,
                count,
                10_000_000,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = stats::linear_fit(
        log_offsets,
        &points.iter().map(|p| p.mean).collect::<Vec<_>>(),
    );
    Ok(EscapeReport {
        delta,
        lambda_hat: lyap.lambda_hat,
        lambda_stderr: lyap.stderr,
        points,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub d0: f64,
    pub delta: f64,
    /// `(ln(d0/eps), p_minus_hat, hits)`
    pub points: Vec<(f64, f64, usize)>,
    /// fitted exponent of `p ~ (d0/eps)^exponent`
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// `max` over the grid of the ratio between `p_minus_hat` and the fitted
    /// power law with unit prefactor, in either direction
    pub k_fit: f64,
    pub censored_fraction: f64,
}

/// Tail of `P(tau_minus < tau_plus)` as `eps` shrinks, from a single ensemble:
/// each sample runs until it exits above `delta`, and its minimum
/// log-distance decides the event for every `eps` at once.
pub fn verify_positive_exponent_tail(
    map: &CircleMap,
    theta: f64,
    d0: f64,
    delta: f64,
    kappa: f64,
    log_eps_offsets: &[f64],
    count: usize,
    seed: u64,
) -> Result<TailReport> {
    let bounds = map.bounds(256)?;
    if !(d0 < kappa * delta) {
        return invalid(format!("need d0 < kappa * delta, got d0 = {d0}"));
    }
    let band = Band::new(0.0, delta, &bounds)?;
    let root = NoiseStream::new(theta, seed);
    let e = passage_ensemble(map, &bounds, &root, &band, d0, count, 10_000_000)?;
    let done: Vec<&PassageSample> = e
        .samples
        .iter()
        .filter(|s| s.first != First::Censored)
        .collect();
    let points: Vec<(f64, f64, usize)> = log_eps_offsets
        .iter()
        .map(|&k| {
            let ln_eps = d0.ln() - k;
            let hits = done.iter().filter(|s| s.min_ln_distance < ln_eps).count();
            (k, hits as f64 / done.len() as f64, hits)
        })
        .collect();
    let deepest = points.iter().map(|p| p.2).min().unwrap_or(0);
    if deepest < 100 {
        return Err(Error::TooFewHits {
            hits: deepest,
            required: 100,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let fit = stats::linear_fit(&x, &y);
    let k_fit = points
        .iter()
        .map(|&(k, p, _)| {
            let law = (fit.slope * k).exp();
            (p / law).max(law / p)
        })
        .fold(1.0, f64::max);
    Ok(TailReport {
        d0,
        delta,
        points,
        exponent: fit.slope,
        exponent_stderr: fit.slope_stderr,
        k_fit,
        censored_fraction: e.censored_fraction,
    })
}
