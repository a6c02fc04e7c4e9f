//! One- and two-point orbits of the random map, Birkhoff Lyapunov estimates and
//! the synchronisation / intermittency / chaos diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle_map::{wrap, CircleMap};
use crate::error::{invalid, Result};
use crate::noise::NoiseStream;
use crate::pair::PairState;
use crate::stats::{self, Accumulator};

pub use crate::pair::signed_offset as signed_distance;

/// `T_omega(x) = T(x + omega mod 1)`.
#[inline]
pub fn step(map: &CircleMap, x: f64, omega: f64) -> f64 {
    map.eval(wrap(x + omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointState {
    pub x: f64,
    pub y: f64,
    pub n: u64,
}

/// Both coordinates driven by the same `omega`.
pub fn two_point_step(map: &CircleMap, s: TwoPointState, omega: f64) -> TwoPointState {
    TwoPointState {
        x: step(map, s.x, omega),
        y: step(map, s.y, omega),
        n: s.n + 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda_hat: f64,
    pub stderr: f64,
    pub n: u64,
    pub burn_in: u64,
    pub seed: u64,
}

/// Time average of `ln DT_omega(x_k)` along one random orbit.
///
/// `n` counts all iterates including the `burn_in` ones; `x0 = None` draws the
/// start point from the stream. The error bar comes from `sqrt(n - burn_in)`
/// non-overlapping batch means.
pub fn lyapunov_birkhoff(
    map: &CircleMap,
    stream: &mut NoiseStream,
    x0: Option<f64>,
    n: u64,
    burn_in: u64,
) -> Result<LyapunovEstimate> {
    if n < 100_000 {
        return invalid(format!("lyapunov_birkhoff needs n >= 1e5, got {n}"));
    }
    if burn_in >= n {
        return invalid("burn_in must be smaller than n");
    }
    let seed = stream.seed();
    let mut x = x0.map(wrap).unwrap_or_else(|| stream.next_unit());
    for _ in 0..burn_in {
        x = step(map, x, stream.next());
    }
    let kept = n - burn_in;
    let batch = ((kept as f64).sqrt() as u64).max(1);
    let mut total = Accumulator::default();
    let mut batch_means = Vec::with_capacity((kept / batch) as usize + 1);
    let mut current = Accumulator::default();
    for _ in 0..kept {
        let u = wrap(x + stream.next());
        let v = map.deriv(u).ln();
        current.add(v);
        x = wrap(map.lift(u));
        if current.count() == batch {
            batch_means.push(current.mean());
            total.merge(&current);
            current = Accumulator::default();
        }
    }
    if current.count() > 0 {
        total.merge(&current);
    }
    let stderr = if batch_means.len() > 1 {
        stats::batch_means_stderr(&batch_means)
    } else {
        0.0
    };
    Ok(LyapunovEstimate {
        lambda_hat: total.mean(),
        stderr: if stderr.is_finite() { stderr } else { 0.0 },
        n,
        burn_in,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    /// `d_k` for `k = 0..=n`; values below the smallest double read as 0
    pub d: Vec<f64>,
    pub time_avg: f64,
    /// min and max of `d_k` over the final window
    pub tail_min: f64,
    pub tail_max: f64,
    /// log of the final-window max, meaningful even when `tail_max` underflows
    pub tail_max_ln: f64,
    /// first iterate at which the pair landed exactly on the diagonal
    pub merged_at: Option<usize>,
}

/// Distances along one two-point orbit. `window` is the tail fraction used
/// for the finite-run liminf/limsup proxies.
pub fn distance_series(
    map: &CircleMap,
    stream: &mut NoiseStream,
    x0: f64,
    y0: f64,
    n: usize,
    window: f64,
) -> Result<DistanceSeries> {
    let mut pair = PairState::new(x0, y0);
    if pair.is_merged() {
        return invalid("distance_series needs x0 != y0");
    }
    if !(window > 0.0 && window <= 1.0) {
        return invalid("window fraction must lie in (0, 1]");
    }
    let mut d = Vec::with_capacity(n + 1);
    let mut ln_d = Vec::with_capacity(n + 1);
    d.push(pair.distance());
    ln_d.push(pair.ln_distance());
    let mut merged_at = None;
    for k in 1..=n {
        pair.step(map, stream.next());
        if pair.is_merged() {
            merged_at = Some(k);
            d.push(0.0);
            break;
        }
        d.push(pair.distance());
        ln_d.push(pair.ln_distance());
    }
    let len = d.len();
    let from = len - ((window * len as f64).ceil() as usize).clamp(1, len);
    let tail = &d[from..];
    let tail_max_ln = ln_d[from.min(ln_d.len() - 1)..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DistanceSeries {
        time_avg: stats::mean(&d),
        tail_min: tail.iter().copied().fold(f64::INFINITY, f64::min),
        tail_max: tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        tail_max_ln: if merged_at.is_some() {
            f64::NEG_INFINITY
        } else {
            tail_max_ln
        },
        d,
        merged_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Synchronising,
    Intermittent,
    Chaotic,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrichotomyConfig {
    pub n: usize,
    pub ensemble: usize,
    pub window: f64,
    /// half-width of the band around 0 in which the exponent counts as zero
    pub zero_band: f64,
    pub seed: u64,
}

impl Default for TrichotomyConfig {
    fn default() -> Self {
        Self {
            n: 1_000_000,
            ensemble: 32,
            window: 0.1,
            zero_band: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDiagnostics {
    pub seed_index: usize,
    pub lambda_hat: f64,
    pub time_avg: f64,
    pub tail_min: f64,
    pub tail_max: f64,
    pub tail_max_ln: f64,
    /// fraction of iterates with `d < 1e-3`
    pub laminar_fraction: f64,
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrichotomyReport {
    pub theta: f64,
    pub regime: Regime,
    pub lambda_hat: f64,
    pub stderr: f64,
    pub median_time_avg: f64,
    pub median_tail_min: f64,
    pub median_tail_max: f64,
    pub median_laminar_fraction: f64,
    pub seeds: Vec<SeedDiagnostics>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Classify the two-point behaviour at noise level `theta` from an ensemble of
/// independent runs.
///
/// The exponent is the ensemble mean of the per-run Birkhoff averages along the
/// `x` orbit. A sign is declared when it clears both `3 * stderr` and the zero
/// band. Otherwise the run is intermittent when the orbits spend most of their
/// time near the diagonal (`time_avg` small, laminar fraction above 1/2) yet
/// still burst away (final-window max above `1e-3`), and inconclusive if not.
pub fn trichotomy_report(
    map: &CircleMap,
    theta: f64,
    cfg: &TrichotomyConfig,
) -> Result<TrichotomyReport> {
    if cfg.ensemble < 32 {
        return invalid(format!("ensemble must be >= 32, got {}", cfg.ensemble));
    }
    let root = NoiseStream::new(theta, cfg.seed);
    let seeds: Vec<SeedDiagnostics> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|i| {
            let mut s = root.child(i, cfg.ensemble);
            let x0 = s.next_unit();
            let y0 = wrap(x0 + 0.05 + 0.4 * s.next_unit());
            let mut pair = PairState::new(x0, y0);
            let mut ln_sum = Accumulator::default();
            let mut d_sum = Accumulator::default();
            let mut laminar = 0usize;
            let from = cfg.n - ((cfg.window * cfg.n as f64).ceil() as usize).clamp(1, cfg.n);
            let (mut tmin, mut tmax, mut tmax_ln) = (f64::INFINITY, 0.0f64, f64::NEG_INFINITY);
            let mut merged = false;
            for k in 0..cfg.n {
                let a = s.next();
                ln_sum.add(map.deriv(wrap(pair.x() + a)).ln());
                pair.step(map, a);
                merged |= pair.is_merged();
                let d = pair.distance();
                d_sum.add(d);
                if d < 1e-3 {
                    laminar += 1;
                }
                if k >= from {
                    tmin = tmin.min(d);
                    tmax = tmax.max(d);
                    tmax_ln = tmax_ln.max(if merged {
                        f64::NEG_INFINITY
                    } else {
                        pair.ln_distance()
                    });
                }
            }
            SeedDiagnostics {
                seed_index: i,
                lambda_hat: ln_sum.mean(),
                time_avg: d_sum.mean(),
                tail_min: tmin,
                tail_max: tmax,
                tail_max_ln: tmax_ln,
                laminar_fraction: laminar as f64 / cfg.n as f64,
                merged,
            }
        })
        .collect();
    let lambdas: Vec<f64> = seeds.iter().map(|s| s.lambda_hat).collect();
    let (lambda_hat, stderr) = stats::mean_stderr(&lambdas);
    let median_time_avg = median(seeds.iter().map(|s| s.time_avg).collect());
    let median_tail_min = median(seeds.iter().map(|s| s.tail_min).collect());
    let median_tail_max = median(seeds.iter().map(|s| s.tail_max).collect());
    let median_laminar_fraction = median(seeds.iter().map(|s| s.laminar_fraction).collect());
    let margin = (3.0 * stderr).max(cfg.zero_band);
    let regime = if lambda_hat < -margin {
        Regime::Synchronising
    } else if lambda_hat > margin {
        Regime::Chaotic
    } else if median_laminar_fraction > 0.5 && median_tail_max > 1e-3 {
        Regime::Intermittent
    } else {
        Regime::Inconclusive
    };
    Ok(TrichotomyReport {
        theta,
        regime,
        lambda_hat,
        stderr,
        median_time_avg,
        median_tail_min,
        median_tail_max,
        median_laminar_fraction,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_examples() {
        let aff = CircleMap::affine_doubling();
        assert!((step(&aff, 0.1, 0.1) - 0.4).abs() < 1e-15);
        let m = CircleMap::example_nu(0.6).unwrap();
        assert!(crate::circle_map::distance(step(&m, 0.4, 0.1), 0.0) < 1e-12);
        assert_eq!(step(&m, 0.37, 0.0), m.eval(0.37));
    }

    #[test]
    fn two_point_examples() {
        let aff = CircleMap::affine_doubling();
        let s = two_point_step(&aff, TwoPointState { x: 0.1, y: 0.2, n: 0 }, 0.0);
        assert!((s.x - 0.2).abs() < 1e-15 && (s.y - 0.4).abs() < 1e-15 && s.n == 1);
        let m = CircleMap::example_nu(0.6).unwrap();
        let d = two_point_step(&m, TwoPointState { x: 0.3, y: 0.3, n: 0 }, 0.13);
        assert_eq!(d.x, d.y);
    }

    #[test]
    fn signed_distance_examples() {
        assert!((signed_distance(0.1, 0.3) - 0.2).abs() < 1e-15);
        assert!((signed_distance(0.9, 0.1) - 0.2).abs() < 1e-15);
        assert_eq!(signed_distance(0.77, 0.77), 0.0);
    }

    #[test]
    fn affine_lyapunov_is_ln2() {
        let aff = CircleMap::affine_doubling();
        let mut s = NoiseStream::new(0.3, 1);
        let est = lyapunov_birkhoff(&aff, &mut s, None, 200_000, 20_000).unwrap();
        assert!((est.lambda_hat - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(lyapunov_birkhoff(&aff, &mut s, None, 1000, 0).is_err());
    }

    #[test]
    fn batch_stderr_halves_when_n_quadruples() {
        let m = CircleMap::example_nu(0.6).unwrap();
        let a = lyapunov_birkhoff(&m, &mut NoiseStream::new(0.2, 3), None, 1_000_000, 0).unwrap();
        let b = lyapunov_birkhoff(&m, &mut NoiseStream::new(0.2, 3), None, 4_000_000, 0).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((1.4..=2.6).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn merged_orbits_stay_merged() {
        let m = CircleMap::example_nu(0.6).unwrap();
        let mut s = NoiseStream::new(0.2, 9);
        let mut st = TwoPointState { x: 0.42, y: 0.42, n: 0 };
        for _ in 0..1000 {
            st = two_point_step(&m, st, s.next());
            assert_eq!(st.x, st.y);
        }
        assert!(distance_series(&m, &mut s, 0.3, 0.3, 10, 0.1).is_err());
    }

    #[test]
    fn synchronising_series_decays() {
        let m = CircleMap::example_nu(0.6).unwrap();
        let mut s = NoiseStream::new(0.1, 4);
        let ser = distance_series(&m, &mut s, 0.2, 0.6, 20_000, 0.1).unwrap();
        assert_eq!(ser.d.len(), 20_001);
        assert!(ser.tail_max < ser.d[0]);
        assert!(ser.tail_max_ln < -1000.0);
        assert!(ser.merged_at.is_none());
    }
}
