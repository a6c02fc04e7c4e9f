//! Empirical occupation statistics of the two-point motion near the diagonal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle_map::CircleMap;
use crate::error::{invalid, Error, Result};
use crate::noise::NoiseStream;
use crate::pair::PairState;
use crate::passage::stationary_start;
use crate::stats::{self, LinearFit, Z95};

/// Default fit window for diagonal-mass exponents.
pub const MASS_WINDOW: (f64, f64) = (1e-5, 1e-2);

/// Visit counts of the distance `d_k` in bins with edges
/// `0, eps_min, eps_min r, ..., 1/2`; the first bin collects everything below
/// `eps_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl DistanceHistogram {
    pub fn empty(eps_min: f64, bins: usize) -> Result<Self> {
        if !(eps_min > 0.0 && eps_min < 0.5) || bins < 2 {
            return invalid(format!(
                "histogram needs 0 < eps_min < 1/2 and bins >= 2, got {eps_min}, {bins}"
            ));
        }
        let ratio = (0.5 / eps_min).ln() / bins as f64;
        let mut edges = vec![0.0];
        edges.extend((0..=bins).map(|k| eps_min * (ratio * k as f64).exp()));
        *edges.last_mut().unwrap() = 0.5;
        Ok(Self {
            counts: vec![0; edges.len() - 1],
            edges,
            total: 0,
        })
    }

    #[inline]
    fn record(&mut self, ln_d: f64) {
        let lo = self.edges[1].ln();
        let bins = self.counts.len() - 1;
        let k = if ln_d < lo {
            0
        } else {
            let r = (0.5f64.ln() - lo) / bins as f64;
            1 + (((ln_d - lo) / r) as usize).min(bins - 1)
        };
        self.counts[k] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &DistanceHistogram) {
        assert_eq!(self.edges, other.edges, "histograms with different edges");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    /// Mass per unit distance in each bin.
    pub fn density(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, e)| c as f64 / (self.total as f64 * (e[1] - e[0])))
            .collect()
    }

    /// Fraction of visits with `d < edges[k]`, for every edge.
    pub fn cumulative_mass(&self) -> Vec<f64> {
        let mut acc = 0u64;
        let mut out = vec![0.0];
        for &c in &self.counts {
            acc += c;
            out.push(acc as f64 / self.total as f64);
        }
        out
    }
}

/// Histogram of `d(x_k, y_k)` for `burn_in <= k < burn_in + n`.
///
/// A run that lands exactly on the diagonal stops there; fewer than `n / 2`
/// recorded points is an error.
pub fn distance_histogram(
    map: &CircleMap,
    stream: &mut NoiseStream,
    x0: f64,
    y0: f64,
    n: usize,
    burn_in: usize,
    eps_min: f64,
    bins: usize,
) -> Result<DistanceHistogram> {
    if n < 1_000_000 {
        return invalid(format!("distance_histogram needs n >= 1e6, got {n}"));
    }
    let mut hist = DistanceHistogram::empty(eps_min, bins)?;
    let mut pair = PairState::new(x0, y0);
    if pair.is_merged() {
        return invalid("start points coincide");
    }
    for k in 0..burn_in + n {
        pair.step(map, stream.next());
        if pair.is_merged() {
            let recorded = k.saturating_sub(burn_in);
            if recorded < n / 2 {
                return Err(Error::OrbitMerged { iterate: k + 1 });
            }
            break;
        }
        if k >= burn_in {
            hist.record(pair.ln_distance());
        }
    }
    Ok(hist)
}

/// Sum of `chains` independent histograms, chain `i` driven by child stream
/// `i` of `root` from a random stationary pair.
pub fn distance_histogram_chains(
    map: &CircleMap,
    root: &NoiseStream,
    chains: usize,
    n_per_chain: usize,
    burn_in: usize,
    eps_min: f64,
    bins: usize,
) -> Result<DistanceHistogram> {
    let parts = (0..chains)
        .into_par_iter()
        .map(|i| {
            let mut s = root.child(i, chains);
            let ln_d0 = (0.5 * s.next_unit()).ln();
            let start = stationary_start(map, &mut s, ln_d0);
            distance_histogram(map, &mut s, start.x(), start.y(), n_per_chain, burn_in, eps_min, bins)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut hist = DistanceHistogram::empty(eps_min, bins)?;
    for p in &parts {
        hist.merge(p);
    }
    Ok(hist)
}

fn window_points(
    window: (f64, f64),
    values: &[f64],
    at: impl Fn(usize) -> f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = window;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (k, &v) in values.iter().enumerate() {
        let e = at(k);
        if e >= lo * (1.0 - 1e-12) && e <= hi * (1.0 + 1e-12) && v > 0.0 {
            x.push(e.ln());
            y.push(v.ln());
        }
    }
    if x.len() < 4 {
        return Err(Error::WindowTooNarrow {
            lo,
            hi,
            points: x.len(),
        });
    }
    Ok((x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassFit {
    pub exponent: f64,
    pub ci: (f64, f64),
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Exponent of `mass(d < eps) ~ eps^exponent` over `window`, fitted by least
/// squares in log-log coordinates at the histogram edges.
///
/// Only meaningful for a positive exponent with `gamma_hint` in `(-1/2, 0)`;
/// anything else is rejected.
pub fn diagonal_mass_fit(
    hist: &DistanceHistogram,
    lambda_hat: f64,
    gamma_hint: Option<f64>,
    window: (f64, f64),
) -> Result<MassFit> {
    if !(lambda_hat > 0.0) {
        return invalid(format!("diagonal mass fit needs lambda > 0, got {lambda_hat}"));
    }
    match gamma_hint {
        Some(g) if g > -0.5 && g < 0.0 => {}
        other => {
            return invalid(format!(
                "diagonal mass fit needs gamma in (-1/2, 0), got {other:?}"
            ))
        }
    }
    let cum = hist.cumulative_mass();
    let (x, y) = window_points(window, &cum, |k| hist.edges[k])?;
    let fit = stats::linear_fit(&x, &y);
    Ok(MassFit {
        exponent: fit.slope,
        ci: fit.slope_ci(),
        r_squared: fit.r_squared,
        window,
        points: x.len(),
    })
}

/// Log-log slope of the histogram density against bin centre over `window`.
pub fn density_exponent_fit(hist: &DistanceHistogram, window: (f64, f64)) -> Result<LinearFit> {
    let dens = hist.density();
    // geometric bin centres; the first bin starts at 0 and is never in range
    let (x, y) = window_points(window, &dens, |k| {
        if k == 0 {
            0.0
        } else {
            (hist.edges[k] * hist.edges[k + 1]).sqrt()
        }
    })?;
    Ok(stats::linear_fit(&x, &y))
}

/// Fraction of iterates `1..=n` with `d < eps`.
pub fn visit_frequency(
    map: &CircleMap,
    stream: &mut NoiseStream,
    x0: f64,
    y0: f64,
    n: usize,
    eps: f64,
) -> f64 {
    let mut pair = PairState::new(x0, y0);
    let ln_eps = eps.ln();
    let mut hits = 0usize;
    for _ in 0..n {
        pair.step(map, stream.next());
        if pair.ln_distance() < ln_eps {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

/// One excursion: entered `d < kappa delta` at depth `ln(delta / d_entry)`,
/// then counted iterates with `d >= eps` until `d > delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub entry_depth: f64,
    pub counts: Vec<u64>,
    pub length: u64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionStats {
    pub delta: f64,
    pub entry_scale: f64,
    pub eps_grid: Vec<f64>,
    pub excursions: Vec<Excursion>,
}

impl ExcursionStats {
    pub fn censored_fraction(&self) -> f64 {
        let c = self.excursions.iter().filter(|e| e.censored).count();
        c as f64 / self.excursions.len().max(1) as f64
    }

    /// Mean per-excursion count for each `eps`, over uncensored excursions.
    pub fn mean_counts(&self) -> Vec<f64> {
        mean_counts(&self.excursions, self.eps_grid.len())
    }

    /// Mean of `ln(delta / d_entry)` over uncensored excursions.
    pub fn mean_entry_depth(&self) -> f64 {
        let d: Vec<f64> = self
            .excursions
            .iter()
            .filter(|e| !e.censored)
            .map(|e| e.entry_depth)
            .collect();
        stats::mean(&d)
    }

    /// Same excursions with the grid cut down to `lo <= eps <= hi`.
    pub fn restrict(&self, lo: f64, hi: f64) -> ExcursionStats {
        let keep: Vec<usize> = (0..self.eps_grid.len())
            .filter(|&k| self.eps_grid[k] >= lo && self.eps_grid[k] <= hi)
            .collect();
        ExcursionStats {
            delta: self.delta,
            entry_scale: self.entry_scale,
            eps_grid: keep.iter().map(|&k| self.eps_grid[k]).collect(),
            excursions: self
                .excursions
                .iter()
                .map(|e| Excursion {
                    counts: keep.iter().map(|&k| e.counts[k]).collect(),
                    ..e.clone()
                })
                .collect(),
        }
    }
}

fn mean_counts(excursions: &[Excursion], m: usize) -> Vec<f64> {
    let done: Vec<&Excursion> = excursions.iter().filter(|e| !e.censored).collect();
    (0..m)
        .map(|k| done.iter().map(|e| e.counts[k] as f64).sum::<f64>() / done.len().max(1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionDesign {
    pub delta: f64,
    pub kappa: f64,
    pub eps_grid: Vec<f64>,
    pub excursions: usize,
    /// independent chains the excursions are split over
    pub chains: usize,
    pub max_len: u64,
}

impl ExcursionDesign {
    /// Geometric grid `eps = kappa delta e^{-k}`, `k = 1..=levels`.
    pub fn geometric(delta: f64, kappa: f64, levels: usize, excursions: usize) -> Self {
        Self {
            delta,
            kappa,
            eps_grid: (1..=levels)
                .map(|k| kappa * delta * (-(k as f64)).exp())
                .collect(),
            excursions,
            chains: 16,
            max_len: 10_000_000,
        }
    }
}

/// Collect `design.excursions` excursions from `design.chains` independent
/// chains, each a single long two-point orbit cycling through entries into
/// `d < kappa delta` and exits through `d > delta`. A censored excursion
/// restarts its chain from a fresh stationary pair.
pub fn excursion_counts(
    map: &CircleMap,
    root: &NoiseStream,
    design: &ExcursionDesign,
) -> Result<ExcursionStats> {
    let ExcursionDesign {
        delta,
        kappa,
        ref eps_grid,
        excursions,
        chains,
        max_len,
    } = *design;
    if !(kappa > 0.0 && kappa < 1.0 && delta > 0.0 && delta < 0.5) {
        return invalid(format!("need 0 < kappa < 1, 0 < delta < 1/2, got {kappa}, {delta}"));
    }
    if eps_grid.is_empty()
        || eps_grid.iter().any(|&e| !(e > 0.0 && e < kappa * delta))
        || eps_grid.windows(2).any(|w| w[1] >= w[0])
    {
        return invalid("eps grid must be decreasing inside (0, kappa delta)");
    }
    if chains == 0 || excursions < chains {
        return invalid("need at least one excursion per chain");
    }
    let ln_eps: Vec<f64> = eps_grid.iter().map(|e| e.ln()).collect();
    let ln_delta = delta.ln();
    let ln_entry = (kappa * delta).ln();
    let per_chain: Vec<Vec<Excursion>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut s = root.child(c, chains);
            let want = excursions / chains + usize::from(c < excursions % chains);
            let fresh = |s: &mut NoiseStream| {
                let ln_d0 = (0.5 * s.next_unit()).ln();
                stationary_start(map, s, ln_d0)
            };
            let mut pair = fresh(&mut s);
            let mut out = Vec::with_capacity(want);
            while out.len() < want {
                // wait for an entry
                let mut waited = 0u64;
                while pair.ln_distance() >= ln_entry {
                    pair.step(map, s.next());
                    waited += 1;
                    if waited > max_len {
                        pair = fresh(&mut s);
                        waited = 0;
                    }
                }
                let entry_depth = ln_delta - pair.ln_distance();
                let mut counts = vec![0u64; ln_eps.len()];
                let mut length = 0u64;
                let mut censored = false;
                loop {
                    let ln_d = pair.ln_distance();
                    if ln_d > ln_delta {
                        break;
                    }
                    if length == max_len {
                        censored = true;
                        break;
                    }
                    // eps grid is decreasing, so the hits form a suffix
                    for (slot, &le) in counts.iter_mut().zip(&ln_eps).rev() {
                        if ln_d >= le {
                            *slot += 1;
                        } else {
                            break;
                        }
                    }
                    length += 1;
                    pair.step(map, s.next());
                }
                out.push(Excursion {
                    entry_depth,
                    counts,
                    length,
                    censored,
                });
                if censored {
                    pair = fresh(&mut s);
                }
            }
            out
        })
        .collect();
    Ok(ExcursionStats {
        delta,
        entry_scale: kappa * delta,
        eps_grid: eps_grid.clone(),
        excursions: per_chain.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// percentile bootstrap over excursions
    pub ci: (f64, f64),
    pub r_squared: f64,
    pub excursions: usize,
    pub censored_fraction: f64,
}

/// Slope of the mean per-excursion count against `-ln eps`.
pub fn log_growth_fit(stats: &ExcursionStats, resamples: usize, seed: u64) -> Result<GrowthFit> {
    let done: Vec<Excursion> = stats.excursions.iter().filter(|e| !e.censored).cloned().collect();
    if done.len() < 200 {
        return invalid(format!("log_growth_fit needs >= 200 excursions, got {}", done.len()));
    }
    if stats.eps_grid.len() < 2 {
        return invalid("log_growth_fit needs at least two eps values");
    }
    let m = stats.eps_grid.len();
    let x: Vec<f64> = stats.eps_grid.iter().map(|e| -e.ln()).collect();
    let fit = stats::linear_fit(&x, &mean_counts(&done, m));
    let ci = if resamples > 0 {
        stats::bootstrap_ci(&done, resamples, seed, |rows| {
            stats::linear_fit(&x, &mean_counts(rows, m)).slope
        })
    } else {
        let half = Z95 * fit.slope_stderr;
        (fit.slope - half, fit.slope + half)
    };
    Ok(GrowthFit {
        slope: fit.slope,
        intercept: fit.intercept,
        ci,
        r_squared: fit.r_squared,
        excursions: done.len(),
        censored_fraction: stats.censored_fraction(),
    })
}
