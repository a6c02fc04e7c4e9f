//! Monte Carlo counterparts of the spectral quantities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle_map::{wrap, CircleMap};
use crate::error::{invalid, Result};
use crate::noise::NoiseStream;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

fn log_mean_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + (s / values.len() as f64).ln()
}

/// Finite-`n` estimate of `Lambda(q)` from `ensemble` independent orbits
/// started from Lebesgue measure.
///
/// Uses the increment `[ln E e^{q S_n} - ln E e^{q S_m}] / (n - m)` with
/// `m = n / 2`, where `S_k` is the log-derivative of the `k`-fold composition.
/// The plain `ln E e^{q S_n} / n` carries an `O(1/n)` bias from the initial
/// density, which the increment cancels. The stderr is a bootstrap over orbits.
pub fn moment_lyapunov_mc(
    map: &CircleMap,
    stream: &NoiseStream,
    q: f64,
    n: usize,
    ensemble: usize,
) -> Result<McEstimate> {
    Ok(moment_lyapunov_mc_many(map, stream, &[q], n, ensemble)?[0])
}

/// [`moment_lyapunov_mc`] at several `q` from one set of orbits; each `q`
/// gets the same estimate it would get alone.
pub fn moment_lyapunov_mc_many(
    map: &CircleMap,
    stream: &NoiseStream,
    qs: &[f64],
    n: usize,
    ensemble: usize,
) -> Result<Vec<McEstimate>> {
    if !(2..=64).contains(&n) {
        return invalid(format!("moment_lyapunov_mc needs 2 <= n <= 64, got {n}"));
    }
    if ensemble < 1000 {
        return invalid("moment_lyapunov_mc needs a sizeable ensemble");
    }
    let m = n / 2;
    let paths: Vec<(f64, f64)> = (0..ensemble)
        .into_par_iter()
        .map(|i| {
            let mut s = stream.child(i, ensemble);
            let mut x = s.next_unit();
            let mut acc = 0.0;
            let mut at_m = 0.0;
            for k in 0..n {
                let u = wrap(x + s.next());
                acc += map.deriv(u).ln();
                x = wrap(map.lift(u));
                if k + 1 == m {
                    at_m = acc;
                }
            }
            (acc, at_m)
        })
        .collect();
    let estimator = |q: f64, rows: &[(f64, f64)]| {
        let a: Vec<f64> = rows.iter().map(|r| q * r.0).collect();
        let b: Vec<f64> = rows.iter().map(|r| q * r.1).collect();
        (log_mean_exp(&a) - log_mean_exp(&b)) / (n - m) as f64
    };
    let resamples = 200;
    // one bootstrap index set shared by every q
    let boot: Vec<Vec<f64>> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut s = NoiseStream::new(0.5, stream.seed() ^ 0x9e37_79b9_7f4a_7c15).child(r, resamples);
            let rows: Vec<(f64, f64)> = (0..ensemble)
                .map(|_| paths[((s.next_unit() * ensemble as f64) as usize).min(ensemble - 1)])
                .collect();
            qs.iter().map(|&q| estimator(q, &rows)).collect()
        })
        .collect();
    Ok(qs
        .iter()
        .enumerate()
        .map(|(j, &q)| {
            if q == 0.0 {
                return McEstimate {
                    estimate: 0.0,
                    stderr: 0.0,
                };
            }
            let col: Vec<f64> = boot.iter().map(|b| b[j]).collect();
            let (_, se) = stats::mean_stderr(&col);
            McEstimate {
                estimate: estimator(q, &paths),
                stderr: se * (resamples as f64).sqrt(),
            }
        })
        .collect())
}

/// Asymptotic variance of `ln DT` Birkhoff sums: `batch * var(batch mean)`.
/// An independent estimate of `V = Lambda''(0)`.
pub fn diffusion_variance_mc(
    map: &CircleMap,
    stream: &mut NoiseStream,
    batches: usize,
    batch: usize,
) -> McEstimate {
    let mut x = stream.next_unit();
    for _ in 0..10_000 {
        x = map.eval(x + stream.next());
    }
    let means: Vec<f64> = (0..batches)
        .map(|_| {
            let mut acc = stats::Accumulator::default();
            for _ in 0..batch {
                let u = wrap(x + stream.next());
                acc.add(map.deriv(u).ln());
                x = wrap(map.lift(u));
            }
            acc.mean()
        })
        .collect();
    let (mu, _) = stats::mean_stderr(&means);
    let sq: Vec<f64> = means.iter().map(|m| batch as f64 * (m - mu).powi(2)).collect();
    let (v, se) = stats::mean_stderr(&sq);
    McEstimate {
        estimate: v * batches as f64 / (batches - 1) as f64,
        stderr: se,
    }
}
