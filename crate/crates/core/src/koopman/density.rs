//! Stationary density of the one-point motion.

use rayon::prelude::*;

use super::grid::{spline_coefficients, GridFunction, Stencil};
use crate::circle_map::{wrap, CircleMap};
use crate::error::{Error, Result};
use crate::noise::NoiseQuadrature;

/// Fixed point of the annealed transfer operator
/// `rho'(y) = sum over T x = y of E_a[rho(x - a)] / DT(x)`,
/// iterated from the uniform density until the L1 change drops below `tol`.
pub fn stationary_density(
    map: &CircleMap,
    quad: &NoiseQuadrature,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<GridFunction> {
    GridFunction::constant(n, 1.0)?;
    let m = quad.len();
    // per grid point: two branches, each with 1/DT and m stencils
    let rows: Vec<([f64; 2], Vec<Stencil>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let y = i as f64 / n as f64;
            let pre = map.preimages(y)?;
            let inv = [1.0 / map.deriv(pre[0]), 1.0 / map.deriv(pre[1])];
            let st = pre
                .iter()
                .flat_map(|&x| quad.nodes.iter().map(move |&a| Stencil::new(n, wrap(x - a))))
                .collect();
            Ok((inv, st))
        })
        .collect::<Result<_>>()?;
    let mut rho = vec![1.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        let coeffs = spline_coefficients(&rho);
        next.par_iter_mut().zip(&rows).for_each(|(slot, (inv, st))| {
            let mut acc = 0.0;
            for b in 0..2 {
                let mut smoothed = 0.0;
                for j in 0..m {
                    smoothed += quad.weights[j] * st[b * m + j].apply(&coeffs);
                }
                acc += inv[b] * smoothed;
            }
            *slot = acc;
        });
        let mass = next.iter().sum::<f64>() / n as f64;
        next.iter_mut().for_each(|v| *v /= mass);
        let change = next
            .iter()
            .zip(&rho)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n as f64;
        std::mem::swap(&mut rho, &mut next);
        if change < tol {
            return GridFunction::new(rho);
        }
    }
    Err(Error::NoConvergence {
        what: "stationary density iteration",
        iterations: max_iter,
    })
}

/// Density of `T_* Leb`, `rho(y) = sum over T x = y of 1 / DT(x)`.
pub fn pushforward_lebesgue(map: &CircleMap, n: usize) -> Result<GridFunction> {
    let values = (0..n)
        .map(|i| {
            let pre = map.preimages(i as f64 / n as f64)?;
            Ok(pre.iter().map(|&x| 1.0 / map.deriv(x)).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    GridFunction::new(values)
}

/// Normalised histogram (density per unit length) of a one-point orbit of
/// `n` iterates after `burn_in`, over `bins` equal cells.
pub fn orbit_histogram(
    map: &CircleMap,
    stream: &mut crate::noise::NoiseStream,
    n: usize,
    burn_in: usize,
    bins: usize,
) -> Vec<f64> {
    let mut x = stream.next_unit();
    for _ in 0..burn_in {
        x = map.eval(x + stream.next());
    }
    let mut counts = vec![0u64; bins];
    for _ in 0..n {
        x = map.eval(x + stream.next());
        counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
    }
    counts
        .iter()
        .map(|&c| c as f64 * bins as f64 / n as f64)
        .collect()
}

/// L1 distance between `rho` and a histogram density, comparing the cell
/// averages of `rho` (16-point midpoint rule per cell) with the bin heights.
pub fn l1_to_histogram(rho: &GridFunction, hist: &[f64]) -> f64 {
    let bins = hist.len();
    let w = 1.0 / bins as f64;
    hist.iter()
        .enumerate()
        .map(|(b, &h)| {
            let avg = (0..16)
                .map(|k| rho.eval((b as f64 + (k as f64 + 0.5) / 16.0) * w))
                .sum::<f64>()
                / 16.0;
            (avg - h).abs() * w
        })
        .sum()
}
