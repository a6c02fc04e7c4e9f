//! Annealed twisted Koopman operator
//! `P_q psi(x) = E[ psi(T_w x) DT_w(x)^(-q) ]` on a uniform grid.

use rayon::prelude::*;
use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};

use super::grid::{spline_coefficients, GridFunction, Stencil};
use crate::circle_map::{wrap, CircleMap};
use crate::error::{invalid, Error, Result};
use crate::noise::NoiseQuadrature;

pub const Q_MAX: f64 = 5.0;
const ROW_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 2000,
        }
    }
}

/// Precomputed geometry of `P_q`: for every grid node and noise node, where
/// the image lands and `ln DT` there. The `q` dependence is a cheap reweighting.
/// Each grid node has its own noise rule, cut where the noisy point crosses 0.
#[derive(Debug, Clone)]
pub struct TwistedOperator {
    map: CircleMap,
    quad: NoiseQuadrature,
    n: usize,
    /// entries of row `i` are `offsets[i]..offsets[i + 1]`
    offsets: Vec<usize>,
    stencils: Vec<Stencil>,
    ln_dt: Vec<f64>,
    weights: Vec<f64>,
    pub power: PowerIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEig {
    pub q: f64,
    pub rho: f64,
    /// positive, normalised to unit integral
    pub phi: GridFunction,
    pub iterations: usize,
    pub residual: f64,
}

fn check_q(q: f64) -> Result<()> {
    if !(q.abs() <= Q_MAX) {
        return invalid(format!("q = {q} outside [-{Q_MAX}, {Q_MAX}]"));
    }
    Ok(())
}

impl TwistedOperator {
    pub fn new(map: &CircleMap, quad: &NoiseQuadrature, n: usize) -> Result<Self> {
        GridFunction::constant(n, 1.0)?;
        let m = quad.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut stencils = Vec::with_capacity(n * m);
        let mut ln_dt = Vec::with_capacity(n * m);
        let mut weights = Vec::with_capacity(n * m);
        offsets.push(0);
        for i in 0..n {
            let x = i as f64 / n as f64;
            let (nodes, w) = quad.rule_at(x);
            for &a in &nodes {
                let u = wrap(x + a);
                stencils.push(Stencil::new(n, map.lift(u)));
                ln_dt.push(map.deriv(u).ln());
            }
            weights.extend(w);
            offsets.push(stencils.len());
        }
        Ok(Self {
            map: map.clone(),
            quad: quad.clone(),
            n,
            offsets,
            stencils,
            ln_dt,
            weights,
            power: PowerIteration::default(),
        })
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    pub fn map(&self) -> &CircleMap {
        &self.map
    }

    pub fn quadrature(&self) -> &NoiseQuadrature {
        &self.quad
    }

    pub fn with_power(mut self, power: PowerIteration) -> Self {
        self.power = power;
        self
    }

    fn kernel(&self, q: f64) -> Vec<f64> {
        self.ln_dt
            .iter()
            .zip(&self.weights)
            .map(|(&l, &w)| w * (-q * l).exp())
            .collect()
    }

    fn apply_kernel(&self, kernel: &[f64], psi: &[f64], out: &mut [f64]) {
        let coeffs = spline_coefficients(psi);
        let psi = &coeffs[..];
        out.par_chunks_mut(ROW_CHUNK)
            .enumerate()
            .for_each(|(c, rows)| {
                for (r, slot) in rows.iter_mut().enumerate() {
                    let i = c * ROW_CHUNK + r;
                    let mut acc = 0.0;
                    for k in self.offsets[i]..self.offsets[i + 1] {
                        acc += kernel[k] * self.stencils[k].apply(psi);
                    }
                    *slot = acc;
                }
            });
    }

    pub fn apply(&self, q: f64, psi: &GridFunction) -> Result<GridFunction> {
        check_q(q)?;
        if psi.len() != self.n {
            return invalid("grid function size does not match the operator");
        }
        let mut out = vec![0.0; self.n];
        self.apply_kernel(&self.kernel(q), &psi.values, &mut out);
        GridFunction::new(out)
    }

    /// `P_q psi` at an arbitrary point, with `psi` interpolated.
    pub fn apply_at(&self, q: f64, psi: &GridFunction, x: f64) -> f64 {
        self.quad.expect_at(x, |a| {
            let u = wrap(x + a);
            self.map.deriv(u).powf(-q) * psi.eval(self.map.lift(u))
        })
    }

    /// Dominant eigenpair of `P_q` by power iteration from the constant 1.
    pub fn dominant_eig(&self, q: f64) -> Result<SpectralEig> {
        check_q(q)?;
        let PowerIteration { tol, max_iter } = self.power;
        let kernel = self.kernel(q);
        let n = self.n;
        let mut psi = vec![1.0; n];
        let mut next = vec![0.0; n];
        let mut rho_prev = f64::NAN;
        for it in 1..=max_iter {
            self.apply_kernel(&kernel, &psi, &mut next);
            let rho = next.iter().sum::<f64>() / psi.iter().sum::<f64>();
            let sup = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            psi.iter_mut().zip(&next).for_each(|(p, v)| *p = v / sup);
            if (rho - rho_prev).abs() <= tol * rho {
                self.apply_kernel(&kernel, &psi, &mut next);
                let rho = next.iter().sum::<f64>() / psi.iter().sum::<f64>();
                let residual = next
                    .iter()
                    .zip(&psi)
                    .fold(0.0f64, |m, (v, p)| m.max((v - rho * p).abs()));
                if residual <= 1e-10 * rho {
                    if psi.iter().any(|&p| p <= 0.0) {
                        return Err(Error::ValidationFailed(format!(
                            "eigenfunction of P_{q} is not positive"
                        )));
                    }
                    let mass = psi.iter().sum::<f64>() / n as f64;
                    let phi = GridFunction::new(psi.iter().map(|p| p / mass).collect())?;
                    return Ok(SpectralEig {
                        q,
                        rho,
                        phi,
                        iterations: it,
                        residual: residual / rho,
                    });
                }
            }
            rho_prev = rho;
        }
        Err(Error::NoConvergence {
            what: "power iteration",
            iterations: max_iter,
        })
    }

    /// `Lambda(q) = ln rho(P_{-q})`.
    pub fn moment_lyapunov(&self, q: f64) -> Result<f64> {
        Ok(self.dominant_eig(-q)?.rho.ln())
    }
}

/// One application of `P_q` on a fresh operator.
pub fn twisted_apply(
    map: &CircleMap,
    quad: &NoiseQuadrature,
    q: f64,
    psi: &GridFunction,
) -> Result<GridFunction> {
    TwistedOperator::new(map, quad, psi.len())?.apply(q, psi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCurve {
    pub q_grid: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `phi` of `P_{-q}` for each grid value
    pub eigenfunctions: Vec<GridFunction>,
    pub residuals: Vec<f64>,
    pub lambda0: f64,
    pub v: f64,
    pub gamma: Option<f64>,
}

impl MomentCurve {
    pub fn at(&self, q: f64) -> Option<f64> {
        self.q_grid
            .iter()
            .position(|&g| (g - q).abs() < 1e-12)
            .map(|i| self.lambda[i])
    }
}

/// Symmetric grid `{0, ±h, ±2h, ...}` merged with `extra` points.
pub fn default_q_grid(h: f64, extra: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0, h, -h, 2.0 * h, -2.0 * h];
    for &e in extra {
        g.push(e);
        g.push(-e);
    }
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    g
}

/// Sample `Lambda` on `q_grid` and extract `lambda0 = Lambda'(0)` and
/// `V = Lambda''(0)` by Richardson-extrapolated central differences.
pub fn moment_curve(op: &TwistedOperator, q_grid: &[f64]) -> Result<MomentCurve> {
    let mut q_grid = q_grid.to_vec();
    q_grid.sort_by(f64::total_cmp);
    q_grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let has = |grid: &[f64], q: f64| grid.iter().any(|&g| (g - q).abs() < 1e-12);
    if q_grid.iter().any(|&q| !has(&q_grid, -q)) {
        return invalid("q_grid must be symmetric about 0");
    }
    if !has(&q_grid, 0.0) {
        q_grid.push(0.0);
        q_grid.sort_by(f64::total_cmp);
    }
    let h = q_grid
        .iter()
        .copied()
        .filter(|&q| q > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(h <= 0.05) || !has(&q_grid, 2.0 * h) {
        return invalid("q_grid must contain ±h and ±2h with h <= 0.05");
    }
    let eigs = q_grid
        .iter()
        .map(|&q| op.dominant_eig(-q))
        .collect::<Result<Vec<_>>>()?;
    let lambda: Vec<f64> = eigs.iter().map(|e| e.rho.ln()).collect();
    let at = |q: f64| lambda[q_grid.iter().position(|&g| (g - q).abs() < 1e-12).unwrap()];
    let l0 = at(0.0);
    let d1 = |s: f64| (at(s) - at(-s)) / (2.0 * s);
    let d2 = |s: f64| (at(s) - 2.0 * l0 + at(-s)) / (s * s);
    let lambda0 = (4.0 * d1(h) - d1(2.0 * h)) / 3.0;
    let v = (4.0 * d2(h) - d2(2.0 * h)) / 3.0;

    if l0.abs() > 1e-10 {
        return Err(Error::ValidationFailed(format!("Lambda(0) = {l0}")));
    }
    for k in 1..q_grid.len().saturating_sub(1) {
        let (q1, q2, q3) = (q_grid[k - 1], q_grid[k], q_grid[k + 1]);
        let s = ((lambda[k + 1] - lambda[k]) / (q3 - q2) - (lambda[k] - lambda[k - 1]) / (q2 - q1))
            * 0.5
            * (q3 - q1);
        if s < -1e-8 {
            return Err(Error::ConvexityViolation {
                q: q2,
                second_difference: s,
            });
        }
    }
    for (q, l) in q_grid.iter().zip(&lambda) {
        if *l < lambda0 * q - 1e-8 {
            return Err(Error::ValidationFailed(format!(
                "Lambda({q}) = {l} falls below the tangent lambda0 * q"
            )));
        }
    }
    Ok(MomentCurve {
        residuals: eigs.iter().map(|e| e.residual).collect(),
        eigenfunctions: eigs.into_iter().map(|e| e.phi).collect(),
        q_grid,
        lambda,
        lambda0,
        v,
        gamma: None,
    })
}

/// The nonzero root of `Lambda`, on the side of 0 opposite to `lambda0`.
///
/// Returns 0 when `|lambda0| <= zero_tol`. Steps away from 0 by doubling until
/// `Lambda` changes sign, then refines with Brent's method.
pub fn gamma_root(op: &TwistedOperator, lambda0: f64, zero_tol: f64) -> Result<f64> {
    if lambda0.abs() <= zero_tol {
        return Ok(0.0);
    }
    let dir = -lambda0.signum();
    let lam = |q: f64| op.moment_lyapunov(q);
    let mut inner = 0.05 * dir;
    let mut tries = 0;
    // the inner point must sit where Lambda < 0
    while lam(inner)? >= 0.0 {
        inner *= 0.5;
        tries += 1;
        if tries > 20 {
            return Err(Error::NoBracket { lambda0 });
        }
    }
    let mut outer = inner;
    loop {
        let next = (outer * 2.0).clamp(-Q_MAX, Q_MAX);
        if lam(next)? >= 0.0 {
            outer = next;
            break;
        }
        if next.abs() >= Q_MAX {
            return Err(Error::NoBracket { lambda0 });
        }
        inner = next;
        outer = next;
    }
    let mut conv = SimpleConvergency {
        eps: 1e-14,
        max_iter: 200,
    };
    let root = find_root_brent(inner, outer, |q| lam(q).unwrap_or(f64::NAN), &mut conv).map_err(
        |_| Error::NoConvergence {
            what: "Brent root of Lambda",
            iterations: 200,
        },
    )?;
    let resid = lam(root)?;
    if resid.abs() >= 1e-10 {
        return Err(Error::NoConvergence {
            what: "Brent root of Lambda (residual)",
            iterations: 200,
        });
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::QuadratureKind;
    use std::f64::consts::LN_2;

    fn op(map: &CircleMap, theta: f64, n: usize) -> TwistedOperator {
        let quad = NoiseQuadrature::new(theta, 96, QuadratureKind::GaussLegendre).unwrap();
        TwistedOperator::new(map, &quad, n).unwrap()
    }

    #[test]
    fn q_zero_fixes_constants() {
        let m = CircleMap::example_nu(0.6).unwrap();
        let p = op(&m, 0.2, 512);
        let one = GridFunction::constant(512, 1.0).unwrap();
        let out = p.apply(0.0, &one).unwrap();
        assert!(out.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let e = p.dominant_eig(0.0).unwrap();
        assert!((e.rho - 1.0).abs() < 1e-14);
        assert!(e.phi.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn affine_spectrum_is_exact() {
        let a = CircleMap::affine_doubling();
        let p = op(&a, 0.3, 256);
        let one = GridFunction::constant(256, 1.0).unwrap();
        for q in [-2.0, -0.5, 1.0, 3.0] {
            let out = p.apply(q, &one).unwrap();
            assert!(out.values.iter().all(|v| (v - 2f64.powf(-q)).abs() < 1e-13));
            let e = p.dominant_eig(q).unwrap();
            assert!((e.rho - 2f64.powf(-q)).abs() < 1e-13 * e.rho);
            assert!((p.moment_lyapunov(q).unwrap() - q * LN_2).abs() < 1e-12);
        }
        assert!(p.apply(6.0, &one).is_err());
        assert!(matches!(gamma_root(&p, LN_2, 1e-6), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn lambda_of_one_is_ln2_for_degree_two() {
        // Lebesgue is a positive left eigenvector of P_{-1} with eigenvalue 2
        let m = CircleMap::example_nu(0.6).unwrap();
        let p = op(&m, 0.2, 1024);
        assert!((p.moment_lyapunov(1.0).unwrap() - LN_2).abs() < 1e-8);
    }

    #[test]
    fn positivity_preserved() {
        let m = CircleMap::example_nu(0.6).unwrap();
        let p = op(&m, 0.17, 256);
        let psi = GridFunction::from_fn(256, |x| 1.1 + (6.0 * x).sin()).unwrap();
        for q in [-2.0, 0.5, 2.0] {
            assert!(p.apply(q, &psi).unwrap().values.iter().all(|&v| v > 0.0));
        }
    }
}
