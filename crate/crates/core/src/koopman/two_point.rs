//! Two-point Koopman operator and the log-distance martingale defect.

use super::grid::GridFunction;
use super::twisted::TwistedOperator;
use crate::circle_map::{wrap, CircleMap};
use crate::error::{invalid, Error, Result};
use crate::noise::NoiseQuadrature;
use crate::pair::{signed_offset, PairState};

/// `E[f(T_w x, T_w y)]` by quadrature over the noise.
///
/// A non-finite integrand value at any node is reported as a diagonal hit.
pub fn two_point_apply(
    map: &CircleMap,
    quad: &NoiseQuadrature,
    f: impl Fn(f64, f64) -> f64,
    x: f64,
    y: f64,
) -> Result<f64> {
    if signed_offset(x, y) == 0.0 {
        return invalid("two_point_apply needs x != y");
    }
    let mut acc = 0.0;
    for (&a, &w) in quad.nodes.iter().zip(&quad.weights) {
        let v = f(map.eval(x + a), map.eval(y + a));
        if !v.is_finite() {
            return Err(Error::DiagonalHit);
        }
        acc += w * v;
    }
    Ok(acc)
}

/// `E[ln d(T_w x, T_w y)]` with the image distance computed from the offset,
/// so it stays accurate for nearby points.
pub fn expected_log_distance(map: &CircleMap, quad: &NoiseQuadrature, x: f64, y: f64) -> Result<f64> {
    let offset = signed_offset(x, y);
    if offset == 0.0 {
        return invalid("expected_log_distance needs x != y");
    }
    let mut acc = 0.0;
    for (&a, &w) in quad.nodes.iter().zip(&quad.weights) {
        let mut p = PairState::from_offset(x, offset);
        p.step(map, a);
        if p.is_merged() {
            return Err(Error::DiagonalHit);
        }
        acc += w * p.ln_distance();
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqPhi0 {
    pub h: f64,
    /// `(phi_h - phi_{-h}) / 2h` for unit-integral eigenfunctions of `P_{±h}`
    pub dphi: GridFunction,
    /// `Lambda'(0)` from the same two eigenvalues
    pub lambda: f64,
    /// sup over the grid of `|E ln DT_w(x) - lambda - (P_0 - I) dphi (x)|`
    pub residual: f64,
}

/// q-derivative of the eigenfunction at `q = 0`, validated through the
/// first-moment identity `E ln DT_w(x) - lambda = (P_0 - I) dphi (x)`.
pub fn d_q_phi0(op: &TwistedOperator, h: f64) -> Result<DqPhi0> {
    if !(1e-3..=0.05).contains(&h) {
        return invalid(format!("h must lie in [1e-3, 0.05], got {h}"));
    }
    let plus = op.dominant_eig(h)?;
    let minus = op.dominant_eig(-h)?;
    // rho(P_q) = exp(Lambda(-q))
    let lambda = (minus.rho.ln() - plus.rho.ln()) / (2.0 * h);
    let dphi = GridFunction::new(
        plus.phi
            .values
            .iter()
            .zip(&minus.phi.values)
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect(),
    )?;
    let p0 = op.apply(0.0, &dphi)?;
    let map = op.map();
    let quad = op.quadrature();
    let n = op.grid_n();
    let residual = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            let mean_ln = quad.expect_at(x, |a| map.deriv(wrap(x + a)).ln());
            (mean_ln - lambda - (p0.values[i] - dphi.values[i])).abs()
        })
        .fold(0.0, f64::max);
    if residual > 10.0 * h * h {
        return Err(Error::ValidationFailed(format!(
            "first-moment residual {residual:.3e} exceeds 10 h^2 = {:.3e}",
            10.0 * h * h
        )));
    }
    Ok(DqPhi0 {
        h,
        dphi,
        lambda,
        residual,
    })
}

/// Evaluates `|(P2 - I) phi(x, y) - lambda|` for
/// `phi(x, y) = ln d(x, y) - dphi(x)`.
#[derive(Debug, Clone)]
pub struct MartingaleDefect<'a> {
    op: &'a TwistedOperator,
    d: DqPhi0,
    lambda0: f64,
    max_distance: f64,
}

impl<'a> MartingaleDefect<'a> {
    /// `lambda0` is the exponent subtracted in the defect; `max_distance` is
    /// the admissible radius `r_min / a2`.
    pub fn new(op: &'a TwistedOperator, h: f64, lambda0: f64) -> Result<Self> {
        let b = op.map().bounds(256)?;
        Ok(Self {
            op,
            d: d_q_phi0(op, h)?,
            lambda0,
            max_distance: b.r_min / b.a2,
        })
    }

    pub fn dq_phi0(&self) -> &DqPhi0 {
        &self.d
    }

    pub fn max_distance(&self) -> f64 {
        self.max_distance
    }

    pub fn defect(&self, x: f64, y: f64) -> Result<f64> {
        let dist = signed_offset(x, y).abs();
        if !(dist > 0.0 && dist < self.max_distance) {
            return invalid(format!(
                "need 0 < d(x,y) < {:.4}, got {dist}",
                self.max_distance
            ));
        }
        let map = self.op.map();
        let quad = self.op.quadrature();
        let e_ln = expected_log_distance(map, quad, x, y)?;
        let e_phi = quad.expect_at(x, |a| self.d.dphi.eval(map.eval(x + a)));
        let p2_minus_i = (e_ln - e_phi) - (dist.ln() - self.d.dphi.eval(x));
        Ok((p2_minus_i - self.lambda0).abs())
    }
}

/// Max relative residual of `E[W_q(T_w x, DT_w(x) u)] = e^{Lambda(-q)} W_q(x, u)`
/// for `W_q(x, u) = u^{-q} phi_q(x)` over the given points.
pub fn linearized_eigen_residual(
    op: &TwistedOperator,
    q: f64,
    phi: &GridFunction,
    rho: f64,
    xs: &[f64],
    us: &[f64],
) -> f64 {
    let map = op.map();
    let quad = op.quadrature();
    let mut worst = 0.0f64;
    for &x in xs {
        for &u in us {
            let lhs = quad.expect_at(x, |a| {
                let v = wrap(x + a);
                (map.deriv(v) * u).powf(-q) * phi.eval(map.lift(v))
            });
            let rhs = rho * u.powf(-q) * phi.eval(x);
            worst = worst.max(((lhs - rhs) / rhs).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::QuadratureKind;

    #[test]
    fn constants_and_preconditions() {
        let m = CircleMap::example_nu(0.6).unwrap();
        let quad = NoiseQuadrature::new(0.2, 96, QuadratureKind::GaussLegendre).unwrap();
        assert!((two_point_apply(&m, &quad, |_, _| 1.0, 0.1, 0.3).unwrap() - 1.0).abs() < 1e-14);
        assert!(two_point_apply(&m, &quad, |x, y| crate::distance(x, y), 0.2, 0.2).is_err());
        assert!(matches!(
            two_point_apply(&m, &quad, |_, _| f64::NEG_INFINITY, 0.1, 0.3),
            Err(Error::DiagonalHit)
        ));
    }

    #[test]
    fn affine_defect_vanishes() {
        let a = CircleMap::affine_doubling();
        let quad = NoiseQuadrature::new(0.2, 32, QuadratureKind::GaussLegendre).unwrap();
        let op = TwistedOperator::new(&a, &quad, 256).unwrap();
        let d = MartingaleDefect::new(&op, 0.01, std::f64::consts::LN_2).unwrap();
        assert!(d.dq_phi0().dphi.values.iter().all(|v| v.abs() < 1e-9));
        for dist in [1e-2, 1e-3, 1e-4] {
            let v = d.defect(0.3, 0.3 + dist).unwrap();
            assert!(v >= 0.0 && v < 1e-10, "defect {v}");
        }
    }
}
