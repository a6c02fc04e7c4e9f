use std::sync::OnceLock;

use crate::circle_map::wrap;
use crate::error::{invalid, Result};

/// Samples `values[i] = psi(i / n)` of a function on the circle, evaluated
/// between nodes by the periodic cubic spline through the samples.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub values: Vec<f64>,
    coeffs: OnceLock<Vec<f64>>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

/// Taps of the inverse of the `(1, 4, 1) / 6` B-spline collocation filter:
/// `sqrt(3) (-r)^|j|` with `r = 2 - sqrt(3)`; `r^32 < 1e-18`.
const TAPS: usize = 32;

fn prefilter_taps() -> &'static [f64; TAPS + 1] {
    static G: OnceLock<[f64; TAPS + 1]> = OnceLock::new();
    G.get_or_init(|| {
        let r = 2.0 - 3f64.sqrt();
        let mut g = [0.0; TAPS + 1];
        for (j, slot) in g.iter_mut().enumerate() {
            *slot = 3f64.sqrt() * (-r).powi(j as i32);
        }
        g
    })
}

/// Periodic cubic B-spline coefficients interpolating `values`.
pub fn spline_coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let g = prefilter_taps();
    (0..n)
        .map(|k| {
            let mut acc = g[0] * values[k];
            for (j, &gj) in g.iter().enumerate().skip(1) {
                acc += gj * (values[(k + j) % n] + values[(k + n - j % n) % n]);
            }
            acc
        })
        .collect()
}

/// First coefficient index and the four cubic B-spline weights at `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub first: u32,
    pub weights: [f64; 4],
}

impl Stencil {
    #[inline]
    pub fn new(n: usize, x: f64) -> Self {
        let s = wrap(x) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        let t2 = t * t;
        let t3 = t2 * t;
        let u = 1.0 - t;
        // coefficients at offsets -1, 0, 1, 2 relative to i
        let weights = [
            u * u * u / 6.0,
            (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
            t3 / 6.0,
        ];
        Self {
            first: ((i + n - 1) % n) as u32,
            weights,
        }
    }

    /// Evaluate against spline coefficients (not raw samples).
    #[inline]
    pub fn apply(&self, coeffs: &[f64]) -> f64 {
        let n = coeffs.len();
        let j = self.first as usize;
        if j + 3 < n {
            let c = &coeffs[j..j + 4];
            self.weights[0] * c[0]
                + self.weights[1] * c[1]
                + self.weights[2] * c[2]
                + self.weights[3] * c[3]
        } else {
            (0..4).map(|k| self.weights[k] * coeffs[(j + k) % n]).sum()
        }
    }
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 256 || !n.is_power_of_two() {
            return invalid(format!("grid size must be a power of two >= 256, got {n}"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("grid function has non-finite values");
        }
        Ok(Self {
            values,
            coeffs: OnceLock::new(),
        })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|i| f(i as f64 / n as f64)).collect())
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.len() as f64
    }

    pub fn coefficients(&self) -> &[f64] {
        self.coeffs.get_or_init(|| spline_coefficients(&self.values))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        Stencil::new(self.len(), x).apply(self.coefficients())
    }

    /// Trapezoid rule on the periodic grid, i.e. the mean of the samples.
    pub fn integral(&self) -> f64 {
        crate::stats::mean(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.values.iter().map(|v| v * c).collect()).expect("scaling keeps the grid valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn spline_interpolates_and_is_periodic() {
        let g = GridFunction::from_fn(256, |x| (TAU * x).sin()).unwrap();
        for i in 0..256 {
            assert!((g.eval(g.node(i)) - g.values[i]).abs() < 1e-14);
        }
        for k in 0..1000 {
            let x = k as f64 / 1000.0 + 1e-4;
            assert!((g.eval(x) - (TAU * x).sin()).abs() < 1e-8);
        }
        assert!((g.eval(1.0 - 1e-12) - g.eval(0.0)).abs() < 1e-9);
        assert!((GridFunction::constant(512, 3.0).unwrap().eval(0.123) - 3.0).abs() < 1e-14);
        assert!(GridFunction::new(vec![0.0; 300]).is_err());
    }

    #[test]
    fn trapezoid_integral() {
        let g = GridFunction::from_fn(1024, |x| 1.0 + (TAU * x).cos()).unwrap();
        assert!((g.integral() - 1.0).abs() < 1e-14);
    }
}
