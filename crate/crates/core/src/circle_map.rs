//! Degree-two expanding-on-average circle endomorphisms.
//!
//! Points of the circle are represented in `[0, 1)`. Every map carries the
//! exact polynomial of its derivative on `[0, 1]`; the lift `T: [0,1] -> [0,2]`
//! is the antiderivative with `T(0) = 0`, extended by `T(x + 1) = T(x) + 2`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::poly::Poly;

/// Reduce a real number to the circle `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Arc-length distance `min(|x - y|, 1 - |x - y|)`.
#[inline]
pub fn distance(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Named map families accepted in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// `DT(x) = nu + 140 (2 - nu) x^3 (1 - x)^3`.
    ExampleNu { nu: f64 },
    /// `T(x) = 2x mod 1`.
    AffineDoubling,
    /// `DT = base + p(x)` with `p >= 0` on `[0, 1]` (ascending coefficients).
    CustomPolyDeriv { base: f64, coeffs: Vec<f64> },
}

impl MapSpec {
    pub fn build(&self) -> Result<CircleMap> {
        match self {
            MapSpec::ExampleNu { nu } => CircleMap::example_nu(*nu),
            MapSpec::AffineDoubling => Ok(CircleMap::affine_doubling()),
            MapSpec::CustomPolyDeriv { base, coeffs } => {
                CircleMap::custom_poly_deriv(*base, coeffs.clone())
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            MapSpec::ExampleNu { .. } => "example_nu",
            MapSpec::AffineDoubling => "affine_doubling",
            MapSpec::CustomPolyDeriv { .. } => "custom_poly_deriv",
        }
    }

    /// The `nu` parameter for the example family, NaN otherwise.
    pub fn nu(&self) -> f64 {
        match self {
            MapSpec::ExampleNu { nu } => *nu,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CircleMap {
    spec: MapSpec,
    lift: Poly,
    deriv: Poly,
    second: Poly,
    /// Point `c` with `T(c) = 1` on the lift; splits the two monotone branches.
    half_point: f64,
}

/// Derivative extrema and the two-sided distortion radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapBounds {
    pub a1: f64,
    pub a2: f64,
    pub r_min: f64,
}

impl CircleMap {
    pub fn example_nu(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu < 2.0) {
            return invalid(format!("example_nu requires nu in (0, 2), got {nu}"));
        }
        // 140 (2 - nu) x^3 (1 - x)^3 = c (x^3 - 3x^4 + 3x^5 - x^6)
        let c = 140.0 * (2.0 - nu);
        let deriv = Poly::new(vec![nu, 0.0, 0.0, c, -3.0 * c, 3.0 * c, -c]);
        Ok(Self::from_deriv(MapSpec::ExampleNu { nu }, deriv))
    }

    pub fn affine_doubling() -> Self {
        Self::from_deriv(MapSpec::AffineDoubling, Poly::constant(2.0))
    }

    /// Derivative `base + p`; `p` must be nonnegative on `[0, 1]`, match in
    /// value and slope at the endpoints, and `base + p` must integrate to 2.
    pub fn custom_poly_deriv(base: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) || !base.is_finite() {
            return invalid("custom_poly_deriv needs finite coefficients");
        }
        let p = Poly::new(coeffs.clone());
        let scale = 1.0 + coeffs.iter().map(|c| c.abs()).sum::<f64>();
        let tol = 1e-12 * scale;
        if (0..=4096).any(|i| p.eval(i as f64 / 4096.0) < -tol) {
            return invalid("custom_poly_deriv: p must be nonnegative on [0, 1]");
        }
        let total = base + p.integral_unit();
        if (total - 2.0).abs() > tol {
            return invalid(format!(
                "custom_poly_deriv: derivative integrates to {total}, need degree 2"
            ));
        }
        let dp = p.derivative();
        if (p.eval(0.0) - p.eval(1.0)).abs() > tol || (dp.eval(0.0) - dp.eval(1.0)).abs() > tol {
            return invalid("custom_poly_deriv: p and p' must agree at 0 and 1");
        }
        let deriv = Poly::constant(base).add(&p);
        Ok(Self::from_deriv(MapSpec::CustomPolyDeriv { base, coeffs }, deriv))
    }

    fn from_deriv(spec: MapSpec, deriv: Poly) -> Self {
        let lift = deriv.antiderivative();
        let second = deriv.derivative();
        let mut map = Self {
            spec,
            lift,
            deriv,
            second,
            half_point: 0.5,
        };
        map.half_point = map.solve_lift(1.0, 0.0, 1.0).unwrap_or(0.5);
        map
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn deriv_poly(&self) -> &Poly {
        &self.deriv
    }

    /// Lift value for `x` in `[0, 1]`.
    #[inline]
    pub fn lift(&self, x: f64) -> f64 {
        self.lift.eval(x)
    }

    /// `T(x) mod 1`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        wrap(self.lift.eval(wrap(x)))
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        self.deriv.eval(wrap(x))
    }

    #[inline]
    pub fn second_deriv(&self, x: f64) -> f64 {
        self.second.eval(wrap(x))
    }

    /// `T(u + h) - T(u)` on the periodic lift, free of cancellation when `h` is
    /// small. `u` must lie in `[0, 1)` and `|h| <= 1`.
    pub fn lift_increment(&self, u: f64, h: f64) -> f64 {
        let v = u + h;
        if (0.0..=1.0).contains(&v) {
            self.lift.increment(u, h)
        } else if v > 1.0 {
            // [T(1) - T(u)] + [T(v - 1) - T(0)]
            -self.lift.increment(1.0, u - 1.0) + self.lift.increment(0.0, v - 1.0)
        } else {
            // [T(v + 1) - T(1)] + [T(0) - T(u)]
            self.lift.increment(1.0, v) - self.lift.increment(0.0, u)
        }
    }

    /// Bisection for `T(x) = target` on `[lo, hi]` of the lift.
    fn solve_lift(&self, target: f64, lo: f64, hi: f64) -> Result<f64> {
        let (mut a, mut b) = (lo, hi);
        let (fa, fb) = (self.lift(a) - target, self.lift(b) - target);
        if fa > 0.0 || fb < 0.0 {
            return Err(Error::NoConvergence {
                what: "preimage bisection (lift not bracketing)",
                iterations: 0,
            });
        }
        if fa == 0.0 {
            return Ok(a);
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.lift(m) < target {
                a = m;
            } else {
                b = m;
            }
        }
        let x = if (self.lift(a) - target).abs() <= (self.lift(b) - target).abs() {
            a
        } else {
            b
        };
        if (self.lift(x) - target).abs() > 1e-12 {
            return Err(Error::NoConvergence {
                what: "preimage bisection (non-monotone lift)",
                iterations: 200,
            });
        }
        Ok(x)
    }

    /// The two solutions of `T(x) = y (mod 1)`, one per monotone branch.
    pub fn preimages(&self, y: f64) -> Result<[f64; 2]> {
        let y = wrap(y);
        let c = self.half_point;
        let first = self.solve_lift(y, 0.0, c)?;
        let second = self.solve_lift(y + 1.0, c, 1.0)?;
        Ok([first, wrap(second)])
    }

    /// Extremes of `DT` and the radius `r_min` on which
    /// `a1 d(x,y) <= d(Tx,Ty) <= a2 d(x,y)` holds.
    pub fn bounds(&self, grid_n: usize) -> Result<MapBounds> {
        if grid_n < 256 {
            return invalid(format!("bounds needs grid_n >= 256, got {grid_n}"));
        }
        let (a1, a2) = self.derivative_extrema(grid_n);
        if a1 <= 0.0 {
            return Err(Error::FailsH1 { min_derivative: a1 });
        }
        let r_min = self.scan_r_min(grid_n, a1, a2);
        Ok(MapBounds { a1, a2, r_min })
    }

    fn derivative_extrema(&self, grid_n: usize) -> (f64, f64) {
        let fine = 16 * grid_n;
        let mut lo = self.deriv.eval(0.0);
        let mut hi = lo;
        let mut consider = |x: f64| {
            let v = self.deriv.eval(x);
            lo = lo.min(v);
            hi = hi.max(v);
        };
        consider(1.0);
        let mut prev_x = 0.0;
        let mut prev_s = self.second.eval(0.0);
        for i in 1..=fine {
            let x = i as f64 / fine as f64;
            let s = self.second.eval(x);
            consider(x);
            if s == 0.0 {
                consider(x);
            } else if prev_s != 0.0 && (s > 0.0) != (prev_s > 0.0) {
                // critical point of DT inside (prev_x, x)
                let (mut a, mut b) = (prev_x, x);
                let sa = prev_s;
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    let sm = self.second.eval(m);
                    if (sm > 0.0) == (sa > 0.0) && sm != 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                consider(a);
                consider(b);
            }
            prev_x = x;
            prev_s = s;
        }
        (lo, hi)
    }

    fn image_distance(&self, x: f64, s: f64) -> f64 {
        let inc = self.lift_increment(x, s).rem_euclid(1.0);
        inc.min(1.0 - inc)
    }

    fn two_sided_holds(&self, grid_n: usize, s: f64, a1: f64, a2: f64) -> bool {
        let tol = 1e-12;
        (0..grid_n).all(|i| {
            let x = i as f64 / grid_n as f64;
            let d = self.image_distance(x, s);
            d >= a1 * s * (1.0 - tol) && d <= a2 * s * (1.0 + tol)
        })
    }

    fn scan_r_min(&self, grid_n: usize, a1: f64, a2: f64) -> f64 {
        let step = 0.5 / grid_n as f64;
        let mut good = 0.0;
        let mut bad = None;
        for k in 1..=grid_n {
            let s = k as f64 * step;
            if self.two_sided_holds(grid_n, s, a1, a2) {
                good = s;
            } else {
                bad = Some(s);
                break;
            }
        }
        let Some(mut bad) = bad else {
            return 0.5;
        };
        for _ in 0..40 {
            let m = 0.5 * (good + bad);
            if self.two_sided_holds(grid_n, m, a1, a2) {
                good = m;
            } else {
                bad = m;
            }
        }
        good
    }
}
