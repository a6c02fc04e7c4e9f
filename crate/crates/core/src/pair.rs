//! Two-point states stored as a base point plus a signed offset.
//!
//! Iterating `(x, y)` as two independent floats loses the pair as soon as the
//! distance falls below the spacing of doubles near `x`, which for a chaotic
//! but near-diagonal orbit happens every few thousand iterates. Here the offset
//! is pushed forward with cancellation-free lift increments, and once it gets
//! astronomically small it is carried as mantissa times a power of two and
//! advanced by the derivative alone.

use crate::circle_map::{wrap, CircleMap};

/// Below this offset magnitude the linearised update is exact to double precision.
const DEEP: f64 = 1.0e-270;
const LOG2_STEP: i32 = 128;
const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    x: f64,
    /// offset mantissa; the signed offset is `w * 2^scale`
    w: f64,
    scale: i32,
}

/// Signed offset from `x` to `y` in `(-1/2, 1/2]`.
#[inline]
pub fn signed_offset(x: f64, y: f64) -> f64 {
    let diff = y - x;
    if diff > -0.5 && diff <= 0.5 {
        return diff;
    }
    let s = (diff + 0.5).rem_euclid(1.0) - 0.5;
    if s <= -0.5 {
        0.5
    } else {
        s
    }
}

impl PairState {
    pub fn new(x: f64, y: f64) -> Self {
        Self::from_offset(wrap(x), signed_offset(x, y))
    }

    pub fn from_offset(x: f64, offset: f64) -> Self {
        let mut s = Self {
            x: wrap(x),
            w: offset,
            scale: 0,
        };
        s.normalise();
        s
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        wrap(self.x + self.offset())
    }

    /// Signed offset; underflows to zero for very deep states.
    #[inline]
    pub fn offset(&self) -> f64 {
        if self.scale == 0 {
            self.w
        } else {
            self.w * 2f64.powi(self.scale)
        }
    }

    #[inline]
    pub fn distance(&self) -> f64 {
        self.offset().abs()
    }

    #[inline]
    pub fn ln_distance(&self) -> f64 {
        self.w.abs().ln() + self.scale as f64 * LN_2
    }

    /// Pair sits exactly on the diagonal.
    #[inline]
    pub fn is_merged(&self) -> bool {
        self.w == 0.0
    }

    /// Apply `T_a` to both points.
    #[inline]
    pub fn step(&mut self, map: &CircleMap, a: f64) {
        let u = wrap(self.x + a);
        if self.scale < 0 {
            self.w *= map.deriv(u);
        } else if self.w != 0.0 {
            let inc = map.lift_increment(u, self.w);
            // reduce only when needed; adding 1/2 would round small offsets away
            self.w = if inc > -0.5 && inc <= 0.5 {
                inc
            } else {
                signed_offset(0.0, inc)
            };
        }
        self.x = wrap(map.lift(u));
        self.normalise();
    }

    fn normalise(&mut self) {
        if self.scale == 0 {
            if self.w != 0.0 && self.w.abs() < DEEP {
                self.scale = -LOG2_STEP;
                self.w *= 2f64.powi(LOG2_STEP);
                self.normalise();
            }
            return;
        }
        let m = self.w.abs();
        if m == 0.0 {
            self.scale = 0;
            return;
        }
        if m < 2f64.powi(-LOG2_STEP / 2) {
            self.w *= 2f64.powi(LOG2_STEP);
            self.scale -= LOG2_STEP;
        } else if m > 2f64.powi(LOG2_STEP / 2) {
            self.w *= 2f64.powi(-LOG2_STEP);
            self.scale += LOG2_STEP;
        }
        // back to plain representation once comfortably above DEEP
        if self.scale > -1000 {
            let plain = self.w * 2f64.powi(self.scale);
            if plain.abs() >= 16.0 * DEEP {
                self.w = plain;
                self.scale = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_and_wrap() {
        assert!((signed_offset(0.1, 0.3) - 0.2).abs() < 1e-15);
        assert!((signed_offset(0.9, 0.1) - 0.2).abs() < 1e-15);
        assert_eq!(signed_offset(0.4, 0.4), 0.0);
        assert_eq!(signed_offset(0.0, 0.5), 0.5);
        assert_eq!(signed_offset(0.5, 0.0), 0.5);
        let p = PairState::new(0.95, 0.05);
        assert!((p.offset() - 0.1).abs() < 1e-15);
        assert!((p.y() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_iteration_at_macroscopic_distance() {
        let map = CircleMap::example_nu(0.6).unwrap();
        let (mut x, mut y) = (0.31, 0.52);
        let mut p = PairState::new(x, y);
        for k in 0..6 {
            let a = 0.07 * (k as f64 - 2.5);
            x = map.eval(x + a);
            y = map.eval(y + a);
            p.step(&map, a);
            assert!((p.x() - x).abs() < 1e-9);
            assert!(crate::circle_map::distance(p.y(), y) < 1e-9);
        }
    }

    #[test]
    fn doubling_is_exact_in_every_regime() {
        let map = CircleMap::affine_doubling();
        let mut p = PairState::from_offset(0.2, 1e-300);
        let mut ln = p.ln_distance();
        for _ in 0..990 {
            p.step(&map, 0.0);
            ln += LN_2;
            assert!((p.ln_distance() - ln).abs() < 1e-9);
        }
        assert!(p.scale == 0 && (p.offset() / 2f64.powi(990) / 1e-300 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deep_states_survive_contraction() {
        // ~0.6 per step at the attracting fixed point; 5000 steps is e^{-2554}
        let map = CircleMap::example_nu(0.6).unwrap();
        let mut p = PairState::from_offset(0.0, 1e-3);
        for _ in 0..5000 {
            p.step(&map, 0.0);
        }
        assert!(!p.is_merged());
        let expected = 1e-3f64.ln() + 5000.0 * 0.6f64.ln();
        assert!((p.ln_distance() - expected).abs() < 1e-3, "{}", p.ln_distance());
        assert_eq!(p.distance(), 0.0);
    }
}
