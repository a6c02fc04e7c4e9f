//! Uniform noise on `[-theta, theta]`.
//!
//! Streams are counter based: sample `k` of a stream with seed `s` is a fixed
//! function of `(s, k)`, so disjoint counter ranges can be handed to workers
//! without changing any draw.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stats::Accumulator;

const TWO_POW_64: u128 = 1 << 64;

#[derive(Clone, Debug)]
pub struct NoiseStream {
    theta: f64,
    seed: u64,
    counter: u128,
    end: u128,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(theta: f64, seed: u64) -> Self {
        Self::with_range(theta, seed, 0, u128::MAX)
    }

    fn with_range(theta: f64, seed: u64, counter: u128, end: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        position(&mut rng, counter);
        Self {
            theta,
            seed,
            counter,
            end,
            rng,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u128 {
        self.counter
    }

    /// Same seed and counter range, different noise amplitude.
    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        debug_assert!(self.counter < self.end, "noise stream exhausted");
        let bits = self.rng.next_u64();
        self.counter += 1;
        if self.counter % TWO_POW_64 == 0 {
            position(&mut self.rng, self.counter);
        }
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-theta, theta]`.
    #[inline]
    pub fn next(&mut self) -> f64 {
        self.theta * (2.0 * self.next_unit() - 1.0)
    }

    /// `k` streams owning consecutive, disjoint slices of the remaining
    /// counter range. `split(1)` returns a copy of `self`.
    pub fn split(&self, k: usize) -> Vec<NoiseStream> {
        assert!(k >= 1, "split needs k >= 1");
        let width = (self.end - self.counter) / k as u128;
        (0..k as u128)
            .map(|i| {
                let lo = self.counter + i * width;
                let hi = if i + 1 == k as u128 {
                    self.end
                } else {
                    lo + width
                };
                Self::with_range(self.theta, self.seed, lo, hi)
            })
            .collect()
    }

    /// Sub-stream `i` of `split(k)` without materialising the others.
    pub fn child(&self, i: usize, k: usize) -> NoiseStream {
        assert!(i < k, "child index out of range");
        let width = (self.end - self.counter) / k as u128;
        let lo = self.counter + i as u128 * width;
        let hi = if i + 1 == k { self.end } else { lo + width };
        Self::with_range(self.theta, self.seed, lo, hi)
    }
}

fn position(rng: &mut ChaCha8Rng, counter: u128) {
    rng.set_stream((counter >> 64) as u64);
    // one u64 consumes two 32-bit words of the keystream
    rng.set_word_pos(2 * (counter % TWO_POW_64));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    #[default]
    GaussLegendre,
    UniformPanel,
}

/// Node count used by the spectral routines. With the noise interval cut at
/// the circle junction the rule itself converges geometrically; what is left
/// is the spline image crossing many grid knots, which 192 nodes resolve.
pub const DEFAULT_QUADRATURE_NODES: usize = 192;

/// Discrete version of the uniform law on `[-theta, theta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    theta: f64,
    kind: QuadratureKind,
}

/// Rule of `m` nodes on `[-1, 1]` with weights summing to 1.
fn reference_rule(kind: QuadratureKind, m: usize) -> Vec<(f64, f64)> {
    match kind {
        QuadratureKind::GaussLegendre => GaussLegendre::new(NonZeroUsize::new(m).unwrap())
            .as_node_weight_pairs()
            .iter()
            .map(|&(t, w)| (t, 0.5 * w))
            .collect(),
        // composite midpoint rule
        QuadratureKind::UniformPanel => (0..m)
            .map(|i| (-1.0 + (2.0 * i as f64 + 1.0) / m as f64, 1.0 / m as f64))
            .collect(),
    }
}

const MIN_PIECE_NODES: usize = 8;

fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::default();
    values.for_each(|v| acc.add(v));
    acc.sum()
}

impl NoiseQuadrature {
    pub fn new(theta: f64, n: usize, kind: QuadratureKind) -> Result<Self> {
        if n < 8 {
            return invalid(format!("quadrature needs n >= 8, got {n}"));
        }
        if !(theta >= 0.0 && theta <= 0.5) {
            return invalid(format!("theta must lie in [0, 0.5], got {theta}"));
        }
        let rule = reference_rule(kind, n);
        let total = compensated_sum(rule.iter().map(|r| r.1));
        let (nodes, weights) = rule.iter().map(|&(t, w)| (theta * t, w / total)).unzip();
        Ok(Self {
            nodes,
            weights,
            theta,
            kind,
        })
    }

    /// Gauss-Legendre rule with [`DEFAULT_QUADRATURE_NODES`] nodes.
    pub fn standard(theta: f64) -> Result<Self> {
        Self::new(theta, DEFAULT_QUADRATURE_NODES, QuadratureKind::GaussLegendre)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&a, &w)| w * f(a))
            .sum()
    }

    /// Rule for integrands `w -> g(x + w)` where `g` is smooth on the open
    /// unit interval but not across integers, as for maps given by a
    /// polynomial on `[0, 1)`. The noise interval is cut where `x + w` crosses
    /// an integer and the node budget is shared in proportion to length, so
    /// each piece sees a smooth integrand. Without a crossing this is the
    /// fixed rule.
    pub fn rule_at(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let th = self.theta;
        let k = (x + th).floor();
        let cut = k - x;
        if th == 0.0 || cut <= -th || cut >= th {
            return (self.nodes.clone(), self.weights.clone());
        }
        let n = self.nodes.len();
        let mut nodes = Vec::with_capacity(n + 2 * MIN_PIECE_NODES);
        let mut weights = Vec::with_capacity(n + 2 * MIN_PIECE_NODES);
        for (lo, hi) in [(-th, cut), (cut, th)] {
            let frac = (hi - lo) / (2.0 * th);
            let m = ((n as f64 * frac).ceil() as usize).max(MIN_PIECE_NODES);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            for (t, w) in reference_rule(self.kind, m) {
                nodes.push(mid + half * t);
                weights.push(w * frac);
            }
        }
        let total = compensated_sum(weights.iter().copied());
        weights.iter_mut().for_each(|w| *w /= total);
        (nodes, weights)
    }

    /// `E[f(w)]` with the rule from [`Self::rule_at`].
    pub fn expect_at(&self, x: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let (nodes, weights) = self.rule_at(x);
        nodes.iter().zip(&weights).map(|(&a, &w)| w * f(a)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_and_determinism() {
        let mut s = NoiseStream::new(0.5, 42);
        let mut t = NoiseStream::new(0.5, 42);
        for _ in 0..1000 {
            let a = s.next();
            assert!((-0.5..=0.5).contains(&a));
            assert_eq!(a.to_bits(), t.next().to_bits());
        }
        assert_eq!(s.counter(), 1000);
    }

    #[test]
    fn mean_within_clt_bound() {
        let theta = 0.2;
        let mut s = NoiseStream::new(theta, 7);
        let n = 1_000_000;
        let mean = (0..n).map(|_| s.next()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * (theta / 3f64.sqrt()) / 1e3, "mean = {mean}");
    }

    #[test]
    fn kolmogorov_smirnov_uniform() {
        let theta = 0.3;
        let mut s = NoiseStream::new(theta, 99);
        let n = 1_000_000;
        let mut u: Vec<f64> = (0..n).map(|_| (s.next() + theta) / (2.0 * theta)).collect();
        u.sort_by(f64::total_cmp);
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
            .fold(0.0, f64::max);
        // asymptotic 1% critical value
        assert!(d < 1.628 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn split_is_a_counter_partition() {
        let root = NoiseStream::new(0.1, 5);
        let parts = root.split(4);
        assert_eq!(parts.len(), 4);
        for (i, p) in parts.iter().enumerate() {
            let mut a = p.clone();
            let mut b = root.child(i, 4);
            for _ in 0..100 {
                assert_eq!(a.next().to_bits(), b.next().to_bits());
            }
        }
        let mut one = root.split(1).pop().unwrap();
        let mut r = root.clone();
        for _ in 0..100 {
            assert_eq!(one.next().to_bits(), r.next().to_bits());
        }
        // a sub-stream continues the parent's sequence at its offset
        let mid = parts[2].counter();
        let mut from_mid = NoiseStream::with_range(0.1, 5, mid, u128::MAX);
        let mut c = parts[2].clone();
        assert_eq!(from_mid.next().to_bits(), c.next().to_bits());
    }

    #[test]
    fn sequential_draws_match_repositioning() {
        let mut s = NoiseStream::new(0.5, 3);
        let draws: Vec<f64> = (0..50).map(|_| s.next()).collect();
        for (k, d) in draws.iter().enumerate() {
            let mut t = NoiseStream::with_range(0.5, 3, k as u128, u128::MAX);
            assert_eq!(t.next().to_bits(), d.to_bits());
        }
    }

    #[test]
    fn siblings_are_uncorrelated() {
        let parts = NoiseStream::new(0.5, 11).split(2);
        let (mut a, mut b) = (parts[0].clone(), parts[1].clone());
        let n = 100_000;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, y) = (a.next(), b.next());
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        let r = sab / (saa * sbb).sqrt();
        assert!(r.abs() < 0.01, "r = {r}");
    }

    #[test]
    fn quadrature_moments() {
        for kind in [QuadratureKind::GaussLegendre, QuadratureKind::UniformPanel] {
            let q = NoiseQuadrature::new(0.2, 96, kind).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(q.nodes.iter().all(|a| a.abs() <= 0.2));
        }
        let q = NoiseQuadrature::new(0.2, 96, QuadratureKind::GaussLegendre).unwrap();
        assert!((q.expect(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!((q.expect(|a| a * a) - 0.04 / 3.0).abs() < 1e-12);
        assert!((q.expect(|a| a.powi(4)) - 0.2f64.powi(4) / 5.0).abs() < 1e-12);
        // exact to degree 2n - 1 = 15 for n = 8
        let q8 = NoiseQuadrature::new(0.5, 8, QuadratureKind::GaussLegendre).unwrap();
        assert!((q8.expect(|a| a.powi(14)) - 0.5f64.powi(14) / 15.0).abs() < 1e-15);
        assert!(NoiseQuadrature::new(0.2, 4, QuadratureKind::GaussLegendre).is_err());
    }
}
