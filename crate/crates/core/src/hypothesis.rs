//! Numeric checks of the standing hypotheses on a map and noise level.
//!
//! Verdicts mean "no violation found at the stated resolution"; none of this
//! is a proof.

use rayon::prelude::*;
use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circle_map::{distance, wrap, CircleMap};
use crate::error::{invalid, Error, Result};
use crate::pair::signed_offset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1Check {
    pub verdict: Verdict,
    pub a1: f64,
    pub a2: f64,
    pub resolution: usize,
}

/// Derivative bounded away from zero.
pub fn check_h1(map: &CircleMap, grid_n: usize) -> Result<H1Check> {
    let b = map.bounds(grid_n)?;
    Ok(H1Check {
        verdict: Verdict::from_bool(b.a1 > 0.0),
        a1: b.a1,
        a2: b.a2,
        resolution: grid_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Check {
    pub verdict: Verdict,
    /// first `k` at which every cell's `k`-step reachable set is the circle
    pub k: Option<usize>,
    pub k_max: usize,
    pub resolution: usize,
}

/// Union of closed arcs stored as disjoint sorted intervals in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
struct ArcSet(Vec<(f64, f64)>);

impl ArcSet {
    fn full() -> Self {
        ArcSet(vec![(0.0, 1.0)])
    }

    fn is_full(&self) -> bool {
        self.0.len() == 1 && self.0[0].0 <= 0.0 && self.0[0].1 >= 1.0
    }

    /// Arc of lifted coordinates `[lo, hi]`, `hi - lo < 1`, cut into `[0, 1]`.
    fn push_lifted(pieces: &mut Vec<(f64, f64)>, lo: f64, hi: f64) {
        let shift = lo.floor();
        let (lo, hi) = (lo - shift, hi - shift);
        if hi <= 1.0 {
            pieces.push((lo, hi));
        } else {
            pieces.push((lo, 1.0));
            pieces.push((0.0, hi - 1.0));
        }
    }

    fn normalise(mut pieces: Vec<(f64, f64)>) -> Self {
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pieces.len());
        for (lo, hi) in pieces {
            match out.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        ArcSet(out)
    }
}

/// Lift of `T` on the whole line, `L(t) = L(t mod 1) + deg floor(t)`.
fn line_lift(map: &CircleMap, t: f64, degree: f64) -> f64 {
    let k = t.floor();
    map.lift(t - k) + degree * k
}

/// Reachable set of `cell` after one step of `T_a`, `a` in `[-theta, theta]`.
/// The lift is increasing, so the image of an arc is the arc between the
/// images of its ends.
fn reach_step(map: &CircleMap, set: &ArcSet, theta: f64, degree: f64) -> ArcSet {
    let mut pieces = Vec::new();
    for &(lo, hi) in &set.0 {
        let (a, b) = (lo - theta, hi + theta);
        if b - a >= 1.0 {
            return ArcSet::full();
        }
        let (la, lb) = (line_lift(map, a, degree), line_lift(map, b, degree));
        if lb - la >= 1.0 {
            return ArcSet::full();
        }
        ArcSet::push_lifted(&mut pieces, la, lb);
    }
    ArcSet::normalise(pieces)
}

/// Every grid cell reaches the whole circle in `k` steps of the random map.
///
/// Reachable sets are propagated exactly as unions of arcs, so the only
/// approximation is starting from cells instead of points.
pub fn check_h2(map: &CircleMap, theta: f64, grid_n: usize, k_max: usize) -> Result<H2Check> {
    if grid_n < 128 {
        return invalid(format!("check_h2 needs grid_n >= 128, got {grid_n}"));
    }
    let degree = map.lift(1.0).round();
    let first_cover: Vec<Option<usize>> = (0..grid_n)
        .into_par_iter()
        .map(|i| {
            let mut set = ArcSet(vec![(i as f64 / grid_n as f64, (i + 1) as f64 / grid_n as f64)]);
            for k in 1..=k_max {
                set = reach_step(map, &set, theta, degree);
                if set.is_full() {
                    return Some(k);
                }
            }
            None
        })
        .collect();
    let k = first_cover
        .iter()
        .try_fold(0, |m, c| c.map(|c| m.max(c)));
    Ok(H2Check {
        verdict: if k.is_some() {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        },
        k,
        k_max,
        resolution: grid_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H3Check {
    pub verdict: Verdict,
    /// points of the attracting orbit found, or of the least expanding one
    pub orbit: Vec<f64>,
    pub multiplier: f64,
    pub resolution: usize,
}

/// Roots of `g - m` on `[0, 1)` for every integer `m` in range, by sign
/// change scan and Brent refinement.
fn periodic_points(g: impl Fn(f64) -> f64, grid_n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let h = 1.0 / grid_n as f64;
    for i in 0..grid_n {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        let (ga, gb) = (g(a), g(b));
        for m in (ga.min(gb).ceil() as i64)..=(ga.max(gb).floor() as i64) {
            let m = m as f64;
            let f = |t: f64| g(t) - m;
            if f(a) == 0.0 {
                out.push(a);
                continue;
            }
            if f(b) == 0.0 {
                // picked up as the left end of the next cell
                continue;
            }
            let mut conv = SimpleConvergency {
                eps: 1e-15,
                max_iter: 200,
            };
            if let Ok(r) = find_root_brent(a, b, &f, &mut conv) {
                out.push(r);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

/// A hyperbolic attracting periodic orbit of the unperturbed map: fixed
/// points first, then period two.
pub fn check_h3(map: &CircleMap, grid_n: usize) -> Result<H3Check> {
    let degree = map.lift(1.0).round();
    let fixed = periodic_points(|x| map.lift(x) - x, grid_n);
    let mut candidates: Vec<(Vec<f64>, f64)> =
        fixed.iter().map(|&x| (vec![x], map.deriv(x))).collect();
    if candidates.iter().all(|c| c.1.abs() >= 1.0) {
        let two = periodic_points(|x| line_lift(map, map.lift(x), degree) - x, grid_n);
        for &x in &two {
            let y = map.eval(x);
            if distance(x, y) > 1e-9 {
                candidates.push((vec![x, y], map.deriv(x) * map.deriv(y)));
            }
        }
    }
    let best = candidates
        .into_iter()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
    let (orbit, multiplier) = best.unwrap_or((Vec::new(), f64::NAN));
    Ok(H3Check {
        verdict: Verdict::from_bool(multiplier.abs() < 1.0),
        orbit,
        multiplier,
        resolution: grid_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H4Check {
    pub verdict: Verdict,
    /// smallest `|f''(a)|` among near-tangency points, `None` if none flagged
    pub min_curvature: Option<f64>,
    pub flagged_points: usize,
    /// largest number of near tangencies found for one pair
    pub max_tangencies_per_pair: usize,
    pub resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyTolerances {
    pub delta_tol: f64,
    pub c_min: f64,
}

impl Default for TangencyTolerances {
    fn default() -> Self {
        Self {
            delta_tol: 1e-3,
            c_min: 1e-2,
        }
    }
}

/// Pair grid `x_i = i / g`, `y_j = (j + 1/2) / g`: the half-cell offset keeps
/// pairs off the diagonal and off antipodes.
fn pair_grid(grid: usize, min_distance: f64) -> Vec<(f64, f64)> {
    let g = grid as f64;
    (0..grid)
        .flat_map(|i| (0..grid).map(move |j| (i as f64 / g, (j as f64 + 0.5) / g)))
        .filter(|&(x, y)| distance(x, y) >= min_distance)
        .collect()
}

fn noise_grid(theta: f64, n: usize) -> Vec<f64> {
    if theta == 0.0 {
        return vec![0.0];
    }
    (0..n)
        .map(|k| -theta + 2.0 * theta * k as f64 / (n - 1) as f64)
        .collect()
}

/// `f(a) = signed distance from T(x + a) to T(y + a)` and its first two
/// derivatives in `a`.
fn separation(map: &CircleMap, x: f64, y: f64, a: f64) -> (f64, f64, f64) {
    let (u, v) = (wrap(x + a), wrap(y + a));
    let f = signed_offset(0.0, map.lift_increment(u, signed_offset(u, v)));
    (
        f,
        map.deriv(v) - map.deriv(u),
        map.second_deriv(v) - map.second_deriv(u),
    )
}

/// Parameters where `T_a x` and `T_a y` nearly meet with equal speed must
/// have curvature at least `c_min`, and each pair may have at most one such
/// tangency.
///
/// For each pair the critical points of `f` on the noise interval are found
/// by sign changes of `f'` on the grid, refined by Brent's method; a critical
/// point with `|f| < delta_tol` is a near tangency, unless `|f| >= a1 d / 2`:
/// near the diagonal `T` is a local diffeomorphism and `|f| ~ DT d`, which
/// can be below `delta_tol` without any fold.
///
/// Tangencies sit on thin curves in the pair offset `y - x`, so pairs are
/// `(x, x + (j + 1/2) / (16 grid))` with `x` on a grid of `grid / 4` points;
/// the noise grid also has `grid / 4` points, `grid^3` evaluations in all.
pub fn check_h4(
    map: &CircleMap,
    theta: f64,
    grid: usize,
    tol: TangencyTolerances,
) -> Result<H4Check> {
    if grid < 16 {
        return invalid("check_h4 needs grid >= 16");
    }
    let a1 = map.bounds(4096)?.a1;
    let a_grid = noise_grid(theta, grid / 4);
    let (gx, gd) = (grid / 4, 16 * grid);
    let pairs: Vec<(f64, f64)> = (0..gx)
        .flat_map(|i| {
            (0..gd).map(move |j| {
                let x = i as f64 / gx as f64;
                (x, wrap(x + (j as f64 + 0.5) / gd as f64))
            })
        })
        .filter(|&(x, y)| distance(x, y) >= 1e-3)
        .collect();
    let per_pair: Vec<(Option<f64>, usize)> = pairs
        .into_par_iter()
        .map(|(x, y)| {
            let df = |a: f64| separation(map, x, y, a).1;
            let mut min_c: Option<f64> = None;
            let mut count = 0;
            let mut prev = df(a_grid[0]);
            for w in a_grid.windows(2) {
                let next = df(w[1]);
                if prev * next < 0.0 {
                    let mut conv = SimpleConvergency {
                        eps: 1e-15,
                        max_iter: 200,
                    };
                    if let Ok(a) = find_root_brent(w[0], w[1], df, &mut conv) {
                        let (f, _, d2f) = separation(map, x, y, a);
                        if f.abs() < tol.delta_tol && f.abs() < 0.5 * a1 * distance(x, y) {
                            count += 1;
                            min_c = Some(min_c.map_or(d2f.abs(), |m: f64| m.min(d2f.abs())));
                        }
                    }
                }
                prev = next;
            }
            (min_c, count)
        })
        .collect();
    let min_curvature = per_pair.iter().filter_map(|p| p.0).reduce(f64::min);
    let max_per_pair = per_pair.iter().map(|p| p.1).max().unwrap_or(0);
    let ok = min_curvature.map_or(true, |c| c >= tol.c_min) && max_per_pair <= 1;
    Ok(H4Check {
        verdict: Verdict::from_bool(ok),
        min_curvature,
        flagged_points: per_pair.iter().map(|p| p.1).sum(),
        max_tangencies_per_pair: max_per_pair,
        resolution: grid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H5Check {
    pub verdict: Verdict,
    /// `min` over pairs of `max` over `(a0, a1)` of `|H|`
    pub min_max_h: f64,
    /// pairs whose `H` changes sign along the `a0` grid
    pub sign_flip_pairs: usize,
    pub pairs: usize,
    pub resolution: usize,
}

/// `H_{a0,a1}(x, y) = DT(T_{a0} x + a1) DT(T_{a0} y + a1) (DT(x + a0) - DT(y + a0))`.
pub fn h_value(map: &CircleMap, x: f64, y: f64, a0: f64, a1: f64) -> f64 {
    let (u, v) = (x + a0, y + a0);
    map.deriv(map.eval(u) + a1) * map.deriv(map.eval(v) + a1) * (map.deriv(u) - map.deriv(v))
}

/// Every off-diagonal pair has some `(a0, a1)` with `|H| > h_tol`.
pub fn check_h5(map: &CircleMap, theta: f64, grid: usize, h_tol: f64) -> Result<H5Check> {
    if grid < 16 {
        return invalid("check_h5 needs grid >= 16");
    }
    let a_grid = noise_grid(theta, grid.min(24));
    let pairs = pair_grid(grid, 1e-3);
    let per_pair: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|&(x, y)| {
            let mut best = 0.0f64;
            let (mut pos, mut neg) = (false, false);
            for &a0 in &a_grid {
                for &a1 in &a_grid {
                    let h = h_value(map, x, y, a0, a1);
                    best = best.max(h.abs());
                    pos |= h > 0.0;
                    neg |= h < 0.0;
                }
            }
            (best, pos && neg)
        })
        .collect();
    let min_max_h = per_pair.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    Ok(H5Check {
        verdict: Verdict::from_bool(min_max_h > h_tol),
        min_max_h,
        sign_flip_pairs: per_pair.iter().filter(|p| p.1).count(),
        pairs: pairs.len(),
        resolution: grid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBound {
    /// max over grid pairs with `d >= r` of `E_a[-ln d(T_a x, T_a y)]`
    pub max_expectation: f64,
    pub worst_pair: (f64, f64),
    pub pairs: usize,
    pub r: f64,
    pub resolution: usize,
}

/// Value above which a single-pair expectation is declared divergent.
pub const LOG_BOUND_LIMIT: f64 = 1e3;

fn expected_neg_log_distance(map: &CircleMap, x: f64, y: f64, theta: f64) -> f64 {
    let g = |a: f64| -separation(map, x, y, a).0.abs().ln();
    if theta == 0.0 {
        return g(0.0);
    }
    // split at zeros and near-zero local minima of |f|, where g has
    // logarithmic singularities, then integrate each piece by tanh-sinh
    let n = 256;
    let a_grid = noise_grid(theta, n + 1);
    let f: Vec<f64> = a_grid.iter().map(|&a| separation(map, x, y, a).0).collect();
    let mut cuts = vec![-theta];
    for k in 0..n {
        let (fa, fb) = (f[k], f[k + 1]);
        // a jump across +-1/2 is antipodal, not a meeting
        if fa * fb < 0.0 && (fa - fb).abs() < 0.5 {
            let mut conv = SimpleConvergency {
                eps: 1e-15,
                max_iter: 200,
            };
            let h = |a: f64| separation(map, x, y, a).0;
            if let Ok(r) = find_root_brent(a_grid[k], a_grid[k + 1], h, &mut conv) {
                cuts.push(r);
            }
        } else if k > 0 && f[k].abs() < f[k - 1].abs() && f[k].abs() <= fb.abs() && f[k].abs() < 1e-2 {
            cuts.push(a_grid[k]);
        }
    }
    cuts.push(theta);
    let total: f64 = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| quadrature::double_exponential::integrate(g, w[0], w[1], 1e-10).integral)
        .sum();
    total / (2.0 * theta)
}

/// Upper bound on the expected `-ln` distance after one step, over a pair grid.
pub fn check_logbound(map: &CircleMap, theta: f64, r: f64, grid: usize) -> Result<LogBound> {
    if !(r > 0.0 && r <= 0.5) {
        return invalid(format!("need 0 < R <= 1/2, got {r}"));
    }
    let pairs = pair_grid(grid, r);
    if pairs.is_empty() {
        return invalid("no grid pairs at distance >= R");
    }
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(x, y)| expected_neg_log_distance(map, x, y, theta))
        .collect();
    let (k, &max) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    if !(max <= LOG_BOUND_LIMIT) {
        return Err(Error::Divergent {
            x: pairs[k].0,
            y: pairs[k].1,
            value: max,
        });
    }
    Ok(LogBound {
        max_expectation: max,
        worst_pair: pairs[k],
        pairs: pairs.len(),
        r,
        resolution: grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreflightSettings {
    pub h1_grid: usize,
    pub h2_grid: usize,
    pub h2_k_max: usize,
    pub h3_grid: usize,
    pub scan_grid: usize,
    pub tangency: TangencyTolerances,
    pub h_tol: f64,
}

impl Default for PreflightSettings {
    fn default() -> Self {
        Self {
            h1_grid: 4096,
            h2_grid: 256,
            h2_k_max: 64,
            h3_grid: 4096,
            scan_grid: 256,
            tangency: TangencyTolerances::default(),
            h_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub family: String,
    pub theta: f64,
    pub h1: H1Check,
    pub h2: H2Check,
    pub h3: H3Check,
    pub h4: H4Check,
    pub h5: H5Check,
}

impl HypothesisReport {
    pub fn verdicts(&self) -> [Verdict; 5] {
        [
            self.h1.verdict,
            self.h2.verdict,
            self.h3.verdict,
            self.h4.verdict,
            self.h5.verdict,
        ]
    }

    /// No check failed outright.
    pub fn no_failures(&self) -> bool {
        !self.verdicts().contains(&Verdict::Fail)
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts().iter().all(|v| *v == Verdict::Pass)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("report serialises");
        format!("{:x}", Sha256::digest(json))
    }
}

pub fn preflight(map: &CircleMap, theta: f64, s: &PreflightSettings) -> Result<HypothesisReport> {
    Ok(HypothesisReport {
        family: map.spec().family_name().to_string(),
        theta,
        h1: check_h1(map, s.h1_grid)?,
        h2: check_h2(map, theta, s.h2_grid, s.h2_k_max)?,
        h3: check_h3(map, s.h3_grid)?,
        h4: check_h4(map, theta, s.scan_grid, s.tangency)?,
        h5: check_h5(map, theta, s.scan_grid, s.h_tol)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nu06() -> CircleMap {
        CircleMap::example_nu(0.6).unwrap()
    }

    #[test]
    fn h1_verdicts() {
        let h = check_h1(&nu06(), 4096).unwrap();
        assert_eq!(h.verdict, Verdict::Pass);
        assert!((h.a1 - 0.6).abs() < 1e-12);
        assert_eq!(check_h1(&CircleMap::affine_doubling(), 256).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn h2_full_noise_and_tiny_noise() {
        let m = nu06();
        let full = check_h2(&m, 0.5, 128, 8).unwrap();
        assert_eq!((full.verdict, full.k), (Verdict::Pass, Some(1)));
        let tiny = check_h2(&m, 1e-4, 128, 64).unwrap();
        assert_ne!(tiny.verdict, Verdict::Pass);
    }

    #[test]
    fn h3_fixed_point_multipliers() {
        let h = check_h3(&nu06(), 4096).unwrap();
        assert_eq!(h.verdict, Verdict::Pass);
        assert_eq!(h.orbit, vec![0.0]);
        assert!((h.multiplier - 0.6).abs() < 1e-12);
        let a = check_h3(&CircleMap::affine_doubling(), 1024).unwrap();
        assert_eq!(a.verdict, Verdict::Fail);
    }

    #[test]
    fn h5_affine_is_identically_zero() {
        let a = check_h5(&CircleMap::affine_doubling(), 0.2, 64, 1e-6).unwrap();
        assert_eq!(a.verdict, Verdict::Fail);
        assert_eq!(a.min_max_h, 0.0);
    }

    #[test]
    fn logbound_affine_is_closed_form() {
        // -ln d(2x, 2y) does not depend on the noise
        let a = CircleMap::affine_doubling();
        let b = check_logbound(&a, 0.2, 0.1, 32).unwrap();
        let (x, y) = b.worst_pair;
        let expect = -distance(2.0 * x, 2.0 * y).ln();
        assert!((b.max_expectation - expect).abs() < 1e-9);
    }

    #[test]
    fn h4_finds_the_symmetric_fold() {
        // T(1 - u) = -T(u) and DT(1 - u) = DT(u), so the pair (u1, 1 - u1) with
        // T(u1) = 1/2 meets tangentially with curvature 2 |D2T(u1)|;
        // u1 = 0.353494209361343 and 2 |D2T(u1)| = 17.99706 by scipy brentq
        let h = check_h4(&nu06(), 0.2, 128, TangencyTolerances::default()).unwrap();
        assert_eq!(h.verdict, Verdict::Pass);
        assert!(h.flagged_points > 0);
        assert_eq!(h.max_tangencies_per_pair, 1);
        let c = h.min_curvature.unwrap();
        assert!(c <= 17.99706 + 1e-6 && c > 17.9, "{c}");
        let a = check_h4(&CircleMap::affine_doubling(), 0.2, 64, TangencyTolerances::default())
            .unwrap();
        assert_eq!((a.verdict, a.flagged_points), (Verdict::Pass, 0));
    }

    #[test]
    fn h2_reach_fixture() {
        assert_eq!(check_h2(&nu06(), 0.2, 256, 64).unwrap().k, Some(2));
    }

    #[test]
    fn h5_records_sign_flips() {
        let h = check_h5(&nu06(), 0.2, 64, 1e-6).unwrap();
        assert_eq!(h.verdict, Verdict::Pass);
        assert!(h.sign_flip_pairs > 0 && h.sign_flip_pairs < h.pairs);
    }

    #[test]
    fn logbound_fixture_and_monotone_in_r() {
        let m = nu06();
        let at = |r| check_logbound(&m, 0.2, r, 64).unwrap().max_expectation;
        let (b20, b05, b02) = (at(0.2), at(0.05), at(0.02));
        assert!((b05 - 3.119115).abs() < 1e-4, "{b05}");
        assert!(b20 <= b05 && b05 <= b02);
    }
}
