//! Small statistics toolkit shared by the estimators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::noise::NoiseStream;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
    n: u64,
}

impl Accumulator {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        let n = self.n + other.n;
        self.add(other.sum);
        self.add(other.comp);
        self.n = n;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.n as f64
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    let mut acc = Accumulator::default();
    xs.iter().for_each(|&x| acc.add(x));
    acc.mean()
}

/// Mean and its standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Standard error of a time average from non-overlapping batch means.
pub fn batch_means_stderr(batch_means: &[f64]) -> f64 {
    mean_stderr(batch_means).1
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

impl LinearFit {
    /// 95% interval for the slope using the normal quantile.
    pub fn slope_ci(&self) -> (f64, f64) {
        (
            self.slope - Z95 * self.slope_stderr,
            self.slope + Z95 * self.slope_stderr,
        )
    }
}

/// Ordinary least squares `y = intercept + slope * x`.
///
/// Closed form on centred `x` and `y - y[0]`, so a constant `y` gives a slope
/// of exactly zero.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len();
    let xbar = mean(x);
    let y0 = y.first().copied().unwrap_or(0.0);
    let dy: Vec<f64> = y.iter().map(|v| v - y0).collect();
    let dybar = mean(&dy);
    let sxx: f64 = x.iter().map(|v| (v - xbar).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&dy).map(|(u, v)| (u - xbar) * v).sum();
    let slope = sxy / sxx;
    let intercept = y0 + dybar - slope * xbar;
    let residuals: Vec<f64> = x
        .iter()
        .zip(&dy)
        .map(|(u, v)| v - dybar - slope * (u - xbar))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = dy.iter().map(|v| (v - dybar).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let sigma2 = if n > 2 { ss_res / (n - 2) as f64 } else { f64::NAN };
    LinearFit {
        slope,
        intercept,
        slope_stderr: (sigma2 / sxx).sqrt(),
        intercept_stderr: (sigma2 * (1.0 / n as f64 + xbar * xbar / sxx)).sqrt(),
        r_squared,
        residuals,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub stderr: Vec<f64>,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

/// Weighted least squares with design given column by column.
///
/// With weights, the reported standard errors assume `weights[i] = 1 / var(y[i])`.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64], weights: Option<&[f64]>) -> LeastSquares {
    let n = y.len();
    let p = columns.len();
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], |w| w.to_vec());
    let a = DMatrix::from_fn(n, p, |i, j| columns[j][i] * w[i].sqrt());
    let b = DVector::from_fn(n, |i, _| y[i] * w[i].sqrt());
    let svd = a.clone().svd(true, true);
    let beta = svd.solve(&b, 1e-14).expect("svd solve");
    let fitted = DMatrix::from_fn(n, p, |i, j| columns[j][i]) * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let ybar = y.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>() / w.iter().sum::<f64>();
    let ss_res: f64 = residuals.iter().zip(&w).map(|(r, wi)| wi * r * r).sum();
    let ss_tot: f64 = y.iter().zip(&w).map(|(v, wi)| wi * (v - ybar).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let sigma2 = if weights.is_some() {
        1.0
    } else if n > p {
        ss_res / (n - p) as f64
    } else {
        f64::NAN
    };
    let cov = (a.transpose() * &a)
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(p, p, f64::NAN));
    LeastSquares {
        coefficients: beta.iter().copied().collect(),
        stderr: (0..p).map(|j| (sigma2 * cov[(j, j)]).sqrt()).collect(),
        r_squared,
        residuals,
    }
}

/// Percentile bootstrap interval of `stat` over resamples of `rows`.
pub fn bootstrap_ci<T: Clone>(
    rows: &[T],
    resamples: usize,
    seed: u64,
    stat: impl Fn(&[T]) -> f64,
) -> (f64, f64) {
    let mut rng = NoiseStream::new(0.5, seed);
    let n = rows.len();
    let mut values: Vec<f64> = (0..resamples)
        .map(|_| {
            let sample: Vec<T> = (0..n)
                .map(|_| rows[((rng.next_unit() * n as f64) as usize).min(n - 1)].clone())
                .collect();
            stat(&sample)
        })
        .filter(|v| v.is_finite())
        .collect();
    values.sort_by(f64::total_cmp);
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let at = |q: f64| values[((q * (values.len() - 1) as f64).round() as usize).min(values.len() - 1)];
    (at(0.025), at(0.975))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_is_exact_for_repeated_terms() {
        let mut acc = Accumulator::default();
        for _ in 0..10_000_000 {
            acc.add(std::f64::consts::LN_2);
        }
        assert!((acc.mean() - std::f64::consts::LN_2).abs() < 1e-15);
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        a.add(1.0);
        b.add(1e-17);
        b.add(2.0);
        a.merge(&b);
        assert_eq!(a.count(), 3);
        assert_eq!(a.sum(), 3.0 + 1e-17);
    }

    #[test]
    fn wilson_reference_values() {
        // 50 of 100: centre 0.5, half width 0.0961 (textbook value)
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.2775).abs() < 1e-4);
    }

    #[test]
    fn fit_recovers_a_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let f = linear_fit(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let flat = linear_fit(&x, &vec![0.1 + 0.2; 20]);
        assert_eq!(flat.slope, 0.0);

        let cols = vec![vec![1.0; 20], x.clone(), x.iter().map(|v| v * v).collect()];
        let yq: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v - 0.1 * v * v).collect();
        let q = least_squares(&cols, &yq, None);
        assert!((q.coefficients[2] + 0.1).abs() < 1e-10);
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let xs: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let (lo, hi) = bootstrap_ci(&xs, 400, 1, mean);
        let m = mean(&xs);
        assert!(lo < m && m < hi);
    }
}
