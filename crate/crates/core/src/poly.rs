//! Dense real polynomials in ascending coefficient order.

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::constant(0.0);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative vanishing at zero.
    pub fn antiderivative(&self) -> Self {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(0.0);
        out.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c / (k as f64 + 1.0)),
        );
        Self::new(out)
    }

    pub fn integral_unit(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| c / (k as f64 + 1.0))
            .sum()
    }

    pub fn add(&self, other: &Poly) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(0.0)
                        + other.coeffs.get(k).copied().unwrap_or(0.0)
                })
                .collect(),
        )
    }

    /// Coefficients of `h -> p(c + h)` (Taylor shift by repeated synthetic division).
    pub fn taylor_at(&self, c: f64) -> Vec<f64> {
        let mut a = self.coeffs.clone();
        let n = a.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                a[j] += c * a[j + 1];
            }
        }
        a
    }

    /// `p(c + h) - p(c)` without cancellation for small `h`.
    #[inline]
    pub fn increment(&self, c: f64, h: f64) -> f64 {
        let t = self.taylor_at(c);
        t.iter().skip(1).rev().fold(0.0, |acc, &a| acc * h + a) * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calculus_roundtrip() {
        let p = Poly::new(vec![1.0, -2.0, 0.0, 4.0]);
        assert_eq!(p.antiderivative().derivative(), p);
        assert!((p.integral_unit() - (1.0 - 1.0 + 1.0)).abs() < 1e-15);
        assert_eq!(Poly::new(vec![3.0, 0.0, 0.0]).degree(), 0);
    }

    #[test]
    fn increment_is_accurate_for_tiny_steps() {
        let p = Poly::new(vec![0.0, 0.6, 0.0, 0.0, 49.0, -117.6, 98.0, -28.0]);
        let c = 0.37;
        let h = 1e-13;
        let exact_slope = p.derivative().eval(c);
        let rel = (p.increment(c, h) / h - exact_slope).abs() / exact_slope;
        assert!(rel < 1e-11, "rel = {rel}");
        let big = p.increment(c, 0.4);
        assert!((big - (p.eval(0.77) - p.eval(0.37))).abs() < 1e-13);
    }
}
