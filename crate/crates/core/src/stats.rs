//! Small statistical helpers shared by the Monte Carlo modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    let mut s = KahanSum::default();
    xs.iter().for_each(|x| s.add(*x));
    s.value() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let mut s = KahanSum::default();
    xs.iter().for_each(|x| s.add((x - m).powi(2)));
    s.value() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateFit("need at least two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite data".into()));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("abscissae have zero variance".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Exponent of a power law `y ~ x^k` by least squares in log-log.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if ys.iter().any(|y| !(*y > 0.0)) {
        return Err(Error::DegenerateFit("power-law fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

/// `log(mean(exp(v)))` without overflow.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut s = KahanSum::default();
    v.iter().for_each(|x| s.add((x - m).exp()));
    m + (s.value() / v.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert_eq!(f.r_squared, 1.0);
        let g = loglog_fit(&[1.0, 2.0, 4.0], &[3.0, 12.0, 48.0]).unwrap();
        assert!((g.slope - 2.0).abs() < 1e-12);
        assert!(loglog_fit(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 2.0]).is_err());
    }

    #[test]
    fn log_mean_exp_is_stable() {
        let v = [1000.0, 1000.0];
        assert!((log_mean_exp(&v) - 1000.0).abs() < 1e-12);
        assert!((log_mean_exp(&[0.0, 2f64.ln()]) - 1.5f64.ln()).abs() < 1e-15);
    }
}
