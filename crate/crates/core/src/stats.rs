//! Sample summaries and the goodness-of-fit statistics used by the Monte Carlo
//! checks.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Compensated (Neumaier) sum.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// First two sample moments plus the fourth central moment needed for the
/// standard error of the variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub fourth_central: f64,
}

impl Moments {
    pub fn of(sample: &[f64]) -> Result<Self> {
        let count = sample.len();
        if count < 4 {
            return Err(Error::InvalidInput(alloc::format!(
                "moments need at least 4 draws, got {count}"
            )));
        }
        let n = count as f64;
        let mean = stable_sum(sample.iter().copied()) / n;
        let m2 = stable_sum(sample.iter().map(|x| (x - mean).powi(2)));
        let m4 = stable_sum(sample.iter().map(|x| (x - mean).powi(4))) / n;
        Ok(Moments {
            count,
            mean,
            variance: m2 / (n - 1.0),
            fourth_central: m4,
        })
    }

    pub fn mean_se(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn variance_se(&self) -> f64 {
        let n = self.count as f64;
        let s4 = self.variance * self.variance;
        ((self.fourth_central - s4 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    s
}

/// Median; the mean of the two middle values for even sizes.
pub fn median(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("median of an empty sample".into()));
    }
    let s = sorted(sample);
    let k = s.len() / 2;
    Ok(if s.len() % 2 == 1 {
        s[k]
    } else {
        0.5 * (s[k - 1] + s[k])
    })
}

/// Kolmogorov–Smirnov distance between the empirical CDF and `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("KS statistic of an empty sample".into()));
    }
    let s = sorted(sample);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// One-sample KS critical value at the 1% level (Stephens' approximation).
pub fn ks_critical_1pct(n: usize) -> f64 {
    let rn = (n as f64).sqrt();
    1.628 / (rn + 0.12 + 0.11 / rn)
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("KS statistic of an empty sample".into()));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic two-sample KS critical value at the 1% level.
pub fn ks_two_sample_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}
