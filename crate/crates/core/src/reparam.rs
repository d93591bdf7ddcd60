//! Reparametrizations of the multinomial: normalized independent gammas
//! (the Poisson route to the Dirichlet) and the ordered stick-breaking prior.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, Gamma};

use crate::error::{require_positive, Error, Result};
use crate::random::{beta_pair, RandomStream};
use crate::special::beta_cdf_unchecked;
use crate::stats::{
    ks_critical_1pct, ks_statistic, ks_two_sample, ks_two_sample_critical_1pct, median, stable_sum, Moments,
};

/// Acceptance band for moment comparisons, in standard errors.
pub const MOMENT_SIGMAS: f64 = 4.0;

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        Err(Error::InvalidInput(alloc::format!("m must be at least 2, got {m}")))
    } else {
        Ok(())
    }
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        Err(Error::InvalidInput("sample count must be positive".into()))
    } else {
        Ok(())
    }
}

/// `count` vectors `ψ/Σψ` with `ψⱼ ~ Gamma(a, beta)` independent
/// (shape–scale).
pub fn gamma_normalize_sample(
    a: f64,
    beta: f64,
    m: usize,
    count: usize,
    stream: RandomStream,
) -> Result<Vec<Vec<f64>>> {
    require_positive("gamma shape a", a)?;
    require_positive("gamma scale beta", beta)?;
    check_m(m)?;
    check_count(count)?;
    let dist = Gamma::new(a, beta).map_err(|e| Error::InvalidInput(alloc::format!("{e}")))?;
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut psi: Vec<f64> = (0..m).map(|_| dist.sample(&mut rng)).collect();
        let total: f64 = psi.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numerical(alloc::format!(
                "gamma draws sum to {total}; cannot normalize"
            )));
        }
        for p in psi.iter_mut() {
            *p /= total;
        }
        out.push(psi);
    }
    Ok(out)
}

/// Check of one scale `beta` against the Beta(a, (m-1)a) marginal of the
/// first coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaScaleCheck {
    pub beta: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub analytic_mean: f64,
    pub analytic_variance: f64,
    pub ks: f64,
    pub ks_critical: f64,
    pub moments_ok: bool,
    pub ks_ok: bool,
}

/// Agreement of two scales with each other.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossScaleCheck {
    pub betas: (f64, f64),
    /// Mean difference over its combined standard error.
    pub mean_z: f64,
    pub variance_z: f64,
    pub ks: f64,
    pub ks_critical: f64,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub a: f64,
    pub m: usize,
    pub count: usize,
    pub scales: Vec<BetaScaleCheck>,
    pub cross: Vec<CrossScaleCheck>,
    pub passed: bool,
}

/// Compares normalized gamma draws at each scale in `betas` (one substream
/// per scale) with the Dirichlet(a, …, a) marginal and with each other.
pub fn dirichlet_equivalence_report(
    a: f64,
    m: usize,
    count: usize,
    betas: &[f64],
    stream: RandomStream,
) -> Result<EquivalenceReport> {
    require_positive("gamma shape a", a)?;
    check_m(m)?;
    if count < 4 {
        return Err(Error::InvalidInput(alloc::format!(
            "need at least 4 draws, got {count}"
        )));
    }
    if betas.is_empty() {
        return Err(Error::InvalidInput("no scales given".into()));
    }
    let b = (m - 1) as f64 * a;
    let analytic_mean = a / (a + b);
    let analytic_variance = a * b / ((a + b) * (a + b) * (a + b + 1.0));
    let mut samples = Vec::with_capacity(betas.len());
    let mut scales = Vec::with_capacity(betas.len());
    for (k, &beta) in betas.iter().enumerate() {
        let draws = gamma_normalize_sample(a, beta, m, count, stream.substream(k as u64))?;
        let first: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let moments = Moments::of(&first)?;
        let ks = ks_statistic(&first, |x| beta_cdf_unchecked(x.clamp(0.0, 1.0), a, b))?;
        let ks_critical = ks_critical_1pct(count);
        let moments_ok = (moments.mean - analytic_mean).abs() <= MOMENT_SIGMAS * moments.mean_se()
            && (moments.variance - analytic_variance).abs() <= MOMENT_SIGMAS * moments.variance_se();
        scales.push(BetaScaleCheck {
            beta,
            mean: moments.mean,
            mean_se: moments.mean_se(),
            variance: moments.variance,
            variance_se: moments.variance_se(),
            analytic_mean,
            analytic_variance,
            ks,
            ks_critical,
            moments_ok,
            ks_ok: ks < ks_critical,
        });
        samples.push(first);
    }
    let mut cross = Vec::new();
    for i in 0..betas.len() {
        for j in i + 1..betas.len() {
            let (x, y) = (&scales[i], &scales[j]);
            let mean_z = (x.mean - y.mean).abs() / x.mean_se.hypot(y.mean_se);
            let variance_z = (x.variance - y.variance).abs() / x.variance_se.hypot(y.variance_se);
            let ks = ks_two_sample(&samples[i], &samples[j])?;
            let ks_critical = ks_two_sample_critical_1pct(count, count);
            cross.push(CrossScaleCheck {
                betas: (x.beta, y.beta),
                mean_z,
                variance_z,
                ks,
                ks_critical,
                agree: mean_z <= MOMENT_SIGMAS && variance_z <= MOMENT_SIGMAS && ks < ks_critical,
            });
        }
    }
    let passed = scales.iter().all(|s| s.moments_ok && s.ks_ok) && cross.iter().all(|c| c.agree);
    Ok(EquivalenceReport {
        a,
        m,
        count,
        scales,
        cross,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StickBreakingSample {
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
}

/// `θ_k = ξ_k ∏_{j<k}(1 - ξ_j)` for `k < m`; the last component is one minus
/// the others, clamped at zero.
pub fn stick_break(xi: &[f64]) -> Result<StickBreakingSample> {
    if xi.is_empty() {
        return Err(Error::InvalidInput("stick breaking needs at least one ξ".into()));
    }
    for &x in xi {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::domain("ξ", "a value in (0, 1)", x));
        }
    }
    let mut theta = Vec::with_capacity(xi.len() + 1);
    break_into(xi.iter().map(|&x| (x, 1.0 - x)), &mut theta);
    Ok(StickBreakingSample { xi: xi.to_vec(), theta })
}

/// Stick breaking from `(ξ, 1 - ξ)` pairs, the complement supplied so that
/// it stays accurate when `ξ` is close to 1.
fn break_into(pairs: impl Iterator<Item = (f64, f64)>, theta: &mut Vec<f64>) {
    theta.clear();
    let mut remaining = 1.0;
    for (x, complement) in pairs {
        theta.push(x * remaining);
        remaining *= complement;
    }
    let used = stable_sum(theta.iter().copied());
    theta.push((1.0 - used).max(0.0));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderedRow {
    pub k: usize,
    pub analytic_mean: f64,
    pub empirical_mean: f64,
    pub empirical_median: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderedDiagnostics {
    pub m: usize,
    pub count: usize,
    pub rows: Vec<OrderedRow>,
    /// First cell whose empirical mean is below `1/m`.
    pub k_star: Option<usize>,
    /// Largest `|Σθ - 1|` over the draws.
    pub max_simplex_error: f64,
    /// Smallest component over the draws.
    pub min_component: f64,
}

/// `E[θ_k]` under independent Beta(1/2, 1/2) sticks: `2^-k` for `k < m` and
/// `2^-(m-1)` for the last cell.
pub fn ordered_analytic_mean(k: usize, m: usize) -> f64 {
    let e = if k < m { k } else { m - 1 };
    0.5f64.powi(e as i32)
}

/// Per-cell summaries of the ordered prior with Beta(1/2, 1/2) sticks.
pub fn ordered_prior_diagnostics(m: usize, count: usize, stream: RandomStream) -> Result<OrderedDiagnostics> {
    check_m(m)?;
    if count < 4 {
        return Err(Error::InvalidInput(alloc::format!(
            "need at least 4 draws, got {count}"
        )));
    }
    let mut rng = stream.rng();
    let mut columns: Vec<Vec<f64>> = (0..m).map(|_| Vec::with_capacity(count)).collect();
    let mut theta = Vec::with_capacity(m);
    let mut max_simplex_error: f64 = 0.0;
    let mut min_component = f64::INFINITY;
    for _ in 0..count {
        let pairs: Vec<(f64, f64)> = (0..m - 1).map(|_| beta_pair(&mut rng, 0.5, 0.5)).collect();
        break_into(pairs.into_iter(), &mut theta);
        max_simplex_error = max_simplex_error.max((stable_sum(theta.iter().copied()) - 1.0).abs());
        for (column, &t) in columns.iter_mut().zip(&theta) {
            min_component = min_component.min(t);
            column.push(t);
        }
    }
    let mut rows = Vec::with_capacity(m);
    for (i, column) in columns.iter().enumerate() {
        let moments = Moments::of(column)?;
        rows.push(OrderedRow {
            k: i + 1,
            analytic_mean: ordered_analytic_mean(i + 1, m),
            empirical_mean: moments.mean,
            empirical_median: median(column)?,
            se: moments.mean_se(),
        });
    }
    let threshold = 1.0 / m as f64;
    let k_star = rows.iter().find(|r| r.empirical_mean < threshold).map(|r| r.k);
    Ok(OrderedDiagnostics {
        m,
        count,
        rows,
        k_star,
        max_simplex_error,
        min_component,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::log_gamma;

    #[test]
    fn normalized_gammas_lie_on_the_simplex() {
        for (a, beta, m) in [(0.3, 0.1, 2), (0.5, 1.0, 5), (2.0, 10.0, 20)] {
            let draws = gamma_normalize_sample(a, beta, m, 1000, RandomStream::new(11, 0)).unwrap();
            for d in draws {
                assert_eq!(d.len(), m);
                assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(d.iter().all(|&x| x >= 0.0));
            }
        }
        assert!(gamma_normalize_sample(0.0, 1.0, 3, 1, RandomStream::new(0, 0)).is_err());
        assert!(gamma_normalize_sample(1.0, 1.0, 1, 1, RandomStream::new(0, 0)).is_err());
    }

    #[test]
    fn three_cell_marginal_moments() {
        let draws = gamma_normalize_sample(0.5, 1.0, 3, 100_000, RandomStream::new(2, 0)).unwrap();
        let first: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let m = Moments::of(&first).unwrap();
        assert!((m.mean - 1.0 / 3.0).abs() < 3.0 * m.mean_se());
        // Beta(1/2, 1) variance (1/2·1)/((3/2)²(5/2))
        let var = 0.5 / (2.25 * 2.5);
        assert!((var - 0.0888888888888889).abs() < 1e-15);
        assert!((m.variance - var).abs() < 4.0 * m.variance_se());
    }

    #[test]
    fn equivalence_reports_pass() {
        let r = dirichlet_equivalence_report(0.5, 5, 100_000, &[0.1, 1.0, 10.0], RandomStream::new(42, 0)).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.cross.len(), 3);

        let uniform = dirichlet_equivalence_report(1.0, 2, 20_000, &[1.0], RandomStream::new(42, 1)).unwrap();
        assert!(uniform.scales[0].ks_ok);
        let arcsine = dirichlet_equivalence_report(0.5, 2, 20_000, &[1.0], RandomStream::new(42, 2)).unwrap();
        let s = &arcsine.scales[0];
        assert!((s.mean - 0.5).abs() < 3.0 * s.mean_se);
    }

    #[test]
    fn equivalence_detects_a_rate_scale_mixup() {
        // sampling with shape 2a instead of a must fail the KS check
        let draws = gamma_normalize_sample(1.0, 1.0, 5, 20_000, RandomStream::new(4, 0)).unwrap();
        let first: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let ks = ks_statistic(&first, |x| beta_cdf_unchecked(x.clamp(0.0, 1.0), 0.5, 2.0)).unwrap();
        assert!(ks > ks_critical_1pct(20_000));
    }

    #[test]
    fn stick_break_examples() {
        let s = stick_break(&[0.5, 0.5]).unwrap();
        assert_eq!(s.theta, alloc::vec![0.5, 0.25, 0.25]);
        let s = stick_break(&[0.999]).unwrap();
        assert!((s.theta[0] - 0.999).abs() < 1e-15 && (s.theta[1] - 0.001).abs() < 1e-15);
        assert!(stick_break(&[0.5, 1.0]).is_err());
        assert!(stick_break(&[0.0]).is_err());
        assert!(stick_break(&[]).is_err());
    }

    #[test]
    fn analytic_overlay() {
        assert_eq!(ordered_analytic_mean(9, 10), 0.5f64.powi(9));
        assert_eq!(ordered_analytic_mean(10, 10), 0.5f64.powi(9));
        let total: f64 = (1..=10).map(|k| ordered_analytic_mean(k, 10)).sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn ordered_diagnostics_at_three_cells() {
        let d = ordered_prior_diagnostics(3, 100_000, RandomStream::new(7, 0)).unwrap();
        for (row, expected) in d.rows.iter().zip([0.5, 0.25, 0.25]) {
            assert!((row.empirical_mean - expected).abs() < 4.0 * row.se, "{row:?}");
            assert_eq!(row.analytic_mean, expected);
        }
        let sum: f64 = d.rows.iter().map(|r| r.empirical_mean).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(d.max_simplex_error < 1e-12 && d.min_component >= 0.0);
        // 1/4 < 1/3 already at the second cell
        assert_eq!(d.k_star, Some(2));
    }

    #[test]
    fn ordered_mass_concentrates_on_early_cells() {
        let d = ordered_prior_diagnostics(50, 20_000, RandomStream::new(7, 1)).unwrap();
        // 2^-k < 1/50 from k = 6 on
        assert_eq!(d.k_star, Some(6));
        assert!(d.rows[0].empirical_median > d.rows[5].empirical_median);
    }

    fn ln_poisson(x: u64, mean: f64) -> f64 {
        x as f64 * mean.ln() - mean - log_gamma(x as f64 + 1.0).unwrap()
    }

    #[test]
    fn poisson_given_total_is_multinomial() {
        for psi in [[0.3, 1.7], [2.0, 2.0], [5.0, 0.1]] {
            let total = psi[0] + psi[1];
            for n in 0..=3u64 {
                for x in 0..=n {
                    let joint = ln_poisson(x, psi[0]) + ln_poisson(n - x, psi[1]);
                    let conditional = (joint - ln_poisson(n, total)).exp();
                    let p = psi[0] / total;
                    let binom = (1..=n).product::<u64>() as f64
                        / ((1..=x).product::<u64>() * (1..=n - x).product::<u64>()) as f64;
                    let multinomial = binom * p.powi(x as i32) * (1.0 - p).powi((n - x) as i32);
                    assert!((conditional - multinomial).abs() < 1e-14, "{psi:?} n={n} x={x}");
                }
            }
        }
    }
}
