//! Posterior propriety: the posterior mass `∫ π L`, the Hölder bound
//! `∫ μ^α ν^{1-α} L ≤ (∫ μL)^α (∫ νL)^{1-α}` and its fold over a geometric
//! pool, which turns proper component posteriors into a proper pooled one.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::family::{xlogy, Family};
use crate::grid::{Grid, GridDensity};
use crate::pooling::PoolProblem;
use crate::quadrature::{integrate_log_values, QuadratureResult};
use crate::random::RandomStream;
use crate::DEFAULT_TOLERANCE;

/// Likelihood kernels `θ ↦ L(θ; x)`, without factors that do not depend on θ.
#[derive(Debug, Clone, PartialEq)]
pub enum LikelihoodModel {
    /// Unit-variance normal location: `exp(-Σ (θ - xᵢ)²/2)`.
    NormalLocation { observations: Vec<f64> },
    /// `θ^k (1-θ)^(n-k)` on [0, 1].
    Binomial { successes: u64, trials: u64 },
    /// Poisson rate: `θ^Σx e^{-nθ}` on [0, ∞).
    Poisson { counts: Vec<u64> },
    /// Multinomial counts seen through one cell probability `θ = p_cell`,
    /// i.e. the binomial kernel of the cell against all other cells.
    Multinomial { counts: Vec<u64>, cell: usize },
    /// Log-likelihood tabulated on the prior grid.
    Grid { log_likelihood: GridDensity },
}

impl LikelihoodModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LikelihoodModel::NormalLocation { observations } => {
                if let Some(&x) = observations.iter().find(|x| !x.is_finite()) {
                    return Err(Error::domain("normal observation", "a finite value", x));
                }
            }
            LikelihoodModel::Binomial { successes, trials } => {
                if successes > trials {
                    return Err(Error::InvalidInput(alloc::format!(
                        "{successes} successes out of {trials} trials"
                    )));
                }
            }
            LikelihoodModel::Poisson { .. } => {}
            LikelihoodModel::Multinomial { counts, cell } => {
                if *cell >= counts.len() {
                    return Err(Error::InvalidInput(alloc::format!(
                        "cell {cell} out of range for {} cells",
                        counts.len()
                    )));
                }
            }
            LikelihoodModel::Grid { .. } => {}
        }
        Ok(())
    }

    /// Closed parameter set on which the kernel is defined.
    pub fn support(&self) -> (f64, f64) {
        match self {
            LikelihoodModel::NormalLocation { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            LikelihoodModel::Binomial { .. } | LikelihoodModel::Multinomial { .. } => (0.0, 1.0),
            LikelihoodModel::Poisson { .. } => (0.0, f64::INFINITY),
            LikelihoodModel::Grid { log_likelihood } => (log_likelihood.domain_lo(), log_likelihood.domain_hi()),
        }
    }

    /// `ln L(θ)` for the closed-form families; `-∞` outside the support.
    /// Grid likelihoods are only defined at their nodes, see [`Self::tabulate`].
    pub fn log_likelihood(&self, theta: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(theta >= lo && theta <= hi) {
            return f64::NEG_INFINITY;
        }
        match self {
            LikelihoodModel::NormalLocation { observations } => {
                -0.5 * observations.iter().map(|x| (theta - x) * (theta - x)).sum::<f64>()
            }
            LikelihoodModel::Binomial { successes, trials } => binomial_kernel(theta, *successes, trials - successes),
            LikelihoodModel::Poisson { counts } => {
                let total: u64 = counts.iter().sum();
                xlogy(total as f64, theta) - counts.len() as f64 * theta
            }
            LikelihoodModel::Multinomial { counts, cell } => {
                let n: u64 = counts.iter().sum();
                binomial_kernel(theta, counts[*cell], n - counts[*cell])
            }
            LikelihoodModel::Grid { .. } => f64::NAN,
        }
    }

    /// `ln L` at every node of `grid`.
    pub fn tabulate(&self, grid: &Arc<Grid>) -> Result<Vec<f64>> {
        self.validate()?;
        if let LikelihoodModel::Grid { log_likelihood } = self {
            if !log_likelihood.grid().same_as(grid) {
                return Err(Error::InvalidInput(
                    "grid likelihood is tabulated on a different grid".into(),
                ));
            }
            return Ok(log_likelihood.log_values().to_vec());
        }
        let (lo, hi) = self.support();
        if grid.domain_lo() < lo || grid.domain_hi() > hi {
            return Err(Error::InvalidInput(alloc::format!(
                "prior domain ({}, {}) exceeds the likelihood parameter space ({lo}, {hi})",
                grid.domain_lo(),
                grid.domain_hi()
            )));
        }
        Ok(grid.nodes().iter().map(|&t| self.log_likelihood(t)).collect())
    }
}

fn binomial_kernel(theta: f64, k: u64, rest: u64) -> f64 {
    xlogy(k as f64, theta) + if rest == 0 { 0.0 } else { rest as f64 * (-theta).ln_1p() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProprietyVerdict {
    pub mass: QuadratureResult,
    pub proper: bool,
    /// Which tail or endpoint made the posterior improper, if any.
    pub diagnostics: Option<String>,
}

impl ProprietyVerdict {
    pub(crate) fn from_mass(mass: QuadratureResult, tol: f64) -> Self {
        let proper = mass.converged && mass.value.is_finite() && mass.value > 0.0;
        let diagnostics = if proper {
            None
        } else if let Some(d) = mass.divergence {
            Some(alloc::format!("{d}"))
        } else if mass.diverged {
            Some("integral diverges".into())
        } else if !(mass.value > 0.0) {
            Some(alloc::format!("posterior mass is {}", mass.value))
        } else {
            Some(alloc::format!(
                "quadrature did not converge: error estimate {:.3e} exceeds {tol:.1e} relative",
                mass.abs_error_estimate
            ))
        };
        ProprietyVerdict {
            mass,
            proper,
            diagnostics,
        }
    }
}

fn add_logs(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `∫ π(θ) L(θ; x) dθ` with its propriety verdict.
pub fn posterior_mass(prior: &GridDensity, likelihood: &LikelihoodModel) -> Result<ProprietyVerdict> {
    posterior_mass_with_tolerance(prior, likelihood, DEFAULT_TOLERANCE)
}

pub fn posterior_mass_with_tolerance(
    prior: &GridDensity,
    likelihood: &LikelihoodModel,
    tol: f64,
) -> Result<ProprietyVerdict> {
    let loglik = likelihood.tabulate(prior.grid())?;
    let mass = integrate_log_values(prior.grid(), &add_logs(prior.log_values(), &loglik), tol)?;
    Ok(ProprietyVerdict::from_mass(mass, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HolderStatus {
    /// `lhs ≤ rhs +` combined quadrature error.
    Holds,
    /// Outside the error bars but not far enough, or with an unconverged
    /// left side, to count as a counterexample.
    Inconclusive,
    Violated,
}

/// How far beyond the stated error bars a violation must reach before it is
/// reported as such: quadrature error estimates are themselves estimates.
const VIOLATION_SLACK: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HolderReport {
    pub alpha: f64,
    /// `∫ μ^α ν^{1-α} L`.
    pub lhs: QuadratureResult,
    /// `(∫ μL)^α (∫ νL)^{1-α}`.
    pub rhs: f64,
    pub rhs_error: f64,
    pub status: HolderStatus,
}

impl HolderReport {
    pub fn holds(&self) -> bool {
        self.status == HolderStatus::Holds
    }

    pub fn combined_error(&self) -> f64 {
        self.lhs.abs_error_estimate + self.rhs_error
    }
}

/// Hölder comparison from already verified hypothesis masses.
#[allow(clippy::too_many_arguments)]
fn holder_from_parts(
    grid: &Grid,
    mu: &[f64],
    mu_mass: &QuadratureResult,
    nu: &[f64],
    nu_mass: &QuadratureResult,
    alpha: f64,
    loglik: &[f64],
    tol: f64,
) -> Result<HolderReport> {
    let beta = 1.0 - alpha;
    let mixed: Vec<f64> = mu
        .iter()
        .zip(nu)
        .zip(loglik)
        .map(|((m, n), l)| {
            let prior = match (*m == f64::NEG_INFINITY, *n == f64::NEG_INFINITY) {
                (false, false) => alpha * m + beta * n,
                _ => f64::NEG_INFINITY,
            };
            prior + l
        })
        .collect();
    let lhs = integrate_log_values(grid, &mixed, tol)?;
    let rhs = mu_mass.value.powf(alpha) * nu_mass.value.powf(beta);
    let rhs_error =
        rhs * (alpha * mu_mass.abs_error_estimate / mu_mass.value + beta * nu_mass.abs_error_estimate / nu_mass.value);
    let err = lhs.abs_error_estimate + rhs_error;
    let status = if lhs.diverged {
        HolderStatus::Violated
    } else if lhs.value <= rhs + err {
        HolderStatus::Holds
    } else if !lhs.converged || lhs.value <= rhs + VIOLATION_SLACK * err + 1e-12 * rhs {
        HolderStatus::Inconclusive
    } else {
        HolderStatus::Violated
    };
    Ok(HolderReport {
        alpha,
        lhs,
        rhs,
        rhs_error,
        status,
    })
}

fn require_proper(name: &str, verdict: &ProprietyVerdict) -> Result<()> {
    if verdict.proper {
        Ok(())
    } else {
        Err(Error::Precondition(alloc::format!(
            "the posterior under {name} is not proper: {}",
            verdict.diagnostics.as_deref().unwrap_or("no diagnostic")
        )))
    }
}

/// Checks the Hölder bound for the pair `(μ, ν)`. Both hypothesis posteriors
/// must be proper.
pub fn holder_check(
    mu: &GridDensity,
    nu: &GridDensity,
    alpha: f64,
    likelihood: &LikelihoodModel,
) -> Result<HolderReport> {
    holder_check_with_tolerance(mu, nu, alpha, likelihood, DEFAULT_TOLERANCE)
}

pub fn holder_check_with_tolerance(
    mu: &GridDensity,
    nu: &GridDensity,
    alpha: f64,
    likelihood: &LikelihoodModel,
    tol: f64,
) -> Result<HolderReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("Hölder exponent alpha", "0 < alpha < 1", alpha));
    }
    if !mu.shares_grid(nu) {
        return Err(Error::InvalidInput("μ and ν are tabulated on different grids".into()));
    }
    let mu_verdict = posterior_mass_with_tolerance(mu, likelihood, tol)?;
    require_proper("μ", &mu_verdict)?;
    let nu_verdict = posterior_mass_with_tolerance(nu, likelihood, tol)?;
    require_proper("ν", &nu_verdict)?;
    let loglik = likelihood.tabulate(mu.grid())?;
    holder_from_parts(
        mu.grid(),
        mu.log_values(),
        &mu_verdict.mass,
        nu.log_values(),
        &nu_verdict.mass,
        alpha,
        &loglik,
        tol,
    )
}

/// One application of the two-prior bound while folding a pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldStep {
    /// Component folded into the running pool.
    pub component: usize,
    pub report: HolderReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledPropriety {
    /// Verdict for the unnormalized pool `∏ πᵢ^{αᵢ}`.
    pub verdict: ProprietyVerdict,
    /// `∏ (∫ πᵢ L)^{αᵢ}`.
    pub bound: f64,
    pub bound_error: f64,
    pub status: HolderStatus,
    /// Hypothesis masses `∫ πᵢ L`, in component order.
    pub component_masses: Vec<QuadratureResult>,
    /// The two-prior bound applied in index order.
    pub steps: Vec<FoldStep>,
}

/// Propriety of the posterior under the geometric pool, with the bound
/// checked both directly and by folding the components in index order.
pub fn pooled_propriety(problem: &PoolProblem, likelihood: &LikelihoodModel) -> Result<PooledPropriety> {
    pooled_propriety_with_tolerance(problem, likelihood, DEFAULT_TOLERANCE)
}

pub fn pooled_propriety_with_tolerance(
    problem: &PoolProblem,
    likelihood: &LikelihoodModel,
    tol: f64,
) -> Result<PooledPropriety> {
    let components = problem.components();
    let alphas = problem.weights().alphas();
    let grid = components[0].grid();
    let loglik = likelihood.tabulate(grid)?;
    let mut masses = Vec::with_capacity(components.len());
    for (i, c) in components.iter().enumerate() {
        let v = posterior_mass_with_tolerance(c, likelihood, tol)?;
        require_proper(&alloc::format!("component {i}"), &v)?;
        masses.push(v.mass);
    }

    let pool = problem.log_pool();
    let mass = integrate_log_values(grid, &add_logs(&pool, &loglik), tol)?;
    let verdict = ProprietyVerdict::from_mass(mass, tol);
    if !verdict.proper {
        return Err(Error::InternalConsistency(alloc::format!(
            "every component posterior is proper but the pooled one is not: {}",
            verdict.diagnostics.as_deref().unwrap_or("no diagnostic")
        )));
    }
    let log_bound: f64 = masses.iter().zip(alphas).map(|(m, a)| a * m.value.ln()).sum();
    let bound = log_bound.exp();
    let bound_error = bound
        * masses
            .iter()
            .zip(alphas)
            .map(|(m, a)| a * m.abs_error_estimate / m.value)
            .sum::<f64>();
    let err = verdict.mass.abs_error_estimate + bound_error;
    let status = if verdict.mass.value <= bound + err {
        HolderStatus::Holds
    } else if verdict.mass.value <= bound + VIOLATION_SLACK * err + 1e-12 * bound {
        HolderStatus::Inconclusive
    } else {
        HolderStatus::Violated
    };
    if status == HolderStatus::Violated {
        return Err(Error::InternalConsistency(alloc::format!(
            "pooled mass {} exceeds the Hölder bound {} beyond the error {}",
            verdict.mass.value,
            bound,
            err
        )));
    }

    // fold: ρ ← ρ^{s/(s+αⱼ)} πⱼ^{αⱼ/(s+αⱼ)}, s the weight folded so far
    let mut steps = Vec::new();
    let active: Vec<usize> = (0..components.len()).filter(|&i| alphas[i] > 0.0).collect();
    let first = active[0];
    let mut running = components[first].log_values().to_vec();
    let mut running_mass = masses[first];
    let mut folded = alphas[first];
    for &j in &active[1..] {
        let total = folded + alphas[j];
        let a = folded / total;
        let report = holder_from_parts(
            grid,
            &running,
            &running_mass,
            components[j].log_values(),
            &masses[j],
            a,
            &loglik,
            tol,
        )?;
        if report.status == HolderStatus::Violated {
            return Err(Error::InternalConsistency(alloc::format!(
                "folding component {j}: mass {} exceeds the bound {}",
                report.lhs.value,
                report.rhs
            )));
        }
        running = running
            .iter()
            .zip(components[j].log_values())
            .map(|(r, c)| {
                if *r == f64::NEG_INFINITY || *c == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    a * r + (1.0 - a) * c
                }
            })
            .collect();
        running_mass = report.lhs;
        folded = total;
        steps.push(FoldStep { component: j, report });
    }

    Ok(PooledPropriety {
        verdict,
        bound,
        bound_error,
        status,
        component_masses: masses,
        steps,
    })
}

/// A randomly drawn hypothesis pair for the Hölder suite.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderInstance {
    pub mu: Family,
    pub nu: Family,
    pub alpha: f64,
    pub likelihood: LikelihoodModel,
    pub grid: Arc<Grid>,
}

impl HolderInstance {
    pub fn priors(&self) -> Result<(GridDensity, GridDensity)> {
        Ok((
            self.mu.tabulate(self.grid.clone())?,
            self.nu.tabulate(self.grid.clone())?,
        ))
    }
}

/// Draws priors from the Beta, Gamma or exponential-tilt families with a
/// matching normal-location or binomial likelihood.
pub fn random_holder_instance(stream: RandomStream, nodes: usize) -> Result<HolderInstance> {
    let mut rng = stream.rng();
    let alpha = rng.random_range(0.02..0.98);
    let kind = rng.random_range(0..3u32);
    let normal = |rng: &mut rand_chacha::ChaCha20Rng, centre: f64| {
        let k = rng.random_range(1..=5usize);
        let observations = (0..k).map(|_| centre + rng.random_range(-2.0..2.0)).collect();
        LikelihoodModel::NormalLocation { observations }
    };
    let (mu, nu, likelihood) = match kind {
        0 => {
            let draw = |rng: &mut rand_chacha::ChaCha20Rng| Family::Beta {
                a: rng.random_range(0.2..5.0),
                b: rng.random_range(0.2..5.0),
            };
            let (mu, nu) = (draw(&mut rng), draw(&mut rng));
            let likelihood = if rng.random_bool(0.5) {
                let trials = rng.random_range(0..=20u64);
                LikelihoodModel::Binomial {
                    successes: rng.random_range(0..=trials),
                    trials,
                }
            } else {
                normal(&mut rng, 0.5)
            };
            (mu, nu, likelihood)
        }
        1 => {
            let draw = |rng: &mut rand_chacha::ChaCha20Rng| Family::Gamma {
                shape: rng.random_range(0.2..5.0),
                scale: rng.random_range(0.2..5.0),
            };
            let (mu, nu) = (draw(&mut rng), draw(&mut rng));
            let centre = rng.random_range(0.0..5.0);
            (mu, nu, normal(&mut rng, centre))
        }
        _ => {
            let draw = |rng: &mut rand_chacha::ChaCha20Rng| Family::ExpTilt {
                rate: rng.random_range(-3.0..3.0),
            };
            let (mu, nu) = (draw(&mut rng), draw(&mut rng));
            let centre = rng.random_range(-3.0..3.0);
            (mu, nu, normal(&mut rng, centre))
        }
    };
    let spec = match kind {
        0 => mu.default_grid_spec(nodes),
        1 => crate::grid::GridSpec::positive_half_line(nodes),
        _ => crate::grid::GridSpec::real_line(nodes),
    };
    Ok(HolderInstance {
        mu,
        nu,
        alpha,
        likelihood,
        grid: Grid::from_spec(spec)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::pooling::PoolWeights;
    use core::f64::consts::PI;

    fn line() -> Arc<Grid> {
        Grid::from_spec(GridSpec::real_line(2049)).unwrap()
    }

    fn tilt(grid: &Arc<Grid>, b: f64) -> GridDensity {
        Family::ExpTilt { rate: b }.tabulate(grid.clone()).unwrap()
    }

    fn normal_at(x: f64) -> LikelihoodModel {
        LikelihoodModel::NormalLocation {
            observations: alloc::vec![x],
        }
    }

    /// `∫ e^{bθ} e^{-(θ-x)²/2} dθ`.
    fn gaussian_oracle(b: f64, x: f64) -> f64 {
        (2.0 * PI).sqrt() * (b * x + 0.5 * b * b).exp()
    }

    #[test]
    fn posterior_mass_examples() {
        let g = line();
        let flat = posterior_mass(&tilt(&g, 0.0), &normal_at(0.0)).unwrap();
        assert!(flat.proper);
        assert!((flat.mass.value / gaussian_oracle(0.0, 0.0) - 1.0).abs() < 1e-8);

        let e = posterior_mass(&tilt(&g, 1.0), &normal_at(0.0)).unwrap();
        assert!(e.proper);
        assert!((e.mass.value / gaussian_oracle(1.0, 0.0) - 1.0).abs() < 1e-8);

        let sq = Family::QuadraticTilt { coef: 1.0 }.tabulate(g).unwrap();
        let v = posterior_mass(&sq, &normal_at(0.0)).unwrap();
        assert!(!v.proper && v.mass.diverged);
        assert!(v.diagnostics.is_some());
    }

    #[test]
    fn domain_mismatch_is_an_input_error() {
        let binomial = LikelihoodModel::Binomial {
            successes: 1,
            trials: 3,
        };
        assert!(matches!(
            posterior_mass(&tilt(&line(), 0.0), &binomial),
            Err(Error::InvalidInput(_))
        ));
        let bad = LikelihoodModel::Binomial {
            successes: 4,
            trials: 3,
        };
        let unit = Family::Beta { a: 1.0, b: 1.0 }
            .tabulate(Grid::from_spec(GridSpec::unit_interval(257)).unwrap())
            .unwrap();
        assert!(posterior_mass(&unit, &bad).is_err());
    }

    #[test]
    fn closed_form_likelihoods() {
        let unit = Grid::from_spec(GridSpec::unit_interval(2049)).unwrap();
        let flat = Family::Beta { a: 1.0, b: 1.0 }.tabulate(unit.clone()).unwrap();
        // ∫ θ²(1-θ)³ = B(3, 4) = 1/60
        let v = posterior_mass(
            &flat,
            &LikelihoodModel::Binomial {
                successes: 2,
                trials: 5,
            },
        )
        .unwrap();
        assert!((v.mass.value - 1.0 / 60.0).abs() < 1e-12);
        let m = LikelihoodModel::Multinomial {
            counts: alloc::vec![2, 1, 2],
            cell: 0,
        };
        assert!((posterior_mass(&flat, &m).unwrap().mass.value - 1.0 / 60.0).abs() < 1e-12);

        // ∫ θ³ e^{-2θ} = Γ(4)/2⁴
        let half = Grid::from_spec(GridSpec::positive_half_line(2049)).unwrap();
        let flat = GridDensity::from_log_fn(half, |_| 0.0).unwrap();
        let v = posterior_mass(
            &flat,
            &LikelihoodModel::Poisson {
                counts: alloc::vec![1, 2],
            },
        )
        .unwrap();
        assert!((v.mass.value - 6.0 / 16.0).abs() < 1e-11, "{v:?}");
    }

    #[test]
    fn holder_examples() {
        let g = line();
        let (flat, e) = (tilt(&g, 0.0), tilt(&g, 1.0));
        let same = holder_check(&e, &e, 0.3, &normal_at(0.0)).unwrap();
        assert!((same.lhs.value / same.rhs - 1.0).abs() < 1e-10);
        assert!(same.holds());

        let r = holder_check(&flat, &e, 0.5, &normal_at(0.0)).unwrap();
        assert!((r.lhs.value / gaussian_oracle(0.5, 0.0) - 1.0).abs() < 1e-8);
        let rhs = (gaussian_oracle(0.0, 0.0) * gaussian_oracle(1.0, 0.0)).sqrt();
        assert!((r.rhs / rhs - 1.0).abs() < 1e-8);
        assert!(r.holds() && r.lhs.value < r.rhs);

        // α weights μ = flat, so α → 1 tends to ∫ flat·L
        let near = holder_check(&flat, &e, 0.999, &normal_at(0.0)).unwrap();
        let oracle = gaussian_oracle(0.001, 0.0);
        assert!((near.lhs.value / oracle - 1.0).abs() < 1e-8);
        assert!((near.lhs.value / gaussian_oracle(0.0, 0.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn holder_symmetry() {
        let g = line();
        let (a, b) = (tilt(&g, -0.7), tilt(&g, 1.3));
        let like = normal_at(0.4);
        let r1 = holder_check(&a, &b, 0.3, &like).unwrap();
        let r2 = holder_check(&b, &a, 0.7, &like).unwrap();
        assert!((r1.lhs.value - r2.lhs.value).abs() <= 1e-12 * r1.lhs.value);
        assert!((r1.rhs - r2.rhs).abs() <= 1e-12 * r1.rhs);
    }

    #[test]
    fn holder_rejects_improper_hypotheses_and_bad_alpha() {
        let g = line();
        let sq = Family::QuadraticTilt { coef: 1.0 }.tabulate(g.clone()).unwrap();
        match holder_check(&tilt(&g, 0.0), &sq, 0.5, &normal_at(0.0)) {
            Err(Error::Precondition(msg)) => assert!(msg.contains('ν')),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            holder_check(&tilt(&g, 0.0), &tilt(&g, 0.0), 1.0, &normal_at(0.0)),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn proportional_pairs_attain_equality() {
        // μ·L and ν·L proportional: ν = c·μ
        let g = line();
        let mu = tilt(&g, 0.8);
        let nu = mu
            .with_log_values(mu.log_values().iter().map(|l| l + 3.0).collect())
            .unwrap();
        let r = holder_check(&mu, &nu, 0.4, &normal_at(-1.0)).unwrap();
        assert!((r.lhs.value / r.rhs - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pooled_propriety_examples() {
        let g = line();
        let like = normal_at(0.0);
        let single = PoolProblem::new(alloc::vec![tilt(&g, 1.0)], PoolWeights::new(alloc::vec![1.0]).unwrap()).unwrap();
        let p = pooled_propriety(&single, &like).unwrap();
        let direct = posterior_mass(&tilt(&g, 1.0), &like).unwrap();
        assert_eq!(p.verdict, direct);
        assert!(p.steps.is_empty());

        let pair = PoolProblem::new(
            alloc::vec![tilt(&g, 0.0), tilt(&g, 1.0)],
            PoolWeights::uniform(2).unwrap(),
        )
        .unwrap();
        let p = pooled_propriety(&pair, &like).unwrap();
        assert!(p.verdict.proper);
        assert!((p.verdict.mass.value / gaussian_oracle(0.5, 0.0) - 1.0).abs() < 1e-8);
        let bound = (gaussian_oracle(0.0, 0.0) * gaussian_oracle(1.0, 0.0)).sqrt();
        assert!((p.bound / bound - 1.0).abs() < 1e-8);
        assert_eq!(p.status, HolderStatus::Holds);

        let w = 1.0 / 3.0;
        let triple = PoolProblem::new(
            alloc::vec![tilt(&g, 0.0), tilt(&g, 1.0), tilt(&g, -1.0)],
            PoolWeights::new(alloc::vec![w, w, 1.0 - 2.0 * w]).unwrap(),
        )
        .unwrap();
        let p = pooled_propriety(&triple, &like).unwrap();
        assert!((p.verdict.mass.value / gaussian_oracle(0.0, 0.0) - 1.0).abs() < 1e-8);
        let bound = gaussian_oracle(0.0, 0.0).powf(w)
            * gaussian_oracle(1.0, 0.0).powf(w)
            * gaussian_oracle(-1.0, 0.0).powf(1.0 - 2.0 * w);
        assert!((p.bound / bound - 1.0).abs() < 1e-8);
        assert_eq!(p.steps.len(), 2);
        assert!(p.steps.iter().all(|s| s.report.holds()));
        // the fold ends at the pooled posterior itself
        let last = &p.steps[1].report.lhs;
        assert!((last.value / p.verdict.mass.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pooled_propriety_requires_proper_components() {
        let g = line();
        let sq = Family::QuadraticTilt { coef: 1.0 }.tabulate(g.clone()).unwrap();
        let p = PoolProblem::new(alloc::vec![tilt(&g, 0.0), sq], PoolWeights::uniform(2).unwrap()).unwrap();
        match pooled_propriety(&p, &normal_at(0.0)) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("component 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn randomized_instances_satisfy_the_bound() {
        for k in 0..40 {
            let inst = random_holder_instance(RandomStream::new(2024, k), 2049).unwrap();
            let (mu, nu) = inst.priors().unwrap();
            let r = holder_check(&mu, &nu, inst.alpha, &inst.likelihood).unwrap();
            assert!(r.holds(), "{inst:?}: {r:?}");
            let p = PoolProblem::new(
                alloc::vec![mu, nu],
                PoolWeights::new(alloc::vec![inst.alpha, 1.0 - inst.alpha]).unwrap(),
            )
            .unwrap();
            assert!(pooled_propriety(&p, &inst.likelihood).unwrap().verdict.proper);
        }
    }
}
