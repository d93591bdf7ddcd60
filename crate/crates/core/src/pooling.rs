//! Linear and logarithmic pooling of priors tabulated on a common grid, the
//! weighted Kullback–Leibler objective `d(η) = Σ αᵢ KL(η ‖ πᵢ)` and a
//! randomized check that the logarithmic pool minimizes it.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::GridDensity;
use crate::quadrature::{integrate, integrate_product, normalize, normalize_with_tolerance, quantile};
use crate::random::RandomStream;
use crate::DEFAULT_TOLERANCE;

/// Largest allowed deviation of `Σ αᵢ` from one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolWeights {
    alphas: Vec<f64>,
}

impl PoolWeights {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidInput("pool weights are empty".into()));
        }
        if let Some(&a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::domain("pool weight", "a finite value >= 0", a));
        }
        let total: f64 = alphas.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidInput(alloc::format!(
                "pool weights sum to {total}, not 1"
            )));
        }
        Ok(PoolWeights { alphas })
    }

    /// `n` equal weights.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(alloc::vec![1.0 / n as f64; n])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

/// Component priors on one shared grid with their pooling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolProblem {
    components: Vec<GridDensity>,
    weights: PoolWeights,
}

impl PoolProblem {
    pub fn new(components: Vec<GridDensity>, weights: PoolWeights) -> Result<Self> {
        if components.len() != weights.alphas.len() {
            return Err(Error::InvalidInput(alloc::format!(
                "{} components but {} weights",
                components.len(),
                weights.alphas.len()
            )));
        }
        let first = &components[0];
        if let Some(k) = components.iter().position(|c| !c.shares_grid(first)) {
            return Err(Error::InvalidInput(alloc::format!(
                "component {k} is not tabulated on the grid of component 0"
            )));
        }
        Ok(PoolProblem { components, weights })
    }

    pub fn components(&self) -> &[GridDensity] {
        &self.components
    }

    pub fn weights(&self) -> &PoolWeights {
        &self.weights
    }

    /// The same problem with each component's log-density shifted by
    /// `log_scales[i]`, i.e. multiplied by `exp(log_scales[i])`.
    pub fn rescaled(&self, log_scales: &[f64]) -> Result<Self> {
        if log_scales.len() != self.components.len() {
            return Err(Error::InvalidInput("one scale per component is required".into()));
        }
        let components = self
            .components
            .iter()
            .zip(log_scales)
            .map(|(c, s)| c.with_log_values(c.log_values().iter().map(|l| l + s).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components, self.weights.clone())
    }

    /// `Σ αᵢ log πᵢ` node-wise, skipping zero weights so that `0·(-∞)`
    /// contributes nothing.
    pub fn log_pool(&self) -> Vec<f64> {
        let n = self.components[0].len();
        (0..n)
            .map(|k| {
                self.components
                    .iter()
                    .zip(&self.weights.alphas)
                    .filter(|(_, &a)| a > 0.0)
                    .map(|(c, &a)| a * c.log_values()[k])
                    .sum()
            })
            .collect()
    }
}

/// Result of a pooling operation.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDensity {
    pub density: GridDensity,
    /// Why the pool could not be normalized, when it could not.
    pub impropriety: Option<String>,
}

impl PooledDensity {
    pub fn is_proper(&self) -> bool {
        self.impropriety.is_none()
    }
}

/// Logarithmic pool `π_G ∝ ∏ πᵢ^{αᵢ}`, normalized when integrable.
pub fn geometric_pool(problem: &PoolProblem) -> Result<PooledDensity> {
    geometric_pool_with_tolerance(problem, DEFAULT_TOLERANCE)
}

pub fn geometric_pool_with_tolerance(problem: &PoolProblem, tol: f64) -> Result<PooledDensity> {
    let grid = problem.components[0].grid().clone();
    let raw = GridDensity::new(grid, problem.log_pool(), false)?;
    match normalize_with_tolerance(&raw, tol) {
        Ok(density) => Ok(PooledDensity {
            density,
            impropriety: None,
        }),
        Err(Error::ImproperDensity(why)) => Ok(PooledDensity {
            density: raw,
            impropriety: Some(why),
        }),
        Err(e) => Err(e),
    }
}

/// Linear pool `Σ αᵢ πᵢ` of normalized components.
pub fn arithmetic_pool(problem: &PoolProblem) -> Result<PooledDensity> {
    if let Some(k) = problem.components.iter().position(|c| !c.is_normalized()) {
        return Err(Error::InvalidInput(alloc::format!(
            "component {k} is unnormalized; a linear pool depends on the arbitrary scale of each \
             component, so only normalized components are accepted"
        )));
    }
    let n = problem.components[0].len();
    let log_values = (0..n)
        .map(|k| {
            let terms: Vec<f64> = problem
                .components
                .iter()
                .zip(&problem.weights.alphas)
                .filter(|(_, &a)| a > 0.0)
                .map(|(c, &a)| a.ln() + c.log_values()[k])
                .collect();
            log_sum_exp(&terms)
        })
        .collect();
    let grid = problem.components[0].grid().clone();
    Ok(PooledDensity {
        density: GridDensity::new(grid, log_values, true)?,
        impropriety: None,
    })
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// Value of `d(η)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlObjective {
    /// `+∞` on a support violation.
    pub value: f64,
    pub abs_error_estimate: f64,
    /// Some weighted component is unnormalized, so `value` is defined only
    /// up to an additive constant; differences between two `η` are exact.
    pub up_to_constant: bool,
    /// `η > 0` at a node where a weighted component vanishes.
    pub support_violation: bool,
}

/// `d(η) = Σ αᵢ ∫ η ln(η/πᵢ)`, computed as `∫ η (ln η - Σ αᵢ ln πᵢ)`.
pub fn kl_objective(eta: &GridDensity, problem: &PoolProblem) -> Result<KlObjective> {
    if !eta.is_normalized() {
        return Err(Error::InvalidInput("d(η) needs a normalized η".into()));
    }
    if !eta.shares_grid(&problem.components[0]) {
        return Err(Error::InvalidInput("η is not tabulated on the problem grid".into()));
    }
    let up_to_constant = problem
        .components
        .iter()
        .zip(&problem.weights.alphas)
        .any(|(c, &a)| a > 0.0 && !c.is_normalized());
    let pool = problem.log_pool();
    let mut factor = Vec::with_capacity(pool.len());
    for (&le, &lp) in eta.log_values().iter().zip(&pool) {
        if le == f64::NEG_INFINITY {
            factor.push(0.0);
        } else if lp == f64::NEG_INFINITY {
            return Ok(KlObjective {
                value: f64::INFINITY,
                abs_error_estimate: 0.0,
                up_to_constant,
                support_violation: true,
            });
        } else {
            factor.push(le - lp);
        }
    }
    let r = integrate_product(eta, &factor, DEFAULT_TOLERANCE)?;
    if r.diverged {
        return Err(Error::Numerical("∫ η ln(η/π) diverges for a normalized η".into()));
    }
    Ok(KlObjective {
        value: r.value,
        abs_error_estimate: r.abs_error_estimate,
        up_to_constant,
        support_violation: false,
    })
}

/// Range of the perturbation strength `ε` in `η ∝ π_G · exp(ε g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationRange {
    pub min: f64,
    pub max: f64,
}

impl Default for PerturbationRange {
    fn default() -> Self {
        PerturbationRange { min: 0.01, max: 0.5 }
    }
}

impl PerturbationRange {
    /// `ε = 0` for every perturbation: each `η` equals the pool.
    pub const ZERO: PerturbationRange = PerturbationRange { min: 0.0, max: 0.0 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub d_pool: KlObjective,
    /// `d(η_k) - d(π_G)` in perturbation order.
    pub margins: Vec<f64>,
    pub min_margin: f64,
    /// Every margin is `>= 0`.
    pub pool_is_minimal: bool,
}

/// Draws a normalized perturbation `η ∝ π_G exp(ε g)` with `g` a Gaussian
/// bump centred at a random pool quantile and a width tied to the pool's
/// spread, so the bump always moves visible mass.
pub fn perturb(pool: &GridDensity, range: PerturbationRange, stream: RandomStream) -> Result<GridDensity> {
    let mut rng = stream.rng();
    let p: f64 = rng.random_range(0.05..0.95);
    let rel_width: f64 = rng.random_range(0.05..0.5);
    let eps = if range.max > range.min {
        rng.random_range(range.min..range.max)
    } else {
        range.min
    };
    if eps == 0.0 {
        return Ok(pool.clone());
    }
    let centre = quantile(pool, p)?;
    let spread = quantile(pool, 0.9)? - quantile(pool, 0.1)?;
    let width = (rel_width * spread).max(f64::MIN_POSITIVE);
    let log_values = pool
        .nodes()
        .iter()
        .zip(pool.log_values())
        .map(|(&x, &l)| {
            let z = (x - centre) / width;
            l + eps * (-0.5 * z * z).exp()
        })
        .collect();
    normalize(&pool.with_log_values(log_values)?)
}

/// Compares `d(π_G)` against `n_perturbations` random normalized
/// perturbations drawn from substreams of `stream`.
pub fn verify_pool_optimality(
    problem: &PoolProblem,
    n_perturbations: usize,
    range: PerturbationRange,
    stream: RandomStream,
) -> Result<OptimalityReport> {
    if !(range.min >= 0.0 && range.max >= range.min && range.max.is_finite()) {
        return Err(Error::InvalidInput(alloc::format!(
            "perturbation range [{}, {}] is invalid",
            range.min,
            range.max
        )));
    }
    let pooled = geometric_pool(problem)?;
    if let Some(why) = pooled.impropriety {
        return Err(Error::Precondition(alloc::format!(
            "the geometric pool is improper ({why})"
        )));
    }
    let d_pool = kl_objective(&pooled.density, problem)?;
    let margins = (0..n_perturbations)
        .map(|k| {
            let eta = perturb(&pooled.density, range, stream.substream(k as u64))?;
            Ok(kl_objective(&eta, problem)?.value - d_pool.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(OptimalityReport {
        d_pool,
        pool_is_minimal: margins.iter().all(|&m| m >= 0.0),
        margins,
        min_margin,
    })
}

/// `∫ η` of a density, exposed for the normalization checks of pools.
pub fn total_mass(density: &GridDensity) -> Result<f64> {
    Ok(integrate(density, DEFAULT_TOLERANCE)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Family;
    use crate::grid::{Grid, GridSpec};
    use alloc::sync::Arc;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn unit_grid() -> Arc<Grid> {
        Grid::from_spec(GridSpec::unit_interval(2049)).unwrap()
    }

    fn beta(grid: &Arc<Grid>, a: f64, b: f64) -> GridDensity {
        Family::Beta { a, b }.tabulate(grid.clone()).unwrap()
    }

    fn beta_normalized(grid: &Arc<Grid>, a: f64, b: f64) -> GridDensity {
        let f = Family::Beta { a, b };
        GridDensity::new(
            grid.clone(),
            grid.nodes().iter().map(|&x| f.log_density(x)).collect(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn weights_are_validated() {
        assert!(PoolWeights::new(alloc::vec![0.5, 0.5]).is_ok());
        assert!(PoolWeights::new(alloc::vec![0.5, 0.6]).is_err());
        assert!(PoolWeights::new(alloc::vec![1.5, -0.5]).is_err());
        assert!(PoolWeights::new(alloc::vec![]).is_err());
    }

    #[test]
    fn components_must_share_a_grid() {
        let g = unit_grid();
        let other = Grid::from_spec(GridSpec::unit_interval(1025)).unwrap();
        let r = PoolProblem::new(
            alloc::vec![beta(&g, 1.0, 1.0), beta(&other, 1.0, 1.0)],
            PoolWeights::uniform(2).unwrap(),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn geometric_pool_examples() {
        let g = unit_grid();
        let arcsine = beta(&g, 0.5, 0.5);
        let same = PoolProblem::new(
            alloc::vec![arcsine.clone(), arcsine.clone()],
            PoolWeights::new(alloc::vec![0.3, 0.7]).unwrap(),
        )
        .unwrap();
        let pooled = geometric_pool(&same).unwrap();
        let expected = normalize(&arcsine).unwrap();
        for (a, b) in pooled.density.log_values().iter().zip(expected.log_values()) {
            assert!((a - b).abs() < 1e-12);
        }

        let first = PoolProblem::new(
            alloc::vec![beta(&g, 2.0, 5.0), arcsine.clone()],
            PoolWeights::new(alloc::vec![1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let pooled = geometric_pool(&first).unwrap();
        let expected = normalize(&beta(&g, 2.0, 5.0)).unwrap();
        assert_eq!(pooled.density.log_values(), expected.log_values());

        let to_uniform = PoolProblem::new(
            alloc::vec![arcsine, beta(&g, 1.5, 1.5)],
            PoolWeights::uniform(2).unwrap(),
        )
        .unwrap();
        let pooled = geometric_pool(&to_uniform).unwrap();
        assert!(pooled.is_proper());
        for &l in pooled.density.log_values() {
            assert!(l.abs() < 1e-10, "{l}");
        }
    }

    #[test]
    fn improper_pool_is_annotated_not_rejected() {
        let grid = Grid::from_spec(GridSpec::real_line(513)).unwrap();
        let flat = Family::Flat.tabulate(grid.clone()).unwrap();
        let tilt = Family::ExpTilt { rate: 1.0 }.tabulate(grid).unwrap();
        let p = PoolProblem::new(alloc::vec![flat, tilt], PoolWeights::uniform(2).unwrap()).unwrap();
        let pooled = geometric_pool(&p).unwrap();
        assert!(!pooled.is_proper());
        assert!(!pooled.density.is_normalized());
    }

    #[test]
    fn zero_density_nodes_are_valid() {
        let grid = Grid::from_spec(GridSpec::Uniform {
            lo: 0.0,
            hi: 1.0,
            nodes: 65,
        })
        .unwrap();
        let half = GridDensity::from_log_fn(grid.clone(), |x| if x < 0.5 { f64::NEG_INFINITY } else { 0.0 }).unwrap();
        let flat = GridDensity::from_log_fn(grid, |_| 0.0).unwrap();
        let p = PoolProblem::new(alloc::vec![half, flat], PoolWeights::uniform(2).unwrap()).unwrap();
        let pooled = geometric_pool(&p).unwrap();
        assert_eq!(pooled.density.log_values()[0], f64::NEG_INFINITY);
    }

    #[test]
    fn arithmetic_pool_examples() {
        let g = unit_grid();
        let arcsine = beta_normalized(&g, 0.5, 0.5);
        let uniform = beta_normalized(&g, 1.0, 1.0);
        let p = PoolProblem::new(
            alloc::vec![arcsine.clone(), uniform.clone()],
            PoolWeights::uniform(2).unwrap(),
        )
        .unwrap();
        let pooled = arithmetic_pool(&p).unwrap().density;
        let mid = g.nodes().iter().position(|&x| x == 0.5).unwrap();
        assert!((pooled.log_values()[mid].exp() - (1.0 / PI + 0.5)).abs() < 1e-12);
        assert!((total_mass(&pooled).unwrap() - 1.0).abs() < 1e-9);

        let first = PoolProblem::new(
            alloc::vec![arcsine.clone(), uniform],
            PoolWeights::new(alloc::vec![1.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(
            arithmetic_pool(&first).unwrap().density.log_values(),
            arcsine.log_values()
        );

        let raw = PoolProblem::new(
            alloc::vec![beta(&g, 0.5, 0.5), arcsine],
            PoolWeights::uniform(2).unwrap(),
        )
        .unwrap();
        match arithmetic_pool(&raw) {
            Err(Error::InvalidInput(msg)) => assert!(msg.contains("scale")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kl_examples() {
        let g = unit_grid();
        let arcsine = beta_normalized(&g, 0.5, 0.5);
        let single = PoolProblem::new(
            alloc::vec![arcsine.clone()],
            PoolWeights::new(alloc::vec![1.0]).unwrap(),
        )
        .unwrap();
        assert!(kl_objective(&arcsine, &single).unwrap().value.abs() < 1e-12);

        // KL(U ‖ Beta(1/2,1/2)) = ∫ ln(π √(x(1-x))) dx = ln π - 1
        let uniform = beta_normalized(&g, 1.0, 1.0);
        let d = kl_objective(&uniform, &single).unwrap();
        assert!((d.value - (PI.ln() - 1.0)).abs() < 1e-10, "{d:?}");
        assert!(!d.up_to_constant);

        let raw = PoolProblem::new(
            alloc::vec![beta(&g, 0.5, 0.5)],
            PoolWeights::new(alloc::vec![1.0]).unwrap(),
        )
        .unwrap();
        let d_raw = kl_objective(&uniform, &raw).unwrap();
        assert!(d_raw.up_to_constant);
        assert!((d_raw.value - d.value + PI.ln()).abs() < 1e-10);
    }

    #[test]
    fn support_violation_is_flagged() {
        let grid = Grid::from_spec(GridSpec::Uniform {
            lo: 0.0,
            hi: 1.0,
            nodes: 65,
        })
        .unwrap();
        let half = GridDensity::from_log_fn(grid.clone(), |x| if x < 0.5 { f64::NEG_INFINITY } else { 0.0 }).unwrap();
        let eta = normalize(&GridDensity::from_log_fn(grid, |_| 0.0).unwrap()).unwrap();
        let p = PoolProblem::new(alloc::vec![half], PoolWeights::new(alloc::vec![1.0]).unwrap()).unwrap();
        let d = kl_objective(&eta, &p).unwrap();
        assert!(d.support_violation);
        assert_eq!(d.value, f64::INFINITY);
    }

    #[test]
    fn pool_beats_every_perturbation() {
        let g = unit_grid();
        let p = PoolProblem::new(
            alloc::vec![beta(&g, 0.5, 0.5), beta(&g, 1.5, 1.5)],
            PoolWeights::uniform(2).unwrap(),
        )
        .unwrap();
        let report = verify_pool_optimality(&p, 100, PerturbationRange::default(), RandomStream::new(11, 0)).unwrap();
        assert!(report.pool_is_minimal);
        assert!(report.min_margin > 0.0, "{}", report.min_margin);

        let zero = verify_pool_optimality(&p, 20, PerturbationRange::ZERO, RandomStream::new(11, 0)).unwrap();
        assert!(zero.margins.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn improper_pool_fails_the_optimality_precondition() {
        let grid = Grid::from_spec(GridSpec::real_line(513)).unwrap();
        let flat = Family::Flat.tabulate(grid).unwrap();
        let p = PoolProblem::new(alloc::vec![flat], PoolWeights::new(alloc::vec![1.0]).unwrap()).unwrap();
        assert!(matches!(
            verify_pool_optimality(&p, 3, PerturbationRange::default(), RandomStream::new(0, 0)),
            Err(Error::Precondition(_))
        ));
    }

    fn beta_params() -> impl Strategy<Value = (f64, f64)> {
        (0.3f64..6.0, 0.3f64..6.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn beta_kernels_are_closed_under_geometric_pooling(
            params in prop::collection::vec(beta_params(), 1..4),
            raw_weights in prop::collection::vec(0.05f64..1.0, 3),
        ) {
            let g = Grid::from_spec(GridSpec::unit_interval(2049)).unwrap();
            let k = params.len();
            let total: f64 = raw_weights[..k].iter().sum();
            let mut alphas: Vec<f64> = raw_weights[..k].iter().map(|w| w / total).collect();
            let head: f64 = alphas[..k - 1].iter().sum();
            alphas[k - 1] = 1.0 - head;
            let components = params.iter().map(|&(a, b)| beta(&g, a, b)).collect();
            let p = PoolProblem::new(components, PoolWeights::new(alphas.clone()).unwrap()).unwrap();
            let pooled = geometric_pool(&p).unwrap().density;
            let a: f64 = params.iter().zip(&alphas).map(|((a, _), w)| w * a).sum();
            let b: f64 = params.iter().zip(&alphas).map(|((_, b), w)| w * b).sum();
            let exact = Family::Beta { a, b };
            for (&x, &l) in g.nodes().iter().zip(pooled.log_values()) {
                let e = exact.log_density(x);
                prop_assert!((l - e).abs() <= 1e-10 * e.abs().max(1.0), "x={} {} vs {}", x, l, e);
            }
        }

        #[test]
        fn rescaling_leaves_the_normalized_pool_unchanged(
            log_c in prop::collection::vec(-13.8f64..13.8, 2),
        ) {
            let g = unit_grid();
            let p = PoolProblem::new(alloc::vec![beta(&g, 0.5, 0.5), beta(&g, 2.0, 3.0)], PoolWeights::new(alloc::vec![0.4, 0.6]).unwrap()).unwrap();
            let q = p.rescaled(&log_c).unwrap();
            let a = geometric_pool(&p).unwrap().density;
            let b = geometric_pool(&q).unwrap().density;
            for (x, y) in a.log_values().iter().zip(b.log_values()) {
                prop_assert!((x.exp() - y.exp()).abs() < 1e-10);
            }
            let eta1 = beta_normalized(&g, 1.0, 1.0);
            let eta2 = beta_normalized(&g, 2.0, 2.0);
            let dp = kl_objective(&eta1, &p).unwrap().value - kl_objective(&eta2, &p).unwrap().value;
            let dq = kl_objective(&eta1, &q).unwrap().value - kl_objective(&eta2, &q).unwrap().value;
            prop_assert!((dp - dq).abs() < 1e-10);
        }

        #[test]
        fn joint_permutation_leaves_pools_unchanged(w in 0.05f64..0.95) {
            let g = unit_grid();
            let (x, y) = (beta_normalized(&g, 0.5, 0.5), beta_normalized(&g, 3.0, 1.5));
            let p = PoolProblem::new(alloc::vec![x.clone(), y.clone()], PoolWeights::new(alloc::vec![w, 1.0 - w]).unwrap()).unwrap();
            let q = PoolProblem::new(alloc::vec![y, x], PoolWeights::new(alloc::vec![1.0 - w, w]).unwrap()).unwrap();
            for (a, b) in geometric_pool(&p).unwrap().density.log_values().iter().zip(geometric_pool(&q).unwrap().density.log_values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in arithmetic_pool(&p).unwrap().density.log_values().iter().zip(arithmetic_pool(&q).unwrap().density.log_values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
