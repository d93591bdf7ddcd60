//! Sparse multinomial analysis: Jeffreys and conditional Dirichlet
//! posteriors, the Dirichlet-multinomial likelihood of the symmetric
//! parameter `a`, and the posterior of the total prior weight `v = m·a`.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{require_positive, Error, Result};
use crate::grid::{Grid, GridDensity, GridSpec};
use crate::propriety::ProprietyVerdict;
use crate::quadrature::{cdf, integrate, integrate_log_values, integrate_product, mode, quantile};
use crate::special::{beta_cdf_unchecked, invert_unit_cdf, ln_rising_unchecked, log_gamma_unchecked};
use crate::{DEFAULT_NODES, DEFAULT_TOLERANCE};

/// Multinomial counts over `m ≥ 2` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector {
    counts: Vec<u64>,
    n: u64,
    /// Distinct non-zero counts with their multiplicities, ascending; the
    /// likelihood of `a` depends on the counts only through this multiset.
    groups: Vec<(u64, u64)>,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidInput(alloc::format!(
                "a multinomial needs at least 2 cells, got {}",
                counts.len()
            )));
        }
        let n = counts
            .iter()
            .try_fold(0u64, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| Error::InvalidInput("total count overflows u64".into()))?;
        let mut nonzero: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
        nonzero.sort_unstable();
        let mut groups: Vec<(u64, u64)> = Vec::new();
        for c in nonzero {
            match groups.last_mut() {
                Some((value, mult)) if *value == c => *mult += 1,
                _ => groups.push((c, 1)),
            }
        }
        Ok(CountVector { counts, n, groups })
    }

    /// Representative counts for `(n, r0)`: one cell holding `n - r0 + 1`,
    /// then `r0 - 1` singletons, then empty cells.
    pub fn canonical(m: usize, n: u64, r0: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(alloc::format!("m must be at least 2, got {m}")));
        }
        let valid = if n == 0 {
            r0 == 0
        } else {
            r0 >= 1 && r0 as u64 <= n && r0 <= m
        };
        if !valid {
            return Err(Error::InvalidInput(alloc::format!(
                "r0 = {r0} non-empty cells is impossible with n = {n} over m = {m} cells"
            )));
        }
        let mut counts = alloc::vec![0u64; m];
        if n > 0 {
            counts[0] = n - r0 as u64 + 1;
            for c in counts.iter_mut().take(r0).skip(1) {
                *c = 1;
            }
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn m(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of non-empty cells.
    pub fn r0(&self) -> usize {
        self.groups.iter().map(|&(_, k)| k as usize).sum()
    }

    /// `ln(n! / ∏ nᵢ!)`, the factor left out of [`dm_log_marginal`].
    pub fn log_multinomial_coefficient(&self) -> f64 {
        log_gamma_unchecked(self.n as f64 + 1.0)
            - self
                .groups
                .iter()
                .map(|&(c, k)| k as f64 * log_gamma_unchecked(c as f64 + 1.0))
                .sum::<f64>()
    }
}

/// Dirichlet parameters, all positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alphas: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::InvalidInput("a Dirichlet needs at least two parameters".into()));
        }
        for &a in &alphas {
            require_positive("Dirichlet parameter", a)?;
        }
        Ok(DirichletParams { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn total(&self) -> f64 {
        self.alphas.iter().sum()
    }

    pub fn mean(&self, i: usize) -> Result<f64> {
        let (a, b) = cell_posterior_marginal(self, i)?;
        Ok(a / (a + b))
    }
}

/// Conjugate update of the symmetric Dirichlet(a, …, a) prior.
pub fn conditional_posterior(data: &CountVector, a: f64) -> Result<DirichletParams> {
    require_positive("Dirichlet parameter a", a)?;
    DirichletParams::new(data.counts.iter().map(|&c| c as f64 + a).collect())
}

/// Posterior under Jeffreys' Dirichlet(1/2, …, 1/2) prior.
pub fn jeffreys_posterior(data: &CountVector) -> DirichletParams {
    DirichletParams {
        alphas: data.counts.iter().map(|&c| c as f64 + 0.5).collect(),
    }
}

/// Beta parameters `(αᵢ, Σ_{j≠i} αⱼ)` of the marginal of cell `i`.
pub fn cell_posterior_marginal(params: &DirichletParams, i: usize) -> Result<(f64, f64)> {
    let alphas = &params.alphas;
    if i >= alphas.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "cell {i} out of range for {} cells",
            alphas.len()
        )));
    }
    let rest: f64 = alphas.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, a)| a).sum();
    Ok((alphas[i], rest))
}

/// `ln[Γ(ma)/Γ(ma+n) ∏ Γ(a+nᵢ)/Γ(a)]`, the Dirichlet-multinomial probability
/// of the counts without the multinomial coefficient.
pub fn dm_log_marginal(data: &CountVector, a: f64) -> Result<f64> {
    require_positive("Dirichlet parameter a", a)?;
    Ok(dm_log_marginal_unchecked(data, a))
}

pub(crate) fn dm_log_marginal_unchecked(data: &CountVector, a: f64) -> f64 {
    if data.n == 0 {
        return 0.0;
    }
    let v = data.m() as f64 * a;
    let cells: f64 = data
        .groups
        .iter()
        .map(|&(c, k)| k as f64 * ln_rising_unchecked(a, c))
        .sum();
    cells - ln_rising_unchecked(v, data.n)
}

/// Hyperprior on `a`, stated through its density in `v = m·a` up to a constant.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperPriorKind {
    /// `π(a) ∝ 1` (improper).
    FlatInA,
    /// `π(a) ∝ 1/a` (improper).
    FlatInLogA,
    /// `π(v) ∝ (1+v)^-2`, proper.
    ParetoV,
    /// Log-density of `a` tabulated on a grid; zero outside the nodes.
    Grid(GridDensity),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperPriorSpec {
    pub kind: HyperPriorKind,
    /// Upper end of the tabulated `a` range. The v-grid then stops at
    /// `m·a_max`; the density beyond it is still extrapolated, not cut off.
    pub a_max: Option<f64>,
}

impl HyperPriorSpec {
    pub fn new(kind: HyperPriorKind) -> Self {
        HyperPriorSpec { kind, a_max: None }
    }

    pub fn pareto_v() -> Self {
        Self::new(HyperPriorKind::ParetoV)
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            HyperPriorKind::FlatInA => "flat-in-a",
            HyperPriorKind::FlatInLogA => "flat-in-log-a",
            HyperPriorKind::ParetoV => "pareto-v",
            HyperPriorKind::Grid(_) => "grid-file",
        }
    }

    /// Whether the hyperprior itself integrates to a finite value.
    pub fn is_proper(&self) -> Result<bool> {
        Ok(match &self.kind {
            HyperPriorKind::FlatInA | HyperPriorKind::FlatInLogA => false,
            HyperPriorKind::ParetoV => true,
            HyperPriorKind::Grid(d) => integrate(d, DEFAULT_TOLERANCE)?.is_proper(),
        })
    }

    /// Whether `E[v]` is finite under the hyperprior. The likelihood of the
    /// counts tends to a positive constant as `v → ∞`, so the posterior tail
    /// follows the hyperprior tail and inherits this property.
    pub fn has_finite_mean(&self) -> bool {
        matches!(self.kind, HyperPriorKind::Grid(_))
    }

    /// Log-density in `v` for `m` cells, up to an additive constant.
    pub fn log_density_v(&self, v: f64, m: usize) -> f64 {
        match &self.kind {
            HyperPriorKind::FlatInA => 0.0,
            HyperPriorKind::FlatInLogA => -v.ln(),
            HyperPriorKind::ParetoV => -2.0 * v.ln_1p(),
            HyperPriorKind::Grid(d) => interpolate_log(d, v / m as f64),
        }
    }
}

/// Linear interpolation of log-values; `-∞` outside the node range.
fn interpolate_log(d: &GridDensity, x: f64) -> f64 {
    let nodes = d.nodes();
    let n = nodes.len();
    if !(x >= nodes[0] && x <= nodes[n - 1]) {
        return f64::NEG_INFINITY;
    }
    let k = nodes.partition_point(|&node| node <= x).clamp(1, n - 1) - 1;
    let (l0, l1) = (d.log_values()[k], d.log_values()[k + 1]);
    if l0 == f64::NEG_INFINITY || l1 == f64::NEG_INFINITY {
        return if x == nodes[k] {
            l0
        } else if x == nodes[k + 1] {
            l1
        } else {
            f64::NEG_INFINITY
        };
    }
    let t = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
    l0 + t * (l1 - l0)
}

/// Log-spaced layout of the v-grid and the relative tolerance of the
/// integrals taken on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VGridSpec {
    pub near: f64,
    pub far: f64,
    pub nodes: usize,
    pub tol: f64,
}

impl Default for VGridSpec {
    fn default() -> Self {
        VGridSpec {
            near: 1e-4,
            far: 1e4,
            nodes: DEFAULT_NODES,
            tol: DEFAULT_TOLERANCE,
        }
    }
}

impl VGridSpec {
    pub fn grid_spec(&self, m: usize, hyper: &HyperPriorSpec) -> Result<GridSpec> {
        let far = match hyper.a_max {
            Some(a_max) => require_positive("a_max", a_max)? * m as f64,
            None => self.far,
        };
        if !(self.near > 0.0 && far > self.near) {
            return Err(Error::InvalidInput(alloc::format!(
                "v-grid needs 0 < near < far, got ({}, {far})",
                self.near
            )));
        }
        Ok(GridSpec::HalfLine {
            origin: 0.0,
            near: self.near,
            far,
            nodes: self.nodes,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VSummary {
    pub mode: f64,
    pub median: f64,
    /// `None` when `E[v]` diverges, as under pareto-v where the posterior
    /// tail decays like `v^-2`.
    pub mean: Option<f64>,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VPosterior {
    /// Normalized when the posterior is proper.
    pub density: GridDensity,
    pub verdict: ProprietyVerdict,
    pub summary: Option<VSummary>,
}

/// Posterior of `v = m·a` under `hyper`, tabulated on the v-grid.
pub fn v_posterior(data: &CountVector, hyper: &HyperPriorSpec, vgrid: &VGridSpec) -> Result<VPosterior> {
    let grid = Grid::from_spec(vgrid.grid_spec(data.m(), hyper)?)?;
    v_posterior_on(data, hyper, grid, vgrid.tol)
}

fn v_posterior_on(data: &CountVector, hyper: &HyperPriorSpec, grid: Arc<Grid>, tol: f64) -> Result<VPosterior> {
    let m = data.m();
    let mf = m as f64;
    let log_values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&v| hyper.log_density_v(v, m) + dm_log_marginal_unchecked(data, v / mf))
        .collect();
    let raw = GridDensity::new(grid, log_values, false)?;
    let mass = integrate(&raw, tol)?;
    let verdict = ProprietyVerdict::from_mass(mass, tol);
    if !verdict.proper {
        return Ok(VPosterior {
            density: raw,
            verdict,
            summary: None,
        });
    }
    let shift = mass.value.ln();
    let normalized = GridDensity::new(
        raw.grid().clone(),
        raw.log_values().iter().map(|l| l - shift).collect(),
        true,
    )?;
    let mean = if hyper.has_finite_mean() {
        let with_v: Vec<f64> = normalized
            .nodes()
            .iter()
            .zip(normalized.log_values())
            .map(|(v, l)| l + v.ln())
            .collect();
        let first_moment = integrate_log_values(normalized.grid(), &with_v, tol)?;
        first_moment.is_proper().then_some(first_moment.value)
    } else {
        None
    };
    let summary = VSummary {
        mode: mode(&normalized)?,
        median: quantile(&normalized, 0.5)?,
        mean,
        q05: quantile(&normalized, 0.05)?,
        q95: quantile(&normalized, 0.95)?,
    };
    Ok(VPosterior {
        density: normalized,
        verdict,
        summary: Some(summary),
    })
}

/// One `(m, n, r0)` configuration of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Config {
    pub m: usize,
    pub n: u64,
    pub r0: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VSummaryRow {
    pub config: Config,
    pub hyperprior: &'static str,
    pub proper: bool,
    pub summary: Option<VSummary>,
    pub diagnostics: Option<String>,
}

/// Posterior summary for the canonical counts of `config`. Impropriety is
/// recorded in the row.
pub fn v_summary_row(config: Config, hyper: &HyperPriorSpec, vgrid: &VGridSpec) -> Result<VSummaryRow> {
    let data = CountVector::canonical(config.m, config.n, config.r0)?;
    let post = v_posterior(&data, hyper, vgrid)?;
    Ok(VSummaryRow {
        config,
        hyperprior: hyper.label(),
        proper: post.verdict.proper,
        summary: post.summary,
        diagnostics: post.verdict.diagnostics,
    })
}

pub fn v_summary_table(configs: &[Config], hyper: &HyperPriorSpec, vgrid: &VGridSpec) -> Result<Vec<VSummaryRow>> {
    configs.iter().map(|&c| v_summary_row(c, hyper, vgrid)).collect()
}

/// Posterior mean and central 95% interval of one cell probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl CellSummary {
    fn of_beta(a: f64, b: f64) -> Self {
        CellSummary {
            mean: a / (a + b),
            lo: invert_unit_cdf(|x| beta_cdf_unchecked(x, a, b), 0.025),
            hi: invert_unit_cdf(|x| beta_cdf_unchecked(x, a, b), 0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellComparison {
    pub cell: usize,
    pub count: u64,
    pub jeffreys: CellSummary,
    /// Under Dirichlet(a_point, …, a_point), when `a_point` was given.
    pub conditional: Option<CellSummary>,
    /// Averaged over the v-posterior; absent when it is improper.
    pub hierarchical: Option<CellSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorComparison {
    pub hyperprior: &'static str,
    pub a_point: Option<f64>,
    /// First non-empty cell; absent when `n = 0`.
    pub observed: Option<CellComparison>,
    /// First empty cell; absent when every cell is occupied.
    pub unobserved: Option<CellComparison>,
    pub v_verdict: ProprietyVerdict,
}

/// Discrete mixture weights over the v-grid nodes, tail masses folded onto
/// the outermost nodes.
fn mixture_weights(post: &GridDensity) -> Result<Vec<f64>> {
    let nodes = post.nodes();
    let n = nodes.len();
    let values = post.values();
    let mut w: Vec<f64> = post.grid().weights().iter().zip(&values).map(|(w, f)| w * f).collect();
    w[0] += cdf(post, nodes[0])?;
    w[n - 1] += 1.0 - cdf(post, nodes[n - 1])?;
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

fn hierarchical_cell(
    post: &GridDensity,
    weights: &[f64],
    data: &CountVector,
    count: u64,
    tol: f64,
) -> Result<CellSummary> {
    let m = data.m() as f64;
    let n = data.n as f64;
    let c = count as f64;
    let factor: Vec<f64> = post.nodes().iter().map(|&v| (c + v / m) / (n + v)).collect();
    let mean = integrate_product(post, &factor, tol)?.value;
    let terms: Vec<(f64, f64, f64)> = post
        .nodes()
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 1e-17)
        .map(|(&v, &w)| {
            let a = v / m;
            (w, c + a, n - c + (m - 1.0) * a)
        })
        .collect();
    let mix = |x: f64| {
        terms
            .iter()
            .map(|&(w, a, b)| w * beta_cdf_unchecked(x, a, b))
            .sum::<f64>()
    };
    Ok(CellSummary {
        mean,
        lo: invert_unit_cdf(mix, 0.025),
        hi: invert_unit_cdf(mix, 0.975),
    })
}

/// Cell posteriors of one observed and one empty cell under Jeffreys' prior,
/// a fixed symmetric Dirichlet and the hierarchical prior.
pub fn compare_priors(
    data: &CountVector,
    hyper: &HyperPriorSpec,
    a_point: Option<f64>,
    vgrid: &VGridSpec,
) -> Result<PriorComparison> {
    if let Some(a) = a_point {
        require_positive("a_point", a)?;
    }
    let jeffreys = jeffreys_posterior(data);
    let conditional = a_point.map(|a| conditional_posterior(data, a)).transpose()?;
    let post = v_posterior(data, hyper, vgrid)?;
    let weights = if post.verdict.proper {
        Some(mixture_weights(&post.density)?)
    } else {
        None
    };
    let compare = |cell: usize| -> Result<CellComparison> {
        let count = data.counts[cell];
        let (a, b) = cell_posterior_marginal(&jeffreys, cell)?;
        let conditional = match &conditional {
            Some(p) => {
                let (a, b) = cell_posterior_marginal(p, cell)?;
                Some(CellSummary::of_beta(a, b))
            }
            None => None,
        };
        let hierarchical = match &weights {
            Some(w) => Some(hierarchical_cell(&post.density, w, data, count, vgrid.tol)?),
            None => None,
        };
        Ok(CellComparison {
            cell,
            count,
            jeffreys: CellSummary::of_beta(a, b),
            conditional,
            hierarchical,
        })
    };
    let observed = data.counts.iter().position(|&c| c > 0).map(&compare).transpose()?;
    let unobserved = data.counts.iter().position(|&c| c == 0).map(&compare).transpose()?;
    Ok(PriorComparison {
        hyperprior: hyper.label(),
        a_point,
        observed,
        unobserved,
        v_verdict: post.verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub m_values: Vec<usize>,
    /// Sup-norm distance between the normalized v-posteriors of consecutive
    /// `m` values.
    pub distances: Vec<f64>,
    /// Each distance is below the previous one (or both are zero).
    pub decreasing: bool,
    /// Why the comparison could not be made, e.g. an improper posterior.
    pub untestable: Option<String>,
}

/// v-posteriors for the canonical `(n, r0)` counts at increasing `m`.
pub fn large_m_stability(
    n: u64,
    r0: usize,
    m_values: &[usize],
    hyper: &HyperPriorSpec,
    vgrid: &VGridSpec,
) -> Result<StabilityReport> {
    if m_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("m values must be strictly increasing".into()));
    }
    if let Some(&m) = m_values.iter().find(|&&m| (m as u64) < 10 * n) {
        return Err(Error::InvalidInput(alloc::format!(
            "m = {m} is below 10·n = {}",
            10 * n
        )));
    }
    let mut posteriors = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let post = v_posterior(&CountVector::canonical(m, n, r0)?, hyper, vgrid)?;
        if !post.verdict.proper {
            return Ok(StabilityReport {
                m_values: m_values.to_vec(),
                distances: Vec::new(),
                decreasing: false,
                untestable: Some(alloc::format!(
                    "posterior at m = {m} is improper: {}",
                    post.verdict.diagnostics.unwrap_or_default()
                )),
            });
        }
        posteriors.push(post.density);
    }
    let mut distances = Vec::new();
    for pair in posteriors.windows(2) {
        if !pair[0].shares_grid(&pair[1]) {
            return Err(Error::InvalidInput(
                "v-grids differ between m values; drop a_max to compare".into(),
            ));
        }
        let d = pair[0]
            .log_values()
            .iter()
            .zip(pair[1].log_values())
            .map(|(a, b)| (a.exp() - b.exp()).abs())
            .fold(0.0, f64::max);
        distances.push(d);
    }
    let decreasing = distances
        .windows(2)
        .all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    Ok(StabilityReport {
        m_values: m_values.to_vec(),
        distances,
        decreasing,
        untestable: None,
    })
}
