//! Command-line definitions and one runner per subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use prior_forge_core::pooling::{
    arithmetic_pool, geometric_pool_with_tolerance, verify_pool_optimality, PerturbationRange, PoolProblem, PoolWeights,
};
use prior_forge_core::propriety::{
    holder_check_with_tolerance, posterior_mass_with_tolerance, HolderStatus, LikelihoodModel,
};
use prior_forge_core::quadrature::normalize_with_tolerance;
use prior_forge_core::reparam::{dirichlet_equivalence_report, ordered_prior_diagnostics};
use prior_forge_core::sparse::{
    compare_priors, v_summary_row, CellComparison, CellSummary, Config, CountVector, HyperPriorKind, HyperPriorSpec,
    VGridSpec,
};
use prior_forge_core::{Error as CoreError, GridDensity, RandomStream, DEFAULT_NODES, DEFAULT_TOLERANCE};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::density_io::{load_density, write_density};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, fmt_token, json_num, json_opt, write_atomic, Header, Table};
use crate::spec::{load_pool_spec, parse_prior, prior_label, tabulate_sources};

/// Environment variable capping the worker threads of `sparse-mn`.
pub const THREADS_ENV: &str = "PRIOR_FORGE_THREADS";

/// Random stream index of each sampling subcommand.
pub const POOL_VERIFY_STREAM: u64 = 0;
pub const POISSON_EQUIV_STREAM: u64 = 1;
pub const ORDERED_MN_STREAM: u64 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "prior-forge",
    version,
    about = "Pool objective priors, check posterior propriety and study sparse multinomial hierarchies"
)]
pub struct Cli {
    /// Master seed of every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Relative tolerance of the quadratures.
    #[arg(long, global = true, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; tables default to csv, reports to json.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolKind {
    Geometric,
    Arithmetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LikelihoodKind {
    Normal,
    Binomial,
    Poisson,
    Multinomial,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HyperKind {
    FlatInA,
    FlatInLogA,
    ParetoV,
    GridFile,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pool the priors of a spec file into one density.
    Pool(PoolArgs),
    /// Check the Hölder bound for two hypothesis priors.
    Holder(HolderArgs),
    /// Summarize the posterior of v = m·a over (m, n, r0) configurations.
    SparseMn(SparseArgs),
    /// Compare cell posteriors under Jeffreys, fixed-a and hierarchical priors.
    Compare(CompareArgs),
    /// Check that normalized gamma draws are Dirichlet at every scale.
    PoissonEquiv(PoissonArgs),
    /// Sample the stick-breaking prior of an ordered multinomial.
    OrderedMn(OrderedArgs),
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// JSON pool spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value_t = PoolKind::Geometric)]
    pub kind: PoolKind,
    /// Number of random perturbations compared against the geometric pool.
    #[arg(long, default_value_t = 0)]
    pub verify: usize,
}

#[derive(Debug, Args)]
pub struct HolderArgs {
    /// First hypothesis prior, e.g. beta:2,3 or file:mu.csv.
    #[arg(long)]
    pub mu: String,
    /// Second hypothesis prior.
    #[arg(long)]
    pub nu: String,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = LikelihoodKind::Normal)]
    pub likelihood: LikelihoodKind,
    /// Observations: values (normal), k,n (binomial), counts (poisson,
    /// multinomial) or a log-likelihood file (grid).
    #[arg(long, allow_hyphen_values = true)]
    pub data: String,
    /// Cell of a multinomial likelihood.
    #[arg(long, default_value_t = 0)]
    pub cell: usize,
    /// Grid nodes for closed-form priors.
    #[arg(long, default_value_t = DEFAULT_NODES)]
    pub nodes: usize,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long, value_enum, default_value_t = HyperKind::ParetoV)]
    pub hyperprior: HyperKind,
    /// Density file over the Dirichlet parameter a, for --hyperprior grid-file.
    #[arg(long)]
    pub hyperprior_file: Option<PathBuf>,
    /// Upper end of the a range; the v-grid then ends at m·a_max.
    #[arg(long)]
    pub a_max: Option<f64>,
    #[arg(long, default_value_t = VGridSpec::default().near)]
    pub v_near: f64,
    #[arg(long, default_value_t = VGridSpec::default().far)]
    pub v_far: f64,
    #[arg(long, default_value_t = VGridSpec::default().nodes)]
    pub v_nodes: usize,
}

#[derive(Debug, Args)]
pub struct SparseArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub r0: Option<usize>,
    /// JSON list of {m, n, r0} objects, or an object of m, n and r0 arrays
    /// whose feasible combinations are swept.
    #[arg(long, conflicts_with_all = ["m", "n", "r0"])]
    pub configs: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub r0: Option<usize>,
    /// Explicit comma-separated counts instead of --m/--n/--r0.
    #[arg(long, conflicts_with_all = ["m", "n", "r0"])]
    pub counts: Option<String>,
    /// Fixed Dirichlet parameter for the conditional comparison.
    #[arg(long)]
    pub a_point: Option<f64>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct PoissonArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0, 10.0])]
    pub betas: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct OrderedArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
}

/// Formatted result of a command plus the exit status it implies.
#[derive(Debug)]
pub struct Emitted {
    pub bytes: Vec<u8>,
    pub exit: i32,
}

impl Emitted {
    fn ok(text: String) -> Self {
        Emitted {
            bytes: text.into_bytes(),
            exit: 0,
        }
    }
}

fn global_header(cli: &Cli, command: &str) -> Header {
    let mut h = Header::new();
    h.push("command", command)
        .push("seed", cli.seed.to_string())
        .push_num("tol", cli.tol);
    h
}

/// Runs the parsed command and writes its output. Returns the exit status.
pub fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> CliResult<i32> {
    if !(cli.tol > 0.0 && cli.tol < 1.0) {
        return Err(CliError::input(format!("--tol must lie in (0, 1), got {}", cli.tol)));
    }
    let emitted = match &cli.command {
        Command::Pool(a) => run_pool(cli, a)?,
        Command::Holder(a) => run_holder(cli, a)?,
        Command::SparseMn(a) => run_sparse(cli, a)?,
        Command::Compare(a) => run_compare(cli, a)?,
        Command::PoissonEquiv(a) => run_poisson(cli, a)?,
        Command::OrderedMn(a) => run_ordered(cli, a)?,
    };
    match &cli.out {
        Some(path) => write_atomic(path, &emitted.bytes)?,
        None => stdout
            .write_all(&emitted.bytes)
            .map_err(|e| CliError::input(format!("cannot write to standard output: {e}")))?,
    }
    Ok(emitted.exit)
}

fn table_output(table: &Table, header: &Header, format: Format) -> String {
    match format {
        Format::Csv => table.to_csv(header),
        Format::Json => {
            let cell = |s: &String| match s.as_str() {
                "true" => Value::Bool(true),
                "false" => Value::Bool(false),
                _ => match s.parse::<f64>() {
                    Ok(x) if x.is_finite() => json_num(x),
                    _ => Value::from(s.clone()),
                },
            };
            let rows: Vec<Value> = table
                .rows()
                .iter()
                .map(|r| Value::from(r.iter().map(cell).collect::<Vec<_>>()))
                .collect();
            pretty(&json!({"config": header.to_json(), "columns": table.columns(), "rows": rows}))
        }
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Number(n) => out.push((
            prefix.to_string(),
            n.as_f64().map(fmt_num).unwrap_or_else(|| n.to_string()),
        )),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
    }
}

/// A JSON report, or its leaves as `key,value` rows.
fn report_output(report: &Value, header: &Header, format: Format) -> CliResult<String> {
    match format {
        Format::Json => Ok(pretty(report)),
        Format::Csv => {
            let mut leaves = Vec::new();
            flatten("", report, &mut leaves);
            let mut table = Table::new(&["key", "value"]);
            for (k, v) in leaves {
                table.push(vec![k, v])?;
            }
            Ok(table.to_csv(header))
        }
    }
}

fn cells(values: &[f64]) -> String {
    values.iter().map(|v| fmt_token(*v)).collect::<Vec<_>>().join(",")
}

fn run_pool(cli: &Cli, args: &PoolArgs) -> CliResult<Emitted> {
    let spec = load_pool_spec(&args.spec)?;
    let nodes = spec.nodes.unwrap_or(DEFAULT_NODES);
    let tabulated = tabulate_sources(&spec.components, nodes, None)?;
    let weights = PoolWeights::new(spec.weights.clone())?;
    let mut header = global_header(cli, "pool");
    header
        .push("spec", args.spec.display().to_string())
        .push("kind", format!("{:?}", args.kind).to_lowercase())
        .push(
            "components",
            spec.components.iter().map(prior_label).collect::<Vec<_>>().join(";"),
        )
        .push("weights", cells(&spec.weights))
        .push("nodes", tabulated.grid.len().to_string())
        .push("verify", args.verify.to_string());

    let (pooled, impropriety) = match args.kind {
        PoolKind::Geometric => {
            let problem = PoolProblem::new(tabulated.densities, weights)?;
            let pooled = geometric_pool_with_tolerance(&problem, cli.tol)?;
            if args.verify > 0 {
                let report = verify_pool_optimality(
                    &problem,
                    args.verify,
                    PerturbationRange::default(),
                    RandomStream::new(cli.seed, POOL_VERIFY_STREAM),
                )?;
                header
                    .push_num("perturbation_min", PerturbationRange::default().min)
                    .push_num("perturbation_max", PerturbationRange::default().max)
                    .push_num("d_pool", report.d_pool.value)
                    .push_num("min_margin", report.min_margin)
                    .push("pool_is_minimal", report.pool_is_minimal.to_string());
            }
            (pooled.density, pooled.impropriety)
        }
        PoolKind::Arithmetic => {
            if args.verify > 0 {
                return Err(CliError::input("--verify applies to the geometric pool only"));
            }
            let components = tabulated
                .densities
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    if d.is_normalized() {
                        return Ok(d.clone());
                    }
                    normalize_with_tolerance(d, cli.tol).map_err(|e| match e {
                        CoreError::ImproperDensity(why) => {
                            CliError::input(format!("component {i} cannot be normalized for a linear pool: {why}"))
                        }
                        other => other.into(),
                    })
                })
                .collect::<CliResult<Vec<GridDensity>>>()?;
            let pooled = arithmetic_pool(&PoolProblem::new(components, weights)?)?;
            (pooled.density, pooled.impropriety)
        }
    };
    header.push("proper", if impropriety.is_none() { "1" } else { "0" });
    if let Some(why) = &impropriety {
        header.push("impropriety", why.clone());
    }
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => write_density(&pooled, &header),
        Format::Json => pretty(&json!({
            "config": header.to_json(),
            "normalized": pooled.is_normalized(),
            "nodes": pooled.nodes().iter().map(|&x| json_num(x)).collect::<Vec<_>>(),
            "log_density": pooled.log_values().iter().map(|&x| json_num(x)).collect::<Vec<_>>(),
        })),
    };
    Ok(Emitted::ok(text))
}

fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| CliError::input(format!("{what}: cannot parse {s:?}")))
        })
        .collect()
}

fn likelihood_model(args: &HolderArgs) -> CliResult<LikelihoodModel> {
    let model = match args.likelihood {
        LikelihoodKind::Normal => LikelihoodModel::NormalLocation {
            observations: parse_list("--data", &args.data)?,
        },
        LikelihoodKind::Binomial => match parse_list::<u64>("--data", &args.data)?[..] {
            [successes, trials] => LikelihoodModel::Binomial { successes, trials },
            _ => return Err(CliError::input("binomial --data takes successes,trials")),
        },
        LikelihoodKind::Poisson => LikelihoodModel::Poisson {
            counts: parse_list("--data", &args.data)?,
        },
        LikelihoodKind::Multinomial => LikelihoodModel::Multinomial {
            counts: parse_list("--data", &args.data)?,
            cell: args.cell,
        },
        LikelihoodKind::Grid => LikelihoodModel::Grid {
            log_likelihood: load_density(Path::new(&args.data))?.density,
        },
    };
    model.validate()?;
    Ok(model)
}

fn quad_json(r: &prior_forge_core::QuadratureResult) -> Value {
    json!({
        "value": json_num(r.value),
        "abs_error_estimate": json_num(r.abs_error_estimate),
        "converged": r.converged,
        "diverged": r.diverged,
    })
}

fn run_holder(cli: &Cli, args: &HolderArgs) -> CliResult<Emitted> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::input(format!(
            "--alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    let mu = parse_prior(&args.mu)?;
    let nu = parse_prior(&args.nu)?;
    let likelihood = likelihood_model(args)?;
    let fixed = match &likelihood {
        LikelihoodModel::Grid { log_likelihood } => Some(log_likelihood.grid().clone()),
        _ => None,
    };
    let tabulated = tabulate_sources(&[mu.clone(), nu.clone()], args.nodes, fixed)?;
    let (mu_d, nu_d) = (&tabulated.densities[0], &tabulated.densities[1]);
    let report = holder_check_with_tolerance(mu_d, nu_d, args.alpha, &likelihood, cli.tol)?;
    let mu_mass = posterior_mass_with_tolerance(mu_d, &likelihood, cli.tol)?.mass;
    let nu_mass = posterior_mass_with_tolerance(nu_d, &likelihood, cli.tol)?.mass;

    let mut header = global_header(cli, "holder");
    header
        .push("mu", prior_label(&mu))
        .push("nu", prior_label(&nu))
        .push_num("alpha", args.alpha)
        .push("likelihood", format!("{:?}", args.likelihood).to_lowercase())
        .push("data", args.data.clone())
        .push("cell", args.cell.to_string())
        .push("nodes", args.nodes.to_string());
    let status = match report.status {
        HolderStatus::Holds => "holds",
        HolderStatus::Inconclusive => "inconclusive",
        HolderStatus::Violated => "violated",
    };
    let json = json!({
        "config": header.to_json(),
        "lhs": json_num(report.lhs.value),
        "rhs": json_num(report.rhs),
        "holds": report.holds(),
        "status": status,
        "errors": {
            "lhs": json_num(report.lhs.abs_error_estimate),
            "rhs": json_num(report.rhs_error),
            "combined": json_num(report.combined_error()),
        },
        "lhs_converged": report.lhs.converged,
        "posterior_mass": {"mu": quad_json(&mu_mass), "nu": quad_json(&nu_mass)},
    });
    let text = report_output(&json, &header, cli.format.unwrap_or(Format::Json))?;
    let exit = if report.status == HolderStatus::Violated { 2 } else { 0 };
    Ok(Emitted {
        bytes: text.into_bytes(),
        exit,
    })
}

fn hyper_spec(args: &HyperArgs) -> CliResult<HyperPriorSpec> {
    let kind = match (args.hyperprior, &args.hyperprior_file) {
        (HyperKind::GridFile, Some(path)) => HyperPriorKind::Grid(load_density(path)?.density),
        (HyperKind::GridFile, None) => return Err(CliError::input("--hyperprior grid-file needs --hyperprior-file")),
        (_, Some(_)) => return Err(CliError::input("--hyperprior-file requires --hyperprior grid-file")),
        (HyperKind::FlatInA, None) => HyperPriorKind::FlatInA,
        (HyperKind::FlatInLogA, None) => HyperPriorKind::FlatInLogA,
        (HyperKind::ParetoV, None) => HyperPriorKind::ParetoV,
    };
    if let Some(a) = args.a_max {
        if !(a > 0.0 && a.is_finite()) {
            return Err(CliError::input(format!("--a-max must be positive, got {a}")));
        }
    }
    Ok(HyperPriorSpec {
        kind,
        a_max: args.a_max,
    })
}

fn vgrid_spec(args: &HyperArgs, tol: f64) -> CliResult<VGridSpec> {
    if !(args.v_near > 0.0 && args.v_far > args.v_near && args.v_far.is_finite()) {
        return Err(CliError::input(format!(
            "v-grid needs 0 < --v-near < --v-far, got {} and {}",
            args.v_near, args.v_far
        )));
    }
    Ok(VGridSpec {
        near: args.v_near,
        far: args.v_far,
        nodes: args.v_nodes,
        tol,
    })
}

fn push_hyper(header: &mut Header, args: &HyperArgs, hyper: &HyperPriorSpec) {
    header.push("hyperprior", hyper.label());
    if let Some(p) = &args.hyperprior_file {
        header.push("hyperprior_file", p.display().to_string());
    }
    header
        .push("a_max", args.a_max.map_or_else(|| "none".to_string(), fmt_token))
        .push_num("v_near", args.v_near)
        .push_num("v_far", args.v_far)
        .push("v_nodes", args.v_nodes.to_string());
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawConfigs {
    List(Vec<RawConfig>),
    Sweep { m: Vec<usize>, n: Vec<u64>, r0: Vec<usize> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    m: usize,
    n: u64,
    r0: usize,
}

fn feasible(c: &Config) -> bool {
    CountVector::canonical(c.m, c.n, c.r0).is_ok()
}

/// Configurations of a `--configs` file, in file order. A sweep object
/// yields its feasible combinations with `m` varying slowest.
pub fn parse_configs(text: &str) -> CliResult<Vec<Config>> {
    let raw: RawConfigs = serde_json::from_str(text).map_err(|e| {
        CliError::input(format!(
            "configs: expected a list of {{m, n, r0}} or an object of arrays: {e}"
        ))
    })?;
    let configs = match raw {
        RawConfigs::List(list) => {
            let configs: Vec<Config> = list
                .into_iter()
                .map(|c| Config {
                    m: c.m,
                    n: c.n,
                    r0: c.r0,
                })
                .collect();
            if let Some(c) = configs.iter().find(|c| !feasible(c)) {
                return Err(CliError::input(format!(
                    "configs: (m={}, n={}, r0={}) is infeasible",
                    c.m, c.n, c.r0
                )));
            }
            configs
        }
        RawConfigs::Sweep { m, n, r0 } => {
            let mut configs = Vec::new();
            for &m in &m {
                for &n in &n {
                    for &r0 in &r0 {
                        let c = Config { m, n, r0 };
                        if feasible(&c) {
                            configs.push(c);
                        }
                    }
                }
            }
            configs
        }
    };
    Ok(configs)
}

fn single_config(m: Option<usize>, n: Option<u64>, r0: Option<usize>) -> CliResult<Config> {
    match (m, n, r0) {
        (Some(m), Some(n), Some(r0)) => {
            let c = Config { m, n, r0 };
            CountVector::canonical(m, n, r0)?;
            Ok(c)
        }
        _ => Err(CliError::input("give --m, --n and --r0 together")),
    }
}

/// Worker threads allowed by the environment; `None` for machine parallelism.
pub fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::input(format!(
                "{THREADS_ENV} must be a positive integer, got {s:?}"
            ))),
        },
    }
}

fn run_sparse(cli: &Cli, args: &SparseArgs) -> CliResult<Emitted> {
    let hyper = hyper_spec(&args.hyper)?;
    let vgrid = vgrid_spec(&args.hyper, cli.tol)?;
    let (configs, source) = match &args.configs {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
            (parse_configs(&text)?, path.display().to_string())
        }
        None => (vec![single_config(args.m, args.n, args.r0)?], "flags".to_string()),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Numerical(format!("cannot start worker threads: {e}")))?;
    let rows = pool.install(|| {
        configs
            .par_iter()
            .map(|&c| v_summary_row(c, &hyper, &vgrid))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut header = global_header(cli, "sparse-mn");
    header.push("configs", source);
    push_hyper(&mut header, &args.hyper, &hyper);
    let mut table = Table::new(&[
        "m",
        "n",
        "r0",
        "hyperprior",
        "proper",
        "mode_v",
        "median_v",
        "q05_v",
        "q95_v",
    ]);
    for row in &rows {
        let s = row.summary;
        let stat =
            |f: fn(&prior_forge_core::sparse::VSummary) -> f64| s.as_ref().map_or(fmt_num(f64::NAN), |s| fmt_num(f(s)));
        table.push(vec![
            row.config.m.to_string(),
            row.config.n.to_string(),
            row.config.r0.to_string(),
            row.hyperprior.to_string(),
            row.proper.to_string(),
            stat(|s| s.mode),
            stat(|s| s.median),
            stat(|s| s.q05),
            stat(|s| s.q95),
        ])?;
    }
    Ok(Emitted::ok(table_output(
        &table,
        &header,
        cli.format.unwrap_or(Format::Csv),
    )))
}

fn cell_json(s: &CellSummary) -> Value {
    json!({"mean": json_num(s.mean), "lo": json_num(s.lo), "hi": json_num(s.hi)})
}

fn comparison_json(c: &CellComparison) -> Value {
    json!({
        "cell": c.cell,
        "count": c.count,
        "jeffreys": cell_json(&c.jeffreys),
        "conditional": c.conditional.as_ref().map_or(Value::Null, cell_json),
        "hierarchical": c.hierarchical.as_ref().map_or(Value::Null, cell_json),
    })
}

fn run_compare(cli: &Cli, args: &CompareArgs) -> CliResult<Emitted> {
    let hyper = hyper_spec(&args.hyper)?;
    let vgrid = vgrid_spec(&args.hyper, cli.tol)?;
    let data = match &args.counts {
        Some(text) => CountVector::new(parse_list("--counts", text)?)?,
        None => {
            let c = single_config(args.m, args.n, args.r0)?;
            CountVector::canonical(c.m, c.n, c.r0)?
        }
    };
    let cmp = compare_priors(&data, &hyper, args.a_point, &vgrid)?;
    let mut header = global_header(cli, "compare");
    match &args.counts {
        Some(c) => header.push("counts", c.clone()),
        None => header
            .push("m", data.m().to_string())
            .push("n", data.n().to_string())
            .push("r0", data.r0().to_string()),
    };
    header.push("a_point", args.a_point.map_or_else(|| "none".to_string(), fmt_token));
    push_hyper(&mut header, &args.hyper, &hyper);
    let json = json!({
        "config": header.to_json(),
        "m": data.m(),
        "n": data.n(),
        "r0": data.r0(),
        "hyperprior": cmp.hyperprior,
        "a_point": json_opt(cmp.a_point),
        "v_posterior": {
            "proper": cmp.v_verdict.proper,
            "mass": quad_json(&cmp.v_verdict.mass),
            "diagnostics": cmp.v_verdict.diagnostics,
        },
        "observed": cmp.observed.as_ref().map_or(Value::Null, comparison_json),
        "unobserved": cmp.unobserved.as_ref().map_or(Value::Null, comparison_json),
    });
    Ok(Emitted::ok(report_output(
        &json,
        &header,
        cli.format.unwrap_or(Format::Json),
    )?))
}

fn run_poisson(cli: &Cli, args: &PoissonArgs) -> CliResult<Emitted> {
    let report = dirichlet_equivalence_report(
        args.a,
        args.m,
        args.samples,
        &args.betas,
        RandomStream::new(cli.seed, POISSON_EQUIV_STREAM),
    )?;
    let mut header = global_header(cli, "poisson-equiv");
    header
        .push_num("a", args.a)
        .push("m", args.m.to_string())
        .push("samples", args.samples.to_string())
        .push("betas", cells(&args.betas))
        .push("stream", POISSON_EQUIV_STREAM.to_string());
    let scales: Vec<Value> = report
        .scales
        .iter()
        .map(|s| {
            json!({
                "beta": json_num(s.beta),
                "mean": json_num(s.mean),
                "mean_se": json_num(s.mean_se),
                "variance": json_num(s.variance),
                "variance_se": json_num(s.variance_se),
                "analytic_mean": json_num(s.analytic_mean),
                "analytic_variance": json_num(s.analytic_variance),
                "ks": json_num(s.ks),
                "ks_critical": json_num(s.ks_critical),
                "moments_ok": s.moments_ok,
                "ks_ok": s.ks_ok,
            })
        })
        .collect();
    let cross: Vec<Value> = report
        .cross
        .iter()
        .map(|c| {
            json!({
                "betas": [json_num(c.betas.0), json_num(c.betas.1)],
                "mean_z": json_num(c.mean_z),
                "variance_z": json_num(c.variance_z),
                "ks": json_num(c.ks),
                "ks_critical": json_num(c.ks_critical),
                "agree": c.agree,
            })
        })
        .collect();
    let json = json!({
        "config": header.to_json(),
        "a": json_num(report.a),
        "m": report.m,
        "samples": report.count,
        "scales": scales,
        "cross": cross,
        "passed": report.passed,
    });
    Ok(Emitted::ok(report_output(
        &json,
        &header,
        cli.format.unwrap_or(Format::Json),
    )?))
}

fn run_ordered(cli: &Cli, args: &OrderedArgs) -> CliResult<Emitted> {
    let diag = ordered_prior_diagnostics(args.m, args.samples, RandomStream::new(cli.seed, ORDERED_MN_STREAM))?;
    let mut header = global_header(cli, "ordered-mn");
    header
        .push("m", args.m.to_string())
        .push("samples", args.samples.to_string())
        .push("stream", ORDERED_MN_STREAM.to_string())
        .push(
            "k_star",
            diag.k_star.map_or_else(|| "none".to_string(), |k| k.to_string()),
        )
        .push_num("max_simplex_error", diag.max_simplex_error)
        .push_num("min_component", diag.min_component);
    let mut table = Table::new(&["k", "analytic_mean", "empirical_mean", "empirical_median"]);
    for r in &diag.rows {
        table.push(vec![
            r.k.to_string(),
            fmt_num(r.analytic_mean),
            fmt_num(r.empirical_mean),
            fmt_num(r.empirical_median),
        ])?;
    }
    Ok(Emitted::ok(table_output(
        &table,
        &header,
        cli.format.unwrap_or(Format::Csv),
    )))
}
