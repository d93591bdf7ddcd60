//! Grid density files: a `#` header line with `key=value` tokens, then one
//! `abscissa,log_density` pair per line.
//!
//! ```text
//! # domain=0e0,1e0 normalized=1 grid=open:0e0,1e0,2049
//! 1.0000000000000000e-10,-2.3025850929940459e1
//! ...
//! ```
//!
//! `domain` and `normalized` are required. `grid` names the layout the
//! nodes came from so that a reader rebuilds the same quadrature; without it
//! the nodes are used directly. Other tokens are carried along.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use prior_forge_core::quadrature::integrate;
use prior_forge_core::{Grid, GridDensity, GridSpec, DEFAULT_TOLERANCE};

use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, fmt_token, Header};

/// How far a file flagged `normalized=1` may integrate away from one.
pub const NORMALIZATION_SLACK: f64 = 1e-8;

pub fn grid_token(grid: &Grid) -> String {
    match grid.spec() {
        Some(GridSpec::Uniform { lo, hi, nodes }) => format!("uniform:{},{},{nodes}", fmt_token(lo), fmt_token(hi)),
        Some(GridSpec::OpenInterval { lo, hi, nodes }) => format!("open:{},{},{nodes}", fmt_token(lo), fmt_token(hi)),
        Some(GridSpec::HalfLine {
            origin,
            near,
            far,
            nodes,
        }) => format!(
            "halfline:{},{},{},{nodes}",
            fmt_token(origin),
            fmt_token(near),
            fmt_token(far)
        ),
        Some(GridSpec::RealLine { center, scale, nodes }) => {
            format!("realline:{},{},{nodes}", fmt_token(center), fmt_token(scale))
        }
        None => "nodes".into(),
    }
}

fn parse_num(what: &str, s: &str) -> CliResult<f64> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::input(format!("{what}: cannot parse {s:?} as a number")))?;
    if x.is_nan() {
        return Err(CliError::input(format!("{what}: NaN is not allowed")));
    }
    Ok(x)
}

fn parse_grid_token(token: &str) -> CliResult<Option<GridSpec>> {
    let bad = || CliError::input(format!("unrecognized grid token {token:?}"));
    if token == "nodes" {
        return Ok(None);
    }
    let (kind, args) = token.split_once(':').ok_or_else(bad)?;
    let parts: Vec<&str> = args.split(',').collect();
    let num = |i: usize| parse_num("grid token", parts[i]);
    let count = |i: usize| parts[i].trim().parse::<usize>().map_err(|_| bad());
    let spec = match (kind, parts.len()) {
        ("uniform", 3) => GridSpec::Uniform {
            lo: num(0)?,
            hi: num(1)?,
            nodes: count(2)?,
        },
        ("open", 3) => GridSpec::OpenInterval {
            lo: num(0)?,
            hi: num(1)?,
            nodes: count(2)?,
        },
        ("halfline", 4) => GridSpec::HalfLine {
            origin: num(0)?,
            near: num(1)?,
            far: num(2)?,
            nodes: count(3)?,
        },
        ("realline", 3) => GridSpec::RealLine {
            center: num(0)?,
            scale: num(1)?,
            nodes: count(2)?,
        },
        _ => return Err(bad()),
    };
    Ok(Some(spec))
}

/// File contents for `density`, with `extra` tokens after the required ones.
pub fn write_density(density: &GridDensity, extra: &Header) -> String {
    let mut header = Header::new();
    header
        .push(
            "domain",
            format!("{},{}", fmt_token(density.domain_lo()), fmt_token(density.domain_hi())),
        )
        .push("normalized", if density.is_normalized() { "1" } else { "0" })
        .push("grid", grid_token(density.grid()))
        .extend(extra);
    let mut out = format!("# {}\n", header.tokens());
    for (x, l) in density.nodes().iter().zip(density.log_values()) {
        out.push_str(&fmt_num(*x));
        out.push(',');
        out.push_str(&fmt_num(*l));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct DensityFile {
    pub density: GridDensity,
    /// Every header token, required ones included.
    pub tokens: BTreeMap<String, String>,
}

fn unescape(value: &str) -> String {
    value.replace("%20", " ").replace("%0A", "\n").replace("%25", "%")
}

/// Parses file contents. Abscissae must be strictly increasing; a file
/// flagged normalized must integrate to one.
pub fn read_density(text: &str) -> CliResult<DensityFile> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| CliError::input("empty density file"))?;
    let header = first
        .strip_prefix('#')
        .ok_or_else(|| CliError::input("density file must start with a '# domain=… normalized=…' line"))?;
    let mut tokens = BTreeMap::new();
    for token in header.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("header token {token:?} is not key=value")))?;
        tokens.insert(k.to_string(), unescape(v));
    }
    let domain = tokens
        .get("domain")
        .ok_or_else(|| CliError::input("header lacks domain=lo,hi"))?;
    let (lo, hi) = domain
        .split_once(',')
        .ok_or_else(|| CliError::input(format!("domain {domain:?} is not lo,hi")))?;
    let (lo, hi) = (parse_num("domain", lo)?, parse_num("domain", hi)?);
    let normalized = match tokens.get("normalized").map(String::as_str) {
        Some("1") => true,
        Some("0") => false,
        other => return Err(CliError::input(format!("normalized must be 0 or 1, got {other:?}"))),
    };

    let mut nodes = Vec::new();
    let mut log_values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (x, l) = line
            .split_once(',')
            .ok_or_else(|| CliError::input(format!("line {}: expected abscissa,log_density", i + 2)))?;
        let x = parse_num("abscissa", x)?;
        let l = parse_num("log density", l)?;
        if let Some(&prev) = nodes.last() {
            if x <= prev {
                return Err(CliError::input(format!(
                    "line {}: abscissa {x} does not increase (previous {prev})",
                    i + 2
                )));
            }
        }
        nodes.push(x);
        log_values.push(l);
    }

    let grid: Arc<Grid> = match tokens.get("grid").map(|t| parse_grid_token(t)).transpose()?.flatten() {
        Some(spec) => {
            let grid = Grid::from_spec(spec)?;
            let matches = grid.nodes().len() == nodes.len()
                && grid
                    .nodes()
                    .iter()
                    .zip(&nodes)
                    .all(|(a, b)| (a - b).abs() <= 1e-14 * a.abs().max(b.abs()));
            if !matches || (grid.domain_lo(), grid.domain_hi()) != (lo, hi) {
                return Err(CliError::input("abscissae or domain do not match the grid token"));
            }
            grid
        }
        None => Grid::from_nodes(lo, hi, nodes)?,
    };
    let density = GridDensity::new(grid, log_values, normalized)?;
    if normalized {
        let mass = integrate(&density, DEFAULT_TOLERANCE)?;
        if !(mass.value.is_finite() && (mass.value - 1.0).abs() <= NORMALIZATION_SLACK) {
            return Err(CliError::input(format!(
                "file is flagged normalized but integrates to {}",
                mass.value
            )));
        }
    }
    Ok(DensityFile { density, tokens })
}

pub fn load_density(path: &Path) -> CliResult<DensityFile> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    read_density(&text).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}
