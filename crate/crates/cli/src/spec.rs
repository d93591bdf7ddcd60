//! Prior strings, pool spec files and the choice of a shared grid.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use prior_forge_core::{Family, Grid, GridDensity, GridSpec};
use serde::Deserialize;

use crate::density_io::load_density;
use crate::error::{CliError, CliResult};

/// A prior given either in closed form or as a density file.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSource {
    Family(Family),
    File(PathBuf),
}

fn parse_params(what: &str, args: &str, count: usize) -> CliResult<Vec<f64>> {
    let values = args
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("{what}: cannot parse {s:?} as a number")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if values.len() != count {
        return Err(CliError::input(format!(
            "{what} takes {count} parameter(s), got {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Builds a family from its name and parameter list.
pub fn family_from_parts(name: &str, params: &[f64]) -> CliResult<Family> {
    let need = |k: usize| {
        if params.len() == k {
            Ok(())
        } else {
            Err(CliError::input(format!(
                "{name} takes {k} parameter(s), got {}",
                params.len()
            )))
        }
    };
    let family = match name {
        "flat" => {
            need(0)?;
            Family::Flat
        }
        "tilt" => {
            need(1)?;
            Family::ExpTilt { rate: params[0] }
        }
        "quad-tilt" => {
            need(1)?;
            Family::QuadraticTilt { coef: params[0] }
        }
        "beta" => {
            need(2)?;
            Family::Beta {
                a: params[0],
                b: params[1],
            }
        }
        "gamma" => {
            need(2)?;
            Family::Gamma {
                shape: params[0],
                scale: params[1],
            }
        }
        "normal" => {
            need(2)?;
            Family::Normal {
                mean: params[0],
                sd: params[1],
            }
        }
        other => return Err(CliError::input(format!("unknown family {other:?}"))),
    };
    family.validate()?;
    Ok(family)
}

/// Parses `flat`, `tilt:b`, `quad-tilt:c`, `beta:a,b`, `gamma:shape,scale`,
/// `normal:mean,sd` or `file:path`.
pub fn parse_prior(text: &str) -> CliResult<PriorSource> {
    let (name, args) = match text.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (text, None),
    };
    if name == "file" {
        return match args {
            Some(p) if !p.is_empty() => Ok(PriorSource::File(PathBuf::from(p))),
            _ => Err(CliError::input("file: needs a path")),
        };
    }
    let count = match name {
        "flat" => 0,
        "tilt" | "quad-tilt" => 1,
        _ => 2,
    };
    let params = match args {
        Some(a) => parse_params(name, a, count)?,
        None => Vec::new(),
    };
    family_from_parts(name, &params)
        .map(PriorSource::Family)
        .map_err(|e| CliError::input(format!("prior {text:?}: {e}")))
}

pub fn prior_label(source: &PriorSource) -> String {
    match source {
        PriorSource::File(p) => format!("file:{}", p.display()),
        PriorSource::Family(f) => family_label(f),
    }
}

pub fn family_label(f: &Family) -> String {
    use crate::output::fmt_token as t;
    match *f {
        Family::Flat => "flat".into(),
        Family::ExpTilt { rate } => format!("tilt:{}", t(rate)),
        Family::QuadraticTilt { coef } => format!("quad-tilt:{}", t(coef)),
        Family::Beta { a, b } => format!("beta:{},{}", t(a), t(b)),
        Family::Gamma { shape, scale } => format!("gamma:{},{}", t(shape), t(scale)),
        Family::Normal { mean, sd } => format!("normal:{},{}", t(mean), t(sd)),
    }
}

fn merge_specs(specs: &[GridSpec]) -> CliResult<GridSpec> {
    let first = specs[0];
    let mismatch = || CliError::input("the priors live on different parameter spaces and cannot share a grid");
    let nodes = first.nodes();
    match first {
        GridSpec::OpenInterval { .. } | GridSpec::Uniform { .. } => {
            if specs.iter().any(|s| s.domain() != first.domain()) {
                return Err(mismatch());
            }
            Ok(first)
        }
        GridSpec::HalfLine { origin, .. } => {
            let mut near = f64::INFINITY;
            let mut far: f64 = 0.0;
            for s in specs {
                match *s {
                    GridSpec::HalfLine {
                        origin: o,
                        near: n,
                        far: f,
                        ..
                    } if o == origin => {
                        near = near.min(n);
                        far = far.max(f);
                    }
                    _ => return Err(mismatch()),
                }
            }
            Ok(GridSpec::HalfLine {
                origin,
                near,
                far,
                nodes,
            })
        }
        GridSpec::RealLine { .. } => {
            let mut center = 0.0;
            let mut scale: f64 = 0.0;
            for s in specs {
                match *s {
                    GridSpec::RealLine {
                        center: c, scale: sc, ..
                    } => {
                        center += c / specs.len() as f64;
                        scale = scale.max(sc);
                    }
                    _ => return Err(mismatch()),
                }
            }
            Ok(GridSpec::RealLine { center, scale, nodes })
        }
    }
}

/// Priors loaded and tabulated on one grid.
#[derive(Debug, Clone)]
pub struct Tabulated {
    pub grid: Arc<Grid>,
    pub densities: Vec<GridDensity>,
}

/// Tabulates `sources` on a common grid. Density files fix the grid and must
/// all share it; otherwise the default grids of the families are merged,
/// which requires equal supports. `fixed` supplies a grid to use when no
/// file does, e.g. that of a tabulated likelihood.
pub fn tabulate_sources(sources: &[PriorSource], nodes: usize, fixed: Option<Arc<Grid>>) -> CliResult<Tabulated> {
    let mut loaded: Vec<Option<GridDensity>> = Vec::with_capacity(sources.len());
    let mut grid: Option<Arc<Grid>> = fixed;
    for source in sources {
        match source {
            PriorSource::File(path) => {
                let d = load_density(path)?.density;
                match &grid {
                    Some(g) if !g.same_as(d.grid()) => {
                        return Err(CliError::input(format!(
                            "{} is not tabulated on the same grid as the other inputs",
                            path.display()
                        )))
                    }
                    Some(_) => {}
                    None => grid = Some(d.grid().clone()),
                }
                loaded.push(Some(d));
            }
            PriorSource::Family(_) => loaded.push(None),
        }
    }
    let families: Vec<Family> = sources
        .iter()
        .filter_map(|s| match s {
            PriorSource::Family(f) => Some(*f),
            PriorSource::File(_) => None,
        })
        .collect();
    let grid = match grid {
        Some(g) => g,
        None => {
            let specs: Vec<GridSpec> = families.iter().map(|f| f.default_grid_spec(nodes)).collect();
            Grid::from_spec(merge_specs(&specs)?)?
        }
    };
    for f in &families {
        if f.support() != (grid.domain_lo(), grid.domain_hi()) {
            return Err(CliError::input(format!(
                "{} has support {:?} but the grid covers ({}, {})",
                family_label(f),
                f.support(),
                grid.domain_lo(),
                grid.domain_hi()
            )));
        }
    }
    let densities = sources
        .iter()
        .zip(loaded)
        .map(|(s, l)| match (s, l) {
            (_, Some(d)) => Ok(d),
            (PriorSource::Family(f), None) => Ok(f.tabulate(grid.clone())?),
            (PriorSource::File(_), None) => unreachable!("files are loaded above"),
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Tabulated { grid, densities })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    family: String,
    #[serde(default)]
    params: Vec<f64>,
    path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoolSpec {
    components: Vec<RawComponent>,
    weights: Vec<f64>,
    nodes: Option<usize>,
}

/// Contents of a pool spec file.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSpec {
    pub components: Vec<PriorSource>,
    pub weights: Vec<f64>,
    pub nodes: Option<usize>,
}

/// Parses a pool spec. Relative `grid-file` paths are resolved against
/// `base`, the directory holding the spec.
pub fn parse_pool_spec(text: &str, base: &Path) -> CliResult<PoolSpec> {
    let raw: RawPoolSpec = serde_json::from_str(text).map_err(|e| CliError::input(format!("pool spec: {e}")))?;
    if raw.components.is_empty() {
        return Err(CliError::input("pool spec has no components"));
    }
    let components = raw
        .components
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let source = if c.family == "grid-file" {
                let path = c
                    .path
                    .ok_or_else(|| CliError::input(format!("component {i}: grid-file needs a path")))?;
                PriorSource::File(if path.is_absolute() { path } else { base.join(path) })
            } else {
                if c.path.is_some() {
                    return Err(CliError::input(format!(
                        "component {i}: path is only valid for grid-file"
                    )));
                }
                PriorSource::Family(
                    family_from_parts(&c.family, &c.params)
                        .map_err(|e| CliError::input(format!("component {i}: {e}")))?,
                )
            };
            Ok(source)
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(PoolSpec {
        components,
        weights: raw.weights,
        nodes: raw.nodes,
    })
}

pub fn load_pool_spec(path: &Path) -> CliResult<PoolSpec> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_pool_spec(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_strings() {
        assert_eq!(parse_prior("flat").unwrap(), PriorSource::Family(Family::Flat));
        assert_eq!(
            parse_prior("beta:0.5,2").unwrap(),
            PriorSource::Family(Family::Beta { a: 0.5, b: 2.0 })
        );
        assert_eq!(
            parse_prior("tilt:-1.5").unwrap(),
            PriorSource::Family(Family::ExpTilt { rate: -1.5 })
        );
        assert_eq!(
            parse_prior("file:a/b.csv").unwrap(),
            PriorSource::File("a/b.csv".into())
        );
        for bad in ["beta:1", "beta:-1,1", "gamma:x,1", "cauchy:0,1", "file:", "tilt"] {
            assert!(parse_prior(bad).is_err(), "{bad}");
        }
        for text in ["flat", "tilt:-1.5e0", "beta:5e-1,2e0", "normal:0e0,1e0"] {
            assert_eq!(prior_label(&parse_prior(text).unwrap()), text);
        }
    }

    #[test]
    fn default_grids_are_merged() {
        let g = |s: &str| parse_prior(s).unwrap();
        let t = tabulate_sources(&[g("gamma:1,1"), g("gamma:2,10")], 129, None).unwrap();
        match t.grid.spec().unwrap() {
            GridSpec::HalfLine { near, far, .. } => {
                assert_eq!(near, 1e-10);
                assert_eq!(far, 2e7);
            }
            other => panic!("{other:?}"),
        }
        let t = tabulate_sources(&[g("normal:0,1"), g("normal:2,3"), g("flat")], 129, None).unwrap();
        match t.grid.spec().unwrap() {
            GridSpec::RealLine { center, scale, .. } => {
                assert!((center - 2.0 / 3.0).abs() < 1e-15);
                assert_eq!(scale, 3.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(tabulate_sources(&[g("beta:1,1"), g("normal:0,1")], 129, None).is_err());
        assert!(tabulate_sources(&[g("gamma:1,1"), g("flat")], 129, None).is_err());
    }

    #[test]
    fn pool_spec_parsing() {
        let text = r#"{"components":[{"family":"beta","params":[2,3]},{"family":"grid-file","path":"p.csv"}],
                       "weights":[0.25,0.75],"nodes":513}"#;
        let spec = parse_pool_spec(text, Path::new("/data")).unwrap();
        assert_eq!(spec.components[1], PriorSource::File("/data/p.csv".into()));
        assert_eq!(spec.nodes, Some(513));
        assert!(parse_pool_spec(r#"{"components":[],"weights":[]}"#, Path::new(".")).is_err());
        assert!(parse_pool_spec(
            r#"{"components":[{"family":"grid-file"}],"weights":[1]}"#,
            Path::new(".")
        )
        .is_err());
        assert!(parse_pool_spec(
            r#"{"components":[{"family":"beta","params":[1]}],"weights":[1]}"#,
            Path::new(".")
        )
        .is_err());
        assert!(parse_pool_spec(
            r#"{"components":[{"family":"flat"}],"weights":[1],"extra":1}"#,
            Path::new(".")
        )
        .is_err());
    }
}
