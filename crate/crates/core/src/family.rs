//! Closed-form one-parameter densities used as pooling components, priors and
//! hyperpriors.

use alloc::sync::Arc;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{require_positive, Error, Result};
use crate::grid::{Grid, GridDensity, GridSpec};
use crate::special::{log_beta_unchecked, log_gamma_unchecked};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `x^(a-1) (1-x)^(b-1)` on (0, 1).
    Beta {
        a: f64,
        b: f64,
    },
    /// Shape–scale gamma, `x^(shape-1) e^(-x/scale)` on (0, ∞).
    Gamma {
        shape: f64,
        scale: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Constant kernel on the real line (improper).
    Flat,
    /// `e^(rate·θ)` on the real line (improper).
    ExpTilt {
        rate: f64,
    },
    /// `e^(coef·θ²)` on the real line.
    QuadraticTilt {
        coef: f64,
    },
}

#[inline]
pub(crate) fn xlogy(c: f64, x: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * x.ln()
    }
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::Beta { a, b } => {
                require_positive("beta shape a", a)?;
                require_positive("beta shape b", b)?;
            }
            Family::Gamma { shape, scale } => {
                require_positive("gamma shape", shape)?;
                require_positive("gamma scale", scale)?;
            }
            Family::Normal { mean, sd } => {
                if !mean.is_finite() {
                    return Err(Error::domain("normal mean", "a finite value", mean));
                }
                require_positive("normal sd", sd)?;
            }
            Family::Flat => {}
            Family::ExpTilt { rate } => {
                if !rate.is_finite() {
                    return Err(Error::domain("tilt rate", "a finite value", rate));
                }
            }
            Family::QuadraticTilt { coef } => {
                if !coef.is_finite() {
                    return Err(Error::domain("quadratic tilt coefficient", "a finite value", coef));
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Family::Beta { .. } => (0.0, 1.0),
            Family::Gamma { .. } => (0.0, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Unnormalized log-density; `-∞` outside the support.
    pub fn log_kernel(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Family::Beta { a, b } => xlogy(a - 1.0, x) + if b == 1.0 { 0.0 } else { (b - 1.0) * (-x).ln_1p() },
            Family::Gamma { shape, scale } => xlogy(shape - 1.0, x) - x / scale,
            Family::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z
            }
            Family::Flat => 0.0,
            Family::ExpTilt { rate } => rate * x,
            Family::QuadraticTilt { coef } => coef * x * x,
        }
    }

    /// `ln ∫ kernel` over the support, for the proper families.
    pub fn log_normalizer(&self) -> Option<f64> {
        match *self {
            Family::Beta { a, b } => Some(log_beta_unchecked(a, b)),
            Family::Gamma { shape, scale } => Some(log_gamma_unchecked(shape) + shape * scale.ln()),
            Family::Normal { sd, .. } => Some(sd.ln() + 0.5 * (2.0 * PI).ln()),
            Family::QuadraticTilt { coef } if coef < 0.0 => Some(0.5 * (PI / -coef).ln()),
            _ => None,
        }
    }

    pub fn is_proper(&self) -> bool {
        self.log_normalizer().is_some()
    }

    /// Normalized log-density for proper families, the kernel otherwise.
    pub fn log_density(&self, x: f64) -> f64 {
        self.log_kernel(x) - self.log_normalizer().unwrap_or(0.0)
    }

    /// Grid layout matching the support, centred on the bulk of the density.
    pub fn default_grid_spec(&self, nodes: usize) -> GridSpec {
        match *self {
            Family::Beta { .. } => GridSpec::unit_interval(nodes),
            Family::Gamma { shape, scale } => GridSpec::HalfLine {
                origin: 0.0,
                near: 1e-10 * scale,
                far: 1e6 * scale * shape.max(1.0),
                nodes,
            },
            Family::Normal { mean, sd } => GridSpec::RealLine {
                center: mean,
                scale: sd,
                nodes,
            },
            _ => GridSpec::real_line(nodes),
        }
    }

    /// Kernel values on `grid`, flagged unnormalized.
    pub fn tabulate(&self, grid: Arc<Grid>) -> Result<GridDensity> {
        self.validate()?;
        GridDensity::from_log_fn(grid, |x| self.log_kernel(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    #[test]
    fn normalizers_match_quadrature() {
        let families = [
            Family::Beta { a: 0.5, b: 0.5 },
            Family::Beta { a: 2.0, b: 3.0 },
            Family::Beta { a: 0.3, b: 7.0 },
            Family::Gamma { shape: 3.0, scale: 1.0 },
            Family::Gamma { shape: 0.4, scale: 2.5 },
            Family::Normal { mean: 1.5, sd: 0.3 },
            Family::QuadraticTilt { coef: -0.25 },
        ];
        for family in families {
            let grid = Grid::from_spec(family.default_grid_spec(2049)).unwrap();
            let d = family.tabulate(grid).unwrap();
            let r = integrate(&d, 1e-10).unwrap();
            let expected = family.log_normalizer().unwrap().exp();
            assert!(
                (r.value / expected - 1.0).abs() < 1e-8,
                "{family:?}: quadrature {} vs {}",
                r.value,
                expected
            );
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(Family::Beta { a: 0.0, b: 1.0 }.validate().is_err());
        assert!(Family::Gamma {
            shape: 1.0,
            scale: -1.0
        }
        .validate()
        .is_err());
        assert!(Family::Normal {
            mean: f64::NAN,
            sd: 1.0
        }
        .validate()
        .is_err());
        assert!(Family::ExpTilt { rate: f64::INFINITY }.validate().is_err());
    }

    #[test]
    fn kernel_is_zero_outside_support() {
        assert_eq!(Family::Beta { a: 2.0, b: 2.0 }.log_kernel(1.5), f64::NEG_INFINITY);
        assert_eq!(
            Family::Gamma { shape: 2.0, scale: 1.0 }.log_kernel(-0.1),
            f64::NEG_INFINITY
        );
        assert_eq!(Family::Beta { a: 1.0, b: 1.0 }.log_kernel(0.0), 0.0);
    }
}
