//! Numerical core for pooling objective priors, checking posterior propriety
//! and analysing sparse multinomial hierarchies.
//!
//! Everything in this crate is a pure function of its inputs and builds
//! without `std`; only `alloc` is required. File formats, the command line
//! and thread pools live in the companion `prior-forge` crate.

#![no_std]
// `!(x > y)` is used on purpose so that NaN falls into the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod family;
pub mod grid;
pub mod pooling;
pub mod propriety;
pub mod quadrature;
pub mod random;
pub mod reparam;
pub mod sparse;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use family::Family;
pub use grid::{Grid, GridDensity, GridSpec};
pub use quadrature::{integrate, mode, normalize, quantile, QuadratureResult};
pub use random::RandomStream;

/// Relative tolerance used when a caller does not supply one.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Node count of the default grids.
pub const DEFAULT_NODES: usize = 2049;
