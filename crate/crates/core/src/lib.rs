//! Diagnostics for energy conservation in incompressible flow fields.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod boundary_flux;
pub mod bump;
pub mod calculus;
pub mod commutator;
pub mod energy_balance;
pub mod error;
pub mod fieldio;
pub mod fit;
pub mod grid;
pub mod mollify;
pub mod ns_solver;
pub mod pressure;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{AxisKind, Domain, Geometry, Grid, Region, Snapshot, Tags, Trajectory};
