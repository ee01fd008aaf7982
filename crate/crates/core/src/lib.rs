//! Direct and inverse scattering for the 3x3 AKNS spectral problem
//! `psi_x = (i lambda sigma + U) psi` underlying the Manakov system.

// `!(a > b)` is used on purpose so NaN lands in the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli_io;
pub mod direct_scattering;
pub mod error;
pub mod evolution_oracle;
pub mod grid_core;
pub mod rhp_inverse;
pub mod spectral_singularities;

pub use error::{Error, Result};
pub use grid_core::{Complex3x3, Epsilon, GridPotential, LambdaGrid, XGrid, C64};
