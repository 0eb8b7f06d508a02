//! Discrete Dolbeault complex on polydiscs and the weighted minimal-norm
//! extension of dbar-closed (0,q)-forms from the hyperplane `z_1 = 0`.

pub mod error;
pub mod form;
pub mod operators;
pub mod pipeline;
pub mod precond;
pub mod grid;
pub mod profile;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod sum;
pub mod verify;

pub use error::{Error, Result};
pub use form::{field_axpy, insert_index, l2_inner, remove_index, FormField, MultiIndex};
pub use grid::{build_grid, build_grid_with, DomainSpec, Grid};
pub use profile::{sample_cutoff, sample_test_function, CutoffProfile, Normalization};
