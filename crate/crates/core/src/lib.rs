//! Frequency-domain 2D acoustic waveform inversion with a family of
//! Hessian approximations (pseudo, Gauss-Newton, full Newton, augmented
//! Gauss-Newton), the sequential-solve update, and wavefield reconstruction
//! inversion.

pub mod driver;
pub mod error;
pub mod fixtures;
pub mod grid_model;
pub mod helmholtz;
pub mod hessians;
pub mod io;
pub mod linalg;
pub mod sensitivity;
pub mod updaters;

pub use error::{FwiError, Result};
pub use faer::c64;
pub use grid_model::{AcquisitionGeometry, Grid2D, Model};
