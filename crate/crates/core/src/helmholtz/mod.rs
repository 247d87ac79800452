//! Discrete frequency-domain wave operator, its sparse factorization, and
//! the sampling/injection operators of the acquisition.

mod domain;
mod factorization;
mod operator;

pub use domain::{Boundary, PaddedDomain, StationMap};
pub use factorization::{factorize, HelmholtzFactorization};
pub use operator::{
    assemble, nodes_per_wavelength, HelmholtzOperator, StretchedLaplacian,
    MIN_NODES_PER_WAVELENGTH,
};
