//! Regular grids, squared-slowness models, benchmark builders and acquisition.

mod acquisition;
mod benchmarks;
mod grid;
mod model;

pub use acquisition::{ring_positions, AcquisitionGeometry, Source};
pub use benchmarks::{
    build_concrete_model, build_inclusion_model, BenchmarkModel, Block, ConcreteSetup, Disk,
    InclusionSetup,
};
pub use grid::Grid2D;
pub use model::{model_to_velocity, velocity_to_model, Model, VelocityField};
