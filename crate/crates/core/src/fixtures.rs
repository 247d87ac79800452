//! Small deterministic problems used by oracle tests, benchmarks and the
//! `verify` command.

use crate::error::Result;
use crate::grid_model::{build_inclusion_model, AcquisitionGeometry, Grid2D, Model, Source};
use crate::helmholtz::{assemble, factorize, Boundary};
use crate::sensitivity::{synthetic_data, DataSet, Linearization};
use faer::c64;

/// A tiny inverse problem with complex source amplitudes, a known true model
/// and a different current model (so the residual is nonzero).
#[derive(Debug, Clone)]
pub struct OracleFixture {
    pub true_model: Model,
    pub model: Model,
    pub geometry: AcquisitionGeometry,
    pub observed: DataSet,
    pub boundary: Boundary,
}

impl OracleFixture {
    /// 10×10 nodes, 10 m spacing, no absorbing collar, 3 sources,
    /// 5 receivers, 12 Hz. At 12 Hz `ω² m` sits between the two lowest
    /// Dirichlet eigenvalues of the discrete Laplacian, well clear of both.
    pub fn dirichlet() -> Self {
        let grid = Grid2D::new(10, 10, 10.0, 10.0).expect("valid grid");
        Self::build(grid, Boundary::Dirichlet, 12.0, &[(2, 2), (7, 3), (4, 7)], &[(1, 8), (3, 1), (5, 5), (8, 6), (8, 1)])
    }

    /// 8×8 nodes with a thin 4-cell absorbing collar, 15 Hz. Small enough
    /// for second-difference oracles while still exercising the complex
    /// coordinate stretch.
    pub fn pml() -> Self {
        let grid = Grid2D::new(8, 8, 10.0, 10.0).expect("valid grid");
        let boundary = Boundary::Pml { width: 4, strength: 4.0 };
        Self::build(grid, boundary, 15.0, &[(1, 2), (6, 3), (4, 6)], &[(1, 6), (3, 1), (4, 4), (6, 6), (6, 1)])
    }

    /// The inclusion experiment rescaled to `n × n` nodes over the same
    /// 2 km square, with its default absorbing collar and ring acquisition,
    /// starting from the homogeneous background.
    pub fn inclusion(n: usize, frequency_hz: f64) -> Result<Self> {
        let h = 2000.0 / (n.max(2) - 1) as f64;
        let built = build_inclusion_model(Some(Grid2D::new(n, n, h, h)?))?;
        let boundary = Boundary::Pml { width: 10, strength: 4.0 };
        let fact = factorize(assemble(&built.true_model, frequency_hz, boundary)?)?;
        let stations = fact.operator().domain().stations(&built.geometry);
        let observed = synthetic_data(&fact, &stations)?;
        Ok(Self {
            true_model: built.true_model,
            model: built.initial_model,
            geometry: built.geometry,
            observed,
            boundary,
        })
    }

    fn build(grid: Grid2D, boundary: Boundary, freq: f64, src: &[(usize, usize)], rec: &[(usize, usize)]) -> Self {
        let amplitudes = [c64::new(1.0, 0.3), c64::new(-0.5, 0.8), c64::new(0.7, -0.2)];
        let sources = src
            .iter()
            .zip(amplitudes)
            .map(|(&node, amplitude)| Source { node, amplitude })
            .collect();
        let geometry = AcquisitionGeometry::new(grid, sources, rec.to_vec()).expect("valid geometry");
        let (cx, cz) = ((grid.nx - 1) as f64 / 2.0, (grid.nz - 1) as f64 / 2.0);
        let true_model = velocity_model(grid, |i, j| {
            let r2 = ((i - cx).powi(2) + (j - cz).powi(2)) / 6.0;
            1500.0 + 250.0 * (-r2).exp()
        });
        let model = velocity_model(grid, |i, j| 1500.0 + 20.0 * (0.7 * i).sin() * (0.5 * j).cos());
        let fact = factorize(assemble(&true_model, freq, boundary).expect("valid operator")).expect("nonsingular operator");
        let stations = fact.operator().domain().stations(&geometry);
        let observed = synthetic_data(&fact, &stations).expect("finite data");
        Self {
            true_model,
            model,
            geometry,
            observed,
            boundary,
        }
    }

    /// Linearization at the current model.
    pub fn linearize(&self) -> Result<Linearization> {
        Linearization::new(&self.model, &self.geometry, &self.observed, self.boundary)
    }

    pub fn linearize_at(&self, model: &Model) -> Result<Linearization> {
        Linearization::new(model, &self.geometry, &self.observed, self.boundary)
    }
}

fn velocity_model(grid: Grid2D, v: impl Fn(f64, f64) -> f64) -> Model {
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            let c = v(i as f64, j as f64);
            1.0 / (c * c)
        })
        .collect();
    Model::new(grid, values).expect("positive model")
}
