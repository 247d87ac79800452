//! Builders for the two benchmark experiments: high-contrast circular
//! inclusions under ring acquisition, and a near-surface concrete structure.
//!
//! The anomaly geometry of both is configurable; the defaults are documented
//! on [`InclusionSetup::default`] and [`ConcreteSetup::default`].

use super::{ring_positions, AcquisitionGeometry, Grid2D, Model, VelocityField};
use crate::error::{FwiError, Result};

/// True model, starting model and acquisition of a synthetic experiment.
#[derive(Debug, Clone)]
pub struct BenchmarkModel {
    pub true_model: Model,
    pub initial_model: Model,
    pub geometry: AcquisitionGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    /// Center `(x, z)` in meters.
    pub center: (f64, f64),
    pub radius: f64,
}

impl Disk {
    /// Membership by node-center position; boundary points are outside.
    pub fn contains(&self, grid: &Grid2D, i: usize, j: usize) -> bool {
        let ddx = (i as f64 - self.center.0 / grid.dx) * grid.dx;
        let ddz = (j as f64 - self.center.1 / grid.dz) * grid.dz;
        ddx * ddx + ddz * ddz < self.radius * self.radius * (1.0 - 1e-12)
    }
}

/// Axis-aligned block `[x0, x1) × [z0, z1)` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub x0: f64,
    pub x1: f64,
    pub z0: f64,
    pub z1: f64,
}

impl Block {
    pub fn contains(&self, grid: &Grid2D, i: usize, j: usize) -> bool {
        const TOL: f64 = 1e-6;
        let (fi, fj) = (i as f64, j as f64);
        fi >= self.x0 / grid.dx - TOL
            && fi < self.x1 / grid.dx - TOL
            && fj >= self.z0 / grid.dz - TOL
            && fj < self.z1 / grid.dz - TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionSetup {
    pub grid: Grid2D,
    pub background_velocity: f64,
    pub anomaly_velocity: f64,
    pub disks: Vec<Disk>,
    pub n_sources: usize,
    pub n_receivers: usize,
}

impl Default for InclusionSetup {
    /// 2 km × 2 km at 20 m (101×101 nodes), 1.5 km/s background, two 4.5 km/s
    /// disks of radius 200 m centered at (0.7 km, 0.7 km) and (1.3 km, 1.3 km),
    /// 112 sources and 112 receivers on a ring.
    fn default() -> Self {
        Self {
            grid: Grid2D {
                nx: 101,
                nz: 101,
                dx: 20.0,
                dz: 20.0,
            },
            background_velocity: 1500.0,
            anomaly_velocity: 4500.0,
            disks: vec![
                Disk {
                    center: (700.0, 700.0),
                    radius: 200.0,
                },
                Disk {
                    center: (1300.0, 1300.0),
                    radius: 200.0,
                },
            ],
            n_sources: 112,
            n_receivers: 112,
        }
    }
}

impl InclusionSetup {
    /// Same physical layout on another grid; disk centers and radii scale
    /// with the domain extent.
    pub fn on_grid(grid: Grid2D) -> Self {
        let base = Self::default();
        let (bx, bz) = base.grid.extent();
        let (ex, ez) = grid.extent();
        let scale = (ex / bx).min(ez / bz);
        let disks = base
            .disks
            .iter()
            .map(|d| Disk {
                center: (d.center.0 * ex / bx, d.center.1 * ez / bz),
                radius: d.radius * scale,
            })
            .collect();
        Self { grid, disks, ..base }
    }

    pub fn build(&self) -> Result<BenchmarkModel> {
        let grid = self.grid;
        let (ex, ez) = grid.extent();
        for d in &self.disks {
            let (cx, cz) = d.center;
            if d.radius < 0.0 || cx - d.radius < 0.0 || cz - d.radius < 0.0 || cx + d.radius > ex || cz + d.radius > ez {
                return Err(FwiError::Config(format!(
                    "disk at ({cx}, {cz}) with radius {} does not fit in the {ex} m x {ez} m domain",
                    d.radius
                )));
            }
            if d.radius > 0.0 && count_nodes(&grid, |i, j| d.contains(&grid, i, j)) == 0 {
                return Err(FwiError::Config(format!(
                    "grid spacing {} m is too coarse to resolve a disk of radius {} m",
                    grid.dx, d.radius
                )));
            }
        }
        let mut velocity = VelocityField::uniform(grid, self.background_velocity);
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                if self.disks.iter().any(|d| d.contains(&grid, i, j)) {
                    velocity.values[grid.index(i, j)] = self.anomaly_velocity;
                }
            }
        }
        let geometry = ring_geometry(&grid, self.n_sources, self.n_receivers)?;
        Ok(BenchmarkModel {
            true_model: super::velocity_to_model(&velocity)?,
            initial_model: Model::uniform_velocity(grid, self.background_velocity)?,
            geometry,
        })
    }

    pub fn anomalous_node_count(&self) -> usize {
        count_nodes(&self.grid, |i, j| {
            self.disks.iter().any(|d| d.contains(&self.grid, i, j))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteSetup {
    pub grid: Grid2D,
    pub background_velocity: f64,
    pub block_velocity: f64,
    pub blocks: Vec<Block>,
    pub n_stations: usize,
}

impl Default for ConcreteSetup {
    /// 15 m × 3 m at 0.15 m (101×21 nodes), 300 m/s background, two stacked
    /// 4000 m/s blocks centered horizontally: the upper 1.5 m × 0.6 m with its
    /// top at 0.9 m depth and the lower 3.0 m × 0.6 m directly beneath, and
    /// 120 co-located sources/receivers on a ring.
    fn default() -> Self {
        let xc = 7.5;
        Self {
            grid: Grid2D {
                nx: 101,
                nz: 21,
                dx: 0.15,
                dz: 0.15,
            },
            background_velocity: 300.0,
            block_velocity: 4000.0,
            blocks: vec![
                Block {
                    x0: xc - 0.75,
                    x1: xc + 0.75,
                    z0: 0.9,
                    z1: 1.5,
                },
                Block {
                    x0: xc - 1.5,
                    x1: xc + 1.5,
                    z0: 1.5,
                    z1: 2.1,
                },
            ],
            n_stations: 120,
        }
    }
}

impl ConcreteSetup {
    pub fn on_grid(grid: Grid2D) -> Self {
        let base = Self::default();
        let (bx, bz) = base.grid.extent();
        let (ex, ez) = grid.extent();
        let (sx, sz) = (ex / bx, ez / bz);
        let blocks = base
            .blocks
            .iter()
            .map(|b| Block {
                x0: b.x0 * sx,
                x1: b.x1 * sx,
                z0: b.z0 * sz,
                z1: b.z1 * sz,
            })
            .collect();
        Self { grid, blocks, ..base }
    }

    pub fn build(&self) -> Result<BenchmarkModel> {
        let grid = self.grid;
        let (ex, ez) = grid.extent();
        for b in &self.blocks {
            if b.x0 < 0.0 || b.z0 < 0.0 || b.x1 > ex + 1e-9 || b.z1 > ez + 1e-9 || b.x0 >= b.x1 || b.z0 >= b.z1 {
                return Err(FwiError::Config(format!(
                    "block {b:?} does not fit in the {ex} m x {ez} m domain"
                )));
            }
            if count_nodes(&grid, |i, j| b.contains(&grid, i, j)) == 0 {
                return Err(FwiError::Config(format!(
                    "grid spacing {} m is too coarse to resolve block {b:?}",
                    grid.dx
                )));
            }
        }
        let mut velocity = VelocityField::uniform(grid, self.background_velocity);
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                if self.blocks.iter().any(|b| b.contains(&grid, i, j)) {
                    velocity.values[grid.index(i, j)] = self.block_velocity;
                }
            }
        }
        let nodes = ring_positions(&grid, self.n_stations)?;
        Ok(BenchmarkModel {
            true_model: super::velocity_to_model(&velocity)?,
            initial_model: Model::uniform_velocity(grid, self.background_velocity)?,
            geometry: AcquisitionGeometry::colocated(grid, &nodes)?,
        })
    }
}

fn ring_geometry(grid: &Grid2D, n_sources: usize, n_receivers: usize) -> Result<AcquisitionGeometry> {
    let sources = ring_positions(grid, n_sources)?;
    if n_sources == n_receivers {
        return AcquisitionGeometry::colocated(*grid, &sources);
    }
    let receivers = ring_positions(grid, n_receivers)?;
    let sources = sources
        .into_iter()
        .map(|node| super::Source {
            node,
            amplitude: faer::c64::new(1.0, 0.0),
        })
        .collect();
    AcquisitionGeometry::new(*grid, sources, receivers)
}

fn count_nodes(grid: &Grid2D, pred: impl Fn(usize, usize) -> bool) -> usize {
    (0..grid.nz)
        .flat_map(|j| (0..grid.nx).map(move |i| (i, j)))
        .filter(|&(i, j)| pred(i, j))
        .count()
}

/// Inclusion experiment with the default layout, optionally on another grid.
pub fn build_inclusion_model(grid_override: Option<Grid2D>) -> Result<BenchmarkModel> {
    match grid_override {
        Some(grid) => InclusionSetup::on_grid(grid).build(),
        None => InclusionSetup::default().build(),
    }
}

/// Concrete experiment with the default layout, optionally on another grid.
pub fn build_concrete_model(grid_override: Option<Grid2D>) -> Result<BenchmarkModel> {
    match grid_override {
        Some(grid) => ConcreteSetup::on_grid(grid).build(),
        None => ConcreteSetup::default().build(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inclusion_defaults() {
        let b = build_inclusion_model(None).unwrap();
        let g = *b.true_model.grid();
        assert_eq!((g.nx, g.nz, g.dx, g.dz), (101, 101, 20.0, 20.0));
        assert_eq!(b.geometry.n_sources(), 112);
        assert_eq!(b.geometry.n_receivers(), 112);
        let bg = 1.0 / (1500.0f64 * 1500.0);
        assert_eq!(b.true_model.values()[g.index(5, 90)], bg);
        assert_eq!(b.true_model.values()[g.index(35, 35)], 1.0 / (4500.0f64 * 4500.0));
        assert_eq!(b.true_model.values()[g.index(65, 65)], 1.0 / (4500.0f64 * 4500.0));
        assert!(b.initial_model.values().iter().all(|&m| m == bg));
    }

    #[test]
    fn zero_radius_gives_homogeneous_truth() {
        let mut setup = InclusionSetup::default();
        for d in &mut setup.disks {
            d.radius = 0.0;
        }
        let b = setup.build().unwrap();
        assert_eq!(b.true_model, b.initial_model);
    }

    #[test]
    fn coarse_or_small_grid_is_rejected() {
        let mut setup = InclusionSetup::default();
        setup.grid = Grid2D::new(11, 11, 200.0, 200.0).unwrap();
        setup.disks[0].radius = 50.0;
        assert!(matches!(setup.build(), Err(FwiError::Config(_))));
        let mut setup = InclusionSetup::default();
        setup.grid = Grid2D::new(51, 51, 20.0, 20.0).unwrap();
        assert!(matches!(setup.build(), Err(FwiError::Config(_))));
        assert!(build_inclusion_model(Some(Grid2D::new(51, 51, 40.0, 40.0).unwrap())).is_ok());
    }

    #[test]
    fn concrete_defaults() {
        let b = build_concrete_model(None).unwrap();
        let g = *b.true_model.grid();
        assert_eq!((g.nx, g.nz, g.dx, g.dz), (101, 21, 0.15, 0.15));
        assert_eq!(b.geometry.n_sources(), 120);
        assert_eq!(b.geometry.n_receivers(), 120);
        for (s, r) in b.geometry.sources().iter().zip(b.geometry.receivers()) {
            assert_eq!(s.node, *r);
        }
        assert_eq!(b.true_model.values()[g.index(5, 18)], 1.0 / (300.0f64 * 300.0));
        let fast = 1.0 / (4000.0f64 * 4000.0);
        // upper block: x in [6.75, 8.25), z in [0.9, 1.5) -> i 45..55, j 6..10
        assert_eq!(b.true_model.values()[g.index(50, 6)], fast);
        assert_eq!(b.true_model.values()[g.index(44, 7)], 1.0 / (300.0f64 * 300.0));
        // lower block: x in [6.0, 9.0), z in [1.5, 2.1) -> i 40..60, j 10..14
        assert_eq!(b.true_model.values()[g.index(40, 12)], fast);
        assert_eq!(b.true_model.values()[g.index(59, 13)], fast);
        assert_eq!(b.true_model.values()[g.index(60, 13)], 1.0 / (300.0f64 * 300.0));
        let count = b.true_model.values().iter().filter(|&&m| m == fast).count();
        assert_eq!(count, 10 * 4 + 20 * 4);
    }

    proptest! {
        #[test]
        fn anomaly_count_invariant_under_integer_shift(
            ci in 20i32..40, cj in 20i32..40, r in 20.0f64..200.0, si in -8i32..8, sj in -8i32..8
        ) {
            let grid = Grid2D::new(61, 61, 20.0, 20.0).unwrap();
            let mk = |ci: i32, cj: i32| InclusionSetup {
                grid,
                disks: vec![Disk { center: (ci as f64 * 20.0, cj as f64 * 20.0), radius: r }],
                ..InclusionSetup::default()
            };
            let a = mk(ci, cj).anomalous_node_count();
            let b = mk(ci + si, cj + sj).anomalous_node_count();
            prop_assert_eq!(a, b);
        }
    }
}
