use super::Grid2D;
use crate::error::{FwiError, Result};
use faer::c64;

/// A point source snapped to a grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source {
    pub node: (usize, usize),
    pub amplitude: c64,
}

/// Source and receiver stations, all snapped to nodes of the physical grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionGeometry {
    grid: Grid2D,
    sources: Vec<Source>,
    receivers: Vec<(usize, usize)>,
}

impl AcquisitionGeometry {
    pub fn new(grid: Grid2D, sources: Vec<Source>, receivers: Vec<(usize, usize)>) -> Result<Self> {
        let inside = |(i, j): (usize, usize)| i < grid.nx && j < grid.nz;
        if let Some(s) = sources.iter().find(|s| !inside(s.node)) {
            return Err(FwiError::Config(format!(
                "source at node {:?} lies outside the {}x{} grid",
                s.node, grid.nx, grid.nz
            )));
        }
        if let Some(r) = receivers.iter().find(|r| !inside(**r)) {
            return Err(FwiError::Config(format!(
                "receiver at node {r:?} lies outside the {}x{} grid",
                grid.nx, grid.nz
            )));
        }
        let mut sorted = receivers.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(FwiError::Config("receivers must occupy distinct nodes".into()));
        }
        Ok(Self {
            grid,
            sources,
            receivers,
        })
    }

    /// Co-located unit-amplitude sources and receivers at the given nodes.
    pub fn colocated(grid: Grid2D, nodes: &[(usize, usize)]) -> Result<Self> {
        let sources = nodes
            .iter()
            .map(|&node| Source {
                node,
                amplitude: c64::new(1.0, 0.0),
            })
            .collect();
        Self::new(grid, sources, nodes.to_vec())
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn receivers(&self) -> &[(usize, usize)] {
        &self.receivers
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    /// Geometry restricted to a subset of sources, in the given order.
    pub fn with_sources(&self, indices: &[usize]) -> Self {
        Self {
            grid: self.grid,
            sources: indices.iter().map(|&s| self.sources[s]).collect(),
            receivers: self.receivers.clone(),
        }
    }

    /// Shift every station by whole cells. Fails if a station leaves the grid.
    pub fn translated(&self, di: isize, dj: isize) -> Result<Self> {
        let shift = |(i, j): (usize, usize)| -> Option<(usize, usize)> {
            Some((i.checked_add_signed(di)?, j.checked_add_signed(dj)?))
        };
        let err = || FwiError::Config("translated station leaves the grid".into());
        let sources = self
            .sources
            .iter()
            .map(|s| {
                shift(s.node).map(|node| Source {
                    node,
                    amplitude: s.amplitude,
                })
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(err)?;
        let receivers = self
            .receivers
            .iter()
            .map(|&r| shift(r))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(err)?;
        Self::new(self.grid, sources, receivers)
    }
}

/// `n` stations equally spaced by arc length along the rectangle one cell
/// inside the grid boundary, starting at its top-left corner and running
/// clockwise, each snapped to the nearest node.
pub fn ring_positions(grid: &Grid2D, n: usize) -> Result<Vec<(usize, usize)>> {
    if grid.nx < 4 || grid.nz < 4 {
        return Err(FwiError::Config(
            "ring acquisition needs at least 4x4 nodes".into(),
        ));
    }
    let (x0, z0) = (grid.dx, grid.dz);
    let (x1, z1) = ((grid.nx - 2) as f64 * grid.dx, (grid.nz - 2) as f64 * grid.dz);
    let (w, h) = (x1 - x0, z1 - z0);
    let perimeter = 2.0 * (w + h);
    let step = perimeter / n as f64;
    let positions: Vec<_> = (0..n)
        .map(|k| {
            let s = k as f64 * step;
            let (x, z) = if s < w {
                (x0 + s, z0)
            } else if s < w + h {
                (x1, z0 + (s - w))
            } else if s < 2.0 * w + h {
                (x1 - (s - w - h), z1)
            } else {
                (x0, z1 - (s - 2.0 * w - h))
            };
            grid.snap(x, z)
        })
        .collect();
    let mut sorted = positions.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|p| p[0] == p[1]) {
        return Err(FwiError::Config(format!(
            "{n} ring stations do not fit on a {}x{} grid without sharing nodes",
            grid.nx, grid.nz
        )));
    }
    Ok(positions)
}
