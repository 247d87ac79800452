use crate::error::{FwiError, Result};

/// Regular 2D grid. Node `(i, j)` sits at `x = i * dx`, `z = j * dz` and is
/// stored at flat index `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
}

impl Grid2D {
    pub fn new(nx: usize, nz: usize, dx: f64, dz: f64) -> Result<Self> {
        if nx < 3 || nz < 3 {
            return Err(FwiError::Config(format!(
                "grid must have at least 3x3 nodes, got {nx}x{nz}"
            )));
        }
        if !(dx > 0.0 && dx.is_finite() && dz > 0.0 && dz.is_finite()) {
            return Err(FwiError::Config(format!(
                "grid spacing must be positive, got dx={dx} dz={dz}"
            )));
        }
        Ok(Self { nx, nz, dx, dz })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.nz);
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    /// Physical extent `((nx-1) dx, (nz-1) dz)`.
    pub fn extent(&self) -> (f64, f64) {
        ((self.nx - 1) as f64 * self.dx, (self.nz - 1) as f64 * self.dz)
    }

    pub fn node_position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx, j as f64 * self.dz)
    }

    /// Nearest node to a physical position, clamped into the grid.
    pub fn snap(&self, x: f64, z: f64) -> (usize, usize) {
        let i = (x / self.dx).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = (z / self.dz).round().clamp(0.0, (self.nz - 1) as f64) as usize;
        (i, j)
    }
}
