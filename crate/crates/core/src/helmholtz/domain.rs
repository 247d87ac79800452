use crate::grid_model::{AcquisitionGeometry, Grid2D};
use faer::{c64, Mat};

/// Absorbing-boundary configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Zero field one cell outside the physical grid. No absorption.
    Dirichlet,
    /// Complex-stretched collar of `width` cells around the physical grid,
    /// stretch `1 + i·strength·(d/width)²` at depth `d` cells into the collar.
    Pml { width: usize, strength: f64 },
}

impl Default for Boundary {
    fn default() -> Self {
        Boundary::Pml {
            width: 10,
            strength: 4.0,
        }
    }
}

impl Boundary {
    pub fn width(&self) -> usize {
        match *self {
            Boundary::Dirichlet => 0,
            Boundary::Pml { width, .. } => width,
        }
    }

    pub fn strength(&self) -> f64 {
        match *self {
            Boundary::Dirichlet => 0.0,
            Boundary::Pml { strength, .. } => strength,
        }
    }
}

/// Physical grid embedded in the computational grid with its absorbing collar.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedDomain {
    physical: Grid2D,
    pad: usize,
    nx: usize,
    nz: usize,
    physical_to_padded: Vec<usize>,
}

impl PaddedDomain {
    pub fn new(physical: Grid2D, boundary: Boundary) -> Self {
        let pad = boundary.width();
        let nx = physical.nx + 2 * pad;
        let nz = physical.nz + 2 * pad;
        let physical_to_padded = (0..physical.nz)
            .flat_map(|j| (0..physical.nx).map(move |i| (j + pad) * nx + i + pad))
            .collect();
        Self {
            physical,
            pad,
            nx,
            nz,
            physical_to_padded,
        }
    }

    pub fn physical(&self) -> &Grid2D {
        &self.physical
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Padded node counts `(nx, nz)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.nz)
    }

    /// Number of unknowns of the discrete operator.
    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_physical(&self) -> usize {
        self.physical_to_padded.len()
    }

    /// Padded index of every physical node, in physical row-major order.
    pub fn physical_indices(&self) -> &[usize] {
        &self.physical_to_padded
    }

    #[inline]
    pub fn padded_index(&self, i: usize, j: usize) -> usize {
        (j + self.pad) * self.nx + i + self.pad
    }

    /// Restrict a padded vector to the physical nodes.
    pub fn restrict<T: Copy>(&self, padded: &[T]) -> Vec<T> {
        debug_assert_eq!(padded.len(), self.len());
        self.physical_to_padded.iter().map(|&k| padded[k]).collect()
    }

    /// Extend a physical field into the collar by replicating edge values.
    pub fn extend_by_replication(&self, physical: &[f64]) -> Vec<f64> {
        let g = &self.physical;
        let mut out = vec![0.0; self.len()];
        for jp in 0..self.nz {
            let j = jp.saturating_sub(self.pad).min(g.nz - 1);
            for ip in 0..self.nx {
                let i = ip.saturating_sub(self.pad).min(g.nx - 1);
                out[jp * self.nx + ip] = physical[g.index(i, j)];
            }
        }
        out
    }

    pub fn stations(&self, geometry: &AcquisitionGeometry) -> StationMap {
        StationMap {
            n: self.len(),
            receivers: geometry
                .receivers()
                .iter()
                .map(|&(i, j)| self.padded_index(i, j))
                .collect(),
            sources: geometry
                .sources()
                .iter()
                .map(|s| (self.padded_index(s.node.0, s.node.1), s.amplitude))
                .collect(),
        }
    }
}

/// Acquisition mapped onto padded indices: the sampling operator `P` and
/// the point sources `b*`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationMap {
    n: usize,
    receivers: Vec<usize>,
    sources: Vec<(usize, c64)>,
}

impl StationMap {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn receiver_nodes(&self) -> &[usize] {
        &self.receivers
    }

    /// `P w`: values at the receiver nodes.
    pub fn sample(&self, w: &[c64]) -> Vec<c64> {
        debug_assert_eq!(w.len(), self.n);
        self.receivers.iter().map(|&k| w[k]).collect()
    }

    /// `Pᴴ d`: scatter receiver values back onto the grid.
    pub fn inject(&self, d: &[c64]) -> Vec<c64> {
        debug_assert_eq!(d.len(), self.receivers.len());
        let mut out = vec![c64::new(0.0, 0.0); self.n];
        for (&k, &v) in self.receivers.iter().zip(d) {
            out[k] += v;
        }
        out
    }

    /// `Pᴴ` as a dense `n × n_receivers` matrix (one unit column per receiver).
    pub fn injection_matrix(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.n, self.receivers.len());
        for (r, &k) in self.receivers.iter().enumerate() {
            m[(k, r)] = c64::new(1.0, 0.0);
        }
        m
    }

    /// Source vector `b*` of source `s`.
    pub fn source_vector(&self, s: usize) -> Vec<c64> {
        let mut b = vec![c64::new(0.0, 0.0); self.n];
        let (k, a) = self.sources[s];
        b[k] += a;
        b
    }

    /// All source vectors as the columns of a dense matrix.
    pub fn source_matrix(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.n, self.sources.len());
        for (s, &(k, a)) in self.sources.iter().enumerate() {
            m[(k, s)] += a;
        }
        m
    }
}
