use super::{Boundary, PaddedDomain};
use crate::error::{FwiError, Result};
use crate::grid_model::Model;
use faer::c64;
use faer::sparse::{SparseColMat, Triplet};
use std::f64::consts::PI;

/// Five-point Laplacian with complex-stretched coordinates:
/// `Δ_h = ∂x (s_z/s_x) ∂x + ∂z (s_x/s_z) ∂z`, zero field beyond the padded grid.
///
/// Edge coefficients live on half-points so the discrete operator is complex
/// symmetric.
#[derive(Debug, Clone)]
pub struct StretchedLaplacian {
    nx: usize,
    nz: usize,
    /// Coefficient between `(i-1, j)` and `(i, j)`, `(nx+1) × nz`.
    cx: Vec<c64>,
    /// Coefficient between `(i, j-1)` and `(i, j)`, `nx × (nz+1)`.
    cz: Vec<c64>,
    /// `s_x s_z` per node, the factor multiplying the mass term.
    jacobian: Vec<c64>,
}

impl StretchedLaplacian {
    pub fn new(domain: &PaddedDomain, boundary: Boundary) -> Self {
        let (nx, nz) = domain.shape();
        let g = domain.physical();
        let pad = boundary.width() as f64;
        let strength = boundary.strength();
        // position in cells along one axis, measured on the padded grid
        let stretch = |pos: f64, n_phys: usize| -> c64 {
            if pad == 0.0 {
                return c64::new(1.0, 0.0);
            }
            let lo = pad;
            let hi = pad + (n_phys - 1) as f64;
            let depth = if pos < lo {
                lo - pos
            } else if pos > hi {
                pos - hi
            } else {
                0.0
            };
            c64::new(1.0, strength * (depth / pad).powi(2))
        };
        let sx_node: Vec<c64> = (0..nx).map(|i| stretch(i as f64, g.nx)).collect();
        let sz_node: Vec<c64> = (0..nz).map(|j| stretch(j as f64, g.nz)).collect();
        let (idx2, idz2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dz * g.dz));

        let mut cx = vec![c64::new(0.0, 0.0); (nx + 1) * nz];
        for j in 0..nz {
            for i in 0..=nx {
                let sx_half = stretch(i as f64 - 0.5, g.nx);
                cx[j * (nx + 1) + i] = sz_node[j] / sx_half * idx2;
            }
        }
        let mut cz = vec![c64::new(0.0, 0.0); nx * (nz + 1)];
        for j in 0..=nz {
            let sz_half = stretch(j as f64 - 0.5, g.nz);
            for i in 0..nx {
                cz[j * nx + i] = sx_node[i] / sz_half * idz2;
            }
        }
        let jacobian = (0..nz)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| sx_node[i] * sz_node[j])
            .collect();
        Self {
            nx,
            nz,
            cx,
            cz,
            jacobian,
        }
    }

    #[inline]
    fn west(&self, i: usize, j: usize) -> c64 {
        self.cx[j * (self.nx + 1) + i]
    }
    #[inline]
    fn east(&self, i: usize, j: usize) -> c64 {
        self.cx[j * (self.nx + 1) + i + 1]
    }
    #[inline]
    fn north(&self, i: usize, j: usize) -> c64 {
        self.cz[j * self.nx + i]
    }
    #[inline]
    fn south(&self, i: usize, j: usize) -> c64 {
        self.cz[(j + 1) * self.nx + i]
    }

    pub fn jacobian(&self) -> &[c64] {
        &self.jacobian
    }

    /// `Δ_h u` on the padded grid.
    pub fn apply(&self, u: &[c64]) -> Vec<c64> {
        let (nx, nz) = (self.nx, self.nz);
        assert_eq!(u.len(), nx * nz);
        let mut out = vec![c64::new(0.0, 0.0); u.len()];
        for j in 0..nz {
            for i in 0..nx {
                let k = j * nx + i;
                let (w, e, n, s) = (self.west(i, j), self.east(i, j), self.north(i, j), self.south(i, j));
                let mut acc = -(w + e + n + s) * u[k];
                if i > 0 {
                    acc += w * u[k - 1];
                }
                if i + 1 < nx {
                    acc += e * u[k + 1];
                }
                if j > 0 {
                    acc += n * u[k - nx];
                }
                if j + 1 < nz {
                    acc += s * u[k + nx];
                }
                out[k] = acc;
            }
        }
        out
    }
}

/// Discrete `A(m, ω) = −ω² s_x s_z diag(m) − Δ_h` on the padded grid.
#[derive(Debug, Clone)]
pub struct HelmholtzOperator {
    domain: PaddedDomain,
    boundary: Boundary,
    frequency_hz: f64,
    omega: f64,
    laplacian: StretchedLaplacian,
    /// Model extended into the collar.
    model: Vec<f64>,
    matrix: SparseColMat<usize, c64>,
}

/// Minimum nodes per wavelength before [`assemble`] warns.
pub const MIN_NODES_PER_WAVELENGTH: f64 = 4.0;

/// Assemble the Helmholtz operator for `model` at `frequency_hz`.
pub fn assemble(model: &Model, frequency_hz: f64, boundary: Boundary) -> Result<HelmholtzOperator> {
    if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
        return Err(FwiError::Config(format!(
            "frequency must be positive, got {frequency_hz}"
        )));
    }
    if let Boundary::Pml { width, strength } = boundary {
        if width == 0 || !(strength >= 0.0 && strength.is_finite()) {
            return Err(FwiError::Config(format!(
                "invalid absorbing layer: width {width}, strength {strength}"
            )));
        }
    }
    let grid = *model.grid();
    let npw = nodes_per_wavelength(model, frequency_hz);
    if npw < MIN_NODES_PER_WAVELENGTH {
        log::warn!(
            "{frequency_hz} Hz leaves {npw:.2} nodes per wavelength at the slowest velocity \
             (fewer than {MIN_NODES_PER_WAVELENGTH}); expect dispersion"
        );
    }
    let domain = PaddedDomain::new(grid, boundary);
    let laplacian = StretchedLaplacian::new(&domain, boundary);
    let omega = 2.0 * PI * frequency_hz;
    let padded_model = domain.extend_by_replication(model.values());
    let matrix = build_matrix(&domain, &laplacian, &padded_model, omega)?;
    Ok(HelmholtzOperator {
        domain,
        boundary,
        frequency_hz,
        omega,
        laplacian,
        model: padded_model,
        matrix,
    })
}

/// Nodes per wavelength at the slowest velocity of `model`.
pub fn nodes_per_wavelength(model: &Model, frequency_hz: f64) -> f64 {
    let m_max = model.values().iter().copied().fold(0.0, f64::max);
    let v_min = 1.0 / m_max.sqrt();
    let g = model.grid();
    v_min / (frequency_hz * g.dx.max(g.dz))
}

fn build_matrix(
    domain: &PaddedDomain,
    lap: &StretchedLaplacian,
    model: &[f64],
    omega: f64,
) -> Result<SparseColMat<usize, c64>> {
    let (nx, nz) = domain.shape();
    let n = nx * nz;
    let w2 = omega * omega;
    let mut t = Vec::with_capacity(5 * n);
    for j in 0..nz {
        for i in 0..nx {
            let k = j * nx + i;
            let (w, e, no, s) = (lap.west(i, j), lap.east(i, j), lap.north(i, j), lap.south(i, j));
            let diag = -w2 * lap.jacobian[k] * model[k] + (w + e + no + s);
            t.push(Triplet::new(k, k, diag));
            if i > 0 {
                t.push(Triplet::new(k, k - 1, -w));
            }
            if i + 1 < nx {
                t.push(Triplet::new(k, k + 1, -e));
            }
            if j > 0 {
                t.push(Triplet::new(k, k - nx, -no));
            }
            if j + 1 < nz {
                t.push(Triplet::new(k, k + nx, -s));
            }
        }
    }
    SparseColMat::try_new_from_triplets(n, n, &t)
        .map_err(|e| FwiError::Numerical(format!("sparse assembly failed: {e:?}")))
}

impl HelmholtzOperator {
    pub fn domain(&self) -> &PaddedDomain {
        &self.domain
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    /// Angular frequency ω = 2π f.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn laplacian(&self) -> &StretchedLaplacian {
        &self.laplacian
    }

    pub fn padded_model(&self) -> &[f64] {
        &self.model
    }

    pub fn matrix(&self) -> &SparseColMat<usize, c64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    /// The same operator with new physical-node values and the collar values
    /// left untouched, so that exactly the physical parameters move.
    pub fn with_physical_model(&self, values: &[f64]) -> Result<Self> {
        let idx = self.domain.physical_indices();
        if values.len() != idx.len() {
            return Err(FwiError::Domain(format!(
                "expected {} model values, got {}",
                idx.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(FwiError::Domain(format!("model values must be positive, found {v}")));
        }
        let mut model = self.model.clone();
        for (&k, &v) in idx.iter().zip(values) {
            model[k] = v;
        }
        let matrix = build_matrix(&self.domain, &self.laplacian, &model, self.omega)?;
        Ok(Self {
            model,
            matrix,
            ..self.clone()
        })
    }

    /// Physical-node model values.
    pub fn physical_model(&self) -> Vec<f64> {
        self.domain.restrict(&self.model)
    }

    /// `A u` evaluated from the stencil (independent of the sparse matrix).
    pub fn apply(&self, u: &[c64]) -> Vec<c64> {
        let w2 = self.omega * self.omega;
        let mut out = self.laplacian.apply(u);
        for (k, v) in out.iter_mut().enumerate() {
            *v = -w2 * self.laplacian.jacobian[k] * self.model[k] * u[k] - *v;
        }
        out
    }

    /// `Aᴴ u` from complex symmetry: `conj(A conj(u))`.
    pub fn apply_adjoint(&self, u: &[c64]) -> Vec<c64> {
        let cu: Vec<c64> = u.iter().map(|v| v.conj()).collect();
        self.apply(&cu).into_iter().map(|v| v.conj()).collect()
    }

    /// `A u` through the assembled sparse matrix.
    pub fn apply_matrix(&self, u: &[c64]) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); u.len()];
        let a = self.matrix.as_ref();
        for col in 0..a.ncols() {
            let uc = u[col];
            for (row, val) in a.row_idx_of_col(col).zip(a.val_of_col(col)) {
                out[row] += val * uc;
            }
        }
        out
    }
}
