//! Gradient of the data misfit and the Hessian family built on it.
//!
//! Sign convention: the misfit is `φ = ½ Σ ‖δd‖²` with `δd = d* − P u`, the
//! Jacobian is `J = ∂δd/∂m = S L`, and the gradient is `g = Re(Jᴴ δd)`, so
//! the descent direction is `−g`. The full Hessian is `H = H_gn + R`, where
//! `R` is the nonlinear term assembled by [`full_r_direct`] or as the sum of
//! the four parts from [`full_r_decomposed`]. The augmented Gauss-Newton
//! Hessian keeps the first part: `H_agn = H_gn + R¹¹`.

mod assembly;
mod nonlinear;
mod oracle;

pub use assembly::{agn_augmentation, agn_hessian, gn_hessian};
pub use nonlinear::{full_hessian, full_r_decomposed, full_r_direct, greens_block, GramDerivative, NonlinearParts};
pub use oracle::{fd_gradient, fd_gradient_oracle, fd_hessian, fd_hessian_oracle, FrozenCollarMisfit, FD_ORACLE_LIMIT};

use crate::error::{FwiError, Result};
use crate::sensitivity::Linearization;
use faer::{c64, Mat};
use std::fmt;

/// Which approximation a [`HessianMatrix`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HessianKind {
    Pseudo,
    Gn,
    Full,
    Agn,
    FdOracle,
}

impl fmt::Display for HessianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pseudo => "pseudo",
            Self::Gn => "gn",
            Self::Full => "full",
            Self::Agn => "agn",
            Self::FdOracle => "fd_oracle",
        })
    }
}

#[derive(Debug, Clone)]
pub enum HessianStorage {
    Diagonal(Vec<f64>),
    Dense(Mat<f64>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HessianMetadata {
    /// Data-space damping used for `δb`, when the kind depends on it.
    pub eps: Option<f64>,
    pub frequencies_hz: Vec<f64>,
    pub n_sources: usize,
}

#[derive(Debug, Clone)]
pub struct HessianMatrix {
    pub kind: HessianKind,
    pub storage: HessianStorage,
    pub metadata: HessianMetadata,
}

impl HessianMatrix {
    pub fn dim(&self) -> usize {
        match &self.storage {
            HessianStorage::Diagonal(d) => d.len(),
            HessianStorage::Dense(m) => m.nrows(),
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match &self.storage {
            HessianStorage::Diagonal(d) => d.clone(),
            HessianStorage::Dense(m) => (0..m.nrows()).map(|i| m[(i, i)]).collect(),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match &self.storage {
            HessianStorage::Diagonal(d) => Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { 0.0 }),
            HessianStorage::Dense(m) => m.clone(),
        }
    }

    pub fn dense(&self) -> Option<&Mat<f64>> {
        match &self.storage {
            HessianStorage::Dense(m) => Some(m),
            HessianStorage::Diagonal(_) => None,
        }
    }

    /// `H x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.storage {
            HessianStorage::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            HessianStorage::Dense(m) => {
                let v = Mat::from_fn(x.len(), 1, |i, _| x[i]);
                let y = m * &v;
                y.col(0).iter().copied().collect()
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match &self.storage {
            HessianStorage::Diagonal(d) => d.iter().map(|v| v * v).sum::<f64>().sqrt(),
            HessianStorage::Dense(m) => m.norm_l2(),
        }
    }

    /// `‖H − Hᵀ‖_F / ‖H‖_F`.
    pub fn asymmetry(&self) -> f64 {
        match &self.storage {
            HessianStorage::Diagonal(_) => 0.0,
            HessianStorage::Dense(m) => {
                let d = m - m.transpose();
                let n = m.norm_l2();
                if n == 0.0 {
                    0.0
                } else {
                    d.norm_l2() / n
                }
            }
        }
    }
}

/// Gradient of the misfit over physical nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
}

impl GradientVector {
    pub fn norm(&self) -> f64 {
        crate::linalg::norm_real(&self.values)
    }
}

pub fn check_linearizations(lins: &[Linearization]) -> Result<usize> {
    let first = lins
        .first()
        .ok_or_else(|| FwiError::Config("no linearization supplied (empty frequency set)".into()))?;
    let n = first.domain().n_physical();
    let ns = first.bundles.len();
    if ns == 0 {
        return Err(FwiError::Config("no sources in the linearization".into()));
    }
    for l in lins {
        if l.domain().physical() != first.domain().physical() || l.bundles.len() != ns {
            return Err(FwiError::Config("linearizations disagree on grid or source set".into()));
        }
    }
    Ok(n)
}

pub(crate) fn metadata(lins: &[Linearization], eps: Option<f64>) -> HessianMetadata {
    HessianMetadata {
        eps,
        frequencies_hz: lins.iter().map(Linearization::frequency_hz).collect(),
        n_sources: lins.first().map_or(0, |l| l.bundles.len()),
    }
}

/// `λ_s = A⁻ᴴ Pᴴ δd_s` for every source, as columns on the padded grid.
pub fn backpropagated_residuals(lin: &Linearization) -> Result<Mat<c64>> {
    let n = lin.fact.len();
    let mut lam = Mat::<c64>::zeros(n, lin.bundles.len());
    for (s, b) in lin.bundles.iter().enumerate() {
        for (&k, &d) in lin.stations.receiver_nodes().iter().zip(&b.residual) {
            lam[(k, s)] += d;
        }
    }
    lin.fact.solve_adjoint_many(lam.as_mut())?;
    Ok(lam)
}

/// `g = Σ Re(conj(L_i) λ_i)` over sources and frequencies.
pub fn gradient(lins: &[Linearization]) -> Result<GradientVector> {
    let n = check_linearizations(lins)?;
    let mut g = vec![0.0; n];
    for lin in lins {
        let lam = backpropagated_residuals(lin)?;
        let phys = lin.domain().physical_indices();
        for (s, b) in lin.bundles.iter().enumerate() {
            let l = b.virtual_source(lin.domain());
            for (i, &k) in phys.iter().enumerate() {
                g[i] += (l[i].conj() * lam[(k, s)]).re;
            }
        }
    }
    Ok(GradientVector { values: g })
}

/// Diagonal pseudo-Hessian `Σ |L_i|² = Σ ω⁴ |u_i|²`.
pub fn pseudo_hessian(lins: &[Linearization]) -> Result<HessianMatrix> {
    let n = check_linearizations(lins)?;
    let mut d = vec![0.0; n];
    for lin in lins {
        for b in &lin.bundles {
            for (di, l) in d.iter_mut().zip(b.virtual_source(lin.domain())) {
                *di += l.norm_sqr();
            }
        }
    }
    Ok(HessianMatrix {
        kind: HessianKind::Pseudo,
        storage: HessianStorage::Diagonal(d),
        metadata: metadata(lins, None),
    })
}
