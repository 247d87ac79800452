//! Model updates from gradients, Hessians and scattered/assimilated
//! wavefields.

mod pointwise;
mod wri;

pub use pointwise::{sequential_step, wri_update, wri_update_from_source_residual, PointwiseUpdate};
pub use wri::{wri_assimilated_wavefield, AssimilatedWavefield};

use crate::error::{FwiError, Result};
use crate::grid_model::Model;
use crate::hessians::{GradientVector, HessianMatrix, HessianStorage};
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use std::fmt;
use std::str::FromStr;

/// Inversion method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Pseudo-Hessian preconditioned steepest descent.
    Psd,
    Gn,
    /// Full Newton.
    Fn,
    Agn,
    /// Pointwise sequential solve with the augmented Hessian structure.
    AgnSeq,
    Wri,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Psd, Method::Gn, Method::Fn, Method::Agn, Method::AgnSeq, Method::Wri];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Psd => "psd",
            Method::Gn => "gn",
            Method::Fn => "fn",
            Method::Agn => "agn",
            Method::AgnSeq => "agn-seq",
            Method::Wri => "wri",
        }
    }

    /// Whether the method builds `δb`, `δu` from a data-space damping.
    pub fn needs_eps(self) -> bool {
        matches!(self, Method::Agn | Method::AgnSeq)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = FwiError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| FwiError::Config(format!("unknown method `{s}` (expected one of psd, gn, fn, agn, agn-seq, wri)")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateDiagnostics {
    pub misfit_before: f64,
    pub misfit_after: Option<f64>,
    /// `‖δb‖` summed in quadrature over sources and frequencies.
    pub delta_b_norm: Option<f64>,
    /// Final Levenberg damping of a Newton-type step.
    pub damping: Option<f64>,
    pub halvings: usize,
    pub backoffs: usize,
    /// No acceptable step was found; the update is zero.
    pub stagnated: bool,
    /// Nodes with a vanishing pointwise denominator.
    pub dead_nodes: usize,
}

/// A model perturbation together with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelUpdate {
    pub delta_m: Vec<f64>,
    pub method: Method,
    /// Scale applied to the raw direction.
    pub step: f64,
    pub diagnostics: UpdateDiagnostics,
}

impl ModelUpdate {
    pub fn zero(n: usize, method: Method, misfit_before: f64) -> Self {
        Self {
            delta_m: vec![0.0; n],
            method,
            step: 0.0,
            diagnostics: UpdateDiagnostics {
                misfit_before,
                misfit_after: Some(misfit_before),
                ..Default::default()
            },
        }
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm_real(&self.delta_m)
    }

    pub fn apply(&self, model: &Model) -> Result<Model> {
        model.updated(&self.delta_m, 1.0)
    }
}

/// Factors tried when searching for a damping that makes the system definite
/// or the step acceptable.
pub const MAX_BACKOFFS: usize = 8;
/// Largest number of step halvings in a line search.
pub const MAX_HALVINGS: usize = 12;
pub const ARMIJO: f64 = 1e-4;
/// Largest fraction of its current value a node may lose in one Newton step.
pub const POSITIVITY_FRACTION: f64 = 0.5;
/// Largest change of any node in one trial step, as a fraction of the
/// largest model value.
pub const MAX_RELATIVE_CHANGE: f64 = 0.1;

/// Step length in `(0, 1]` that keeps `max|α d| <= MAX_RELATIVE_CHANGE · max|m|`.
pub fn capped_step(direction: &[f64], model: &Model) -> f64 {
    let max_dir = direction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_m = model.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_dir > 0.0 {
        (MAX_RELATIVE_CHANGE * max_m / max_dir).min(1.0)
    } else {
        1.0
    }
}

/// How a dense Newton system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NewtonSystem {
    /// Use `(H + Hᵀ)/2`; Cholesky when definite, Bunch-Kaufman otherwise.
    #[default]
    Symmetrized,
    /// Use `H` as is, with partial-pivoting LU.
    General,
}

/// Solve `(H + λ diag|H_ii|) δm = −g`.
pub fn newton_solve(h: &HessianMatrix, g: &GradientVector, lambda: f64, system: NewtonSystem) -> Result<Vec<f64>> {
    let n = g.values.len();
    if h.dim() != n {
        return Err(FwiError::Config(format!("Hessian is {}x{0}, gradient has {n} entries", h.dim())));
    }
    let dense = match &h.storage {
        HessianStorage::Diagonal(d) => {
            return d
                .iter()
                .zip(&g.values)
                .map(|(di, gi)| {
                    let a = di + lambda * di.abs();
                    if a == 0.0 {
                        if *gi == 0.0 {
                            Ok(0.0)
                        } else {
                            Err(FwiError::Numerical("singular diagonal Hessian".into()))
                        }
                    } else {
                        Ok(-gi / a)
                    }
                })
                .collect();
        }
        HessianStorage::Dense(m) => m,
    };
    let mut a = match system {
        NewtonSystem::Symmetrized => Mat::from_fn(n, n, |i, j| 0.5 * (dense[(i, j)] + dense[(j, i)])),
        NewtonSystem::General => dense.clone(),
    };
    for i in 0..n {
        a[(i, i)] += lambda * dense[(i, i)].abs();
    }
    let rhs = Mat::from_fn(n, 1, |i, _| -g.values[i]);
    let x = match system {
        NewtonSystem::General => a.partial_piv_lu().solve(&rhs),
        NewtonSystem::Symmetrized => match a.llt(Side::Lower) {
            Ok(llt) => llt.solve(&rhs),
            Err(_) => a.lblt(Side::Lower).solve(&rhs),
        },
    };
    drop(a);
    let x: Vec<f64> = x.col(0).iter().copied().collect();
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(FwiError::Numerical("Newton system is singular".into()))
    }
}

/// Damped Newton step with backoff: starting at `lambda0`, the damping is
/// multiplied by ten until `misfit_of` reports a decrease, at most
/// [`MAX_BACKOFFS`] times. A zero start moves to `1e-6` on the first backoff.
///
/// Each trial keeps the model positive by limiting every component to
/// `δm_i >= −POSITIVITY_FRACTION · m_i`.
pub fn newton_step(
    h: &HessianMatrix,
    g: &GradientVector,
    lambda0: f64,
    system: NewtonSystem,
    method: Method,
    model: &Model,
    misfit_before: f64,
    mut misfit_of: impl FnMut(&Model) -> Result<f64>,
) -> Result<ModelUpdate> {
    if !(lambda0 >= 0.0 && lambda0.is_finite()) {
        return Err(FwiError::Config(format!("damping must be nonnegative, got {lambda0}")));
    }
    let n = g.values.len();
    if g.values.iter().all(|v| *v == 0.0) {
        return Ok(ModelUpdate::zero(n, method, misfit_before));
    }
    let mut lambda = lambda0;
    for backoff in 0..=MAX_BACKOFFS {
        let trial = newton_solve(h, g, lambda, system).ok().and_then(|mut dm| {
            dm.iter_mut()
                .zip(model.values())
                .for_each(|(d, m)| *d = d.max(-POSITIVITY_FRACTION * m));
            let candidate = model.updated(&dm, 1.0).ok()?;
            Some((dm, candidate))
        });
        if let Some((dm, candidate)) = trial {
            let after = misfit_of(&candidate)?;
            if after < misfit_before {
                return Ok(ModelUpdate {
                    delta_m: dm,
                    method,
                    step: 1.0,
                    diagnostics: UpdateDiagnostics {
                        misfit_before,
                        misfit_after: Some(after),
                        damping: Some(lambda),
                        backoffs: backoff,
                        ..Default::default()
                    },
                });
            }
        }
        lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
    }
    log::warn!("{method}: no damping in {MAX_BACKOFFS} backoffs reduced the misfit; keeping the model");
    let mut zero = ModelUpdate::zero(n, method, misfit_before);
    zero.diagnostics.stagnated = true;
    zero.diagnostics.backoffs = MAX_BACKOFFS;
    zero.diagnostics.damping = Some(lambda);
    Ok(zero)
}

/// Backtracking by halving along `direction` from `initial_step`. A trial is
/// accepted when the misfit drops below `misfit_before + c·α·slope`, with
/// `c = 0` giving plain decrease.
pub fn backtrack(
    direction: &[f64],
    initial_step: f64,
    slope: f64,
    armijo: f64,
    method: Method,
    model: &Model,
    misfit_before: f64,
    mut misfit_of: impl FnMut(&Model) -> Result<f64>,
) -> Result<ModelUpdate> {
    let n = direction.len();
    if direction.iter().all(|v| *v == 0.0) {
        return Ok(ModelUpdate::zero(n, method, misfit_before));
    }
    let mut alpha = initial_step;
    for halving in 0..=MAX_HALVINGS {
        if let Ok(candidate) = model.updated(direction, alpha) {
            let after = misfit_of(&candidate)?;
            if after < misfit_before && after <= misfit_before + armijo * alpha * slope {
                return Ok(ModelUpdate {
                    delta_m: direction.iter().map(|d| d * alpha).collect(),
                    method,
                    step: alpha,
                    diagnostics: UpdateDiagnostics {
                        misfit_before,
                        misfit_after: Some(after),
                        halvings: halving,
                        ..Default::default()
                    },
                });
            }
        }
        alpha *= 0.5;
    }
    log::warn!("{method}: line search exhausted after {MAX_HALVINGS} halvings; keeping the model");
    let mut zero = ModelUpdate::zero(n, method, misfit_before);
    zero.diagnostics.stagnated = true;
    zero.diagnostics.halvings = MAX_HALVINGS;
    Ok(zero)
}

/// Preconditioned steepest descent: `δm = −g / (diag(H_pseudo) + η)` with
/// `η = 1e-10·max(diag)`, then Armijo backtracking. The first trial step is
/// capped so that no node moves by more than a tenth of the largest model
/// value.
pub fn psd_step(
    pseudo: &HessianMatrix,
    g: &GradientVector,
    model: &Model,
    misfit_before: f64,
    misfit_of: impl FnMut(&Model) -> Result<f64>,
) -> Result<ModelUpdate> {
    let d = pseudo.diagonal();
    if d.len() != g.values.len() {
        return Err(FwiError::Config("pseudo-Hessian and gradient sizes differ".into()));
    }
    let eta = 1e-10 * d.iter().copied().fold(0.0, f64::max);
    let dir: Vec<f64> = d
        .iter()
        .zip(&g.values)
        .map(|(di, gi)| if di + eta > 0.0 { -gi / (di + eta) } else { 0.0 })
        .collect();
    let slope: f64 = dir.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    backtrack(&dir, capped_step(&dir, model), slope, ARMIJO, Method::Psd, model, misfit_before, misfit_of)
}

/// `‖H δm + g‖ / ‖g‖`: how far `δm` is from solving the Newton system.
pub fn newton_residual(h: &HessianMatrix, delta_m: &[f64], g: &GradientVector) -> f64 {
    let hd = h.apply(delta_m);
    let r: Vec<f64> = hd.iter().zip(&g.values).map(|(a, b)| a + b).collect();
    crate::linalg::norm_real(&r) / g.norm()
}

/// Ratio of extreme eigenvalue magnitudes of `(H + Hᵀ)/2`.
pub fn condition_estimate(h: &HessianMatrix) -> Result<f64> {
    let ev: Vec<f64> = match &h.storage {
        HessianStorage::Diagonal(d) => d.clone(),
        HessianStorage::Dense(m) => {
            let s = Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
            s.self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| FwiError::Numerical(format!("eigenvalues failed: {e:?}")))?
        }
    };
    let hi = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lo = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}

#[cfg(test)]
mod tests;
