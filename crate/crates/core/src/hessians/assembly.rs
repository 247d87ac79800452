//! Gauss-Newton type Hessians assembled as `Re(T ∘ K)`, where `T = SᴴS`
//! restricted to physical nodes and `K_ij = Σ_s conj(X_si) Y_sj`. Both
//! factors are formed one block of columns at a time so that only the
//! output matrix is held at full size.

use super::{check_linearizations, metadata, HessianKind, HessianMatrix, HessianStorage};
use crate::error::{FwiError, Result};
use crate::sensitivity::{guard_dense, Linearization, SensitivityBundle};
use faer::{c64, Mat};

pub(crate) const BLOCK: usize = 512;

/// One `(S, X, Y)` triple contributing `Re((SᴴS) ∘ (XᴴY))`.
pub(crate) struct GramTerm {
    /// `n_receivers × n`.
    pub s: Mat<c64>,
    /// `n_sources × n`.
    pub x: Mat<c64>,
    pub y: Mat<c64>,
}

pub(crate) fn hadamard_gram(terms: &[GramTerm], n: usize) -> Mat<f64> {
    let mut h = Mat::<f64>::zeros(n, n);
    for j0 in (0..n).step_by(BLOCK) {
        let b = BLOCK.min(n - j0);
        for t in terms {
            let tb = t.s.adjoint() * t.s.subcols(j0, b);
            let kb = t.x.adjoint() * t.y.subcols(j0, b);
            for jj in 0..b {
                let j = j0 + jj;
                for i in 0..n {
                    h[(i, j)] += (tb[(i, jj)] * kb[(i, jj)]).re;
                }
            }
        }
    }
    h
}

/// Rows `f(bundle)` stacked into an `n_sources × n_physical` matrix.
pub(crate) fn source_rows(lin: &Linearization, f: impl Fn(&SensitivityBundle) -> Vec<c64>) -> Mat<c64> {
    let rows: Vec<Vec<c64>> = lin.bundles.iter().map(f).collect();
    let n = lin.domain().n_physical();
    Mat::from_fn(rows.len(), n, |s, i| rows[s][i])
}

fn require_scattering(lins: &[Linearization]) -> Result<f64> {
    let mut eps = None;
    for lin in lins {
        for b in &lin.bundles {
            let sc = b
                .scattering
                .as_ref()
                .ok_or_else(|| FwiError::Config("scattering source not prepared; call prepare_scattering first".into()))?;
            eps = Some(sc.eps);
        }
    }
    eps.ok_or_else(|| FwiError::Config("no sources".into()))
}

/// `H_gn = Re(Jᴴ J)` accumulated over sources and frequencies.
pub fn gn_hessian(lins: &mut [Linearization]) -> Result<HessianMatrix> {
    let n = check_linearizations(lins)?;
    guard_dense(n)?;
    let mut terms = Vec::with_capacity(lins.len());
    for lin in lins.iter_mut() {
        let s = lin.sensitivity_physical()?;
        let l = source_rows(lin, |b| b.virtual_source(lin.domain()));
        terms.push(GramTerm { s, x: l.clone(), y: l });
    }
    Ok(HessianMatrix {
        kind: HessianKind::Gn,
        storage: HessianStorage::Dense(hadamard_gram(&terms, n)),
        metadata: metadata(lins, None),
    })
}

/// `H_agn = Re(Lᴴ SᴴS L + Lᴴ SᴴS δL)`, using the `δu` already attached to
/// the bundles.
pub fn agn_hessian(lins: &mut [Linearization]) -> Result<HessianMatrix> {
    let n = check_linearizations(lins)?;
    guard_dense(n)?;
    let eps = require_scattering(lins)?;
    let mut terms = Vec::with_capacity(lins.len());
    for lin in lins.iter_mut() {
        let s = lin.sensitivity_physical()?;
        let l = source_rows(lin, |b| b.virtual_source(lin.domain()));
        let dl = source_rows(lin, |b| b.delta_virtual_source(lin.domain()));
        let y = &l + &dl;
        terms.push(GramTerm { s, x: l, y });
    }
    Ok(HessianMatrix {
        kind: HessianKind::Agn,
        storage: HessianStorage::Dense(hadamard_gram(&terms, n)),
        metadata: metadata(lins, Some(eps)),
    })
}

/// The augmentation `R¹¹ = Re(Lᴴ SᴴS δL)` on its own.
pub fn agn_augmentation(lins: &mut [Linearization]) -> Result<Mat<f64>> {
    let n = check_linearizations(lins)?;
    guard_dense(n)?;
    require_scattering(lins)?;
    let mut terms = Vec::with_capacity(lins.len());
    for lin in lins.iter_mut() {
        let s = lin.sensitivity_physical()?;
        let l = source_rows(lin, |b| b.virtual_source(lin.domain()));
        let dl = source_rows(lin, |b| b.delta_virtual_source(lin.domain()));
        terms.push(GramTerm { s, x: l, y: dl });
    }
    Ok(hadamard_gram(&terms, n))
}
