//! The nonlinear Hessian term `R`, from the back-propagated residual
//! directly and as the sum of four parts built from `δb`, `δu`.
//!
//! With `Γ = A⁻¹` (complex symmetric) and `∂A/∂m_i = −ω² e_i e_iᵀ`, the
//! direct form is
//! `R_ij = −ω⁴ Re(conj(Γ_ij) (conj(u_i) λ_j + conj(u_j) λ_i))`, `λ = Sᴴ δd`.
//! The second derivative of `A` vanishes because `A` is linear in `m`.
//!
//! The decomposition uses `T = SᴴS` and its derivative
//! `(∂T/∂m_j) δb = ω² (conj(Γ) e_j (T δb)_j + T e_j δu_j)`:
//! `R¹¹ = Re(Lᴴ T δL)`, `R¹² = Re(Lᴴ [∂T/∂m] δb)`, `R²¹ = R¹¹ᵀ`,
//! `R²² = R¹²ᵀ`. With `ε = 0` and `SSᴴ` invertible, `T δb = λ` and the sum
//! equals the direct form.

use super::assembly::{gn_hessian, hadamard_gram, source_rows, GramTerm, BLOCK};
use super::{backpropagated_residuals, check_linearizations, metadata, HessianKind, HessianMatrix, HessianStorage};
use crate::error::Result;
use crate::sensitivity::{guard_dense, Linearization};
use faer::{c64, Mat};

/// Columns `cols` (physical node numbers) of `A⁻¹`, restricted to physical
/// rows: `n_physical × cols.len()`.
pub fn greens_block(lin: &Linearization, cols: std::ops::Range<usize>) -> Result<Mat<c64>> {
    let domain = lin.domain();
    let phys = domain.physical_indices();
    let mut rhs = Mat::<c64>::zeros(domain.len(), cols.len());
    for (c, j) in cols.clone().enumerate() {
        rhs[(phys[j], c)] = c64::new(1.0, 0.0);
    }
    lin.fact.solve_forward_many(rhs.as_mut())?;
    Ok(Mat::from_fn(phys.len(), cols.len(), |i, c| rhs[(phys[i], c)]))
}

fn physical_rows(lin: &Linearization, padded: &Mat<c64>) -> Mat<c64> {
    let phys = lin.domain().physical_indices();
    Mat::from_fn(padded.ncols(), phys.len(), |s, i| padded[(phys[i], s)])
}

/// `R` from the back-propagated residual and explicit Green's columns.
pub fn full_r_direct(lins: &[Linearization]) -> Result<Mat<f64>> {
    let n = check_linearizations(lins)?;
    guard_dense(n)?;
    let mut r = Mat::<f64>::zeros(n, n);
    for lin in lins {
        let w4 = lin.omega().powi(4);
        let u = source_rows(lin, |b| lin.domain().restrict(&b.wavefield));
        let lam = physical_rows(lin, &backpropagated_residuals(lin)?);
        for j0 in (0..n).step_by(BLOCK) {
            let b = BLOCK.min(n - j0);
            let gamma = greens_block(lin, j0..j0 + b)?;
            // C_ij = Σ_s conj(u_i) λ_j and E_ij = Σ_s conj(u_j) λ_i
            let c = u.adjoint() * lam.subcols(j0, b);
            let e = lam.transpose() * u.subcols(j0, b).conjugate();
            for jj in 0..b {
                for i in 0..n {
                    r[(i, j0 + jj)] -= w4 * (gamma[(i, jj)].conj() * (c[(i, jj)] + e[(i, jj)])).re;
                }
            }
        }
    }
    Ok(r)
}

/// How `(∂T/∂m_j) δb` is formed in [`full_r_decomposed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GramDerivative {
    /// Product rule on `T = A⁻ᴴ Pᴴ P A⁻¹`.
    Analytic,
    /// Central differences of `T(m) δb`, refactorizing at `m ± h e_j` with
    /// `h = rel_step · m_j`. Quadratic in cost; meant for checking.
    FiniteDifference { rel_step: f64 },
}

/// The four parts of `R`.
#[derive(Debug, Clone)]
pub struct NonlinearParts {
    pub eps: f64,
    pub r11: Mat<f64>,
    pub r12: Mat<f64>,
    pub r21: Mat<f64>,
    pub r22: Mat<f64>,
}

impl NonlinearParts {
    pub fn total(&self) -> Mat<f64> {
        &(&self.r11 + &self.r12) + &(&self.r21 + &self.r22)
    }
}

/// `R` as `R¹¹ + R¹² + R²¹ + R²²`, with `δb`, `δu` recomputed for damping
/// `eps` (zero requires an invertible `SSᴴ`).
pub fn full_r_decomposed(lins: &mut [Linearization], eps: f64, route: GramDerivative) -> Result<NonlinearParts> {
    let n = check_linearizations(lins)?;
    guard_dense(n)?;
    for lin in lins.iter_mut() {
        lin.prepare_scattering(eps)?;
    }
    let mut r11_terms = Vec::with_capacity(lins.len());
    let mut r12 = Mat::<f64>::zeros(n, n);
    for lin in lins.iter_mut() {
        let s = lin.sensitivity_physical()?;
        let l = source_rows(lin, |b| b.virtual_source(lin.domain()));
        let dl = source_rows(lin, |b| b.delta_virtual_source(lin.domain()));
        match route {
            GramDerivative::Analytic => accumulate_r12_analytic(lin, &s, &l, &mut r12)?,
            GramDerivative::FiniteDifference { rel_step } => accumulate_r12_fd(lin, &l, rel_step, &mut r12)?,
        }
        r11_terms.push(GramTerm { s, x: l, y: dl });
    }
    let r11 = hadamard_gram(&r11_terms, n);
    Ok(NonlinearParts {
        eps,
        r21: r11.transpose().to_owned(),
        r22: r12.transpose().to_owned(),
        r11,
        r12,
    })
}

fn scattering_parts(lin: &Linearization) -> (Vec<&[c64]>, Vec<&[c64]>) {
    lin.bundles
        .iter()
        .map(|b| {
            let sc = b.scattering.as_ref().expect("scattering prepared");
            (sc.delta_b.as_slice(), sc.delta_u.as_slice())
        })
        .unzip()
}

fn accumulate_r12_analytic(lin: &Linearization, s: &Mat<c64>, l: &Mat<c64>, r12: &mut Mat<f64>) -> Result<()> {
    let n = l.ncols();
    let w2 = lin.omega().powi(2);
    let (_, du) = scattering_parts(lin);
    // w_s = T δb_s = A⁻ᴴ Pᴴ P δu_s
    let mut w = Mat::<c64>::zeros(lin.fact.len(), du.len());
    for (col, d) in du.iter().enumerate() {
        for &k in lin.stations.receiver_nodes() {
            w[(k, col)] = d[k];
        }
    }
    lin.fact.solve_adjoint_many(w.as_mut())?;
    let w = physical_rows(lin, &w);
    let du_phys = source_rows(lin, |b| lin.domain().restrict(&b.scattering.as_ref().expect("scattering prepared").delta_u));
    for j0 in (0..n).step_by(BLOCK) {
        let b = BLOCK.min(n - j0);
        let gamma = greens_block(lin, j0..j0 + b)?;
        let t = s.adjoint() * s.subcols(j0, b);
        let lw = l.adjoint() * w.subcols(j0, b);
        let ldu = l.adjoint() * du_phys.subcols(j0, b);
        for jj in 0..b {
            for i in 0..n {
                let v = gamma[(i, jj)].conj() * lw[(i, jj)] + t[(i, jj)] * ldu[(i, jj)];
                r12[(i, j0 + jj)] += w2 * v.re;
            }
        }
    }
    Ok(())
}

fn accumulate_r12_fd(lin: &Linearization, l: &Mat<c64>, rel_step: f64, r12: &mut Mat<f64>) -> Result<()> {
    let op = lin.fact.operator();
    let m0 = op.physical_model();
    let (db, _) = scattering_parts(lin);
    let n = m0.len();
    let gram_times = |m: &[f64]| -> Result<Vec<Vec<c64>>> {
        let fact = crate::helmholtz::factorize(op.with_physical_model(m)?)?;
        db.iter()
            .map(|b| {
                let du = fact.solve_forward(b)?;
                let sampled = lin.stations.inject(&lin.stations.sample(&du));
                Ok(fact.operator().domain().restrict(&fact.solve_adjoint(&sampled)?))
            })
            .collect()
    };
    for j in 0..n {
        let h = rel_step * m0[j];
        let mut mp = m0.clone();
        mp[j] += h;
        let mut mm = m0.clone();
        mm[j] -= h;
        let (tp, tm) = (gram_times(&mp)?, gram_times(&mm)?);
        for s in 0..db.len() {
            for i in 0..n {
                let d = (tp[s][i] - tm[s][i]) / (2.0 * h);
                r12[(i, j)] += (l[(s, i)].conj() * d).re;
            }
        }
    }
    Ok(())
}

/// Full Newton Hessian `H_gn + R` with `R` from [`full_r_direct`].
pub fn full_hessian(lins: &mut [Linearization]) -> Result<HessianMatrix> {
    let gn = gn_hessian(lins)?;
    let r = full_r_direct(lins)?;
    let h = match gn.storage {
        HessianStorage::Dense(m) => &m + &r,
        HessianStorage::Diagonal(_) => unreachable!("gn Hessian is dense"),
    };
    Ok(HessianMatrix {
        kind: HessianKind::Full,
        storage: HessianStorage::Dense(h),
        metadata: metadata(lins, None),
    })
}
