use super::HelmholtzOperator;
use crate::error::{FwiError, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::{c64, Mat, MatMut};

/// Sparse LU factors of a [`HelmholtzOperator`], reused for every forward
/// and adjoint solve at one (model, frequency). Solves only read the factors,
/// so one factorization can serve several threads.
#[derive(Debug)]
pub struct HelmholtzFactorization {
    op: HelmholtzOperator,
    lu: Lu<usize, c64>,
}

pub fn factorize(op: HelmholtzOperator) -> Result<HelmholtzFactorization> {
    let lu = op
        .matrix()
        .sp_lu()
        .map_err(|e| FwiError::Numerical(format!("Helmholtz factorization failed: {e:?}")))?;
    Ok(HelmholtzFactorization { op, lu })
}

impl HelmholtzFactorization {
    pub fn operator(&self) -> &HelmholtzOperator {
        &self.op
    }

    pub fn len(&self) -> usize {
        self.op.len()
    }

    pub fn is_empty(&self) -> bool {
        self.op.is_empty()
    }

    /// `A⁻¹ b`.
    pub fn solve_forward(&self, b: &[c64]) -> Result<Vec<c64>> {
        let mut m = column(b);
        self.lu.solve_in_place(m.as_mut());
        finite(m.col(0).iter().copied().collect())
    }

    /// `A⁻ᴴ b`, using `Aᴴ = conj(A)` so that `A⁻ᴴ b = conj(A⁻¹ conj(b))`.
    pub fn solve_adjoint(&self, b: &[c64]) -> Result<Vec<c64>> {
        let cb: Vec<c64> = b.iter().map(|v| v.conj()).collect();
        Ok(self
            .solve_forward(&cb)?
            .into_iter()
            .map(|v| v.conj())
            .collect())
    }

    /// `A⁻ᴴ b` through the transposed triangular factors, without relying
    /// on the symmetry of `A`.
    pub fn solve_adjoint_transposed(&self, b: &[c64]) -> Result<Vec<c64>> {
        let mut m = column(b);
        self.lu.solve_adjoint_in_place(m.as_mut());
        finite(m.col(0).iter().copied().collect())
    }

    /// `A⁻¹ B` in place for a block of right-hand sides.
    pub fn solve_forward_many(&self, mut rhs: MatMut<'_, c64>) -> Result<()> {
        self.lu.solve_in_place(rhs.rb_mut());
        check_block(rhs.rb())
    }

    /// `A⁻ᴴ B` in place for a block of right-hand sides.
    pub fn solve_adjoint_many(&self, mut rhs: MatMut<'_, c64>) -> Result<()> {
        for col in rhs.rb_mut().col_iter_mut() {
            for v in col.iter_mut() {
                *v = v.conj();
            }
        }
        self.lu.solve_in_place(rhs.rb_mut());
        for col in rhs.rb_mut().col_iter_mut() {
            for v in col.iter_mut() {
                *v = v.conj();
            }
        }
        check_block(rhs.rb())
    }
}

fn column(b: &[c64]) -> Mat<c64> {
    Mat::from_fn(b.len(), 1, |i, _| b[i])
}

fn finite(v: Vec<c64>) -> Result<Vec<c64>> {
    if v.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Ok(v)
    } else {
        Err(FwiError::Numerical("Helmholtz solve produced non-finite values".into()))
    }
}

fn check_block(m: faer::MatRef<'_, c64>) -> Result<()> {
    for col in m.col_iter() {
        if !col.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return Err(FwiError::Numerical("Helmholtz solve produced non-finite values".into()));
        }
    }
    Ok(())
}

use faer::reborrow::{Reborrow, ReborrowMut};
