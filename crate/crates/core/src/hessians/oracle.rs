//! Finite-difference oracles for the gradient and Hessian of a scalar
//! function, plus the misfit as such a function of the physical model.

use super::{GradientVector, HessianKind, HessianMatrix, HessianMetadata, HessianStorage};
use crate::error::{FwiError, Result};
use crate::grid_model::{AcquisitionGeometry, Model};
use crate::helmholtz::{assemble, Boundary, HelmholtzOperator};
use crate::sensitivity::{operator_misfit, DataSet, Linearization};
use faer::Mat;

/// Largest parameter count accepted by [`fd_hessian`].
pub const FD_ORACLE_LIMIT: usize = 200;

/// Central-difference gradient of `f` at `x0` with per-component steps.
pub fn fd_gradient(f: impl Fn(&[f64]) -> Result<f64>, x0: &[f64], steps: &[f64]) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut g = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        let h = steps[i];
        x[i] = x0[i] + h;
        let fp = f(&x)?;
        x[i] = x0[i] - h;
        let fm = f(&x)?;
        x[i] = x0[i];
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// Central second differences of `f` at `x0`, symmetrized (each off-diagonal
/// pair is evaluated once and mirrored).
pub fn fd_hessian(f: impl Fn(&[f64]) -> Result<f64>, x0: &[f64], steps: &[f64]) -> Result<Mat<f64>> {
    let n = x0.len();
    if n > FD_ORACLE_LIMIT {
        return Err(FwiError::SizeGuard {
            size: n,
            limit: FD_ORACLE_LIMIT,
        });
    }
    let f0 = f(x0)?;
    let mut x = x0.to_vec();
    let mut h = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let hi = steps[i];
        x[i] = x0[i] + hi;
        let fp = f(&x)?;
        x[i] = x0[i] - hi;
        let fm = f(&x)?;
        x[i] = x0[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut corner = |si: f64, sj: f64| {
                x[i] = x0[i] + si * hi;
                x[j] = x0[j] + sj * hj;
                let v = f(&x);
                x[i] = x0[i];
                x[j] = x0[j];
                v
            };
            let pp = corner(1.0, 1.0)?;
            let pm = corner(1.0, -1.0)?;
            let mp = corner(-1.0, 1.0)?;
            let mm = corner(-1.0, -1.0)?;
            let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// The misfit as a function of physical-node values, with every collar
/// value held at the base operators' values. Its derivatives are exactly the
/// ones the analytic gradient and Hessians describe.
pub struct FrozenCollarMisfit<'a> {
    base: Vec<HelmholtzOperator>,
    geometry: &'a AcquisitionGeometry,
    data: &'a [DataSet],
}

impl<'a> FrozenCollarMisfit<'a> {
    pub fn new(model: &Model, geometry: &'a AcquisitionGeometry, data: &'a [DataSet], boundary: Boundary) -> Result<Self> {
        let base = data
            .iter()
            .map(|d| assemble(model, d.frequency_hz, boundary))
            .collect::<Result<_>>()?;
        Ok(Self { base, geometry, data })
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (op, d) in self.base.iter().zip(self.data) {
            total += operator_misfit(op.with_physical_model(values)?, self.geometry, d)?;
        }
        Ok(total)
    }

    /// Linearizations at `values` sharing the frozen collar.
    pub fn linearize(&self, values: &[f64]) -> Result<Vec<Linearization>> {
        self.base
            .iter()
            .zip(self.data)
            .map(|(op, d)| Linearization::from_operator(op.with_physical_model(values)?, self.geometry, d))
            .collect()
    }
}

/// Central-difference gradient of the misfit with `h_i = rel_step · m_i`.
pub fn fd_gradient_oracle(model: &Model, geometry: &AcquisitionGeometry, data: &[DataSet], boundary: Boundary, rel_step: f64) -> Result<GradientVector> {
    let f = FrozenCollarMisfit::new(model, geometry, data, boundary)?;
    let steps: Vec<f64> = model.values().iter().map(|m| rel_step * m).collect();
    Ok(GradientVector {
        values: fd_gradient(|x| f.eval(x), model.values(), &steps)?,
    })
}

/// Central-difference Hessian of the misfit with `h_i = rel_step · m_i`.
pub fn fd_hessian_oracle(model: &Model, geometry: &AcquisitionGeometry, data: &[DataSet], boundary: Boundary, rel_step: f64) -> Result<HessianMatrix> {
    let f = FrozenCollarMisfit::new(model, geometry, data, boundary)?;
    let steps: Vec<f64> = model.values().iter().map(|m| rel_step * m).collect();
    let h = fd_hessian(|x| f.eval(x), model.values(), &steps)?;
    Ok(HessianMatrix {
        kind: HessianKind::FdOracle,
        storage: HessianStorage::Dense(h),
        metadata: HessianMetadata {
            eps: None,
            frequencies_hz: data.iter().map(|d| d.frequency_hz).collect(),
            n_sources: geometry.n_sources(),
        },
    })
}
