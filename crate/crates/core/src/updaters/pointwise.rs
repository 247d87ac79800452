//! Node-by-node least-squares updates. With `v` the wavefield that drives
//! the update (`u + δu` or `u^e`) and `r` the source residual `δb`, each
//! physical node solves `min_δm Σ |−ω² v_i δm + r_i|²` over all sources and
//! frequencies. A floor `η = 1e-10·max(den)` keeps weakly illuminated nodes
//! finite; nodes with a zero denominator are left unchanged.

use super::AssimilatedWavefield;
use crate::error::{FwiError, Result};
use crate::grid_model::Model;
use crate::sensitivity::Linearization;
use faer::c64;

/// Relative denominator floor.
pub const DENOMINATOR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseUpdate {
    pub delta_m: Vec<f64>,
    pub eta: f64,
    pub dead_nodes: usize,
}

/// Accumulates `num_i = Σ Re(conj(−ω² v_i) r_i)` and `den_i = Σ ω⁴ |v_i|²`.
struct Normal {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl Normal {
    fn new(n: usize) -> Self {
        Self {
            num: vec![0.0; n],
            den: vec![0.0; n],
        }
    }

    fn add(&mut self, omega: f64, v: &[c64], r: &[c64]) {
        let w2 = omega * omega;
        for i in 0..self.num.len() {
            let a = -w2 * v[i];
            self.num[i] += (a.conj() * r[i]).re;
            self.den[i] += a.norm_sqr();
        }
    }

    fn eta(&self) -> f64 {
        DENOMINATOR_FLOOR * self.den.iter().copied().fold(0.0, f64::max)
    }

    fn dead_nodes(&self) -> usize {
        let dead = self.den.iter().filter(|d| **d == 0.0).count();
        if dead > 0 {
            log::warn!("{dead} nodes receive no wavefield energy; their model values are not updated");
        }
        dead
    }
}

/// `δm_i = −Σ Re(conj(−ω²(u_i + δu_i)) δb_i) / (Σ ω⁴ |u_i + δu_i|² + η)`,
/// from the `δb`, `δu` attached to the bundles.
pub fn sequential_step(lins: &[Linearization]) -> Result<PointwiseUpdate> {
    let n = crate::hessians::check_linearizations(lins)?;
    let mut acc = Normal::new(n);
    for lin in lins {
        let domain = lin.domain();
        for b in &lin.bundles {
            let sc = b
                .scattering
                .as_ref()
                .ok_or_else(|| FwiError::Config("scattering source not prepared; call prepare_scattering first".into()))?;
            let v: Vec<c64> = domain.physical_indices().iter().map(|&k| b.wavefield[k] + sc.delta_u[k]).collect();
            acc.add(lin.omega(), &v, &domain.restrict(&sc.delta_b));
        }
    }
    let eta = acc.eta();
    let dead_nodes = acc.dead_nodes();
    let delta_m = acc
        .num
        .iter()
        .zip(&acc.den)
        .map(|(num, den)| if *den == 0.0 { 0.0 } else { -num / (den + eta) })
        .collect();
    Ok(PointwiseUpdate { delta_m, eta, dead_nodes })
}

fn check_fields(lins: &[Linearization], fields: &[AssimilatedWavefield]) -> Result<usize> {
    let n = crate::hessians::check_linearizations(lins)?;
    if fields.len() != lins.len() || fields.iter().zip(lins).any(|(f, l)| f.fields.len() != l.bundles.len()) {
        return Err(FwiError::Config("assimilated wavefields do not match the linearizations".into()));
    }
    Ok(n)
}

/// `m_{k+1,i} = (Σ Re(conj(−ω² u^e_i)(Δ_h u^e + b*)_i) + η m_k,i) / (Σ ω⁴ |u^e_i|² + η)`.
/// Including `η m_k` in the numerator regularizes weakly illuminated nodes
/// toward the current model, which keeps this route identical to
/// [`wri_update_from_source_residual`].
pub fn wri_update(lins: &[Linearization], fields: &[AssimilatedWavefield], model: &Model) -> Result<(Model, PointwiseUpdate)> {
    let n = check_fields(lins, fields)?;
    let mut acc = Normal::new(n);
    for (lin, ue) in lins.iter().zip(fields) {
        let op = lin.fact.operator();
        let domain = lin.domain();
        for (s, u) in ue.fields.iter().enumerate() {
            let mut rhs = op.laplacian().apply(u);
            for (k, v) in lin.stations.source_vector(s).into_iter().enumerate() {
                rhs[k] += v;
            }
            acc.add(lin.omega(), &domain.restrict(u), &domain.restrict(&rhs));
        }
    }
    let eta = acc.eta();
    let dead_nodes = acc.dead_nodes();
    let m = model.values();
    let next: Vec<f64> = (0..n)
        .map(|i| if acc.den[i] == 0.0 { m[i] } else { (acc.num[i] + eta * m[i]) / (acc.den[i] + eta) })
        .collect();
    let delta_m = next.iter().zip(m).map(|(a, b)| a - b).collect();
    let next = Model::new(*model.grid(), next)?;
    Ok((next, PointwiseUpdate { delta_m, eta, dead_nodes }))
}

/// `m_{k+1} = m_k − Σ Re(conj(−ω² u^e_i) δb_i) / (Σ ω⁴ |u^e_i|² + η)` with the
/// source residual `δb = A u^e − b*`.
pub fn wri_update_from_source_residual(lins: &[Linearization], fields: &[AssimilatedWavefield], model: &Model) -> Result<(Model, PointwiseUpdate)> {
    let n = check_fields(lins, fields)?;
    let mut acc = Normal::new(n);
    for (lin, ue) in lins.iter().zip(fields) {
        let op = lin.fact.operator();
        let domain = lin.domain();
        for (s, u) in ue.fields.iter().enumerate() {
            let mut db = op.apply(u);
            for (k, v) in lin.stations.source_vector(s).into_iter().enumerate() {
                db[k] -= v;
            }
            acc.add(lin.omega(), &domain.restrict(u), &domain.restrict(&db));
        }
    }
    let eta = acc.eta();
    let dead_nodes = acc.dead_nodes();
    let delta_m: Vec<f64> = acc
        .num
        .iter()
        .zip(&acc.den)
        .map(|(num, den)| if *den == 0.0 { 0.0 } else { -num / (den + eta) })
        .collect();
    let next = model.updated(&delta_m, 1.0)?;
    Ok((next, PointwiseUpdate { delta_m, eta, dead_nodes }))
}
