//! First-order machinery at one (model, frequency): source wavefields, data
//! residuals, virtual sources `L = (∂A/∂m) u`, the data-space Hessian
//! `SSᴴ + εI`, the damped scattering source `δb` and scattered field `δu`.
//!
//! Transposes of wavefield- and data-space operators are realised as
//! conjugate transposes; model-space quantities take the real part at the
//! final reduction.

use crate::error::{FwiError, Result};
use crate::grid_model::{AcquisitionGeometry, Model};
use crate::helmholtz::{assemble, factorize, Boundary, HelmholtzFactorization, HelmholtzOperator, PaddedDomain, StationMap};
use crate::linalg::ZERO;
use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side};

/// Largest parameter count accepted by dense model-space assembly.
pub const DENSE_MODEL_LIMIT: usize = 20_000;

pub(crate) fn guard_dense(n: usize) -> Result<()> {
    if n > DENSE_MODEL_LIMIT {
        Err(FwiError::SizeGuard {
            size: n,
            limit: DENSE_MODEL_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Observed (or synthetic) data at one frequency: one trace of receiver
/// values per source.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub frequency_hz: f64,
    pub n_receivers: usize,
    pub traces: Vec<Vec<c64>>,
}

impl DataSet {
    pub fn n_sources(&self) -> usize {
        self.traces.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            traces: self
                .traces
                .iter()
                .map(|t| t.iter().map(|v| v * factor).collect())
                .collect(),
            ..self.clone()
        }
    }
}

/// Damped scattering source `δb = Sᴴ(SSᴴ + εI)⁻¹ δd` and the scattered field
/// `δu = A⁻¹ δb`, both on the padded grid.
#[derive(Debug, Clone)]
pub struct Scattering {
    pub eps: f64,
    pub delta_b: Vec<c64>,
    pub delta_u: Vec<c64>,
}

/// Per-source linearization data.
#[derive(Debug, Clone)]
pub struct SensitivityBundle {
    pub source: usize,
    pub frequency_hz: f64,
    pub omega: f64,
    /// Source wavefield `u = A⁻¹ b*` on the padded grid.
    pub wavefield: Vec<c64>,
    /// `δd = d* − P u`.
    pub residual: Vec<c64>,
    pub scattering: Option<Scattering>,
}

impl SensitivityBundle {
    /// Diagonal of `L = (∂A/∂m) u` over physical nodes: `−ω² u_i`.
    pub fn virtual_source(&self, domain: &PaddedDomain) -> Vec<c64> {
        delta_virtual_source(&self.wavefield, self.omega, domain)
    }

    /// Diagonal of `δL = (∂A/∂m) δu` over physical nodes, zero without scattering.
    pub fn delta_virtual_source(&self, domain: &PaddedDomain) -> Vec<c64> {
        match &self.scattering {
            Some(s) => delta_virtual_source(&s.delta_u, self.omega, domain),
            None => vec![ZERO; domain.n_physical()],
        }
    }

    pub fn misfit(&self) -> f64 {
        0.5 * self.residual.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }
}

/// Diagonal `−ω² w_i` of `(∂A/∂m) w` restricted to physical nodes.
pub fn delta_virtual_source(w: &[c64], omega: f64, domain: &PaddedDomain) -> Vec<c64> {
    let w2 = omega * omega;
    domain.physical_indices().iter().map(|&k| -w2 * w[k]).collect()
}

/// Data-space Hessian `SSᴴ + εI` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct DataHessian {
    pub frequency_hz: f64,
    pub eps: f64,
    gram: Mat<c64>,
    matrix: Mat<c64>,
}

impl DataHessian {
    /// `SSᴴ` without damping.
    pub fn gram(&self) -> &Mat<c64> {
        &self.gram
    }

    /// `SSᴴ + εI`.
    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn mean_diagonal(&self) -> f64 {
        mean_diagonal(&self.gram)
    }

    /// Spectral norm of `SSᴴ` (its largest eigenvalue).
    pub fn gram_norm(&self) -> Result<f64> {
        let ev = self
            .gram
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| FwiError::Numerical(format!("eigenvalues of SSᴴ: {e:?}")))?;
        Ok(ev.last().copied().unwrap_or(0.0))
    }

    /// `(SSᴴ + εI)⁻¹ d`.
    pub fn solve(&self, d: &[c64]) -> Result<Vec<c64>> {
        let llt = self
            .matrix
            .llt(Side::Lower)
            .map_err(|e| FwiError::Numerical(format!("data Hessian is not positive definite: {e:?}")))?;
        let rhs = Mat::from_fn(d.len(), 1, |i, _| d[i]);
        let x = llt.solve(&rhs);
        Ok(x.col(0).iter().copied().collect())
    }

    /// `(SSᴴ + εI) d`.
    pub fn apply(&self, d: &[c64]) -> Vec<c64> {
        let rhs = Mat::from_fn(d.len(), 1, |i, _| d[i]);
        let y = &self.matrix * &rhs;
        y.col(0).iter().copied().collect()
    }
}

fn mean_diagonal(m: &Mat<c64>) -> f64 {
    let n = m.nrows();
    (0..n).map(|i| m[(i, i)].re).sum::<f64>() / n as f64
}

/// Linearization of the forward problem at one (model, frequency).
#[derive(Debug)]
pub struct Linearization {
    pub fact: HelmholtzFactorization,
    pub stations: StationMap,
    pub bundles: Vec<SensitivityBundle>,
    /// `Sᴴ = A⁻ᴴ Pᴴ` as a dense `N × n_receivers` matrix, built on demand.
    receiver_greens: Option<Mat<c64>>,
}

impl Linearization {
    /// Assemble, factorize, simulate every source and form residuals.
    pub fn new(model: &Model, geometry: &AcquisitionGeometry, observed: &DataSet, boundary: Boundary) -> Result<Self> {
        let op = assemble(model, observed.frequency_hz, boundary)?;
        let fact = factorize(op)?;
        Self::from_factorization(fact, geometry, observed)
    }

    /// Linearization for an already assembled operator (for instance one
    /// with a frozen collar, see [`HelmholtzOperator::with_physical_model`]).
    pub fn from_operator(op: HelmholtzOperator, geometry: &AcquisitionGeometry, observed: &DataSet) -> Result<Self> {
        Self::from_factorization(factorize(op)?, geometry, observed)
    }

    pub fn from_factorization(fact: HelmholtzFactorization, geometry: &AcquisitionGeometry, observed: &DataSet) -> Result<Self> {
        let stations = fact.operator().domain().stations(geometry);
        let wavefields = simulate(&fact, &stations)?;
        let residuals = residual(&stations, &wavefields, observed)?;
        let omega = fact.operator().omega();
        let frequency_hz = fact.operator().frequency_hz();
        let bundles = residuals
            .into_iter()
            .enumerate()
            .map(|(s, residual)| SensitivityBundle {
                source: s,
                frequency_hz,
                omega,
                wavefield: wavefields.col(s).iter().copied().collect(),
                residual,
                scattering: None,
            })
            .collect();
        Ok(Self {
            fact,
            stations,
            bundles,
            receiver_greens: None,
        })
    }

    pub fn domain(&self) -> &PaddedDomain {
        self.fact.operator().domain()
    }

    pub fn omega(&self) -> f64 {
        self.fact.operator().omega()
    }

    pub fn frequency_hz(&self) -> f64 {
        self.fact.operator().frequency_hz()
    }

    pub fn misfit(&self) -> f64 {
        self.bundles.iter().map(SensitivityBundle::misfit).sum()
    }

    /// `Sᴴ` (`N × n_receivers`), computed by one block of adjoint solves.
    pub fn receiver_greens(&mut self) -> Result<&Mat<c64>> {
        if self.receiver_greens.is_none() {
            let mut sh = self.stations.injection_matrix();
            self.fact.solve_adjoint_many(sh.as_mut())?;
            self.receiver_greens = Some(sh);
        }
        Ok(self.receiver_greens.as_ref().unwrap())
    }

    /// `S` restricted to physical columns, `n_receivers × n_physical`.
    pub fn sensitivity_physical(&mut self) -> Result<Mat<c64>> {
        let phys = self.domain().physical_indices().to_vec();
        let sh = self.receiver_greens()?;
        Ok(Mat::from_fn(sh.ncols(), phys.len(), |r, i| sh[(phys[i], r)].conj()))
    }

    /// `mean(diag(SSᴴ))`, the mean squared norm of a receiver Green's function.
    pub fn gram_mean_diagonal(&mut self) -> Result<f64> {
        let sh = self.receiver_greens()?;
        let total: f64 = (0..sh.ncols()).map(|r| sh.col(r).iter().map(|v| v.norm_sqr()).sum::<f64>()).sum();
        Ok(total / sh.ncols() as f64)
    }

    pub fn data_hessian(&mut self, eps: f64) -> Result<DataHessian> {
        let frequency_hz = self.frequency_hz();
        let sh = self.receiver_greens()?;
        data_hessian_from_greens(sh, eps, frequency_hz)
    }

    /// Build `SSᴴ + εI` and attach the matching `δb`, `δu` to every bundle.
    pub fn prepare_scattering(&mut self, eps: f64) -> Result<DataHessian> {
        let dh = self.data_hessian(eps)?;
        self.attach_scattering(&dh)?;
        Ok(dh)
    }

    /// Attach `δb` and `δu` for damping `eps` to every bundle.
    pub fn attach_scattering(&mut self, dh: &DataHessian) -> Result<()> {
        for s in 0..self.bundles.len() {
            let db = scattering_source(dh, &self.bundles[s].residual, &self.fact, &self.stations)?;
            let du = scattered_wavefield(&self.fact, &db)?;
            self.bundles[s].scattering = Some(Scattering {
                eps: dh.eps,
                delta_b: db,
                delta_u: du,
            });
        }
        Ok(())
    }

    /// `S x` using the stored receiver Green's functions.
    pub fn apply_s(&mut self, x: &[c64]) -> Result<Vec<c64>> {
        let sh = self.receiver_greens()?;
        Ok((0..sh.ncols())
            .map(|r| sh.col(r).iter().zip(x).map(|(g, v)| g.conj() * v).sum())
            .collect())
    }
}

/// `u_s = A⁻¹ b*_s` for every source, as columns.
pub fn simulate(fact: &HelmholtzFactorization, stations: &StationMap) -> Result<Mat<c64>> {
    let mut u = stations.source_matrix();
    fact.solve_forward_many(u.as_mut())?;
    Ok(u)
}

/// Sampled data `P u_s` for every source.
pub fn synthetic_data(fact: &HelmholtzFactorization, stations: &StationMap) -> Result<DataSet> {
    let u = simulate(fact, stations)?;
    let traces = (0..u.ncols())
        .map(|s| stations.receiver_nodes().iter().map(|&k| u[(k, s)]).collect())
        .collect();
    Ok(DataSet {
        frequency_hz: fact.operator().frequency_hz(),
        n_receivers: stations.n_receivers(),
        traces,
    })
}

/// Misfit `½ Σ ‖δd‖²` of one operator against one data set.
pub fn operator_misfit(op: HelmholtzOperator, geometry: &AcquisitionGeometry, observed: &DataSet) -> Result<f64> {
    let fact = factorize(op)?;
    let stations = fact.operator().domain().stations(geometry);
    let u = simulate(&fact, &stations)?;
    let r = residual(&stations, &u, observed)?;
    // same reduction order as `Linearization::misfit`, so both agree bitwise
    Ok(r.iter().map(|t| 0.5 * t.iter().map(|v| v.norm_sqr()).sum::<f64>()).sum())
}

/// Misfit of `model` summed over all data sets (one per frequency).
pub fn misfit(model: &Model, geometry: &AcquisitionGeometry, data: &[DataSet], boundary: Boundary) -> Result<f64> {
    let mut total = 0.0;
    for d in data {
        total += operator_misfit(assemble(model, d.frequency_hz, boundary)?, geometry, d)?;
    }
    Ok(total)
}

/// `δd_s = d*_s − P u_s` for every source.
pub fn residual(stations: &StationMap, wavefields: &Mat<c64>, observed: &DataSet) -> Result<Vec<Vec<c64>>> {
    if observed.n_sources() != wavefields.ncols() || observed.n_receivers != stations.n_receivers() {
        return Err(FwiError::Config(format!(
            "observed data is {} sources x {} receivers, acquisition has {} x {}",
            observed.n_sources(),
            observed.n_receivers,
            wavefields.ncols(),
            stations.n_receivers()
        )));
    }
    observed
        .traces
        .iter()
        .enumerate()
        .map(|(s, trace)| {
            if trace.len() != stations.n_receivers() {
                return Err(FwiError::Config(format!(
                    "trace of source {s} has {} receivers, expected {}",
                    trace.len(),
                    stations.n_receivers()
                )));
            }
            Ok(stations
                .receiver_nodes()
                .iter()
                .zip(trace)
                .map(|(&k, d)| d - wavefields[(k, s)])
                .collect())
        })
        .collect()
}

/// Ratio `λ_min/λ_max` below which undamped `SSᴴ` is treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-13;

/// `SSᴴ + εI` from `Sᴴ`.
pub fn data_hessian_from_greens(sh: &Mat<c64>, eps: f64, frequency_hz: f64) -> Result<DataHessian> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(FwiError::Config(format!("damping must be nonnegative, got {eps}")));
    }
    let gram = sh.adjoint() * sh;
    // enforce exact Hermitian symmetry
    let n = gram.nrows();
    let gram = Mat::from_fn(n, n, |i, j| {
        if i == j {
            c64::new(gram[(i, i)].re, 0.0)
        } else if i > j {
            gram[(i, j)]
        } else {
            gram[(j, i)].conj()
        }
    });
    if eps == 0.0 {
        let ev = gram
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| FwiError::Numerical(format!("eigenvalues of SSᴴ: {e:?}")))?;
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if !(lo > SINGULAR_RCOND * hi) {
            return Err(FwiError::Numerical(format!(
                "SSᴴ is ill-conditioned (λ_min/λ_max = {:.3e}); use a positive damping",
                lo / hi
            )));
        }
    }
    let mut matrix = gram.clone();
    for i in 0..n {
        matrix[(i, i)] += c64::new(eps, 0.0);
    }
    Ok(DataHessian {
        frequency_hz,
        eps,
        gram,
        matrix,
    })
}

/// Default damping: `1e-3 · mean(diag(SSᴴ))`.
pub fn default_eps(dh: &DataHessian) -> f64 {
    1e-3 * dh.mean_diagonal()
}

/// `δb = Sᴴ (SSᴴ + εI)⁻¹ δd`: one small dense solve and one adjoint solve.
pub fn scattering_source(dh: &DataHessian, residual: &[c64], fact: &HelmholtzFactorization, stations: &StationMap) -> Result<Vec<c64>> {
    if residual.iter().all(|v| *v == ZERO) {
        return Ok(vec![ZERO; fact.len()]);
    }
    let y = dh.solve(residual)?;
    fact.solve_adjoint(&stations.inject(&y))
}

/// `δu = A⁻¹ δb`.
pub fn scattered_wavefield(fact: &HelmholtzFactorization, delta_b: &[c64]) -> Result<Vec<c64>> {
    fact.solve_forward(delta_b)
}

/// Dense Jacobian `J = S L` (`n_receivers × n_physical`) of the residual for
/// one source, from the adjoint-solve rows of `S`.
pub fn jacobian_dense(lin: &mut Linearization, source: usize) -> Result<Mat<c64>> {
    guard_dense(lin.domain().n_physical())?;
    let l = lin.bundles[source].virtual_source(lin.domain());
    let s = lin.sensitivity_physical()?;
    Ok(Mat::from_fn(s.nrows(), s.ncols(), |r, i| s[(r, i)] * l[i]))
}

/// Same Jacobian column by column: `J e_i = P A⁻¹ (L e_i)`, one forward
/// solve per parameter.
pub fn jacobian_dense_by_columns(lin: &Linearization, source: usize) -> Result<Mat<c64>> {
    let domain = lin.domain();
    guard_dense(domain.n_physical())?;
    let l = lin.bundles[source].virtual_source(domain);
    let n = domain.len();
    let phys = domain.physical_indices();
    let mut rhs = Mat::<c64>::zeros(n, phys.len());
    for (i, &k) in phys.iter().enumerate() {
        rhs[(k, i)] = l[i];
    }
    lin.fact.solve_forward_many(rhs.as_mut())?;
    let rec = lin.stations.receiver_nodes();
    Ok(Mat::from_fn(rec.len(), phys.len(), |r, i| rhs[(rec[r], i)]))
}
