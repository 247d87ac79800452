//! Built-in numerical checks on small fixtures, reported as measured values
//! against tolerances. The measurement functions are public so that larger
//! problems can be checked with the same code.

use super::config::InversionConfig;
use super::experiment::ExperimentSetup;
use super::run::Inversion;
use crate::error::{FwiError, Result};
use crate::fixtures::OracleFixture;
use crate::grid_model::Model;
use crate::hessians::{agn_hessian, fd_gradient_oracle, fd_hessian_oracle, full_hessian, full_r_decomposed, full_r_direct, gn_hessian, gradient, GramDerivative};
use crate::linalg::{max_rel_component_err, norm};
use crate::sensitivity::{DataSet, Linearization};
use crate::updaters::{sequential_step, wri_assimilated_wavefield, wri_update, wri_update_from_source_residual, Method};
use faer::{c64, Mat};
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Gradient,
    Hessian,
    Identity,
    Equivalence,
    Limits,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Gradient, Check::Hessian, Check::Identity, Check::Equivalence, Check::Limits];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Gradient => "gradient",
            Self::Hessian => "hessian",
            Self::Identity => "identity",
            Self::Equivalence => "equivalence",
            Self::Limits => "limits",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Check {
    type Err = FwiError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| FwiError::Config(format!("unknown check `{s}` (expected gradient, hessian, identity, equivalence or limits)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Measurement {
    /// Passes when `value < tolerance` (NaN fails).
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value < tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
}

impl VerificationReport {
    fn new(check: Check, measurements: Vec<Measurement>) -> Self {
        Self {
            check: check.tag().into(),
            passed: measurements.iter().all(|m| m.passed),
            measurements,
        }
    }
}

fn rel_frobenius(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    (a - b).norm_l2() / b.norm_l2()
}

/// Adjoint-state gradient against central differences (relative step
/// `1e-6`), as the max component error relative to the largest FD entry.
pub fn gradient_error(fx: &OracleFixture) -> Result<f64> {
    let g = gradient(&[fx.linearize()?])?;
    let fd = fd_gradient_oracle(&fx.model, &fx.geometry, std::slice::from_ref(&fx.observed), fx.boundary, 1e-6)?;
    Ok(max_rel_component_err(&g.values, &fd.values))
}

/// `‖H_full − H_fd‖_F / ‖H_fd‖_F` with a relative FD step of `1e-4`.
pub fn full_hessian_error(fx: &OracleFixture) -> Result<f64> {
    let h = full_hessian(&mut [fx.linearize()?])?;
    let fd = fd_hessian_oracle(&fx.model, &fx.geometry, std::slice::from_ref(&fx.observed), fx.boundary, 1e-4)?;
    Ok(rel_frobenius(&h.to_dense(), &fd.to_dense()))
}

/// Direct nonlinear term against the sum of its four parts at `ε = 0`.
pub fn nonlinear_route_error(fx: &OracleFixture) -> Result<f64> {
    let mut lins = [fx.linearize()?];
    let direct = full_r_direct(&lins)?;
    let parts = full_r_decomposed(&mut lins, 0.0, GramDerivative::Analytic)?;
    Ok(rel_frobenius(&parts.total(), &direct))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityErrors {
    /// `max_s ‖A u^e − b* − Sᴴ(SSᴴ + μI)⁻¹ δd‖ / ‖b*‖`.
    pub source_residual: f64,
    /// `max_s ‖u^e − (u + δu)‖ / ‖u‖`.
    pub wavefield: f64,
}

/// Compares the data-assimilated wavefield from the penalty normal
/// equations with the one built from the damped scattering source.
pub fn identity_errors(lin: &mut Linearization, observed: &DataSet, mu: f64) -> Result<IdentityErrors> {
    lin.prepare_scattering(mu)?;
    let ue = wri_assimilated_wavefield(lin, observed, mu)?;
    let op = lin.fact.operator();
    let mut worst = IdentityErrors {
        source_residual: 0.0,
        wavefield: 0.0,
    };
    for (s, b) in lin.bundles.iter().enumerate() {
        let sc = b.scattering.as_ref().expect("prepared above");
        let bs = lin.stations.source_vector(s);
        let au = op.apply(&ue.fields[s]);
        let r: Vec<c64> = (0..au.len()).map(|k| au[k] - bs[k] - sc.delta_b[k]).collect();
        worst.source_residual = worst.source_residual.max(norm(&r) / norm(&bs));
        let d: Vec<c64> = (0..au.len()).map(|k| ue.fields[s][k] - b.wavefield[k] - sc.delta_u[k]).collect();
        worst.wavefield = worst.wavefield.max(norm(&d) / norm(&b.wavefield));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceErrors {
    /// Sequential-solve `δm` against `m_{k+1} − m_k` of [`wri_update`].
    pub sequential_vs_wri: f64,
    /// [`wri_update`] against [`wri_update_from_source_residual`].
    pub wri_routes: f64,
    pub sequential: Vec<f64>,
}

/// Sequential-solve update with damping `eps` against the WRI update with
/// penalty `eps`, both at the model `lin` was built for.
pub fn equivalence_errors(lin: &mut Linearization, observed: &DataSet, model: &Model, eps: f64) -> Result<EquivalenceErrors> {
    lin.prepare_scattering(eps)?;
    let lins = std::slice::from_ref(lin);
    let seq = sequential_step(lins)?;
    let ue = [wri_assimilated_wavefield(lin, observed, eps)?];
    let (next, _) = wri_update(lins, &ue, model)?;
    let wri: Vec<f64> = next.values().iter().zip(model.values()).map(|(a, b)| a - b).collect();
    let (_, route3) = wri_update_from_source_residual(lins, &ue, model)?;
    Ok(EquivalenceErrors {
        sequential_vs_wri: max_rel_component_err(&seq.delta_m, &wri),
        wri_routes: max_rel_component_err(&route3.delta_m, &wri),
        sequential: seq.delta_m,
    })
}

/// `‖H_agn − H_gn‖_F / ‖H_gn‖_F` at `ε = scale · ‖SSᴴ‖`.
pub fn agn_limit_error(lin: Linearization, scale: f64) -> Result<f64> {
    let mut lins = [lin];
    let gram_norm = lins[0].data_hessian(0.0)?.gram_norm()?;
    lins[0].prepare_scattering(scale * gram_norm)?;
    let gn = gn_hessian(&mut lins)?;
    let agn = agn_hessian(&mut lins)?;
    Ok(rel_frobenius(&agn.to_dense(), &gn.to_dense()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub method: Method,
    /// `max_k ‖δm_k‖ / ‖m_true‖` over the steps taken.
    pub relative_step: f64,
    /// Largest recorded misfit.
    pub misfit: f64,
}

/// Start every method at the true model of `config`'s experiment with data
/// synthesized from that model, and record how far it moves.
pub fn fixed_points(config: &InversionConfig, methods: &[Method]) -> Result<Vec<FixedPoint>> {
    let setup = ExperimentSetup::resolve(config)?;
    let truth = setup
        .true_model
        .clone()
        .ok_or_else(|| FwiError::Config("fixed-point check needs a true model".into()))?;
    let data = super::experiment::synthesize_data(&truth, &setup.geometry, &config.frequencies_hz, config.boundary())?;
    let scale = crate::linalg::norm_real(truth.values());
    methods
        .iter()
        .map(|&method| {
            let mut c = config.clone();
            c.method = method;
            let start = ExperimentSetup {
                initial_model: truth.clone(),
                ..setup.clone()
            };
            let r = Inversion::new(c, start, data.clone())?.run().map_err(|(_, e)| e)?;
            Ok(FixedPoint {
                method,
                relative_step: r.records.iter().map(|x| x.delta_m_norm).fold(0.0, f64::max) / scale,
                misfit: r.records.iter().map(|x| x.misfit).fold(0.0, f64::max),
            })
        })
        .collect()
}

fn verification_fixture() -> Result<OracleFixture> {
    OracleFixture::inclusion(41, 3.0)
}

/// Damping values `{1e-4, 1e-2, 1} · mean(diag(SSᴴ))`.
pub fn damping_ladder(lin: &mut Linearization) -> Result<[f64; 3]> {
    let m = lin.gram_mean_diagonal()?;
    Ok([1e-4 * m, 1e-2 * m, m])
}

pub fn verify(check: Check) -> Result<VerificationReport> {
    let mut out = Vec::new();
    match check {
        Check::Gradient => {
            out.push(Measurement::below("dirichlet_gradient_max_rel_err", gradient_error(&OracleFixture::dirichlet())?, 1e-5));
            out.push(Measurement::below("pml_gradient_max_rel_err", gradient_error(&OracleFixture::pml())?, 1e-5));
        }
        Check::Hessian => {
            let fx = OracleFixture::dirichlet();
            out.push(Measurement::below("full_vs_fd_rel_frobenius", full_hessian_error(&fx)?, 1e-4));
            out.push(Measurement::below("direct_vs_decomposed_rel_frobenius", nonlinear_route_error(&fx)?, 1e-8));
        }
        Check::Identity => {
            let fx = verification_fixture()?;
            let mut lin = fx.linearize()?;
            for (tag, mu) in ["1e-4", "1e-2", "1e0"].iter().zip(damping_ladder(&mut lin)?) {
                let e = identity_errors(&mut lin, &fx.observed, mu)?;
                out.push(Measurement::below(format!("source_residual_mu_{tag}"), e.source_residual, 1e-9));
                out.push(Measurement::below(format!("wavefield_mu_{tag}"), e.wavefield, 1e-10));
            }
        }
        Check::Equivalence => {
            let fx = verification_fixture()?;
            let mut lin = fx.linearize()?;
            for (tag, eps) in ["1e-4", "1e-2", "1e0"].iter().zip(damping_ladder(&mut lin)?) {
                let e = equivalence_errors(&mut lin, &fx.observed, &fx.model, eps)?;
                out.push(Measurement::below(format!("sequential_vs_wri_eps_{tag}"), e.sequential_vs_wri, 1e-10));
            }
        }
        Check::Limits => {
            let fx = OracleFixture::pml();
            out.push(Measurement::below("agn_to_gn_rel_frobenius", agn_limit_error(fx.linearize()?, 1e8)?, 1e-6));
            let config = InversionConfig::parse("grid = 41 41 50 50\nfrequencies_hz = 2\niterations = 1\npml_width = 6\n", std::path::Path::new(""))?;
            for fp in fixed_points(&config, &Method::ALL)? {
                out.push(Measurement::below(format!("{}_fixed_point_step", fp.method), fp.relative_step, 1e-12));
            }
        }
    }
    Ok(VerificationReport::new(check, out))
}
