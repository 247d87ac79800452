//! The outer inversion loop: frequencies in order, a fixed number of model
//! updates per frequency, one record per update.

use super::config::{Damping, InversionConfig};
use super::experiment::{load_data, ExperimentSetup};
use crate::error::{FwiError, Result};
use crate::grid_model::{AcquisitionGeometry, Model};
use crate::helmholtz::Boundary;
use crate::hessians::{agn_hessian, full_hessian, gn_hessian, gradient, pseudo_hessian, HessianMatrix};
use crate::io::{self, CurvePoint};
use crate::sensitivity::{misfit, DataSet, Linearization};
use crate::updaters::{
    backtrack, condition_estimate, newton_residual, newton_step, psd_step, sequential_step, wri_assimilated_wavefield,
    wri_update_from_source_residual, Method, ModelUpdate, NewtonSystem,
};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

/// State after one model update (or the initial state, `iteration = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// Global update count; 0 is the starting model.
    pub iteration: usize,
    pub frequency_hz: f64,
    /// Update count within the current frequency.
    pub frequency_iteration: usize,
    /// `½ Σ ‖d* − P u‖²` at the current frequency after the update.
    pub misfit: f64,
    /// RMS velocity error against the true model, when it is known.
    pub model_rms: Option<f64>,
    pub step: f64,
    pub delta_m_norm: f64,
    pub eps: Option<f64>,
    pub mu: Option<f64>,
    pub damping: Option<f64>,
    pub halvings: usize,
    pub backoffs: usize,
    pub stagnated: bool,
    pub dead_nodes: usize,
    pub clamped_nodes: usize,
    /// `‖H_agn δm + g‖ / ‖g‖` for the step actually taken (diagnostics only).
    pub newton_residual: Option<f64>,
    /// Extreme-eigenvalue ratio of the symmetrized Hessian (diagnostics only).
    pub condition: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct Summary<'a> {
    method: &'a str,
    frequencies_hz: &'a [f64],
    iterations: usize,
    final_misfit: f64,
    final_model_rms: Option<f64>,
    stagnated_steps: usize,
    wall_time_s: f64,
    error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    pub final_model: Model,
    pub wall_time_s: f64,
    /// Set when the run aborted; `records` then hold the completed steps.
    pub error: Option<String>,
}

impl InversionResult {
    pub fn curve(&self) -> Vec<CurvePoint> {
        self.records
            .iter()
            .map(|r| CurvePoint {
                iteration: r.iteration,
                frequency_hz: r.frequency_hz,
                misfit: r.misfit,
                model_rms: r.model_rms.unwrap_or(f64::NAN),
            })
            .collect()
    }

    /// Write `curve.csv`, `final_model.txt`, `diagnostics.jsonl` and
    /// `summary.json` into `dir`.
    pub fn persist(&self, dir: &Path, frequencies_hz: &[f64]) -> Result<()> {
        io::write_curve(&dir.join("curve.csv"), &self.curve())?;
        io::write_model(&dir.join("final_model.txt"), &self.final_model)?;
        let mut lines = String::new();
        for r in &self.records {
            lines.push_str(&serde_json::to_string(r).map_err(|e| FwiError::Numerical(e.to_string()))?);
            lines.push('\n');
        }
        io::write(&dir.join("diagnostics.jsonl"), &lines)?;
        let last = self.records.last();
        let summary = Summary {
            method: self.method.tag(),
            frequencies_hz,
            iterations: self.records.len().saturating_sub(1),
            final_misfit: last.map_or(f64::NAN, |r| r.misfit),
            final_model_rms: last.and_then(|r| r.model_rms),
            stagnated_steps: self.records.iter().filter(|r| r.stagnated).count(),
            wall_time_s: self.wall_time_s,
            error: self.error.clone(),
        };
        let text = serde_json::to_string_pretty(&summary).map_err(|e| FwiError::Numerical(e.to_string()))?;
        io::write(&dir.join("summary.json"), &text)
    }
}

/// Stepwise inversion driver. Each [`Inversion::step`] linearizes at the
/// current model, computes the method's update, applies it and records the
/// new misfit.
#[derive(Debug)]
pub struct Inversion {
    config: InversionConfig,
    geometry: AcquisitionGeometry,
    data: Vec<DataSet>,
    true_model: Option<Model>,
    model: Model,
    /// `(v_lo, v_hi)` when clamping is on.
    clamp: Option<(f64, f64)>,
    frequency: usize,
    frequency_iteration: usize,
    /// Damping of the current frequency, fixed on its first iteration.
    eps: Option<f64>,
    /// Starting Levenberg damping of the next Newton-type step: the last
    /// accepted damping, relaxed tenfold after a step accepted without
    /// backoff.
    lambda: f64,
    records: Vec<IterationRecord>,
    started: Instant,
}

impl Inversion {
    /// Set up from an already resolved experiment and observed data (one
    /// data set per configured frequency, in order).
    pub fn new(config: InversionConfig, setup: ExperimentSetup, data: Vec<DataSet>) -> Result<Self> {
        config.validate()?;
        if data.len() != config.frequencies_hz.len() || data.iter().zip(&config.frequencies_hz).any(|(d, f)| d.frequency_hz != *f) {
            return Err(FwiError::Config("observed data does not match the configured frequencies".into()));
        }
        let clamp = if config.velocity_clamp {
            let reference = setup.true_model.as_ref().unwrap_or(&setup.initial_model).to_velocity();
            let lo = reference.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = reference.values.iter().copied().fold(0.0, f64::max);
            Some((0.5 * lo, 1.5 * hi))
        } else {
            None
        };
        let model = setup.initial_model;
        let misfit0 = misfit(&model, &setup.geometry, &data[..1], config.boundary())?;
        let model_rms = setup.true_model.as_ref().map(|t| model.velocity_rms_error(t));
        let first = IterationRecord {
            iteration: 0,
            frequency_hz: config.frequencies_hz[0],
            frequency_iteration: 0,
            misfit: misfit0,
            model_rms,
            step: 0.0,
            delta_m_norm: 0.0,
            eps: None,
            mu: None,
            damping: None,
            halvings: 0,
            backoffs: 0,
            stagnated: false,
            dead_nodes: 0,
            clamped_nodes: 0,
            newton_residual: None,
            condition: None,
        };
        Ok(Self {
            geometry: setup.geometry,
            true_model: setup.true_model,
            model,
            clamp,
            frequency: 0,
            frequency_iteration: 0,
            eps: None,
            lambda: config.lambda0,
            records: vec![first],
            started: Instant::now(),
            data,
            config,
        })
    }

    /// Resolve the experiment and read its data files.
    pub fn from_config(config: InversionConfig) -> Result<Self> {
        let setup = ExperimentSetup::resolve(&config)?;
        let data = load_data(&config, &setup.geometry)?;
        Self::new(config, setup, data)
    }

    pub fn config(&self) -> &InversionConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn geometry(&self) -> &AcquisitionGeometry {
        &self.geometry
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn is_finished(&self) -> bool {
        self.config.iterations == 0 || self.frequency >= self.config.frequencies_hz.len()
    }

    /// Observed data of the frequency the next step works on.
    pub fn current_data(&self) -> Option<&DataSet> {
        (!self.is_finished()).then(|| &self.data[self.frequency])
    }

    fn boundary(&self) -> Boundary {
        self.config.boundary()
    }

    /// Linearization at the current model for the current frequency.
    pub fn linearize(&self) -> Result<Linearization> {
        let data = self
            .current_data()
            .ok_or_else(|| FwiError::Config("inversion already finished".into()))?;
        Linearization::new(&self.model, &self.geometry, data, self.boundary())
    }

    /// `eps_scale · mean(diag(SSᴴ))` for `auto`, the fixed value otherwise.
    fn resolve_damping(&self, setting: Damping, lin: &mut Linearization) -> Result<f64> {
        match setting {
            Damping::Fixed(v) => Ok(v),
            Damping::Auto => Ok(self.config.eps_scale * lin.gram_mean_diagonal()?),
        }
    }

    /// Damping `ε` (and the penalty `μ`, which shares its rule) in effect for
    /// the current frequency, given a linearization at the current model.
    pub fn current_eps(&mut self, lin: &mut Linearization) -> Result<f64> {
        if self.frequency_iteration == 0 || self.eps.is_none() {
            let setting = if self.config.method == Method::Wri { self.config.mu } else { self.config.eps };
            self.eps = Some(self.resolve_damping(setting, lin)?);
        }
        Ok(self.eps.expect("set above"))
    }

    /// One model update. Returns the record appended for it.
    pub fn step(&mut self) -> Result<&IterationRecord> {
        if self.is_finished() {
            return Err(FwiError::Config("inversion already finished".into()));
        }
        let method = self.config.method;
        let boundary = self.boundary();
        let mut lin = self.linearize()?;
        let before = lin.misfit();
        let damping = if method.needs_eps() || method == Method::Wri {
            Some(self.current_eps(&mut lin)?)
        } else {
            None
        };
        let data = std::slice::from_ref(&self.data[self.frequency]);
        let geometry = &self.geometry;
        let misfit_of = |m: &Model| misfit(m, geometry, data, boundary);
        let newton_system = if self.config.agn_symmetrize || method != Method::Agn {
            NewtonSystem::Symmetrized
        } else {
            NewtonSystem::General
        };
        let mut eps = None;
        let mut mu = None;
        let mut hessian: Option<HessianMatrix> = None;
        let mut grad = None;
        let update: ModelUpdate = match method {
            Method::Psd => {
                let lins = [lin];
                let g = gradient(&lins)?;
                let p = pseudo_hessian(&lins)?;
                psd_step(&p, &g, &self.model, before, misfit_of)?
            }
            Method::Gn | Method::Fn | Method::Agn => {
                if let Some(e) = damping {
                    lin.prepare_scattering(e)?;
                    eps = Some(e);
                }
                let mut lins = [lin];
                let g = gradient(&lins)?;
                let h = match method {
                    Method::Gn => gn_hessian(&mut lins)?,
                    Method::Fn => full_hessian(&mut lins)?,
                    _ => agn_hessian(&mut lins)?,
                };
                drop(lins);
                let up = newton_step(&h, &g, self.lambda, newton_system, method, &self.model, before, misfit_of)?;
                if self.config.diagnostics {
                    hessian = Some(h);
                    grad = Some(g);
                }
                up
            }
            Method::AgnSeq => {
                let e = damping.expect("agn-seq uses a damping");
                lin.prepare_scattering(e)?;
                eps = Some(e);
                let mut lins = [lin];
                let p = sequential_step(&lins)?;
                if self.config.diagnostics {
                    grad = Some(gradient(&lins)?);
                    hessian = Some(agn_hessian(&mut lins)?);
                }
                drop(lins);
                let mut up = backtrack(&p.delta_m, 1.0, 0.0, 0.0, method, &self.model, before, misfit_of)?;
                up.diagnostics.dead_nodes = p.dead_nodes;
                up
            }
            Method::Wri => {
                let base = damping.expect("wri uses a penalty");
                let m = base * self.config.mu_growth.powi(self.frequency_iteration as i32);
                mu = Some(m);
                let ue = [wri_assimilated_wavefield(&lin, data.first().expect("one data set"), m)?];
                let lins = [lin];
                let (_, p) = wri_update_from_source_residual(&lins, &ue, &self.model)?;
                drop(lins);
                let mut up = backtrack(&p.delta_m, 1.0, 0.0, 0.0, method, &self.model, before, misfit_of)?;
                up.diagnostics.dead_nodes = p.dead_nodes;
                up
            }
        };
        if let Some(l) = update.diagnostics.damping {
            self.lambda = if update.diagnostics.backoffs == 0 { l / 10.0 } else { l };
        }
        let (newton_res, condition) = match (&hessian, &grad) {
            (Some(h), Some(g)) if g.norm() > 0.0 => (Some(newton_residual(h, &update.delta_m, g)), Some(condition_estimate(h)?)),
            _ => (None, None),
        };
        drop(hessian);

        let mut next = update.apply(&self.model)?;
        let mut clamped = 0;
        let mut after = update.diagnostics.misfit_after.unwrap_or(before);
        if let Some((lo, hi)) = self.clamp {
            let before_clamp = next.clone();
            next.clamp_velocity(lo, hi);
            clamped = next.values().iter().zip(before_clamp.values()).filter(|(a, b)| a != b).count();
            if clamped > 0 {
                after = misfit(&next, &self.geometry, data, boundary)?;
            }
        }
        if !after.is_finite() {
            return Err(FwiError::Numerical(format!("{method}: misfit is not finite after the update")));
        }
        self.model = next;
        self.frequency_iteration += 1;
        let record = IterationRecord {
            iteration: self.records.len(),
            frequency_hz: self.config.frequencies_hz[self.frequency],
            frequency_iteration: self.frequency_iteration,
            misfit: after,
            model_rms: self.true_model.as_ref().map(|t| self.model.velocity_rms_error(t)),
            step: update.step,
            delta_m_norm: update.norm(),
            eps,
            mu,
            damping: update.diagnostics.damping,
            halvings: update.diagnostics.halvings,
            backoffs: update.diagnostics.backoffs,
            stagnated: update.diagnostics.stagnated,
            dead_nodes: update.diagnostics.dead_nodes,
            clamped_nodes: clamped,
            newton_residual: newton_res,
            condition,
        };
        log::info!(
            "{method} {} Hz it {}: misfit {:.6e} step {:.3e}{}",
            record.frequency_hz,
            record.frequency_iteration,
            record.misfit,
            record.step,
            if record.stagnated { " (stagnated)" } else { "" }
        );
        self.records.push(record);
        if self.frequency_iteration == self.config.iterations {
            self.frequency += 1;
            self.frequency_iteration = 0;
            self.eps = None;
        }
        Ok(self.records.last().expect("just pushed"))
    }

    /// Snapshot of the run so far.
    pub fn result(&self, error: Option<String>) -> InversionResult {
        InversionResult {
            method: self.config.method,
            records: self.records.clone(),
            final_model: self.model.clone(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            error,
        }
    }

    /// Run to completion. On failure the partial result is returned along
    /// with the error.
    pub fn run(mut self) -> std::result::Result<InversionResult, (InversionResult, FwiError)> {
        while !self.is_finished() {
            if let Err(e) = self.step() {
                return Err((self.result(Some(e.to_string())), e));
            }
        }
        Ok(self.result(None))
    }
}

/// Run `config` and persist into `out`, partial results included on failure.
pub fn invert(config: InversionConfig, out: &Path) -> Result<InversionResult> {
    let frequencies = config.frequencies_hz.clone();
    match Inversion::from_config(config)?.run() {
        Ok(r) => {
            r.persist(out, &frequencies)?;
            Ok(r)
        }
        Err((partial, e)) => {
            partial.persist(out, &frequencies)?;
            Err(e)
        }
    }
}
