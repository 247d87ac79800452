//! Resolving a config into models and acquisition, and synthetic data.

use super::config::{Experiment, InversionConfig};
use crate::error::{FwiError, Result};
use crate::grid_model::{build_concrete_model, build_inclusion_model, AcquisitionGeometry, Model};
use crate::helmholtz::{assemble, factorize, Boundary};
use crate::io;
use crate::sensitivity::{synthetic_data, DataSet};
use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    /// Known for synthetic experiments; enables model-error tracking.
    pub true_model: Option<Model>,
    pub initial_model: Model,
    pub geometry: AcquisitionGeometry,
}

impl ExperimentSetup {
    pub fn resolve(config: &InversionConfig) -> Result<Self> {
        let built = match config.experiment {
            Experiment::Inclusion => build_inclusion_model(config.grid)?,
            Experiment::Concrete => build_concrete_model(config.grid)?,
            Experiment::Custom => {
                let initial_path = config.initial_model_file.as_deref().expect("validated");
                let initial_model = io::read_model(initial_path)?;
                let grid = *initial_model.grid();
                let geometry = io::read_geometry(config.geometry_file.as_deref().expect("validated"), grid)?;
                let true_model = config.true_model_file.as_deref().map(io::read_model).transpose()?;
                if let Some(t) = &true_model {
                    if t.grid() != &grid {
                        return Err(FwiError::Config("true and initial models are on different grids".into()));
                    }
                }
                return Ok(Self {
                    true_model,
                    initial_model,
                    geometry,
                });
            }
        };
        Ok(Self {
            true_model: Some(built.true_model),
            initial_model: built.initial_model,
            geometry: built.geometry,
        })
    }
}

/// `d* = P A(m)⁻¹ b*` at every frequency.
pub fn synthesize_data(model: &Model, geometry: &AcquisitionGeometry, frequencies_hz: &[f64], boundary: Boundary) -> Result<Vec<DataSet>> {
    frequencies_hz
        .iter()
        .map(|&f| {
            let fact = factorize(assemble(model, f, boundary)?)?;
            let stations = fact.operator().domain().stations(geometry);
            synthetic_data(&fact, &stations)
        })
        .collect()
}

/// Adds independent uniform noise of amplitude `level · rms(d)` to the real
/// and imaginary parts of every sample, from a seeded generator.
pub fn add_noise(data: &mut [DataSet], level: f64, seed: u64) {
    if level == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for d in data {
        let count = (d.n_sources() * d.n_receivers).max(1) as f64;
        let rms = (d.traces.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() / count).sqrt();
        for v in d.traces.iter_mut().flatten() {
            *v += c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (level * rms);
        }
    }
}

pub fn data_path(dir: &Path, frequency_hz: f64) -> PathBuf {
    dir.join(format!("data_{frequency_hz}hz.txt"))
}

/// Write observed data for every configured frequency plus the models and
/// geometry used to produce it. Returns the data files written.
pub fn synthesize(config: &InversionConfig) -> Result<Vec<PathBuf>> {
    let setup = ExperimentSetup::resolve(config)?;
    let true_model = setup
        .true_model
        .as_ref()
        .ok_or_else(|| FwiError::Config("synthesis needs a true model (set true_model_file)".into()))?;
    let mut data = synthesize_data(true_model, &setup.geometry, &config.frequencies_hz, config.boundary())?;
    add_noise(&mut data, config.noise_level, config.seed);
    let dir = &config.data_dir;
    let mut files = Vec::with_capacity(data.len());
    for d in &data {
        let p = data_path(dir, d.frequency_hz);
        io::write_data(&p, d)?;
        files.push(p);
    }
    io::write_model(&dir.join("true_model.txt"), true_model)?;
    io::write_model(&dir.join("initial_model.txt"), &setup.initial_model)?;
    io::write_geometry(&dir.join("geometry.txt"), &setup.geometry)?;
    Ok(files)
}

/// Read the observed data of every configured frequency and check it
/// against the acquisition.
pub fn load_data(config: &InversionConfig, geometry: &AcquisitionGeometry) -> Result<Vec<DataSet>> {
    config
        .frequencies_hz
        .iter()
        .map(|&f| {
            let p = data_path(&config.data_dir, f);
            let d = io::read_data(&p)?;
            if d.frequency_hz != f {
                return Err(FwiError::Config(format!("{} holds {} Hz data, expected {f} Hz", p.display(), d.frequency_hz)));
            }
            if d.n_sources() != geometry.n_sources() || d.n_receivers != geometry.n_receivers() {
                return Err(FwiError::Config(format!(
                    "{} is {} sources x {} receivers, acquisition has {} x {}",
                    p.display(),
                    d.n_sources(),
                    d.n_receivers,
                    geometry.n_sources(),
                    geometry.n_receivers()
                )));
            }
            Ok(d)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::Grid2D;

    fn small(dir: &Path) -> InversionConfig {
        let text = format!("grid = 41 41 50 50\nfrequencies_hz = 1.5, 2\ndata_dir = {}\n", dir.display());
        InversionConfig::parse(&text, Path::new("")).unwrap()
    }

    #[test]
    fn synthesized_files_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let c = small(tmp.path());
        let files = synthesize(&c).unwrap();
        assert_eq!(files.len(), 2);
        assert!(files[0].ends_with("data_1.5hz.txt"));
        let setup = ExperimentSetup::resolve(&c).unwrap();
        let loaded = load_data(&c, &setup.geometry).unwrap();
        let direct = synthesize_data(setup.true_model.as_ref().unwrap(), &setup.geometry, &c.frequencies_hz, c.boundary()).unwrap();
        assert_eq!(loaded, direct);
        assert!(tmp.path().join("geometry.txt").exists());
    }

    #[test]
    fn custom_experiment_reads_written_files() {
        let tmp = tempfile::tempdir().unwrap();
        let c = small(tmp.path());
        synthesize(&c).unwrap();
        let text = format!(
            "experiment = custom\nfrequencies_hz = 2\ninitial_model_file = initial_model.txt\ngeometry_file = geometry.txt\ntrue_model_file = true_model.txt\ndata_dir = .\n"
        );
        let custom = InversionConfig::parse(&text, tmp.path()).unwrap();
        let setup = ExperimentSetup::resolve(&custom).unwrap();
        assert_eq!(setup.geometry.n_sources(), 112);
        assert_eq!(*setup.initial_model.grid(), Grid2D::new(41, 41, 50.0, 50.0).unwrap());
        assert_eq!(load_data(&custom, &setup.geometry).unwrap().len(), 1);
    }

    #[test]
    fn missing_or_mismatched_data_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let c = small(tmp.path());
        let setup = ExperimentSetup::resolve(&c).unwrap();
        assert!(matches!(load_data(&c, &setup.geometry), Err(FwiError::Io { .. })));
        synthesize(&c).unwrap();
        std::fs::copy(data_path(tmp.path(), 2.0), data_path(tmp.path(), 1.5)).unwrap();
        assert!(matches!(load_data(&c, &setup.geometry), Err(FwiError::Config(_))));
    }

    #[test]
    fn noise_is_seeded() {
        let tmp = tempfile::tempdir().unwrap();
        let c = small(tmp.path());
        let setup = ExperimentSetup::resolve(&c).unwrap();
        let clean = synthesize_data(&setup.initial_model, &setup.geometry, &[2.0], c.boundary()).unwrap();
        let (mut a, mut b, mut other) = (clean.clone(), clean.clone(), clean.clone());
        add_noise(&mut a, 0.05, 7);
        add_noise(&mut b, 0.05, 7);
        add_noise(&mut other, 0.05, 8);
        assert_eq!(a, b);
        assert_ne!(a, other);
        assert_ne!(a, clean);
    }
}
