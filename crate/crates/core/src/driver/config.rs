//! `key = value` experiment configuration. Keys are exactly the field names
//! of [`InversionConfig`]; unknown or repeated keys are errors. `#` starts a
//! comment. Relative paths resolve against the config file's directory.

use crate::error::{FwiError, Result};
use crate::grid_model::Grid2D;
use crate::helmholtz::Boundary;
use crate::updaters::Method;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Inclusion,
    Concrete,
    Custom,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Inclusion => "inclusion",
            Self::Concrete => "concrete",
            Self::Custom => "custom",
        })
    }
}

impl FromStr for Experiment {
    type Err = FwiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inclusion" => Ok(Self::Inclusion),
            "concrete" => Ok(Self::Concrete),
            "custom" => Ok(Self::Custom),
            _ => Err(FwiError::Config(format!("unknown experiment `{s}` (expected inclusion, concrete or custom)"))),
        }
    }
}

/// A damping parameter given explicitly or derived from `SSᴴ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    /// `scale · mean(diag(SSᴴ))` at the first iteration of each frequency.
    Auto,
    Fixed(f64),
}

impl fmt::Display for Damping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Fixed(v) => write!(f, "{v:e}"),
        }
    }
}

impl FromStr for Damping {
    type Err = FwiError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| FwiError::Config(format!("expected `auto` or a positive number, found `{s}`")))?;
        if v > 0.0 && v.is_finite() {
            Ok(Self::Fixed(v))
        } else {
            Err(FwiError::Config(format!("damping must be positive, found {v}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Pml,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    pub experiment: Experiment,
    pub method: Method,
    /// Strictly increasing.
    pub frequencies_hz: Vec<f64>,
    /// Outer iterations per frequency.
    pub iterations: usize,
    pub eps: Damping,
    /// Factor applied to `mean(diag(SSᴴ))` when `eps` or `mu` is `auto`.
    pub eps_scale: f64,
    /// WRI penalty; `auto` follows the same rule as `eps`, so `μ = ε`.
    pub mu: Damping,
    /// Geometric growth of `μ` per iteration within a frequency (1 = fixed).
    pub mu_growth: f64,
    /// Initial Levenberg damping of Newton-type steps.
    pub lambda0: f64,
    pub boundary: BoundaryKind,
    pub pml_width: usize,
    pub pml_strength: f64,
    /// Seed of the optional data noise.
    pub seed: u64,
    /// Uniform complex noise amplitude relative to the RMS data value.
    pub noise_level: f64,
    pub data_dir: PathBuf,
    /// Grid override for the built-in experiments.
    pub grid: Option<Grid2D>,
    pub true_model_file: Option<PathBuf>,
    pub initial_model_file: Option<PathBuf>,
    pub geometry_file: Option<PathBuf>,
    /// Clamp velocities to `[0.5 v_min, 1.5 v_max]` of the reference model.
    pub velocity_clamp: bool,
    /// Solve with `(H + Hᵀ)/2` for the nonsymmetric augmented Hessian.
    pub agn_symmetrize: bool,
    /// Per-iteration Newton-residual and condition diagnostics.
    pub diagnostics: bool,
}

pub const CONFIG_KEYS: [&str; 22] = [
    "experiment",
    "method",
    "frequencies_hz",
    "iterations",
    "eps",
    "eps_scale",
    "mu",
    "mu_growth",
    "lambda0",
    "boundary",
    "pml_width",
    "pml_strength",
    "seed",
    "noise_level",
    "data_dir",
    "grid",
    "true_model_file",
    "initial_model_file",
    "geometry_file",
    "velocity_clamp",
    "agn_symmetrize",
    "diagnostics",
];

impl InversionConfig {
    /// Defaults of the built-in experiments.
    pub fn for_experiment(experiment: Experiment) -> Self {
        let (frequencies_hz, iterations) = match experiment {
            Experiment::Inclusion => (vec![5.0], 20),
            Experiment::Concrete => ((0..9).map(|k| 100.0 + 25.0 * k as f64).collect(), 22),
            Experiment::Custom => (Vec::new(), 20),
        };
        Self {
            experiment,
            method: Method::Agn,
            frequencies_hz,
            iterations,
            eps: Damping::Auto,
            eps_scale: 1e-3,
            mu: Damping::Auto,
            mu_growth: 1.0,
            lambda0: 1e-3,
            boundary: BoundaryKind::Pml,
            pml_width: 10,
            pml_strength: 4.0,
            seed: 0,
            noise_level: 0.0,
            data_dir: PathBuf::from("data"),
            grid: None,
            true_model_file: None,
            initial_model_file: None,
            geometry_file: None,
            velocity_clamp: false,
            agn_symmetrize: true,
            diagnostics: false,
        }
    }

    pub fn boundary(&self) -> Boundary {
        match self.boundary {
            BoundaryKind::Dirichlet => Boundary::Dirichlet,
            BoundaryKind::Pml => Boundary::Pml {
                width: self.pml_width,
                strength: self.pml_strength,
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FwiError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parse config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FwiError::Config(format!("line {}: expected `key = value`, found `{line}`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !CONFIG_KEYS.contains(&k) {
                return Err(FwiError::Config(format!("line {}: unknown key `{k}`", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(FwiError::Config(format!("line {}: key `{k}` given twice", n + 1)));
            }
        }
        let experiment = match entries.get("experiment") {
            Some(v) => v.parse()?,
            None => Experiment::Inclusion,
        };
        let mut c = Self::for_experiment(experiment);
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        for (k, v) in &entries {
            let v = v.as_str();
            match k.as_str() {
                "experiment" => {}
                "method" => c.method = v.parse()?,
                "frequencies_hz" => {
                    c.frequencies_hz = v
                        .split(|ch: char| ch == ',' || ch.is_whitespace())
                        .filter(|t| !t.is_empty())
                        .map(|t| num::<f64>(k, t))
                        .collect::<Result<_>>()?
                }
                "iterations" => c.iterations = num(k, v)?,
                "eps" => c.eps = v.parse()?,
                "eps_scale" => c.eps_scale = num(k, v)?,
                "mu" => c.mu = v.parse()?,
                "mu_growth" => c.mu_growth = num(k, v)?,
                "lambda0" => c.lambda0 = num(k, v)?,
                "boundary" => {
                    c.boundary = match v {
                        "pml" => BoundaryKind::Pml,
                        "dirichlet" => BoundaryKind::Dirichlet,
                        _ => return Err(FwiError::Config(format!("boundary must be pml or dirichlet, found `{v}`"))),
                    }
                }
                "pml_width" => c.pml_width = num(k, v)?,
                "pml_strength" => c.pml_strength = num(k, v)?,
                "seed" => c.seed = num(k, v)?,
                "noise_level" => c.noise_level = num(k, v)?,
                "data_dir" => c.data_dir = path(v),
                "grid" => {
                    let f: Vec<&str> = v.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(FwiError::Config(format!("grid expects `nx nz dx dz`, found `{v}`")));
                    }
                    c.grid = Some(Grid2D::new(num(k, f[0])?, num(k, f[1])?, num(k, f[2])?, num(k, f[3])?)?);
                }
                "true_model_file" => c.true_model_file = Some(path(v)),
                "initial_model_file" => c.initial_model_file = Some(path(v)),
                "geometry_file" => c.geometry_file = Some(path(v)),
                "velocity_clamp" => c.velocity_clamp = flag(k, v)?,
                "agn_symmetrize" => c.agn_symmetrize = flag(k, v)?,
                "diagnostics" => c.diagnostics = flag(k, v)?,
                _ => unreachable!("key list checked above"),
            }
        }
        if !entries.contains_key("data_dir") {
            c.data_dir = base.join(&c.data_dir);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FwiError::Config(m));
        if self.frequencies_hz.is_empty() {
            return bad("frequencies_hz is empty".into());
        }
        if self.frequencies_hz.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return bad("frequencies must be positive".into());
        }
        if self.frequencies_hz.windows(2).any(|w| w[1] <= w[0]) {
            return bad("frequencies_hz must be strictly increasing".into());
        }
        if !(self.eps_scale > 0.0 && self.eps_scale.is_finite()) {
            return bad(format!("eps_scale must be positive, found {}", self.eps_scale));
        }
        if !(self.mu_growth >= 1.0 && self.mu_growth.is_finite()) {
            return bad(format!("mu_growth must be at least 1, found {}", self.mu_growth));
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return bad(format!("lambda0 must be nonnegative, found {}", self.lambda0));
        }
        if self.boundary == BoundaryKind::Pml && (self.pml_width == 0 || !(self.pml_strength >= 0.0)) {
            return bad("pml_width must be positive and pml_strength nonnegative".into());
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad(format!("noise_level must be nonnegative, found {}", self.noise_level));
        }
        if self.experiment == Experiment::Custom {
            if self.initial_model_file.is_none() || self.geometry_file.is_none() {
                return bad("custom experiments need initial_model_file and geometry_file".into());
            }
            if self.grid.is_some() {
                return bad("grid applies to built-in experiments; custom grids come from the model files".into());
            }
        } else if self.true_model_file.is_some() || self.initial_model_file.is_some() || self.geometry_file.is_some() {
            return bad(format!("model and geometry files only apply to custom experiments, not {}", self.experiment));
        }
        Ok(())
    }

    /// Text form accepted by [`InversionConfig::parse`].
    pub fn to_text(&self) -> String {
        let list: Vec<String> = self.frequencies_hz.iter().map(|f| f.to_string()).collect();
        let mut s = format!(
            "experiment = {}\nmethod = {}\nfrequencies_hz = {}\niterations = {}\neps = {}\neps_scale = {:e}\nmu = {}\n\
             mu_growth = {}\nlambda0 = {:e}\nboundary = {}\npml_width = {}\npml_strength = {}\nseed = {}\nnoise_level = {}\n\
             data_dir = {}\nvelocity_clamp = {}\nagn_symmetrize = {}\ndiagnostics = {}\n",
            self.experiment,
            self.method,
            list.join(", "),
            self.iterations,
            self.eps,
            self.eps_scale,
            self.mu,
            self.mu_growth,
            self.lambda0,
            match self.boundary {
                BoundaryKind::Pml => "pml",
                BoundaryKind::Dirichlet => "dirichlet",
            },
            self.pml_width,
            self.pml_strength,
            self.seed,
            self.noise_level,
            self.data_dir.display(),
            self.velocity_clamp,
            self.agn_symmetrize,
            self.diagnostics,
        );
        if let Some(g) = self.grid {
            s.push_str(&format!("grid = {} {} {} {}\n", g.nx, g.nz, g.dx, g.dz));
        }
        for (k, p) in [
            ("true_model_file", &self.true_model_file),
            ("initial_model_file", &self.initial_model_file),
            ("geometry_file", &self.geometry_file),
        ] {
            if let Some(p) = p {
                s.push_str(&format!("{k} = {}\n", p.display()));
            }
        }
        s
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| FwiError::Config(format!("cannot parse value `{v}` of `{key}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(FwiError::Config(format!("`{key}` expects true or false, found `{v}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = InversionConfig::parse("experiment = concrete\nmethod = agn-seq # comment\n", Path::new("/cfg")).unwrap();
        assert_eq!(c.frequencies_hz.len(), 9);
        assert_eq!(c.frequencies_hz[8], 300.0);
        assert_eq!(c.method, Method::AgnSeq);
        assert_eq!(c.data_dir, PathBuf::from("/cfg/data"));
        let c = InversionConfig::parse("frequencies_hz = 3, 4.5 6\neps = 2e-3\nmu = auto\ngrid = 31 31 40 40\n", Path::new("")).unwrap();
        assert_eq!(c.frequencies_hz, vec![3.0, 4.5, 6.0]);
        assert_eq!(c.eps, Damping::Fixed(2e-3));
        assert_eq!(c.grid.unwrap().nx, 31);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "colour = red",
            "method = newton",
            "iterations = -1",
            "frequencies_hz = 5, 4",
            "frequencies_hz = 5, 5",
            "eps = 0",
            "eps = -1",
            "method = gn\nmethod = psd",
            "just words",
            "experiment = custom",
            "true_model_file = a.txt",
            "velocity_clamp = maybe",
            "mu_growth = 0.5",
        ] {
            assert!(matches!(InversionConfig::parse(text, Path::new("")), Err(FwiError::Config(_))), "{text}");
        }
    }

    #[test]
    fn text_form_round_trips() {
        let mut c = InversionConfig::for_experiment(Experiment::Inclusion);
        c.method = Method::Wri;
        c.eps = Damping::Fixed(1.5e-7);
        c.grid = Some(Grid2D::new(41, 41, 50.0, 50.0).unwrap());
        c.data_dir = PathBuf::from("/tmp/x");
        c.diagnostics = true;
        let back = InversionConfig::parse(&c.to_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, c);
        // every key appears in the text form or is an unset optional path
        for k in CONFIG_KEYS {
            assert!(c.to_text().contains(&format!("{k} =")) || k.ends_with("_file"), "{k}");
        }
    }
}
