//! Run configuration: a versioned TOML document. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coupled::{CoupledParams, Schedule, State};
use crate::ensemble::{sample_initial, Ensemble, ForceMethod, InitialEnsemble};
use crate::error::{Error, Result};
use crate::fluid::{read_checkpoint, taylor_green, SpectralField};
use crate::grid::{GridSpec, Transform};
use crate::kernels::{mollifier_symbol, CommKernel, CutoffSpec, MollifierFamily, MollifierSpec};
use crate::picard::IterationConfig;
use crate::relkin::LightSpeed;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regularization {
    Off,
    /// Mollified convection and drag, cutoff-weighted deposits.
    On {
        epsilon: f64,
        #[serde(default = "default_family")]
        mollifier: MollifierFamily,
    },
}

fn default_family() -> MollifierFamily {
    MollifierFamily::Bump
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialFluid {
    Zero,
    /// Taylor-Green vortex plus a constant mean flow.
    TaylorGreen {
        amplitude: f64,
        #[serde(default)]
        mean: [f64; 3],
    },
    /// Spectral checkpoint.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationSection {
    pub max_iter: usize,
    /// History cadence in steps.
    #[serde(default = "default_history_every")]
    pub history_every: usize,
}

fn default_history_every() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub dimension: usize,
    pub light_speed: f64,
    pub grid: usize,
    /// Zero runs the fluid alone.
    pub particles: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Diagnostics every this many steps.
    pub sample_every: usize,
    pub viscosity: f64,
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default = "default_true")]
    pub convection: bool,
    #[serde(default)]
    pub force_method: ForceMethod,
    /// Phase histograms and checkpoints every this many samples; 0 disables.
    #[serde(default)]
    pub snapshot_every: usize,
    pub kernel: CommKernel,
    pub regularization: Regularization,
    pub ensemble: InitialEnsemble,
    pub fluid: InitialFluid,
    #[serde(default)]
    pub iteration: Option<IterationSection>,
}

fn default_true() -> bool {
    true
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration; relative file paths inside it are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        if let InitialEnsemble::File { path } = &mut self.ensemble {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
        if let InitialFluid::File { path } = &mut self.fluid {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let grid = GridSpec::new(self.dimension, self.grid).map_err(|e| config_err(e.to_string()))?;
        LightSpeed::new(self.light_speed).map_err(|e| config_err(e.to_string()))?;
        Schedule::new(self.dt, self.t_final, self.sample_every).map_err(|e| config_err(e.to_string()))?;
        if !(self.viscosity.is_finite() && self.viscosity > 0.0) {
            return Err(config_err(format!("viscosity must be positive, got {}", self.viscosity)));
        }
        self.kernel.validate().map_err(|e| config_err(e.to_string()))?;
        if let Regularization::On { epsilon, mollifier } = &self.regularization {
            let m = MollifierSpec::new(*epsilon, *mollifier).map_err(|e| config_err(e.to_string()))?;
            mollifier_symbol(&m, &Transform::new(grid)).map_err(|e| config_err(e.to_string()))?;
        }
        if let InitialFluid::TaylorGreen { amplitude, mean } = &self.fluid {
            if !amplitude.is_finite() || mean.iter().any(|m| !m.is_finite()) {
                return Err(config_err("fluid amplitude and mean must be finite"));
            }
            if self.dimension == 2 && mean[2] != 0.0 {
                return Err(config_err("third mean-flow component set in two dimensions"));
            }
        }
        if let Some(it) = &self.iteration {
            if it.max_iter < 2 || it.history_every == 0 {
                return Err(config_err("iteration needs max_iter >= 2 and history_every >= 1"));
            }
            if self.regularization == Regularization::Off {
                return Err(config_err("iteration requires regularization"));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.dimension, self.grid)
    }

    pub fn light(&self) -> Result<LightSpeed> {
        LightSpeed::new(self.light_speed)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.dt, self.t_final, self.sample_every)
    }

    pub fn coupled_params(&self) -> Result<CoupledParams> {
        let mut p = CoupledParams::new(self.kernel.clone(), self.viscosity)?;
        p.convection = self.convection;
        p.force_method = self.force_method;
        if let Regularization::On { epsilon, mollifier } = &self.regularization {
            p.mollifier = Some(MollifierSpec::new(*epsilon, *mollifier)?);
            p.cutoff = Some(CutoffSpec::new(*epsilon)?);
        }
        Ok(p)
    }

    pub fn initial_ensemble(&self) -> Result<Ensemble> {
        let c = self.light()?;
        if self.particles == 0 {
            return Ensemble::vacuum(self.dimension, c);
        }
        sample_initial(&self.ensemble, self.particles, self.seed, self.dimension, c)
    }

    pub fn initial_fluid(&self, tr: &Transform) -> Result<SpectralField> {
        let grid = *tr.grid();
        match &self.fluid {
            InitialFluid::Zero => Ok(SpectralField::zeros(grid)),
            InitialFluid::TaylorGreen { amplitude, mean } => {
                let mut u = taylor_green(tr, *amplitude);
                for a in 0..grid.d() {
                    u.component_mut(a)[0] += mean[a];
                }
                Ok(u)
            }
            InitialFluid::File { path } => {
                let file = std::fs::File::open(path)?;
                let (u, _) = read_checkpoint(std::io::BufReader::new(file))?;
                if *u.grid() != grid {
                    return Err(Error::GridMismatch(format!("{} is not on the configured grid", path.display())));
                }
                Ok(u)
            }
        }
    }

    /// Transform, parameters and the initial state.
    pub fn build(&self) -> Result<(Transform, CoupledParams, State)> {
        let tr = Transform::new(self.grid_spec()?);
        let params = self.coupled_params()?;
        let u = self.initial_fluid(&tr)?;
        let state = State {
            t: 0.0,
            ensemble: self.initial_ensemble()?,
            u,
        };
        Ok((tr, params, state))
    }

    pub fn iteration_config(&self) -> Result<IterationConfig> {
        let it = self
            .iteration
            .as_ref()
            .ok_or_else(|| config_err("missing [iteration] section"))?;
        let (tr, params, state) = self.build()?;
        let cfg = IterationConfig {
            tr,
            params,
            initial: state.ensemble,
            u_in: state.u,
            dt: self.dt,
            t_final: self.t_final,
            sample_every: it.history_every,
            max_iter: it.max_iter,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = 1
dimension = 3
light_speed = 2.0
grid = 16
particles = 128
dt = 0.01
t_final = 0.1
sample_every = 2
viscosity = 1.0
seed = 7
output = "out"

[kernel]
family = "constant"
amplitude = 1.0

[regularization]
mode = "off"

[ensemble]
kind = "gaussian"
drift = [0.5, 0.0, 0.0]
sigma = 0.3
w_max = 3.0

[fluid]
kind = "taylor_green"
amplitude = 0.5
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml_str(BASE).unwrap();
        assert_eq!(cfg.grid, 16);
        assert!(cfg.convection);
        assert_eq!(cfg.force_method, ForceMethod::Auto);
        let again = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        let (tr, _, state) = cfg.build().unwrap();
        assert_eq!(state.ensemble.len(), 128);
        assert!(state.u.max_divergence(&tr) < 1e-12);
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        let typo = BASE.replace("viscosity", "viscocity");
        assert!(matches!(RunConfig::from_toml_str(&typo), Err(Error::Config(_))));
        let extra = format!("{BASE}\n[extra]\nx = 1\n");
        assert!(matches!(RunConfig::from_toml_str(&extra), Err(Error::Config(_))));
        let v2 = BASE.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(RunConfig::from_toml_str(&v2), Err(Error::Config(_))));
    }

    #[test]
    fn range_checks() {
        for (from, to) in [
            ("grid = 16", "grid = 12"),
            ("dimension = 3", "dimension = 4"),
            ("dt = 0.01", "dt = 0.0"),
            ("viscosity = 1.0", "viscosity = -1.0"),
            ("light_speed = 2.0", "light_speed = 0.0"),
            ("amplitude = 1.0", "amplitude = -1.0"),
        ] {
            let text = BASE.replacen(from, to, 1);
            assert!(RunConfig::from_toml_str(&text).is_err(), "{to}");
        }
        let reg = BASE.replace("mode = \"off\"", "mode = \"on\"\nepsilon = 0.05");
        assert!(RunConfig::from_toml_str(&reg).is_err());
        let reg = BASE.replace("mode = \"off\"", "mode = \"on\"\nepsilon = 0.2");
        let cfg = RunConfig::from_toml_str(&reg).unwrap();
        let p = cfg.coupled_params().unwrap();
        assert!(p.mollifier.is_some() && p.cutoff.is_some());
    }

    #[test]
    fn vacuum_and_mean_flow() {
        let text = BASE
            .replace("particles = 128", "particles = 0")
            .replace("amplitude = 0.5", "amplitude = 0.5\nmean = [0.1, 0.0, -0.2]");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let (_, _, state) = cfg.build().unwrap();
        assert!(state.ensemble.is_empty());
        assert!((state.u.mean() - crate::Vec3::new(0.1, 0.0, -0.2)).norm() < 1e-16);
    }

    #[test]
    fn iteration_section_needs_regularization() {
        let text = format!("{BASE}\n[iteration]\nmax_iter = 4\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
        let text = text.replace("mode = \"off\"", "mode = \"on\"\nepsilon = 0.2");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let it = cfg.iteration_config().unwrap();
        assert_eq!((it.max_iter, it.sample_every), (4, 5));
    }
}
