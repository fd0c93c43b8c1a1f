//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! mode = "adaptive"
//!
//! [grid]
//! nx = 16
//! ny = 48
//! dx = 4.0
//! dy = 4.0
//! levels_space = 2
//! levels_time = 2
//!
//! [time]
//! steps = 40
//! dt = 10.0
//!
//! [rock]
//! kind = "gaussian"
//!
//! [[wells]]
//! kind = "injector"
//! i = 0
//! j = 0
//! value = 1.0
//! ```
//!
//! Every table rejects unknown keys. Missing optional keys take the
//! defaults of the corresponding `Default` impl.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::field::{channel_field, gaussian_field, load_field, ChannelParams};
use crate::assembly::WellSpec;
use crate::driver::{RunMode, Simulation};
use crate::error::{Error, Result};
use crate::estimators::ThresholdMode;
use crate::exec::Execution;
use crate::mesh::{CoarseGrid, MeshLevels};
use crate::physics::{BrooksCorey, FluidModel, FluidProps};
use crate::solver::SolverConfig;
use crate::upscaling::{CellField, LevelRock, RockField, UpscaleMethod};

/// Largest supported refinement depth in either dimension.
pub const MAX_LEVELS: u8 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    /// Coarse cell size, ft.
    pub dx: f64,
    pub dy: f64,
    #[serde(default = "one")]
    pub thickness: f64,
    #[serde(default)]
    pub levels_space: u8,
    #[serde(default)]
    pub levels_time: u8,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub steps: usize,
    /// Coarse step, days.
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub pressure: f64,
    pub saturation: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            pressure: 1000.0,
            saturation: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    #[default]
    Homogeneous,
    Gaussian,
    Channel,
    Files,
}

/// Finest-level rock description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RockConfig {
    pub kind: FieldKind,
    /// md, homogeneous kind.
    pub permeability: f64,
    pub porosity: f64,
    /// `ky / kx` for generated fields.
    pub ky_ratio: f64,
    pub geometric_mean: f64,
    pub log_variance: f64,
    /// Finest cells.
    pub correlation_length: f64,
    pub background: f64,
    pub contrast: f64,
    pub width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kx_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ky_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub porosity_file: Option<PathBuf>,
    pub upscaling: UpscaleMethod,
}

impl Default for RockConfig {
    fn default() -> Self {
        Self {
            kind: FieldKind::Homogeneous,
            permeability: 100.0,
            porosity: 0.2,
            ky_ratio: 1.0,
            geometric_mean: 100.0,
            log_variance: 1.0,
            correlation_length: 4.0,
            background: 1.0,
            contrast: 1000.0,
            width: 4.0,
            amplitude: None,
            wavelength: None,
            kx_file: None,
            ky_file: None,
            porosity_file: None,
            upscaling: UpscaleMethod::FlowBased,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptivityConfig {
    pub thresholds: ThresholdMode,
    pub warm_start: bool,
}

impl Default for AdaptivityConfig {
    fn default() -> Self {
        Self {
            thresholds: ThresholdMode::Fitted,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a VTK snapshot every this many steps; 0 writes only the last.
    pub snapshot_every: usize,
    pub verbose_indicators: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_every: 0,
            verbose_indicators: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutionConfig {
    pub parallel: bool,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self { parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: RunMode,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub fluid: FluidProps,
    #[serde(default)]
    pub relperm: BrooksCorey,
    #[serde(default)]
    pub rock: RockConfig,
    #[serde(default)]
    pub wells: Vec<WellSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub adaptivity: AdaptivityConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub execution: ExecutionConfig,
}

/// First back-quoted name in a deserializer message, or the table path.
fn offending_key(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("{v} must be > 0")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = offending_key(&msg).unwrap_or_else(|| "<document>".into());
            Error::config(key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads and validates a config; relative field paths are resolved
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.rock.kx_file, &mut cfg.rock.ky_file, &mut cfg.rock.porosity_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.nx == 0 {
            return Err(Error::config("grid.nx", "must be >= 1"));
        }
        if g.ny == 0 {
            return Err(Error::config("grid.ny", "must be >= 1"));
        }
        positive("grid.dx", g.dx)?;
        positive("grid.dy", g.dy)?;
        positive("grid.thickness", g.thickness)?;
        if g.levels_space > MAX_LEVELS {
            return Err(Error::config("grid.levels_space", format!("must be <= {MAX_LEVELS}")));
        }
        if g.levels_time > MAX_LEVELS {
            return Err(Error::config("grid.levels_time", format!("must be <= {MAX_LEVELS}")));
        }
        positive("time.dt", self.time.dt)?;
        positive("initial.pressure", self.initial.pressure)?;
        if !(0.0..=1.0).contains(&self.initial.saturation) {
            return Err(Error::config("initial.saturation", "must lie in [0, 1]"));
        }
        self.fluid.validate()?;
        self.relperm.validate()?;
        self.solver.newton.validate()?;
        self.solver.linear.validate()?;
        let r = &self.rock;
        positive("rock.porosity", r.porosity)?;
        if r.porosity > 1.0 {
            return Err(Error::config("rock.porosity", "must be <= 1"));
        }
        positive("rock.ky_ratio", r.ky_ratio)?;
        match r.kind {
            FieldKind::Homogeneous => positive("rock.permeability", r.permeability)?,
            FieldKind::Gaussian => {
                positive("rock.geometric_mean", r.geometric_mean)?;
                if !(r.log_variance >= 0.0) {
                    return Err(Error::config("rock.log_variance", "must be >= 0"));
                }
                if !(r.correlation_length >= 0.0) {
                    return Err(Error::config("rock.correlation_length", "must be >= 0"));
                }
            }
            FieldKind::Channel => {
                positive("rock.background", r.background)?;
                if !(r.contrast >= 1.0) {
                    return Err(Error::config("rock.contrast", "must be >= 1"));
                }
                positive("rock.width", r.width)?;
                if let Some(w) = r.wavelength {
                    positive("rock.wavelength", w)?;
                }
            }
            FieldKind::Files => {
                if r.kx_file.is_none() {
                    return Err(Error::config("rock.kx_file", "required when kind = \"files\""));
                }
            }
        }
        let (nxf, nyf) = (g.nx << g.levels_space, g.ny << g.levels_space);
        for (k, w) in self.wells.iter().enumerate() {
            w.validate(&format!("wells[{k}]"))?;
            if w.i >= nxf {
                return Err(Error::config(format!("wells[{k}].i"), format!("must be < {nxf} (finest cells)")));
            }
            if w.j >= nyf {
                return Err(Error::config(format!("wells[{k}].j"), format!("must be < {nyf} (finest cells)")));
            }
        }
        Ok(())
    }

    pub fn fine_dims(&self) -> (usize, usize) {
        (self.grid.nx << self.grid.levels_space, self.grid.ny << self.grid.levels_space)
    }

    pub fn execution(&self) -> Execution {
        if self.execution.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    /// Finest-level permeability and porosity.
    pub fn fine_rock(&self) -> Result<LevelRock> {
        let (nx, ny) = self.fine_dims();
        let r = &self.rock;
        let scaled = |f: &CellField, s: f64| CellField {
            nx: f.nx,
            ny: f.ny,
            values: f.values.iter().map(|v| v * s).collect(),
        };
        let porosity = CellField::constant(nx, ny, r.porosity);
        let (kx, ky, porosity) = match r.kind {
            FieldKind::Homogeneous => {
                let k = CellField::constant(nx, ny, r.permeability);
                (k.clone(), scaled(&k, r.ky_ratio), porosity)
            }
            FieldKind::Gaussian => {
                let k = gaussian_field(self.seed, nx, ny, r.geometric_mean, r.log_variance, r.correlation_length);
                (k.clone(), scaled(&k, r.ky_ratio), porosity)
            }
            FieldKind::Channel => {
                let p = ChannelParams {
                    background: r.background,
                    contrast: r.contrast,
                    width: r.width,
                    amplitude: r.amplitude.unwrap_or(nx as f64 / 4.0),
                    wavelength: r.wavelength.unwrap_or(ny as f64 / 2.0),
                };
                let k = channel_field(self.seed, nx, ny, p);
                (k.clone(), scaled(&k, r.ky_ratio), porosity)
            }
            FieldKind::Files => {
                let kx = load_field(r.kx_file.as_deref().expect("validated"))?;
                let ky = match &r.ky_file {
                    Some(p) => load_field(p)?,
                    None => scaled(&kx, r.ky_ratio),
                };
                let phi = match &r.porosity_file {
                    Some(p) => load_field(p)?,
                    None => porosity,
                };
                for (key, f) in [("rock.kx_file", &kx), ("rock.ky_file", &ky), ("rock.porosity_file", &phi)] {
                    if (f.nx, f.ny) != (nx, ny) {
                        return Err(Error::config(key, format!("field is {}x{}, finest grid is {nx}x{ny}", f.nx, f.ny)));
                    }
                }
                if phi.values.iter().any(|p| *p > 1.0) {
                    return Err(Error::config("rock.porosity_file", "porosity must be <= 1"));
                }
                (kx, ky, phi)
            }
        };
        Ok(LevelRock { kx, ky, porosity })
    }

    /// Builds the simulation, including rock upscaling.
    pub fn simulation(&self) -> Result<Simulation> {
        self.validate()?;
        let exec = self.execution();
        let rock = RockField::from_fine(self.fine_rock()?, self.grid.levels_space, self.rock.upscaling, exec)?;
        let mut grid = CoarseGrid::new(self.grid.nx, self.grid.ny, self.grid.dx, self.grid.dy, self.time.dt);
        grid.thickness = self.grid.thickness;
        Ok(Simulation {
            grid,
            levels: MeshLevels {
                space: self.grid.levels_space,
                time: self.grid.levels_time,
            },
            steps: self.time.steps,
            model: FluidModel {
                fluid: self.fluid,
                relperm: self.relperm,
            },
            rock,
            wells: self.wells.clone(),
            initial_pressure: self.initial.pressure,
            initial_saturation: self.initial.saturation,
            solver: self.solver,
            mode: self.mode,
            thresholds: self.adaptivity.thresholds,
            warm_start: self.adaptivity.warm_start,
            exec,
            record_indicators: self.output.verbose_indicators,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nnx = 2\nny = 3\ndx = 10.0\ndy = 10.0\n[time]\nsteps = 1\ndt = 5.0\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.initial.pressure, 1000.0);
        assert_eq!(c.initial.saturation, 0.2);
        assert_eq!(c.relperm.p_entry, 10.0);
        assert_eq!(c.mode, RunMode::Adaptive);
        assert!(c.wells.is_empty());
    }

    fn key_of(text: &str) -> String {
        match RunConfig::from_toml(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(&format!("{MINIMAL}[relperm]\ns_wirr = 0.6\ns_or = 0.6\n")), "relperm.s_wirr, relperm.s_or");
        assert_eq!(key_of(&format!("{MINIMAL}[rock]\nporosty = 0.3\n")), "porosty");
        assert_eq!(key_of("[grid]\nnx = 2\nny = 3\ndx = 10.0\n[time]\nsteps = 1\ndt = 5.0\n"), "dy");
        assert_eq!(key_of(&MINIMAL.replace("dx = 10.0", "dx = -1.0")), "grid.dx");
        assert_eq!(
            key_of(&format!("{MINIMAL}[[wells]]\nkind = \"producer\"\ni = 2\nj = 0\nvalue = 900.0\n")),
            "wells[0].i"
        );
        assert_eq!(key_of(&format!("{MINIMAL}[solver.newton]\ntol_rel = 0.0\n")), "solver.newton.tol_rel");
    }

    #[test]
    fn round_trip() {
        let text = format!(
            "{MINIMAL}mode = \"fine\"\n[rock]\nkind = \"channel\"\namplitude = 2.0\n[[wells]]\nkind = \"injector\"\ni = 0\nj = 0\nvalue = 1.0\n"
        )
        .replace("mode = \"fine\"\n", "")
        .replacen("[grid]", "mode = \"fine\"\n[grid]", 1);
        let a = RunConfig::from_toml(&text).unwrap();
        assert_eq!(a.mode, RunMode::Fine);
        let b = RunConfig::from_toml(&a.to_toml()).unwrap();
        assert_eq!(a, b);
    }
}
