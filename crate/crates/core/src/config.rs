//! Run configuration: TOML file, dotted-path overrides and snapshots.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aero::{AeroModel, CoefficientCurve, DEFAULT_AIR_DENSITY, DEFAULT_STRIPS};
use crate::dynamics::DEFAULT_GRAVITY;
use crate::error::{Error, Result};
use crate::morphology::Morphology;
use crate::optimization::{MpcOptions, OrbitOptions, OrbitParameters};
use crate::simulation::{Model, DEFAULT_SAMPLES_PER_PERIOD, DEFAULT_STEPS_PER_PERIOD};

pub const SNAPSHOT_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroConfig {
    pub enabled: bool,
    pub rho: f64,
    pub n_strips: usize,
    pub rotational: bool,
    /// Two-column lift table (degrees, coefficient); built-in fit when absent.
    pub lift_table: Option<PathBuf>,
    pub drag_table: Option<PathBuf>,
}

impl Default for AeroConfig {
    fn default() -> Self {
        AeroConfig { enabled: true, rho: DEFAULT_AIR_DENSITY, n_strips: DEFAULT_STRIPS, rotational: false, lift_table: None, drag_table: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub periods: usize,
    pub steps_per_period: usize,
    pub samples_per_period: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { periods: 1, steps_per_period: DEFAULT_STEPS_PER_PERIOD, samples_per_period: DEFAULT_SAMPLES_PER_PERIOD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizeConfig {
    pub periods: usize,
    /// Search for a periodic orbit seeded at `orbit` before tracking it.
    pub refine_orbit: bool,
    /// Start from the orbit's initial state shifted by the reference
    /// perturbation; otherwise start on the orbit.
    pub perturb: bool,
}

impl Default for StabilizeConfig {
    fn default() -> Self {
        StabilizeConfig { periods: 4, refine_orbit: true, perturb: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    /// Constant parameter change (rad).
    pub delta: f64,
    pub steps_per_period: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig { delta: 0.05, steps_per_period: DEFAULT_STEPS_PER_PERIOD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Morphology file; the bundled vehicle when absent.
    pub morphology: Option<PathBuf>,
    pub out: PathBuf,
    pub gravity: f64,
    pub aero: AeroConfig,
    pub simulation: SimulationConfig,
    /// Waveform parameters and initial state; also the search seed.
    pub orbit: OrbitParameters,
    pub search: OrbitOptions,
    pub mpc: MpcOptions,
    pub stabilize: StabilizeConfig,
    pub sensitivity: SensitivityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            morphology: None,
            out: PathBuf::from("out"),
            gravity: DEFAULT_GRAVITY,
            aero: AeroConfig::default(),
            simulation: SimulationConfig::default(),
            orbit: OrbitParameters::default(),
            search: OrbitOptions::default(),
            mpc: MpcOptions::default(),
            stabilize: StabilizeConfig::default(),
            sensitivity: SensitivityConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema { field: "config".into(), reason: e.message().to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("config does not serialize: {e}")))
    }

    /// Applies `key.path=value`; the value is read as a TOML literal and
    /// falls back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("override `{assignment}` is not of the form key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));

        let mut root = toml::Table::try_from(&*self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::InvalidArgument(format!("malformed key `{key}`")));
        }
        let mut table = &mut root;
        for part in &parts[..parts.len() - 1] {
            table = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::InvalidArgument(format!("`{part}` in `{key}` is not a table")))?;
        }
        table.insert(parts[parts.len() - 1].to_string(), value);
        *self = root.try_into().map_err(|e: toml::de::Error| Error::Schema { field: key.to_string(), reason: e.message().to_string() })?;
        Ok(())
    }

    pub fn aero_model(&self) -> Result<Option<AeroModel>> {
        if !self.aero.enabled {
            return Ok(None);
        }
        let mut aero = AeroModel { rho: self.aero.rho, n_strips: self.aero.n_strips, rotational: self.aero.rotational, ..AeroModel::default() };
        if let Some(p) = &self.aero.lift_table {
            aero.lift = CoefficientCurve::load_table(p)?;
        }
        if let Some(p) = &self.aero.drag_table {
            aero.drag = CoefficientCurve::load_table(p)?;
        }
        aero.validate()?;
        Ok(Some(aero))
    }

    pub fn model(&self) -> Result<Model> {
        let morph = match &self.morphology {
            Some(p) => Morphology::load(p)?,
            None => Morphology::default(),
        };
        if !(self.gravity >= 0.0) {
            return Err(Error::InvalidArgument("gravity must be non-negative".into()));
        }
        Ok(Model::new(morph, self.aero_model()?, self.gravity))
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_snapshot(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join(SNAPSHOT_FILE);
        std::fs::write(&path, self.to_toml_string()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
