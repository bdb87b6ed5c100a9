//! Experiment configuration files.
//!
//! A configuration is a TOML document; every key has a default, so an
//! empty file describes a valid run (7-atom chain at `kd = π/2` decaying
//! from the maximally mixed state). Keys can be overridden with dotted
//! paths, e.g. `geometry.n_atoms=5`.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::coupling::KernelKind;
use crate::dynamics::{log_grid, DriveParameters, IntegratorSettings};
use crate::error::{Error, Result};
use crate::geometry::{build_chain, cloud_radius, optical_thickness, sample_cloud, AtomicConfiguration, DEFAULT_MIN_DISTANCE};
use crate::manybody::InitialState;
use crate::photodetection::DetectionGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Chain,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    pub n_atoms: usize,
    /// Chain spacing `kd`.
    pub spacing: f64,
    pub axis: [f64; 3],
    /// Real polarization shared by all chain atoms.
    pub polarization: [f64; 3],
    /// Cloud optical thickness; give either this or `kr`.
    pub b0: Option<f64>,
    /// Cloud radius `kR`.
    pub kr: Option<f64>,
    pub min_distance: f64,
    /// One cloud realization per seed.
    pub seeds: Vec<u64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            kind: GeometryKind::Chain,
            n_atoms: 7,
            spacing: FRAC_PI_2,
            axis: [1.0, 0.0, 0.0],
            polarization: [0.0, 0.0, 1.0],
            b0: None,
            kr: None,
            min_distance: DEFAULT_MIN_DISTANCE,
            seeds: vec![1],
        }
    }
}

impl GeometryConfig {
    /// Cloud optical thickness, from `b0` or converted from `kr`.
    pub fn resolved_b0(&self) -> Result<f64> {
        match (self.b0, self.kr) {
            (Some(b0), None) => Ok(b0),
            (None, Some(kr)) => Ok(optical_thickness(self.n_atoms, kr)),
            (None, None) => Err(Error::Config("a cloud needs geometry.b0 or geometry.kr".into())),
            (Some(_), Some(_)) => Err(Error::Config("give only one of geometry.b0 and geometry.kr".into())),
        }
    }

    /// Positions for one realization; `seed` is ignored for chains.
    pub fn build(&self, seed: u64) -> Result<AtomicConfiguration> {
        match self.kind {
            GeometryKind::Chain => build_chain(
                self.n_atoms,
                self.spacing,
                Vector3::from(self.axis),
                Vector3::from(self.polarization),
            ),
            GeometryKind::Cloud => sample_cloud(self.n_atoms, self.resolved_b0()?, seed, self.min_distance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    pub kernel: KernelKind,
    /// Run every realization with both kernels on the same positions.
    pub compare_kernels: bool,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Vectorial,
            compare_kernels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub rabi: f64,
    #[serde(default)]
    pub detuning: f64,
    #[serde(default = "default_direction")]
    pub direction: [f64; 3],
    /// Keep the drive on during the evolution instead of switching it off
    /// at `t = 0`.
    #[serde(default)]
    pub keep_on: bool,
}

fn default_direction() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

impl DriveConfig {
    pub fn parameters(&self) -> Result<DriveParameters> {
        let p = DriveParameters {
            rabi: self.rabi,
            detuning: self.detuning,
            wavevector_direction: Vector3::from(self.direction),
        };
        p.validate().map_err(|e| Error::Config(format!("drive: {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Log,
    Linear,
    /// Union of the log grid and a linear grid of `linear_samples` points.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    pub grid: GridKind,
    /// Points of the log grid after `t = 0`.
    pub samples: usize,
    /// First nonzero time of the log grid.
    pub t_min: f64,
    /// Intervals of the linear grid.
    pub linear_samples: usize,
    /// Stop evolving excitation manifolds whose elements have all decayed
    /// below 1e-20.
    pub drop_depleted: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-20,
            max_step: 1.0,
            t_end: 100.0,
            grid: GridKind::Log,
            samples: 200,
            t_min: 1e-2,
            linear_samples: 1000,
            drop_depleted: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservablesConfig {
    /// Pairs with a concurrence above this count as entangled.
    pub entanglement_threshold: f64,
    /// Times at which full concurrence matrices are written.
    pub snapshot_times: Vec<f64>,
    /// Excitation sectors whose spectra are written to `spectrum.csv`.
    pub spectrum_sectors: Vec<usize>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        Self {
            entanglement_threshold: crate::entanglement::DEFAULT_ENTANGLEMENT_THRESHOLD,
            snapshot_times: Vec::new(),
            spectrum_sectors: vec![1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub direction: [f64; 3],
    /// Detector resolutions `δt` for the averaged `g²` columns.
    pub windows: Vec<f64>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            direction: [1.0, 0.0, 0.0],
            windows: Vec::new(),
        }
    }
}

impl DetectionConfig {
    pub fn geometry(&self) -> Result<DetectionGeometry> {
        DetectionGeometry::new(Vector3::from(self.direction)).map_err(|e| Error::Config(format!("detection: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub geometry: GeometryConfig,
    pub coupling: CouplingConfig,
    pub initial_state: InitialState,
    pub drive: Option<DriveConfig>,
    pub integrator: IntegratorConfig,
    pub observables: ObservablesConfig,
    pub detection: DetectionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            geometry: GeometryConfig::default(),
            coupling: CouplingConfig::default(),
            initial_state: InitialState::Mixture,
            drive: None,
            integrator: IntegratorConfig::default(),
            observables: ObservablesConfig::default(),
            detection: DetectionConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Replaces the value at a dotted `path`, creating tables on the way.
fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| config_err(format!("empty key in {path:?}")))?;
    let mut table = root;
    for key in keys {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("{key:?} in {path:?} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Parses `key=value`; the value is read as TOML and falls back to a
/// plain string.
pub fn parse_override(text: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| config_err(format!("override {text:?} is not of the form key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

impl ExperimentConfig {
    /// Parses a TOML document and applies `key=value` overrides.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        for o in overrides {
            let (key, value) = parse_override(o)?;
            set_path(&mut table, &key, value)?;
        }
        let config: Self = table.try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.n_atoms == 0 || g.n_atoms > crate::MAX_ATOMS {
            return Err(config_err(format!(
                "geometry.n_atoms must lie in [1, {}], got {}",
                crate::MAX_ATOMS,
                g.n_atoms
            )));
        }
        match g.kind {
            GeometryKind::Chain => {
                if !(g.spacing > 0.0) {
                    return Err(config_err("geometry.spacing must be positive"));
                }
            }
            GeometryKind::Cloud => {
                let b0 = g.resolved_b0()?;
                if !(b0 > 0.0) || !b0.is_finite() {
                    return Err(config_err(format!("optical thickness must be positive, got {b0}")));
                }
                if g.seeds.is_empty() {
                    return Err(config_err("geometry.seeds must not be empty"));
                }
                let mut sorted = g.seeds.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != g.seeds.len() {
                    return Err(config_err("geometry.seeds contains duplicates"));
                }
            }
        }
        if matches!(self.initial_state, InitialState::WeakDriveSteady) && self.drive.is_none() {
            return Err(config_err("initial_state weak_drive_steady needs a [drive] section"));
        }
        if let Some(d) = &self.drive {
            d.parameters()?;
            if d.keep_on && !matches!(self.initial_state, InitialState::WeakDriveSteady) && d.rabi == 0.0 {
                return Err(config_err("drive.keep_on with a zero Rabi frequency"));
            }
        }
        let i = &self.integrator;
        if !(i.t_end > 0.0) || !i.t_end.is_finite() {
            return Err(config_err("integrator.t_end must be positive"));
        }
        if !(i.rel_tol > 0.0 && i.abs_tol > 0.0 && i.max_step > 0.0) {
            return Err(config_err("integrator tolerances and max_step must be positive"));
        }
        if matches!(i.grid, GridKind::Log | GridKind::Mixed) && !(i.t_min > 0.0 && i.t_min < i.t_end && i.samples >= 2) {
            return Err(config_err("log grid needs 0 < t_min < t_end and at least 2 samples"));
        }
        if matches!(i.grid, GridKind::Linear | GridKind::Mixed) && i.linear_samples == 0 {
            return Err(config_err("linear grid needs linear_samples > 0"));
        }
        let o = &self.observables;
        if !(o.entanglement_threshold >= 0.0) {
            return Err(config_err("observables.entanglement_threshold must be non-negative"));
        }
        if o.snapshot_times.iter().any(|&t| !(0.0..=i.t_end).contains(&t)) {
            return Err(config_err("snapshot times must lie in [0, t_end]"));
        }
        if o.spectrum_sectors.iter().any(|&n| n == 0 || n > g.n_atoms) {
            return Err(config_err("spectrum sectors must lie in [1, n_atoms]"));
        }
        self.detection.geometry()?;
        if self.detection.windows.iter().any(|&w| !(w > 0.0) || w > i.t_end) {
            return Err(config_err("detector windows must lie in (0, t_end]"));
        }
        if let InitialState::DickeEpsilon { epsilon, phases } = &self.initial_state {
            if !(0.0..=1.0).contains(epsilon) || (!phases.is_empty() && phases.len() != g.n_atoms) {
                return Err(config_err("dicke_epsilon needs epsilon in [0, 1] and one phase per atom"));
            }
        }
        Ok(())
    }

    /// Output times: the configured grid plus the snapshot times.
    pub fn output_times(&self) -> Vec<f64> {
        let i = &self.integrator;
        let linear = || (0..=i.linear_samples).map(|k| i.t_end * k as f64 / i.linear_samples as f64);
        let mut times: Vec<f64> = match i.grid {
            GridKind::Log => log_grid(i.t_min, i.t_end, i.samples),
            GridKind::Linear => linear().collect(),
            GridKind::Mixed => log_grid(i.t_min, i.t_end, i.samples).into_iter().chain(linear()).collect(),
        };
        times.extend(self.observables.snapshot_times.iter().copied());
        times.sort_by(f64::total_cmp);
        let mut merged: Vec<f64> = Vec::with_capacity(times.len());
        for t in times {
            match merged.last() {
                Some(&last) if t - last <= 1e-12 * t.abs().max(1.0) => {}
                _ => merged.push(t),
            }
        }
        merged
    }

    pub fn integrator_settings(&self) -> IntegratorSettings {
        IntegratorSettings {
            rel_tol: self.integrator.rel_tol,
            abs_tol: self.integrator.abs_tol,
            max_step: self.integrator.max_step,
            output_times: self.output_times(),
            check_invariants: true,
            drop_depleted: self.integrator.drop_depleted,
        }
    }

    /// Cloud radius and optical thickness, for the manifest.
    pub fn cloud_parameters(&self) -> Option<(f64, f64)> {
        match self.geometry.kind {
            GeometryKind::Cloud => {
                let b0 = self.geometry.resolved_b0().ok()?;
                Some((cloud_radius(self.geometry.n_atoms, b0), b0))
            }
            GeometryKind::Chain => None,
        }
    }

    /// Seeds of the realizations to run; a chain has a single one.
    pub fn realization_seeds(&self) -> Vec<u64> {
        match self.geometry.kind {
            GeometryKind::Chain => vec![self.geometry.seeds.first().copied().unwrap_or(0)],
            GeometryKind::Cloud => self.geometry.seeds.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_uses_defaults() {
        let c = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let times = c.output_times();
        assert_eq!(times[0], 0.0);
        assert_eq!(times.len(), 201);
        assert!((times[200] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn overrides_take_precedence() {
        let text = "[geometry]\nn_atoms = 3\n";
        let c = ExperimentConfig::from_toml_str(
            text,
            &[
                "geometry.n_atoms=5".into(),
                "coupling.kernel=scalar".into(),
                "initial_state.kind=inverted".into(),
                "integrator.t_end=2.5".into(),
                "detection.windows=[0.5, 1.0]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.geometry.n_atoms, 5);
        assert_eq!(c.coupling.kernel, KernelKind::Scalar);
        assert_eq!(c.initial_state, InitialState::Inverted);
        assert_eq!(c.integrator.t_end, 2.5);
        assert_eq!(c.detection.windows, vec![0.5, 1.0]);
    }

    #[test]
    fn round_trips_through_toml() {
        let text = r#"
            output_dir = "runs/x"
            [geometry]
            kind = "cloud"
            n_atoms = 4
            kr = 3.0
            seeds = [3, 5]
            [initial_state]
            kind = "dicke_epsilon"
            epsilon = 0.5
            [integrator]
            grid = "mixed"
            linear_samples = 20
            [observables]
            snapshot_times = [1.0, 2.0]
        "#;
        let c = ExperimentConfig::from_toml_str(text, &[]).unwrap();
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap(), &[]).unwrap();
        assert_eq!(c, again);
        let (radius, b0) = c.cloud_parameters().unwrap();
        assert!((radius - 3.0).abs() < 1e-12);
        assert!((b0 - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(c.realization_seeds(), vec![3, 5]);
        let times = c.output_times();
        assert!(times.contains(&1.0) && times.contains(&2.0) && times.contains(&5.0));
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for (text, overrides) in [
            ("[geometry]\nn_atoms = 0", vec![]),
            ("[geometry]\nkind = \"cloud\"", vec![]),
            ("[geometry]\nkind = \"cloud\"\nb0 = 1.0\nkr = 2.0", vec![]),
            ("[initial_state]\nkind = \"weak_drive_steady\"", vec![]),
            ("[geometry]\nunknown = 1", vec![]),
            ("", vec!["detection.direction=[1.0, 1.0, 0.0]".to_string()]),
            ("", vec!["observables.snapshot_times=[1000.0]".to_string()]),
            ("", vec!["nonsense".to_string()]),
            ("not toml [", vec![]),
        ] {
            let err = ExperimentConfig::from_toml_str(text, &overrides).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text:?} {overrides:?}: {err}");
        }
    }

    #[test]
    fn string_override_fallback() {
        let (k, v) = parse_override("output_dir = some/dir").unwrap();
        assert_eq!(k, "output_dir");
        assert_eq!(v, toml::Value::String("some/dir".into()));
    }
}
