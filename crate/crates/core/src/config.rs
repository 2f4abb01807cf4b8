//! Experiment configuration: a TOML schema with defaults, validation and
//! built-in presets.
//!
//! All quantities are SI (m, s, Hz, rad). Unknown keys are rejected. A preset
//! and a file can be combined; the file's keys are merged over the preset.

use crate::geometry::{ArrayLayout, GeometryError, RotationParams, Scene, Trajectory, Vec3};
use crate::migration::ImageKind;
use crate::scenario::Scenario;
use crate::waveform::{FrequencyGrid, Pulse, WaveformError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown preset `{0}` (available: desk, desk-single, desk-noisy, full-scale)")]
    UnknownPreset(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    /// `count` receivers uniform over the square footprint.
    Random,
    /// A regular `√count × √count` grid spanning the footprint.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub emitter: [f64; 3],
    pub layout: LayoutKind,
    pub count: usize,
    /// Side of the square footprint `a`.
    pub aperture: f64,
    /// Receiver height `H_R`.
    pub height: f64,
    /// Receiver draw; the run seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout_seed: Option<u64>,
    /// Explicit receiver positions; replace the generator when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub receivers: Option<Vec<[f64; 3]>>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            emitter: [0.0; 3],
            layout: LayoutKind::Random,
            count: 15,
            aperture: 200e3,
            height: 15e3,
            layout_seed: None,
            receivers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    /// Rotation center at `s = 0`.
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, 500e3],
            velocity: [7600.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotationConfig {
    /// Polar angle of the spin axis, in `[0, π]`.
    pub theta: f64,
    pub phi: f64,
    /// Spin rate `ω_r`, rad/s.
    pub omega: f64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        Self {
            theta: 3.0 * PI / 4.0,
            phi: PI / 3.0,
            omega: 2.0 * PI / 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// `(0, ±0.15)` and `(±0.06, ±0.06)` m.
    Satellite,
    /// One unit scatterer on the rotation axis.
    Single,
    /// The listed `points`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub kind: SceneKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflectivities: Option<Vec<f64>>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            kind: SceneKind::Satellite,
            points: Vec::new(),
            reflectivities: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    pub carrier: f64,
    pub bandwidth: f64,
    /// Pulse repetition interval `Δs`.
    pub spacing: f64,
    /// Fast-time receive window; the pulse default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            carrier: 9.6e9,
            bandwidth: 311e6,
            spacing: 0.015,
            window: None,
            sample_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Per-trace SNR in dB; noiseless when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    /// When off, imaging uses the true rotation.
    pub enabled: bool,
    pub pulses: usize,
    pub frequencies: usize,
    /// Half-width of the frequency band in units of the bandwidth.
    pub band: f64,
    pub alpha: f64,
    pub window: usize,
    pub theta_steps: usize,
    pub phi_steps: usize,
    pub omega_steps: usize,
    pub omega_span: f64,
    pub restarts: usize,
    pub drift_correction: bool,
    /// Largest autocorrelation lag kept, s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<f64>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            pulses: 1500,
            frequencies: 256,
            band: 3.5,
            alpha: 0.001,
            window: 100,
            theta_steps: 64,
            phi_steps: 128,
            omega_steps: 41,
            omega_span: 0.2,
            restarts: 4,
            drift_correction: true,
            max_lag: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagingConfig {
    pub enabled: bool,
    pub pulses: usize,
    pub frequencies: usize,
    pub band: f64,
    pub spacing: f64,
    pub half_extent: f64,
    pub images: Vec<ImageChoice>,
    /// Leading eigenvalues reported; 0 skips the spectrum.
    pub eigenvalues: usize,
    /// Relative error applied to all three rotation parameters before
    /// migration.
    pub rotation_error: f64,
    /// When off, migration assumes a non-rotating target.
    pub compensate_rotation: bool,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            pulses: 1500,
            frequencies: 8,
            band: 1.0,
            spacing: 0.0075,
            half_extent: 0.195,
            images: vec![ImageChoice::Rank1, ImageChoice::SinglePoint, ImageChoice::Kirchhoff],
            eigenvalues: 8,
            rotation_error: 0.0,
            compensate_rotation: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageChoice {
    Rank1,
    SinglePoint,
    Kirchhoff,
}

impl ImageChoice {
    pub fn kind(self) -> ImageKind {
        match self {
            Self::Rank1 => ImageKind::Rank1,
            Self::SinglePoint => ImageKind::SinglePoint,
            Self::Kirchhoff => ImageKind::Kirchhoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub write_images: bool,
    /// Also store `X̃` in binary form (K² complex values).
    pub write_matrix: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            write_images: true,
            write_matrix: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Drives the receiver draw (unless fixed) and every noise stream.
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub trajectory: TrajectoryConfig,
    pub rotation: RotationConfig,
    pub scene: SceneConfig,
    pub pulse: PulseConfig,
    pub noise: NoiseConfig,
    pub estimation: EstimationConfig,
    pub imaging: ImagingConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            geometry: GeometryConfig::default(),
            trajectory: TrajectoryConfig::default(),
            rotation: RotationConfig::default(),
            scene: SceneConfig::default(),
            pulse: PulseConfig::default(),
            noise: NoiseConfig::default(),
            estimation: EstimationConfig::default(),
            imaging: ImagingConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("desk", include_str!("../presets/desk.cfg")),
    ("desk-single", include_str!("../presets/desk_single.cfg")),
    ("desk-noisy", include_str!("../presets/desk_noisy.cfg")),
    ("full-scale", include_str!("../presets/full_scale.cfg")),
];

/// Names of the built-in presets.
pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Source text of a built-in preset; `_` and `-` are interchangeable.
pub fn preset_source(name: &str) -> Result<&'static str, ConfigError> {
    let key = name.replace('_', "-");
    PRESETS
        .iter()
        .find(|(n, _)| *n == key)
        .map(|(_, s)| *s)
        .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
}

fn parse_table(src: &str) -> Result<toml::Table, ConfigError> {
    src.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Overlays `top` on `base`, descending into tables present in both.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ScenarioConfig {
    /// Parses and validates configuration text.
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(src).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        Self::from_toml(preset_source(name)?)
    }

    /// Preset and file combined, file keys winning; defaults when neither
    /// is given.
    pub fn load(preset: Option<&str>, path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut table = match preset {
            Some(p) => parse_table(preset_source(p)?)?,
            None => toml::Table::new(),
        };
        if let Some(path) = path {
            let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            merge(&mut table, parse_table(&src)?);
        }
        Self::from_toml(&toml::to_string(&table).map_err(|e| ConfigError::Parse(e.to_string()))?)
    }

    /// The configuration with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        let finite = |field: &str, v: &[f64]| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(invalid(field, "must be finite"))
            }
        };
        let g = &self.geometry;
        finite("geometry.emitter", &g.emitter)?;
        positive("geometry.aperture", g.aperture)?;
        positive("geometry.height", g.height)?;
        match &g.receivers {
            Some(r) => {
                if r.len() < 2 {
                    return Err(invalid("geometry.receivers", "at least two receivers are required"));
                }
                for p in r {
                    finite("geometry.receivers", p)?;
                    if (p[2] - g.height).abs() > 1e-9 * g.height {
                        return Err(invalid(
                            "geometry.receivers",
                            format!("receiver at z = {} is not at geometry.height = {}", p[2], g.height),
                        ));
                    }
                }
            }
            None => {
                if g.count < 2 {
                    return Err(invalid("geometry.count", "at least two receivers are required"));
                }
                if g.layout == LayoutKind::Grid {
                    let side = (g.count as f64).sqrt().round() as usize;
                    if side * side != g.count {
                        return Err(invalid("geometry.count", "a grid layout needs a perfect square"));
                    }
                }
            }
        }
        finite("trajectory.position", &self.trajectory.position)?;
        finite("trajectory.velocity", &self.trajectory.velocity)?;
        let r = &self.rotation;
        if !(0.0..=PI).contains(&r.theta) {
            return Err(invalid("rotation.theta", format!("must lie in [0, π], got {}", r.theta)));
        }
        finite("rotation.phi", &[r.phi])?;
        finite("rotation.omega", &[r.omega])?;
        let s = &self.scene;
        if s.kind == SceneKind::Custom {
            if s.points.is_empty() {
                return Err(invalid("scene.points", "a custom scene needs at least one point"));
            }
            for p in &s.points {
                finite("scene.points", p)?;
            }
        } else if !s.points.is_empty() {
            return Err(invalid("scene.points", "points are only read for kind = \"custom\""));
        }
        if let Some(rho) = &s.reflectivities {
            if rho.len() != self.scene().offsets.len() {
                return Err(invalid(
                    "scene.reflectivities",
                    format!("{} values for {} points", rho.len(), self.scene().offsets.len()),
                ));
            }
            finite("scene.reflectivities", rho)?;
        }
        let p = &self.pulse;
        positive("pulse.carrier", p.carrier)?;
        positive("pulse.bandwidth", p.bandwidth)?;
        positive("pulse.spacing", p.spacing)?;
        if p.bandwidth >= p.carrier {
            return Err(invalid("pulse.bandwidth", "must be below the carrier"));
        }
        if let Some(w) = p.window {
            positive("pulse.window", w)?;
        }
        if let Some(fs) = p.sample_rate {
            positive("pulse.sample_rate", fs)?;
        }
        if let Some(snr) = self.noise.snr_db {
            finite("noise.snr_db", &[snr])?;
        }
        let e = &self.estimation;
        if e.enabled {
            if e.pulses <= e.window {
                return Err(invalid(
                    "estimation.pulses",
                    format!("{} pulses do not exceed the smoothing window {}", e.pulses, e.window),
                ));
            }
            if e.frequencies < 2 {
                return Err(invalid("estimation.frequencies", "need at least 2"));
            }
            positive("estimation.band", e.band)?;
            if !(e.alpha > 0.0 && e.alpha < 1.0) {
                return Err(invalid("estimation.alpha", format!("must lie in (0, 1), got {}", e.alpha)));
            }
            if e.window == 0 {
                return Err(invalid("estimation.window", "must be at least 1"));
            }
            for (f, v) in [
                ("estimation.theta_steps", e.theta_steps),
                ("estimation.phi_steps", e.phi_steps),
                ("estimation.omega_steps", e.omega_steps),
            ] {
                if v < 2 {
                    return Err(invalid(f, "need at least 2 scan steps"));
                }
            }
            if !(e.omega_span > 0.0 && e.omega_span < 1.0) {
                return Err(invalid("estimation.omega_span", "must lie in (0, 1)"));
            }
            if let Some(m) = e.max_lag {
                positive("estimation.max_lag", m)?;
            }
        }
        let im = &self.imaging;
        if im.enabled {
            if im.pulses == 0 {
                return Err(invalid("imaging.pulses", "need at least 1"));
            }
            if im.frequencies == 0 {
                return Err(invalid("imaging.frequencies", "need at least 1"));
            }
            positive("imaging.band", im.band)?;
            positive("imaging.spacing", im.spacing)?;
            positive("imaging.half_extent", im.half_extent)?;
            let n = 2 * (im.half_extent / im.spacing).round() as usize + 1;
            if n * n > MAX_GRID_POINTS {
                return Err(invalid(
                    "imaging.half_extent",
                    format!("{n}×{n} grid exceeds {MAX_GRID_POINTS} points"),
                ));
            }
            if im.images.is_empty() {
                return Err(invalid("imaging.images", "select at least one image"));
            }
            if !(im.rotation_error > -1.0) || !im.rotation_error.is_finite() {
                return Err(invalid("imaging.rotation_error", "must be finite and above −1"));
            }
        }
        Ok(())
    }

    pub fn layout_seed(&self) -> u64 {
        self.geometry.layout_seed.unwrap_or(self.seed)
    }

    pub fn layout(&self) -> Result<ArrayLayout, GeometryError> {
        let g = &self.geometry;
        let emitter = Vec3::from(g.emitter);
        match &g.receivers {
            Some(r) => ArrayLayout::new(emitter, r.iter().map(|&p| Vec3::from(p)).collect(), g.height, g.aperture),
            None => match g.layout {
                LayoutKind::Random => ArrayLayout::random_square(emitter, g.count, g.aperture, g.height, self.layout_seed()),
                LayoutKind::Grid => {
                    let side = (g.count as f64).sqrt().round() as usize;
                    ArrayLayout::square_grid(emitter, side, g.aperture, g.height)
                }
            },
        }
    }

    pub fn truth(&self) -> Result<RotationParams, GeometryError> {
        RotationParams::new(self.rotation.theta, self.rotation.phi, self.rotation.omega)
    }

    pub fn scene(&self) -> Scene {
        let mut scene = match self.scene.kind {
            SceneKind::Satellite => Scene::satellite(),
            SceneKind::Single => Scene::planar(&[(0.0, 0.0)]),
            SceneKind::Custom => Scene::planar(&self.scene.points.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>()),
        };
        if let Some(rho) = &self.scene.reflectivities {
            scene.reflectivities.clone_from(rho);
        }
        scene
    }

    /// Truth scatterer positions in the image plane.
    pub fn truth_points(&self) -> Vec<(f64, f64)> {
        self.scene().offsets.iter().map(|o| (o.x, o.y)).collect()
    }

    pub fn pulse(&self, pulses: usize) -> Result<Pulse, WaveformError> {
        let p = &self.pulse;
        let pulse = Pulse::new(p.carrier, p.bandwidth, p.spacing, pulses)?;
        let fs = p.sample_rate.unwrap_or(pulse.sample_rate);
        let window = p.window.unwrap_or(pulse.window);
        Ok(pulse.with_sampling(fs, window))
    }

    /// The acquisition with `pulses` pulses.
    pub fn scenario(&self, pulses: usize) -> Result<Scenario, ConfigError> {
        let layout = self.layout().map_err(|e| invalid("geometry", e.to_string()))?;
        let traj = Trajectory::new(Vec3::from(self.trajectory.position), Vec3::from(self.trajectory.velocity));
        let rot = self.truth().map_err(|e| invalid("rotation", e.to_string()))?;
        let pulse = self.pulse(pulses).map_err(|e| invalid("pulse", e.to_string()))?;
        Ok(Scenario::new(layout, traj, rot, pulse))
    }

    pub fn estimation_freqs(&self, pulse: &Pulse) -> FrequencyGrid {
        FrequencyGrid::band(pulse, self.estimation.frequencies, self.estimation.band)
    }

    pub fn imaging_freqs(&self, pulse: &Pulse) -> FrequencyGrid {
        FrequencyGrid::band(pulse, self.imaging.frequencies, self.imaging.band)
    }
}

/// Largest accepted image grid; `X̃` takes 16·K² bytes.
pub const MAX_GRID_POINTS: usize = 12_000;
