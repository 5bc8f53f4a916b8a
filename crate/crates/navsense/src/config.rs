//! Scenario configuration in TOML with human units (dB, km, degrees).
//!
//! Every key is optional; missing keys take the desk-scale defaults, which
//! use the Table III link budget with a reduced constellation problem
//! (K = 5, M = 2, a 2 x 2 array, two ambiguity points per satellite).

use serde::{Deserialize, Serialize};

use crate::channel::{Boresight, ChannelParams};
use crate::consts::{db_to_lin, dbm_to_watt, BOLTZMANN, LIGHT_SPEED};
use crate::error::{Error, Result};
use crate::fim::PvtWeights;
use crate::geometry::{UpaConfig, WalkerConfig};
use crate::optimizer::{Backend, OptimizerConfig};
use crate::waveform::SamplingWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstellationSection {
    pub total_satellites: usize,
    pub orbital_planes: usize,
    pub phase_factor: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
}

impl Default for ConstellationSection {
    fn default() -> Self {
        ConstellationSection {
            total_satellites: 1296,
            orbital_planes: 72,
            phase_factor: 45,
            altitude_km: 550.0,
            inclination_deg: 53.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub elements_x: usize,
    pub elements_y: usize,
    /// Declared N; must equal elements_x * elements_y when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antennas: Option<usize>,
    pub spacing_wavelengths: f64,
}

impl Default for ArraySection {
    fn default() -> Self {
        ArraySection { elements_x: 2, elements_y: 2, antennas: None, spacing_wavelengths: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub carrier_frequency_ghz: f64,
    pub bandwidth_mhz: f64,
    pub noise_temperature_k: f64,
    pub ue_antenna_gain_dbi: f64,
    pub max_array_gain_dbi: f64,
    pub beamwidth_3db_deg: f64,
    /// How the off-boresight angle of a navigation link is measured.
    pub boresight: Boresight,
    pub rain_attenuation_mean_db: f64,
    pub rain_attenuation_variance_db2: f64,
    pub sensing_noise_dbm: f64,
    pub light_speed: f64,
    pub boltzmann: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            carrier_frequency_ghz: 35.0,
            bandwidth_mhz: 20.0,
            noise_temperature_k: 100.0,
            ue_antenna_gain_dbi: 55.0,
            max_array_gain_dbi: 16.0,
            beamwidth_3db_deg: 0.4,
            boresight: Boresight::Steered,
            rain_attenuation_mean_db: -2.6,
            rain_attenuation_variance_db2: 1.63,
            sensing_noise_dbm: -110.0,
            light_speed: LIGHT_SPEED,
            boltzmann: BOLTZMANN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// K, satellites in the service group.
    pub satellites: usize,
    /// M, navigation UEs.
    pub ues: usize,
    /// L_k, ambiguity points per satellite.
    pub ambiguity_areas: usize,
    /// Elevation range of the central satellite over UEs and the area.
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    /// Mask for service-group membership, seen from the area.
    pub service_mask_deg: f64,
    /// Every group satellite must clear this elevation at every UE.
    pub ue_mask_deg: f64,
    pub ambiguity_radius_km: f64,
    pub area_reflectivity: f64,
    pub ambiguity_reflectivity_min: f64,
    pub ambiguity_reflectivity_max: f64,
    /// Range/Doppler gating of ambiguity returns.
    pub ambiguity_suppression_db: f64,
    /// Coherent gain of the sensing receiver chain applied to every echo.
    pub sensing_processing_gain_db: f64,
    pub ue_max_speed: f64,
    pub ue_clock_error_us: f64,
    /// Cap for the area latitude draw.
    pub max_latitude_deg: f64,
    /// Zenith pseudo-range noise; links see sigma / sin(elevation).
    pub pseudorange_sigma_m: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            satellites: 5,
            ues: 2,
            ambiguity_areas: 2,
            min_elevation_deg: 50.0,
            max_elevation_deg: 90.0,
            service_mask_deg: 20.0,
            ue_mask_deg: 10.0,
            ambiguity_radius_km: 10.0,
            area_reflectivity: 1.0,
            ambiguity_reflectivity_min: 0.1,
            ambiguity_reflectivity_max: 0.5,
            ambiguity_suppression_db: 15.0,
            sensing_processing_gain_db: 230.0,
            ue_max_speed: 30.0,
            ue_clock_error_us: 1.0,
            max_latitude_deg: 50.0,
            pseudorange_sigma_m: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformSection {
    pub observation_time_ms: f64,
    pub sample_rate_mhz: f64,
    /// Chip rate; zero means half the bandwidth.
    pub chip_rate_mhz: f64,
    pub code_length: usize,
}

impl Default for WaveformSection {
    fn default() -> Self {
        WaveformSection { observation_time_ms: 1.0, sample_rate_mhz: 40.0, chip_rate_mhz: 0.0, code_length: 1023 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub max_transmit_power_dbm: f64,
    pub sainr_threshold_db: f64,
    pub position_weight: f64,
    pub velocity_weight: f64,
    pub timing_weight: f64,
    pub initial_penalty_factor: f64,
    pub amplification_coefficient: f64,
    pub penalty_accuracy: f64,
    pub penalty_cap: f64,
    pub max_iterations: usize,
    pub solver_tolerance: f64,
    pub convergence_threshold: f64,
    pub backend: Backend,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        OptimizerSection {
            max_transmit_power_dbm: 30.0,
            sainr_threshold_db: 10.0,
            position_weight: o.weights.position,
            velocity_weight: o.weights.velocity,
            timing_weight: o.weights.timing,
            initial_penalty_factor: o.initial_penalty,
            amplification_coefficient: o.amplification,
            penalty_accuracy: o.penalty_accuracy,
            penalty_cap: o.penalty_cap,
            max_iterations: o.max_iterations,
            solver_tolerance: o.solver_tolerance,
            convergence_threshold: o.convergence_threshold,
            backend: o.backend,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub constellation: ConstellationSection,
    pub array: ArraySection,
    pub channel: ChannelSection,
    pub scenario: ScenarioSection,
    pub waveform: WaveformSection,
    pub optimizer: OptimizerSection,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

impl ScenarioConfig {
    /// Table III values at full scale: K = 5, M = 10, a 4 x 4 array and five
    /// ambiguity points per satellite.
    pub fn paper_scale() -> Self {
        let mut c = ScenarioConfig::default();
        c.array.elements_x = 4;
        c.array.elements_y = 4;
        c.scenario.satellites = 5;
        c.scenario.ues = 10;
        c.scenario.ambiguity_areas = 5;
        c
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            Error::Parse { line, column, message: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }

    /// Every violated invariant, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.walker().violations();
        if self.seed > i64::MAX as u64 {
            v.push(format!("seed must be at most {}", i64::MAX));
        }
        let a = &self.array;
        if a.elements_x == 0 || a.elements_y == 0 {
            v.push("array.elements_x and array.elements_y must be positive".into());
        }
        if let Some(n) = a.antennas {
            if n != a.elements_x * a.elements_y {
                v.push(format!(
                    "array.antennas = {n} but elements_x * elements_y = {}",
                    a.elements_x * a.elements_y
                ));
            }
        }
        if !(a.spacing_wavelengths > 0.0) {
            v.push("array.spacing_wavelengths must be positive".into());
        }
        let c = &self.channel;
        for (name, x) in [
            ("channel.carrier_frequency_ghz", c.carrier_frequency_ghz),
            ("channel.bandwidth_mhz", c.bandwidth_mhz),
            ("channel.noise_temperature_k", c.noise_temperature_k),
            ("channel.beamwidth_3db_deg", c.beamwidth_3db_deg),
            ("channel.light_speed", c.light_speed),
            ("channel.boltzmann", c.boltzmann),
        ] {
            if !(x > 0.0) {
                v.push(format!("{name} must be positive"));
            }
        }
        if c.rain_attenuation_variance_db2 < 0.0 {
            v.push("channel.rain_attenuation_variance_db2 must be nonnegative".into());
        }
        let s = &self.scenario;
        if s.satellites < 4 {
            v.push(format!("scenario.satellites = {} but PVT needs at least 4", s.satellites));
        }
        if s.ues == 0 {
            v.push("scenario.ues must be at least 1".into());
        }
        if s.satellites > self.constellation.total_satellites {
            v.push("scenario.satellites exceeds the constellation size".into());
        }
        if !(0.0 < s.min_elevation_deg && s.min_elevation_deg < s.max_elevation_deg && s.max_elevation_deg <= 90.0) {
            v.push("scenario elevation range must satisfy 0 < min < max <= 90".into());
        }
        if !(0.0..90.0).contains(&s.service_mask_deg) || !(0.0..90.0).contains(&s.ue_mask_deg) {
            v.push("scenario masks must lie in [0, 90) degrees".into());
        }
        if !(s.ambiguity_radius_km >= 0.0) {
            v.push("scenario.ambiguity_radius_km must be nonnegative".into());
        }
        if !(0.0 <= s.ambiguity_reflectivity_min && s.ambiguity_reflectivity_min <= s.ambiguity_reflectivity_max) {
            v.push("scenario ambiguity reflectivity range is empty".into());
        }
        if !(s.area_reflectivity > 0.0) {
            v.push("scenario.area_reflectivity must be positive".into());
        }
        if !(s.ue_max_speed >= 0.0 && s.ue_clock_error_us >= 0.0) {
            v.push("scenario UE speed and clock error must be nonnegative".into());
        }
        if !(0.0 < s.max_latitude_deg && s.max_latitude_deg <= 90.0) {
            v.push("scenario.max_latitude_deg must lie in (0, 90]".into());
        }
        if !(s.pseudorange_sigma_m >= 0.0) {
            v.push("scenario.pseudorange_sigma_m must be non-negative".into());
        }
        let w = &self.waveform;
        if !(w.observation_time_ms > 0.0 && w.sample_rate_mhz > 0.0 && w.chip_rate_mhz >= 0.0) {
            v.push("waveform durations and rates must be positive".into());
        }
        if self.chip_rate() * 2.0 > self.sample_rate() * (1.0 + 1e-12) {
            v.push("waveform.sample_rate_mhz must be at least twice the chip rate".into());
        }
        if w.code_length != 1023 {
            v.push("waveform.code_length must be 1023".into());
        }
        v.extend(self.optimizer().violations());
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn walker(&self) -> WalkerConfig {
        let c = &self.constellation;
        WalkerConfig {
            total_satellites: c.total_satellites,
            planes: c.orbital_planes,
            phase_factor: c.phase_factor,
            altitude: c.altitude_km * 1e3,
            inclination: c.inclination_deg.to_radians(),
        }
    }

    pub fn channel(&self) -> ChannelParams {
        let c = &self.channel;
        ChannelParams {
            carrier: c.carrier_frequency_ghz * 1e9,
            light_speed: c.light_speed,
            bandwidth: c.bandwidth_mhz * 1e6,
            noise_temperature: c.noise_temperature_k,
            boltzmann: c.boltzmann,
            rx_gain: db_to_lin(c.ue_antenna_gain_dbi),
            b_max: db_to_lin(c.max_array_gain_dbi),
            eps_3db: c.beamwidth_3db_deg.to_radians(),
            rain_mean_db: c.rain_attenuation_mean_db,
            rain_var_db: c.rain_attenuation_variance_db2,
        }
    }

    pub fn upa(&self) -> UpaConfig {
        let wavelength = self.channel.light_speed / (self.channel.carrier_frequency_ghz * 1e9);
        UpaConfig {
            nx: self.array.elements_x,
            ny: self.array.elements_y,
            spacing: self.array.spacing_wavelengths * wavelength,
            wavelength,
        }
    }

    pub fn chip_rate(&self) -> f64 {
        if self.waveform.chip_rate_mhz > 0.0 {
            self.waveform.chip_rate_mhz * 1e6
        } else {
            self.channel.bandwidth_mhz * 1e6 / 2.0
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.waveform.sample_rate_mhz * 1e6
    }

    pub fn window(&self) -> SamplingWindow {
        SamplingWindow { duration: self.waveform.observation_time_ms * 1e-3, sample_rate: self.sample_rate(), centered: true }
    }

    pub fn sensing_noise(&self) -> f64 {
        dbm_to_watt(self.channel.sensing_noise_dbm)
    }

    pub fn power_budget(&self) -> f64 {
        dbm_to_watt(self.optimizer.max_transmit_power_dbm)
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            sainr_threshold: db_to_lin(o.sainr_threshold_db),
            weights: PvtWeights { position: o.position_weight, velocity: o.velocity_weight, timing: o.timing_weight },
            initial_penalty: o.initial_penalty_factor,
            amplification: o.amplification_coefficient,
            penalty_accuracy: o.penalty_accuracy,
            penalty_cap: o.penalty_cap,
            max_iterations: o.max_iterations,
            solver_tolerance: o.solver_tolerance,
            convergence_threshold: o.convergence_threshold,
            backend: o.backend,
        }
    }

    /// Copy with the numeric field at a dotted path (e.g.
    /// `optimizer.sainr_threshold_db`) set to `value`.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut node = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{path}: {} is not a section", parts[..i].join("."))))?;
            node = table.get_mut(*part).ok_or_else(|| Error::Config(format!("{path}: no key {part}")))?;
        }
        *node = match node {
            toml::Value::Integer(_) => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::Config(format!("{path} takes a nonnegative integer, got {value}")));
                }
                toml::Value::Integer(value as i64)
            }
            toml::Value::Float(_) => toml::Value::Float(value),
            _ => return Err(Error::Config(format!("{path} is not a numeric field"))),
        };
        let cfg: ScenarioConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
