//! Experiment configuration, read from TOML. Every field has a default, so an empty file is a
//! valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alloc::AllocationMode;
use crate::error::{Error, Result};
use crate::learning::{Activation, SyntheticSpec};
use crate::wireless::{dbm_to_watts, Fading, SystemParams};

/// How gradients of the selected devices are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    Conventional,
    #[default]
    AgeWeighted,
}

/// How the per-round participant set is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Draw `subchannels` candidates, allocate, assign and prune infeasible pairs.
    #[default]
    Wireless,
    /// Draw `subchannels` devices uniformly; all of them take part, no radio model.
    Uniform,
    /// Every device takes part every round.
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentMode {
    #[default]
    Matching,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// MNIST-style IDX files used instead of the synthetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub classes_per_device: usize,
    pub synthetic: SyntheticSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub idx: Option<IdxConfig>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            classes_per_device: 1,
            synthetic: SyntheticSpec::default(),
            idx: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub activation: Activation,
    /// Weights start as `N(0, init_scale^2 / fan_in)`.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            activation: Activation::Relu,
            init_scale: 1.0,
        }
    }
}

/// Radio and computing constants as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub bandwidth_hz: f64,
    pub gradient_bits: f64,
    pub kappa: f64,
    pub mu_cycles: f64,
    /// Frequency-dependent gain factor, dB.
    pub eta_db: f64,
    pub path_loss_exp: f64,
    pub noise_dbm: f64,
    /// Read `noise_dbm` as a density in dBm/Hz and multiply by the bandwidth.
    pub noise_per_hz: bool,
    pub disc_radius_m: f64,
    pub fading: Fading,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 1e6,
            gradient_bits: 10e6,
            kappa: 1e-29,
            mu_cycles: 1e6,
            eta_db: 0.0,
            path_loss_exp: 3.76,
            noise_dbm: -174.0,
            noise_per_hz: false,
            disc_radius_m: 200.0,
            fading: Fading::PerChannel,
        }
    }
}

impl SystemConfig {
    pub fn noise_w(&self) -> f64 {
        let density = dbm_to_watts(self.noise_dbm);
        if self.noise_per_hz {
            density * self.bandwidth_hz
        } else {
            density
        }
    }

    pub fn to_params(&self, subchannels: usize) -> SystemParams {
        SystemParams {
            bandwidth_hz: self.bandwidth_hz,
            gradient_bits: self.gradient_bits,
            kappa: self.kappa,
            mu_cycles: self.mu_cycles,
            eta: 10f64.powf(self.eta_db / 10.0),
            path_loss_exp: self.path_loss_exp,
            noise_w: self.noise_w(),
            subchannels,
            disc_radius_m: self.disc_radius_m,
        }
    }
}

/// Per-device hardware, each drawn uniformly from `[min, max]` (equal bounds fix the value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceRanges {
    pub cpu_hz: [f64; 2],
    pub power_dbm: [f64; 2],
    pub t_max_s: [f64; 2],
}

impl Default for DeviceRanges {
    fn default() -> Self {
        Self {
            cpu_hz: [1e9, 1e9],
            power_dbm: [10.0, 10.0],
            t_max_s: [5.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    /// Number of devices `N`.
    pub devices: usize,
    /// Number of sub-channels `K`, which is also the number of candidates drawn per round.
    pub subchannels: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub aggregation: AggregationMode,
    /// Exponent `p` in `omega_n ∝ A_n^p`.
    pub age_exponent: f64,
    pub selection: SelectionMode,
    pub assignment: AssignmentMode,
    pub allocation: AllocationMode,
    /// When false, only the radio side runs; loss, accuracy and divergence are not computed.
    pub train: bool,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub system: SystemConfig,
    pub device: DeviceRanges,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            devices: 10,
            subchannels: 4,
            rounds: 100,
            learning_rate: 0.01,
            aggregation: AggregationMode::AgeWeighted,
            age_exponent: 1.0,
            selection: SelectionMode::Wireless,
            assignment: AssignmentMode::Matching,
            allocation: AllocationMode::Kkt,
            train: true,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            system: SystemConfig::default(),
            device: DeviceRanges::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn system_params(&self) -> SystemParams {
        self.system.to_params(self.subchannels)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if self.devices == 0 {
            return fail("devices must be at least 1".into());
        }
        if self.subchannels == 0 || self.subchannels > self.devices {
            return fail(format!(
                "subchannels ({}) must be between 1 and devices ({})",
                self.subchannels, self.devices
            ));
        }
        if self.rounds == 0 {
            return fail("rounds must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !self.age_exponent.is_finite() {
            return fail("age_exponent must be finite".into());
        }
        if self.dataset.classes_per_device == 0 {
            return fail("dataset.classes_per_device must be at least 1".into());
        }
        if self.model.hidden == 0 {
            return fail("model.hidden must be at least 1".into());
        }
        if !(self.model.init_scale >= 0.0) {
            return fail("model.init_scale must be >= 0".into());
        }
        for (name, [lo, hi]) in [
            ("device.cpu_hz", self.device.cpu_hz),
            ("device.t_max_s", self.device.t_max_s),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return fail(format!("{name} must satisfy 0 < min <= max, got [{lo}, {hi}]"));
            }
        }
        let [plo, phi] = self.device.power_dbm;
        if !(plo.is_finite() && plo <= phi && phi.is_finite()) {
            return fail(format!(
                "device.power_dbm must satisfy min <= max, got [{plo}, {phi}]"
            ));
        }
        self.system_params()
            .validate()
            .map_err(|e| Error::Config(format!("system: {e}")))
    }

    /// Serialises to TOML; [`parse_config`] on the output gives back an equal config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parses and validates a TOML document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.learning_rate, 0.01);
        assert_eq!(c.system.bandwidth_hz, 1e6);
        assert_eq!(c.system.path_loss_exp, 3.76);
        assert_eq!(c.system.kappa, 1e-29);
        assert_eq!(c.system.mu_cycles, 1e6);
        assert_eq!(c.system_params().noise_w, dbm_to_watts(-174.0));
    }

    #[test]
    fn more_subchannels_than_devices_is_rejected() {
        let err = parse_config("devices = 3\nsubchannels = 4\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"
seeds = [3, 4]
devices = 12
rounds = 7
aggregation = "conventional"
assignment = "random"
allocation = "fra1"

[system]
eta_db = -23.0
noise_per_hz = true
fading = "per-device"

[device]
power_dbm = [0.0, 20.0]
"#;
        let first = parse_config(text).unwrap();
        let emitted = first.to_toml().unwrap();
        let second = parse_config(&emitted).unwrap();
        assert_eq!(first, second);
        assert_eq!(second.to_toml().unwrap(), emitted);
    }

    #[test]
    fn errors_point_at_the_line() {
        let err = parse_config("devices = 10\n\nrounds = \"many\"\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_config("devices = 10\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn per_hz_noise_scales_with_bandwidth() {
        let s = SystemConfig {
            noise_per_hz: true,
            ..Default::default()
        };
        assert!((s.noise_w() / (dbm_to_watts(-174.0) * 1e6) - 1.0).abs() < 1e-12);
    }
}
