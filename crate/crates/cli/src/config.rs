//! Experiment configuration files.
//!
//! A config is a JSON object; every section is optional and unknown keys are
//! rejected. The seed must come from the file or from `--seed`.

use std::fs;
use std::path::{Path, PathBuf};

use memspike_core::device::{DeviceParams, Pulse};
use memspike_core::signal::{Conditioner, SpikeClass, SynthesisConfig};
use memspike_core::sorter::ReadSchedule;
use memspike_core::texel::{TexelParams, Variant};
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Repeatability,
    Randomized,
    Texel,
    Charge,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Repeatability => "repeatability",
            Experiment::Randomized => "randomized",
            Experiment::Texel => "texel",
            Experiment::Charge => "charge",
        }
    }
}

/// Cycle-to-cycle variability giving class clusters a coefficient of
/// variation of about 10%.
pub const DEFAULT_SIGMA_CYCLE: f64 = 0.27;
/// Relative read noise of the default device.
pub const DEFAULT_SIGMA_READ: f64 = 3e-4;

/// Device used by experiments unless the config overrides it.
pub fn default_device() -> DeviceParams {
    DeviceParams {
        sigma_cycle: DEFAULT_SIGMA_CYCLE,
        sigma_read: DEFAULT_SIGMA_READ,
        ..DeviceParams::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must match the verb the config is run with.
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Recording file to use instead of a synthetic one.
    pub recording: Option<PathBuf>,
    pub synthesis: SynthesisConfig,
    pub device: DeviceParams,
    pub sorter: SorterConfig,
    pub texel: TexelConfig,
    pub charge: ChargeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: None,
            output_dir: None,
            recording: None,
            synthesis: SynthesisConfig::default(),
            device: default_device(),
            sorter: SorterConfig::default(),
            texel: TexelConfig::default(),
            charge: ChargeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Threshold,
    Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleSpike {
    /// Triplet whose class-I segment gets a second class-I spike appended.
    pub triplet: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SorterConfig {
    pub conditioner: Conditioner,
    pub schedule: ReadSchedule,
    pub triplets: usize,
    /// Class order of every repeatability triplet.
    pub order: [SpikeClass; 3],
    pub reset: Pulse,
    /// Open every triplet with one spike-free batch.
    pub background: bool,
    /// Instances averaged into each class prototype.
    pub average_of: usize,
    pub noise_multiplier: f64,
    pub classifier: ClassifierKind,
    pub epochs: usize,
    /// Re-derive `k_neg` from the averaged class-I prototype before the run.
    pub calibrate_k_neg: bool,
    pub double_spike: Option<DoubleSpike>,
}

impl Default for SorterConfig {
    fn default() -> Self {
        Self {
            conditioner: Conditioner::SORTER,
            schedule: ReadSchedule::default(),
            triplets: 10,
            order: [SpikeClass::Three, SpikeClass::Two, SpikeClass::One],
            reset: Pulse::default(),
            background: true,
            average_of: 10,
            noise_multiplier: 3.0,
            classifier: ClassifierKind::Threshold,
            epochs: 200,
            calibrate_k_neg: false,
            double_spike: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TexelInputs {
    /// The nine measured sample sets.
    Reference,
    /// Sample sets drawn from the recording with the trigger sampler.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TexelConfig {
    pub params: TexelParams,
    pub conditioner: Conditioner,
    pub inputs: TexelInputs,
    pub r_load: f64,
    /// Stored voltages of the template; defaults to the ideal vector of
    /// `template_class` variant M.
    pub template: Option<Vec<f64>>,
    pub template_class: SpikeClass,
    /// Refit the bump to the measured outputs before evaluating.
    pub fit: bool,
    /// Quantiles of the per-class sample-mean distribution used for L, M, H.
    pub variant_quantiles: [f64; 3],
}

impl Default for TexelConfig {
    fn default() -> Self {
        Self {
            params: TexelParams::default(),
            conditioner: Conditioner::TEXEL,
            inputs: TexelInputs::Reference,
            r_load: memspike_core::reference::TEXEL_LOAD_OHMS,
            template: None,
            template_class: SpikeClass::Two,
            fit: false,
            variant_quantiles: [0.1, 0.5, 0.9],
        }
    }
}

impl TexelConfig {
    pub fn variants() -> [Variant; 3] {
        [Variant::L, Variant::M, Variant::H]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChargeConfig {
    pub q_texel: f64,
    pub q_inverter: f64,
}

impl Default for ChargeConfig {
    fn default() -> Self {
        Self {
            q_texel: memspike_core::reference::TEXEL_CHARGE,
            q_inverter: memspike_core::reference::INVERTER_CHARGE,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> RunError {
    RunError::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks ranges and referenced files for a run of `experiment`.
    pub fn validate(&self, experiment: Experiment) -> Result<u64, RunError> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(RunError::Config(format!(
                    "config is for `{}`, not `{}`",
                    e.name(),
                    experiment.name()
                )));
            }
        }
        let seed = self
            .seed
            .ok_or_else(|| RunError::Config("seed is required (config `seed` or --seed)".into()))?;
        if let Some(p) = &self.recording {
            if !p.is_file() {
                return Err(RunError::Config(format!("recording {} not found", p.display())));
            }
        }
        self.device.validate().map_err(config_err)?;
        let s = &self.sorter;
        s.conditioner.validate().map_err(config_err)?;
        s.schedule.validate().map_err(config_err)?;
        Pulse::new(s.reset.amplitude, s.reset.duration).map_err(config_err)?;
        if s.triplets == 0 {
            return Err(RunError::Config("sorter.triplets must be >= 1".into()));
        }
        if s.average_of == 0 {
            return Err(RunError::Config("sorter.average_of must be >= 1".into()));
        }
        if !(s.noise_multiplier >= 0.0 && s.noise_multiplier.is_finite()) {
            return Err(RunError::Config("sorter.noise_multiplier must be >= 0".into()));
        }
        if let Some(d) = s.double_spike {
            if d.triplet >= s.triplets {
                return Err(RunError::Config(format!(
                    "double_spike.triplet {} out of range for {} triplets",
                    d.triplet, s.triplets
                )));
            }
        }
        let t = &self.texel;
        t.params.validate().map_err(config_err)?;
        t.conditioner.validate().map_err(config_err)?;
        if !(t.r_load > 0.0 && t.r_load.is_finite()) {
            return Err(RunError::Config("texel.r_load must be positive".into()));
        }
        if t.variant_quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(RunError::Config("texel.variant_quantiles must lie in [0, 1]".into()));
        }
        let c = &self.charge;
        if !(c.q_inverter > 0.0 && c.q_inverter.is_finite()) || !(c.q_texel > 0.0 && c.q_texel.is_finite()) {
            return Err(RunError::Config("charges must be positive".into()));
        }
        if !(self.synthesis.dt > 0.0) {
            return Err(RunError::Config("synthesis.dt must be positive".into()));
        }
        Ok(seed)
    }
}
