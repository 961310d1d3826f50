//! Run configuration: a JSON file, every field optional, overridden by flags.
//!
//! Energies are in units of `k_B T` at `beta = 1`; `beta` is an inverse
//! energy. Every command reads only its own section.

use std::path::Path;

use anyhow::{Context, Result};
use qthermo::demon::FeedbackKind;
use qthermo::emulator::ThermalAngle;
use qthermo::states::CorrelationKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    pub collision: CollisionSettings,
    pub trajectories: TrajectorySettings,
    pub demon: DemonSettings,
    pub emulate: EmulateSettings,
    pub verify: VerifySettings,
}


impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionSettings {
    pub beta: f64,
    pub e_initial: f64,
    pub e_final: f64,
    pub delta_e: f64,
    pub g: f64,
    pub correlation: CorrelationKind,
    pub noise: f64,
    pub retain_msr: bool,
}

impl Default for CollisionSettings {
    fn default() -> Self {
        Self {
            beta: 1.0,
            e_initial: 1.0,
            e_final: 0.1,
            delta_e: 0.0045,
            g: 0.1,
            correlation: CorrelationKind::Classical,
            noise: 0.0,
            retain_msr: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeChoice {
    Global,
    Local,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySettings {
    pub beta: f64,
    pub e_s: f64,
    pub e_r: f64,
    pub g: f64,
    pub correlation: CorrelationKind,
    pub noise: f64,
    pub scheme: SchemeChoice,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self {
            beta: 1.0,
            e_s: 1.0,
            e_r: 0.1,
            g: 1.0,
            correlation: CorrelationKind::Classical,
            noise: 0.5,
            scheme: SchemeChoice::Both,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemonSettings {
    pub betas: Vec<f64>,
    pub samples: usize,
    pub kind: FeedbackKind,
}

impl Default for DemonSettings {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 2.0],
            samples: 10_000,
            kind: FeedbackKind::Unitary,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulateSettings {
    pub beta: f64,
    pub e_s: f64,
    pub e_r: f64,
    pub noise: f64,
    pub g: f64,
    pub shots_per_rep: u64,
    pub reps: usize,
    pub readout_flip_prob: Option<f64>,
    pub exact: bool,
    pub thermal_angle: ThermalAngle,
}

impl Default for EmulateSettings {
    fn default() -> Self {
        Self {
            beta: 1.0,
            e_s: 1.0,
            e_r: 0.1,
            noise: 0.5,
            g: 1.0,
            shots_per_rep: 8192,
            reps: 5,
            readout_flip_prob: None,
            exact: false,
            thermal_angle: ThermalAngle::Thermal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub instances: usize,
    pub scheme: SchemeChoice,
    /// Negate the dissipative information before checking; exercises the
    /// failure path.
    pub inject_sign_flip: bool,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            instances: 1000,
            scheme: SchemeChoice::Both,
            inject_sign_flip: false,
        }
    }
}
