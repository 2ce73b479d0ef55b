// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::qv::QV_MAX_WIDTH;
use crate::bench::{AppCircuit, IrbConfig};
use crate::calibration::CalibrationOptions;
use crate::device::{HeavyHexConfig, PropertyDistributions};
use crate::error::{invalid, Error, Result};
use crate::policy::{BirchConfig, HardwareRules, PolicyKind};
use crate::pulse::PulseConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Full,
    /// Device, rule-based family choice and schedule only; no simulation.
    ScheduleOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSettings {
    /// Load this snapshot instead of generating one.
    pub snapshot: Option<PathBuf>,
    pub lattice: HeavyHexConfig,
    pub distributions: PropertyDistributions,
    /// Treat single-qubit gates as already calibrated (zero error).
    pub single_qubit_precalibrated: bool,
}

impl Default for DeviceSettings {
    fn default() -> Self {
        Self {
            snapshot: None,
            lattice: HeavyHexConfig::eagle(),
            distributions: PropertyDistributions::default(),
            single_qubit_precalibrated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySettings {
    pub kind: PolicyKind,
    /// Cluster count for the brute-force policy.
    pub n: usize,
    /// Scores closer than this count as a tie, resolved toward the cheaper family.
    pub tie_tolerance: f64,
    pub birch: BirchConfig,
    pub rules: HardwareRules,
}

impl Default for PolicySettings {
    fn default() -> Self {
        Self { kind: PolicyKind::Hardware, n: 5, tie_tolerance: 1e-4, birch: BirchConfig::default(), rules: HardwareRules::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub options: CalibrationOptions,
    pub pulse: PulseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSettings {
    /// Split large subgraphs into batches of at most ten edges.
    pub cap: bool,
    /// Seconds per echoed-CR calibration round.
    pub base_round_time: f64,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        Self { cap: true, base_round_time: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    /// Number of edges benchmarked by IRB, spread from best to worst.
    pub irb_edges: usize,
    /// Sequence settings shared by IRB and layer fidelity.
    pub irb: IrbConfig,
    /// Largest QV width tried; below 2 disables QV.
    pub qv_max_width: usize,
    pub qv_circuits: u64,
    pub qv_shots: u64,
    /// Chain length for layer fidelity; below 2 disables it.
    pub eplg_qubits: usize,
    pub apps: Vec<String>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            irb_edges: 3,
            irb: IrbConfig::default(),
            qv_max_width: 5,
            qv_circuits: 100,
            qv_shots: 100,
            eplg_qubits: 10,
            apps: AppCircuit::builtin_set().iter().map(|c| c.name()).collect(),
        }
    }
}

impl BenchSettings {
    pub fn none() -> Self {
        Self { irb_edges: 0, qv_max_width: 0, eplg_qubits: 0, apps: Vec::new(), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub mode: RunMode,
    pub device: DeviceSettings,
    pub policy: PolicySettings,
    pub calibration: CalibrationSettings,
    pub schedule: ScheduleSettings,
    pub bench: BenchSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("run"),
            mode: RunMode::Full,
            device: DeviceSettings::default(),
            policy: PolicySettings::default(),
            calibration: CalibrationSettings::default(),
            schedule: ScheduleSettings::default(),
            bench: BenchSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { context: "pipeline config".into(), message: e.to_string() })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse { context: "pipeline config".into(), message: e.to_string() })
    }

    /// Reads a config file. A relative snapshot path is resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let (Some(snap), Some(parent)) = (&cfg.device.snapshot, path.parent()) {
            if snap.is_relative() {
                cfg.device.snapshot = Some(parent.join(snap));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.device.snapshot {
            if !p.exists() {
                return Err(Error::NotFound(format!("device snapshot {}", p.display())));
            }
        } else if self.device.lattice.cells_x == 0 || self.device.lattice.cells_y == 0 {
            return invalid("lattice needs at least one cell in each direction");
        }
        self.device.distributions.validate()?;
        if self.policy.n == 0 {
            return invalid("policy cluster count must be positive");
        }
        if !(self.policy.tie_tolerance >= 0.0) {
            return invalid("tie tolerance must be non-negative");
        }
        self.policy.rules.validate()?;
        self.calibration.options.validate()?;
        self.calibration.pulse.validate()?;
        if !(self.schedule.base_round_time > 0.0) {
            return invalid("base round time must be positive");
        }
        let b = &self.bench;
        if b.irb_edges > 0 || b.eplg_qubits >= 2 {
            b.irb.validate()?;
        }
        if b.qv_max_width > QV_MAX_WIDTH {
            return invalid(format!("QV width is limited to {QV_MAX_WIDTH}"));
        }
        if b.qv_max_width >= 2 && (b.qv_circuits == 0 || b.qv_shots == 0) {
            return invalid("QV needs at least one circuit and one shot");
        }
        for a in &b.apps {
            a.parse::<AppCircuit>()?;
        }
        Ok(())
    }
}
