// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BenchArtifact, CalibrationArtifact, PipelineConfig, PolicyComparison, ProfileArtifact, RunMode, ScheduleArtifact, Stage};
use crate::device::DeviceSnapshot;
use crate::error::Result;
use crate::policy::{PolicyKind, Provenance};
use crate::pulse::WaveformFamily;
use crate::scheduler::{estimate_runtime, RuntimeEstimate};

/// Fraction of edges that must reach the escalated threshold for a run to pass.
pub const REQUIRED_ESCALATED_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum StageStatus {
    Ok,
    /// Loaded from an earlier run's artifact.
    Reused,
    Skipped,
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    #[serde(flatten)]
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSummary {
    pub edge_index: usize,
    pub control: usize,
    pub target: usize,
    pub family: WaveformFamily,
    pub provenance: Provenance,
    pub rounds: Option<usize>,
    /// MHz.
    pub max_error: Option<f64>,
    pub met_target: bool,
    pub met_escalated: bool,
    pub epg: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub edges: usize,
    pub met_target: usize,
    pub met_escalated: usize,
    pub fraction_target: f64,
    pub fraction_escalated: f64,
    pub mean_rounds: f64,
    pub median_epg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStats {
    pub subgraphs: usize,
    pub max_subgraph: usize,
    pub batches: usize,
    pub max_batch: usize,
    pub cap: bool,
    /// Estimates with measured rounds when calibration ran, else the default.
    pub capped: RuntimeEstimate,
    pub ideal: RuntimeEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrbSummary {
    pub edge_index: usize,
    pub injected_epg: f64,
    pub measured_epg: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub irb: Vec<IrbSummary>,
    pub quantum_volume: Option<u64>,
    pub eplg: Option<f64>,
    pub layer_fidelity: Option<f64>,
    /// Circuit name → (E, F).
    pub apps: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub mode: RunMode,
    pub device: Option<String>,
    pub num_qubits: usize,
    pub num_edges: usize,
    pub policy: PolicyKind,
    pub stages: Vec<StageRecord>,
    pub edges: Vec<EdgeSummary>,
    pub family_counts: BTreeMap<WaveformFamily, usize>,
    pub policies: Vec<PolicyComparison>,
    pub calibration: Option<CalibrationStats>,
    pub schedule: Option<ScheduleStats>,
    pub bench: Option<BenchSummary>,
    pub success: bool,
}

impl RunReport {
    /// The report without wall-clock fields.
    pub fn canonical(&self) -> Self {
        let mut r = self.clone();
        for s in &mut r.stages {
            s.wall_clock_s = None;
        }
        r
    }

    pub fn failed_stage(&self) -> Option<&StageRecord> {
        self.stages.iter().find(|s| matches!(s.status, StageStatus::Failed { .. }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn schedule_stats(schedule: &ScheduleArtifact, calibration: Option<&CalibrationArtifact>) -> ScheduleStats {
    let mut model = schedule.duration_model.clone();
    if let Some(c) = calibration {
        model.rounds = c.edges.iter().filter_map(|o| o.result.as_ref().map(|r| (o.edge_index, r.rounds))).collect();
    }
    let (mut capped, mut ideal) = (schedule.capped.clone(), schedule.ideal.clone());
    let active = schedule.active();
    ScheduleStats {
        subgraphs: schedule.subgraphs.len(),
        max_subgraph: schedule.subgraphs.iter().map(|s| s.len()).max().unwrap_or(0),
        batches: active.batches.len(),
        max_batch: active.batches.iter().map(|b| b.edges.len()).max().unwrap_or(0),
        cap: schedule.cap,
        capped: estimate_runtime(&mut capped, &model),
        ideal: estimate_runtime(&mut ideal, &model),
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Assembles the run report from whatever stage outputs are available.
pub fn build_report(
    cfg: &PipelineConfig,
    device: Option<&DeviceSnapshot>,
    profile: Option<&ProfileArtifact>,
    schedule: Option<&ScheduleArtifact>,
    calibration: Option<&CalibrationArtifact>,
    bench: Option<&BenchArtifact>,
    stages: Vec<StageRecord>,
) -> Result<RunReport> {
    let mut edges = Vec::new();
    if let Some(p) = profile {
        for a in &p.assignment.edges {
            let o = calibration.and_then(|c| c.edges.get(a.edge_index));
            let r = o.and_then(|o| o.result.as_ref());
            edges.push(EdgeSummary {
                edge_index: a.edge_index,
                control: a.control,
                target: a.target,
                family: a.family,
                provenance: a.provenance,
                rounds: r.map(|r| r.rounds),
                max_error: r.map(|r| r.max_error),
                met_target: r.is_some_and(|r| r.met_target),
                met_escalated: r.is_some_and(|r| r.met_escalated),
                epg: o.and_then(|o| o.epg()),
                failure: o.and_then(|o| o.error.clone().or_else(|| r.and_then(|r| r.failure.clone()))),
            });
        }
    }
    let calibration_stats = calibration.map(|c| {
        let n = c.edges.len();
        let met_target = c.edges.iter().filter(|o| o.result.as_ref().is_some_and(|r| r.met_target)).count();
        let met_escalated = c.edges.iter().filter(|o| o.met_escalated()).count();
        let rounds: Vec<usize> = c.edges.iter().filter_map(|o| o.result.as_ref().map(|r| r.rounds)).collect();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        CalibrationStats {
            edges: n,
            met_target,
            met_escalated,
            fraction_target: frac(met_target),
            fraction_escalated: frac(met_escalated),
            mean_rounds: if rounds.is_empty() { 0.0 } else { rounds.iter().sum::<usize>() as f64 / rounds.len() as f64 },
            median_epg: median(c.edges.iter().filter_map(|o| o.epg()).collect()),
        }
    });
    let bench_summary = bench.map(|b| BenchSummary {
        irb: b
            .irb
            .iter()
            .map(|i| IrbSummary { edge_index: i.edge_index, injected_epg: i.injected_epg, measured_epg: i.result.mean, std: i.result.std })
            .collect(),
        quantum_volume: b.qv.as_ref().map(|q| q.quantum_volume),
        eplg: b.eplg.as_ref().map(|e| e.result.eplg),
        layer_fidelity: b.eplg.as_ref().map(|e| e.result.lf),
        apps: b.apps.iter().map(|a| (a.name.clone(), (a.comparison.e, a.comparison.f))).collect(),
    });
    let stages_ok = stages.iter().all(|s| !matches!(s.status, super::StageStatus::Failed { .. }));
    let calibrated_ok = match (&calibration_stats, cfg.mode) {
        (Some(c), _) => c.fraction_escalated >= REQUIRED_ESCALATED_FRACTION,
        (None, RunMode::ScheduleOnly) => true,
        (None, RunMode::Full) => false,
    };
    Ok(RunReport {
        seed: cfg.seed,
        mode: cfg.mode,
        device: device.map(|d| d.label.clone()),
        num_qubits: device.map_or(0, |d| d.graph.num_nodes),
        num_edges: device.map_or(0, |d| d.graph.edges.len()),
        policy: profile.map_or(cfg.policy.kind, |p| p.assignment.policy),
        stages,
        edges,
        family_counts: profile.map(|p| p.assignment.counts()).unwrap_or_default(),
        policies: profile.map(|p| p.comparison.clone()).unwrap_or_default(),
        calibration: calibration_stats,
        schedule: schedule.map(|s| schedule_stats(s, calibration)),
        bench: bench_summary,
        success: stages_ok && calibrated_ok,
    })
}
