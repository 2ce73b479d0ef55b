// SPDX-License-Identifier: Apache-2.0

//! End-to-end driver: device → profile → schedule → calibrate → bench → report.
//! Each stage persists one JSON artifact in the output directory and can be
//! re-run from the artifacts of the stages before it.

mod config;
mod render;
mod report;

pub use config::{BenchSettings, CalibrationSettings, DeviceSettings, PipelineConfig, PolicySettings, RunMode, ScheduleSettings};
pub use render::{report_render, RENDERED_FILES};
pub use report::{
    build_report, BenchSummary, CalibrationStats, EdgeSummary, IrbSummary, RunReport, ScheduleStats, StageRecord, StageStatus,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::bench::{
    app_benchmark, eplg, gate_error, irb_gate_error, quantum_volume, AppCircuit, AppNoise, DistributionComparison, GateErrorBreakdown,
    IrbConfig, IrbNoise, IrbResult, LayerFidelityResult, PairChannel, QvNoise, QvTrialResult,
};
use crate::calibration::{calibrate_pair, CalibrationResult, PhysicalCalibration};
use crate::device::{edge_key, oriented_edge, sample_device, snapshot_from_json, snapshot_to_json, CouplingGraph, DeviceSnapshot};
use crate::dynamics::PairModel;
use crate::error::{invalid, Error, Result};
use crate::policy::{
    evaluate_representatives, plan_bruteforce, plan_topology, policy_bruteforce, policy_hardware, policy_topology, EdgeAssignment,
    GroupPlan, PolicyAssignment, PolicyKind, Provenance, RepresentativeScores,
};
use crate::pulse::WaveformFamily;
use crate::scheduler::{build_subgraphs, estimate_runtime, split_batches, BatchPolicy, CalibrationSchedule, CalibrationSubgraph, DurationModel, RuntimeEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Device,
    Profile,
    Schedule,
    Calibrate,
    Bench,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Device, Stage::Profile, Stage::Schedule, Stage::Calibrate, Stage::Bench, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Device => "device",
            Stage::Profile => "profile",
            Stage::Schedule => "schedule",
            Stage::Calibrate => "calibrate",
            Stage::Bench => "bench",
            Stage::Report => "report",
        }
    }

    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Device => "device.json",
            Stage::Profile => "profile.json",
            Stage::Schedule => "schedule.json",
            Stage::Calibrate => "calibration.json",
            Stage::Bench => "bench.json",
            Stage::Report => "report.json",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s:?}")))
    }
}

/// Canonical-mode report file, identical across runs with the same inputs.
pub const CANONICAL_REPORT: &str = "report.canonical.json";

/// Independent per-purpose seed derived from the run seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SEED_DEVICE: u64 = 1;
const SEED_IRB: u64 = 2;
const SEED_QV: u64 = 3;
const SEED_EPLG: u64 = 4;

// ---------------------------------------------------------------- artifacts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub policy: PolicyKind,
    pub counts: BTreeMap<WaveformFamily, usize>,
    /// Mean over edges of the representative score for the assigned family.
    pub predicted_mean_epg: f64,
    /// Sum of family cost weights over all edges.
    pub total_cost_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileArtifact {
    pub assignment: PolicyAssignment,
    /// Representative score per family: EPG, plus one if calibration did not
    /// reach the escalated threshold.
    pub scores: RepresentativeScores,
    pub comparison: Vec<PolicyComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleArtifact {
    pub subgraphs: Vec<CalibrationSubgraph>,
    pub capped: CalibrationSchedule,
    pub ideal: CalibrationSchedule,
    pub capped_estimate: RuntimeEstimate,
    pub ideal_estimate: RuntimeEstimate,
    pub duration_model: DurationModel,
    pub cap: bool,
}

impl ScheduleArtifact {
    pub fn active(&self) -> &CalibrationSchedule {
        if self.cap {
            &self.capped
        } else {
            &self.ideal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeOutcome {
    pub edge_index: usize,
    pub batch: usize,
    pub control: usize,
    pub target: usize,
    pub family: WaveformFamily,
    pub result: Option<CalibrationResult>,
    pub gate_error: Option<GateErrorBreakdown>,
    pub error: Option<String>,
}

impl EdgeOutcome {
    pub fn epg(&self) -> Option<f64> {
        self.gate_error.map(|g| g.epg)
    }

    pub fn met_escalated(&self) -> bool {
        self.result.as_ref().is_some_and(|r| r.met_escalated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub edges: Vec<EdgeOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrbEdge {
    pub edge_index: usize,
    pub control: usize,
    pub target: usize,
    /// Gate error injected from the calibrated pulse.
    pub injected_epg: f64,
    pub result: IrbResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvArtifact {
    pub noise_epg: f64,
    pub quantum_volume: u64,
    pub trials: Vec<QvTrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EplgArtifact {
    pub chain: Vec<usize>,
    pub result: LayerFidelityResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppArtifact {
    pub circuit: AppCircuit,
    pub name: String,
    pub qubits: Vec<usize>,
    pub comparison: DistributionComparison,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchArtifact {
    pub irb: Vec<IrbEdge>,
    pub qv: Option<QvArtifact>,
    pub eplg: Option<EplgArtifact>,
    pub apps: Vec<AppArtifact>,
}

// ---------------------------------------------------------------- persistence

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn write_artifact<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), to_json(value)?)?;
    Ok(())
}

pub fn read_artifact<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingArtifacts { dir: dir.display().to_string(), missing: vec![name.to_string()] });
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { context: path.display().to_string(), message: e.to_string() })
}

fn write_device(dir: &Path, snapshot: &DeviceSnapshot) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(Stage::Device.artifact()), snapshot_to_json(snapshot)?)?;
    Ok(())
}

fn read_device(dir: &Path) -> Result<DeviceSnapshot> {
    let path = dir.join(Stage::Device.artifact());
    if !path.exists() {
        return Err(Error::MissingArtifacts { dir: dir.display().to_string(), missing: vec![Stage::Device.artifact().into()] });
    }
    snapshot_from_json(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------- stages

pub fn stage_device(cfg: &PipelineConfig) -> Result<DeviceSnapshot> {
    let mut snapshot = match &cfg.device.snapshot {
        Some(path) => crate::device::load_snapshot(path)?,
        None => {
            let graph = cfg.device.lattice.build()?;
            let mut s = sample_device(&graph, derive_seed(cfg.seed, SEED_DEVICE), &cfg.device.distributions)?;
            s.label = if cfg.device.lattice == crate::device::HeavyHexConfig::eagle() {
                "eagle-127".into()
            } else {
                format!("heavy-hex-{}x{}", cfg.device.lattice.cells_x, cfg.device.lattice.cells_y)
            };
            s
        }
    };
    if cfg.device.single_qubit_precalibrated {
        for q in &mut snapshot.qubits {
            q.sq_gate_error = 0.0;
        }
    }
    snapshot.validate()?;
    Ok(snapshot)
}

/// Calibrates one pair with the given family and scores the resulting gate.
pub fn calibrate_edge(
    snapshot: &DeviceSnapshot,
    settings: &CalibrationSettings,
    control: usize,
    target: usize,
    family: WaveformFamily,
) -> Result<(CalibrationResult, GateErrorBreakdown)> {
    let model = PairModel::from_snapshot(snapshot, control, target, settings.pulse.drive_scale)?;
    let cal = PhysicalCalibration::new(model, settings.pulse.clone())?;
    let result = calibrate_pair((control, target), &cal, family, &settings.options)?;
    let ge = gate_error(&cal, snapshot, &result)?;
    Ok((result, ge))
}

fn profile_score(snapshot: &DeviceSnapshot, settings: &CalibrationSettings, edge: usize, family: WaveformFamily) -> f64 {
    let (c, t) = oriented_edge(snapshot, edge);
    match calibrate_edge(snapshot, settings, c, t, family) {
        Ok((r, ge)) if r.succeeded() => ge.epg,
        Ok((_, ge)) => 1.0 + ge.epg,
        Err(_) => 2.0,
    }
}

/// Every edge on one family, used when no simulation is wanted.
pub fn uniform_assignment(snapshot: &DeviceSnapshot, family: WaveformFamily) -> PolicyAssignment {
    let edges = (0..snapshot.graph.edges.len())
        .map(|i| {
            let (control, target) = oriented_edge(snapshot, i);
            EdgeAssignment { edge_index: i, control, target, family, provenance: Provenance::Cluster(0), group: 0 }
        })
        .collect();
    PolicyAssignment { policy: PolicyKind::Hardware, edges, representatives: Vec::new(), standardizer: None, degenerate: false }
}

fn compare(assignment: &PolicyAssignment, scores: &RepresentativeScores) -> PolicyComparison {
    let mut total = 0.0;
    let mut cost = 0.0;
    for e in &assignment.edges {
        cost += e.family.cost_weight();
        let rep = assignment.representatives.get(e.group).copied();
        total += rep.and_then(|r| scores.get(&r)).and_then(|s| s.get(&e.family)).copied().unwrap_or(f64::NAN);
    }
    let n = assignment.edges.len().max(1) as f64;
    PolicyComparison { policy: assignment.policy, counts: assignment.counts(), predicted_mean_epg: total / n, total_cost_weight: cost }
}

pub fn stage_profile(cfg: &PipelineConfig, snapshot: &DeviceSnapshot) -> Result<ProfileArtifact> {
    if cfg.mode == RunMode::ScheduleOnly {
        let base = uniform_assignment(snapshot, WaveformFamily::EchoedCR);
        let assignment = policy_hardware(snapshot, &cfg.policy.rules, &base)?;
        return Ok(ProfileArtifact { assignment, scores: RepresentativeScores::new(), comparison: Vec::new() });
    }
    let p = &cfg.policy;
    let brute: GroupPlan = plan_bruteforce(snapshot, p.n.min(snapshot.graph.edges.len()), &p.birch)?;
    let topo: GroupPlan = plan_topology(snapshot)?;
    let mut reps: Vec<usize> = brute.representatives.iter().chain(&topo.representatives).copied().collect();
    reps.sort_unstable();
    reps.dedup();
    let scores = evaluate_representatives(&reps, |r, f| Ok(profile_score(snapshot, &cfg.calibration, r, f)))?;
    let bruteforce = policy_bruteforce(snapshot, &brute, &scores, p.tie_tolerance)?;
    let topology = policy_topology(snapshot, &topo, &scores, p.tie_tolerance)?;
    let hardware = policy_hardware(snapshot, &p.rules, &topology)?;
    let comparison = [&bruteforce, &topology, &hardware].iter().map(|a| compare(a, &scores)).collect();
    let assignment = match p.kind {
        PolicyKind::Bruteforce => bruteforce,
        PolicyKind::Topology => topology,
        PolicyKind::Hardware => hardware,
    };
    Ok(ProfileArtifact { assignment, scores, comparison })
}

pub fn stage_schedule(cfg: &PipelineConfig, snapshot: &DeviceSnapshot, assignment: &PolicyAssignment) -> Result<ScheduleArtifact> {
    let subgraphs = build_subgraphs(&snapshot.graph);
    let model = DurationModel { base_round_time: cfg.schedule.base_round_time, ..DurationModel::default() };
    let mut capped = split_batches(&snapshot.graph, &subgraphs, assignment, BatchPolicy::CAPPED)?;
    let mut ideal = split_batches(&snapshot.graph, &subgraphs, assignment, BatchPolicy::IDEAL)?;
    let capped_estimate = estimate_runtime(&mut capped, &model);
    let ideal_estimate = estimate_runtime(&mut ideal, &model);
    Ok(ScheduleArtifact { subgraphs, capped, ideal, capped_estimate, ideal_estimate, duration_model: model, cap: cfg.schedule.cap })
}

/// Runs batches in order; edges inside one batch run concurrently.
pub fn stage_calibrate(cfg: &PipelineConfig, snapshot: &DeviceSnapshot, schedule: &ScheduleArtifact) -> Result<CalibrationArtifact> {
    let m = snapshot.graph.edges.len();
    let mut out: Vec<Option<EdgeOutcome>> = vec![None; m];
    for (bi, batch) in schedule.active().batches.iter().enumerate() {
        let done: Vec<EdgeOutcome> = batch
            .edges
            .par_iter()
            .zip(batch.families.par_iter())
            .map(|(&e, &family)| {
                let (control, target) = oriented_edge(snapshot, e);
                let (result, gate_error, error) = match calibrate_edge(snapshot, &cfg.calibration, control, target, family) {
                    Ok((r, g)) => (Some(r), Some(g), None),
                    Err(err) => (None, None, Some(err.to_string())),
                };
                EdgeOutcome { edge_index: e, batch: bi, control, target, family, result, gate_error, error }
            })
            .collect();
        for o in done {
            let i = o.edge_index;
            if i >= m || out[i].is_some() {
                return invalid(format!("schedule lists edge {i} more than once or outside the graph"));
            }
            out[i] = Some(o);
        }
    }
    let edges: Vec<EdgeOutcome> = out.into_iter().enumerate().map(|(i, o)| o.ok_or(i)).collect::<std::result::Result<_, usize>>().map_err(|i| {
        Error::InvalidArgument(format!("schedule does not cover edge {i}"))
    })?;
    Ok(CalibrationArtifact { edges })
}

/// A simple path of `n` nodes, found by depth-first search from the lowest
/// index that admits one.
pub fn find_chain(graph: &CouplingGraph, n: usize) -> Result<Vec<usize>> {
    fn extend(adj: &[Vec<usize>], path: &mut Vec<usize>, used: &mut [bool], n: usize) -> bool {
        if path.len() == n {
            return true;
        }
        let last = *path.last().unwrap();
        for &v in &adj[last] {
            if !used[v] {
                used[v] = true;
                path.push(v);
                if extend(adj, path, used, n) {
                    return true;
                }
                path.pop();
                used[v] = false;
            }
        }
        false
    }
    if n == 0 || n > graph.num_nodes {
        return invalid(format!("chain of {n} qubits does not fit a {}-qubit device", graph.num_nodes));
    }
    let adj = graph.adjacency();
    let mut used = vec![false; graph.num_nodes];
    for start in 0..graph.num_nodes {
        let mut path = vec![start];
        used[start] = true;
        if extend(&adj, &mut path, &mut used, n) {
            return Ok(path);
        }
        used[start] = false;
    }
    Err(Error::UnsupportedTopology(format!("no simple path of {n} qubits")))
}

fn median(xs: &mut [f64]) -> f64 {
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

/// Picks `k` evenly spaced entries from a list sorted by error.
fn spread_pick<T: Clone>(sorted: &[T], k: usize) -> Vec<T> {
    match (k, sorted.len()) {
        (0, _) | (_, 0) => Vec::new(),
        (1, n) => vec![sorted[n / 2].clone()],
        (k, n) if k >= n => sorted.to_vec(),
        (k, n) => (0..k).map(|i| sorted[(i * (n - 1) + (k - 1) / 2) / (k - 1)].clone()).collect(),
    }
}

pub fn stage_bench(cfg: &PipelineConfig, snapshot: &DeviceSnapshot, calibration: &CalibrationArtifact) -> Result<BenchArtifact> {
    let b = &cfg.bench;
    let by_key: BTreeMap<(usize, usize), f64> =
        calibration.edges.iter().filter_map(|o| o.epg().map(|e| (edge_key(o.control, o.target), e))).collect();
    let mut all: Vec<f64> = by_key.values().copied().collect();
    let typical = median(&mut all);
    if by_key.is_empty() && (b.irb_edges > 0 || b.qv_max_width >= 2 || b.eplg_qubits >= 2 || !b.apps.is_empty()) {
        return invalid("no calibrated edge has a gate error to benchmark with");
    }
    let pair_epg = |a: usize, c: usize| by_key.get(&edge_key(a, c)).copied().unwrap_or(typical);

    let mut ranked: Vec<&EdgeOutcome> = calibration.edges.iter().filter(|o| o.epg().is_some()).collect();
    ranked.sort_by(|x, y| x.epg().unwrap().total_cmp(&y.epg().unwrap()).then(x.edge_index.cmp(&y.edge_index)));
    let irb = spread_pick(&ranked, b.irb_edges)
        .into_iter()
        .map(|o| {
            let epg = o.epg().unwrap();
            let irb_cfg = IrbConfig { seed: derive_seed(cfg.seed, SEED_IRB + 16 * o.edge_index as u64), ..b.irb.clone() };
            let result = irb_gate_error(&IrbNoise::from_gate_epg(epg)?, &irb_cfg)?;
            Ok(IrbEdge { edge_index: o.edge_index, control: o.control, target: o.target, injected_epg: epg, result })
        })
        .collect::<Result<Vec<_>>>()?;

    let qv = if b.qv_max_width >= 2 {
        let (volume, trials) =
            quantum_volume(b.qv_max_width, b.qv_circuits, b.qv_shots, &QvNoise::depolarizing(typical), derive_seed(cfg.seed, SEED_QV))?;
        Some(QvArtifact { noise_epg: typical, quantum_volume: volume, trials })
    } else {
        None
    };

    let eplg_result = if b.eplg_qubits >= 2 {
        let chain = find_chain(&snapshot.graph, b.eplg_qubits)?;
        let eplg_cfg = IrbConfig { seed: derive_seed(cfg.seed, SEED_EPLG), ..b.irb.clone() };
        let result = eplg(&chain, |a, c| PairChannel::from_epg(pair_epg(a, c)), &eplg_cfg)?;
        Some(EplgArtifact { chain, result })
    } else {
        None
    };

    let mut sq: Vec<f64> = snapshot.qubits.iter().map(|q| q.sq_gate_error).collect();
    let sq_typical = median(&mut sq);
    let apps = b
        .apps
        .iter()
        .map(|name| {
            let circuit: AppCircuit = name.parse()?;
            let width = circuit.build()?.num_qubits;
            let qubits = find_chain(&snapshot.graph, width)?;
            let per_pair = qubits.windows(2).enumerate().map(|(i, w)| (AppNoise::pair_key(i, i + 1), pair_epg(w[0], w[1]))).collect();
            let noise = AppNoise { two_qubit_epg: typical, per_pair, one_qubit_epg: sq_typical };
            let comparison = app_benchmark(circuit, &noise)?;
            Ok(AppArtifact { circuit, name: circuit.name(), qubits, comparison })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchArtifact { irb, qv, eplg: eplg_result, apps })
}

// ---------------------------------------------------------------- driver

#[derive(Default)]
struct State {
    device: Option<DeviceSnapshot>,
    profile: Option<ProfileArtifact>,
    schedule: Option<ScheduleArtifact>,
    calibration: Option<CalibrationArtifact>,
    bench: Option<BenchArtifact>,
}

fn need<'a, T>(v: &'a Option<T>, stage: Stage) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Stage { stage: stage.name().into(), message: "input from an earlier stage is unavailable".into() })
}

fn skipped(cfg: &PipelineConfig, stage: Stage) -> bool {
    cfg.mode == RunMode::ScheduleOnly && matches!(stage, Stage::Calibrate | Stage::Bench)
}

fn run_stage(cfg: &PipelineConfig, stage: Stage, st: &mut State) -> Result<()> {
    let dir = cfg.out_dir.as_path();
    match stage {
        Stage::Device => {
            let d = stage_device(cfg)?;
            write_device(dir, &d)?;
            st.device = Some(d);
        }
        Stage::Profile => {
            let p = stage_profile(cfg, need(&st.device, stage)?)?;
            write_artifact(dir, stage.artifact(), &p)?;
            st.profile = Some(p);
        }
        Stage::Schedule => {
            let s = stage_schedule(cfg, need(&st.device, stage)?, &need(&st.profile, stage)?.assignment)?;
            write_artifact(dir, stage.artifact(), &s)?;
            st.schedule = Some(s);
        }
        Stage::Calibrate => {
            let c = stage_calibrate(cfg, need(&st.device, stage)?, need(&st.schedule, stage)?)?;
            write_artifact(dir, stage.artifact(), &c)?;
            st.calibration = Some(c);
        }
        Stage::Bench => {
            let b = stage_bench(cfg, need(&st.device, stage)?, need(&st.calibration, stage)?)?;
            write_artifact(dir, stage.artifact(), &b)?;
            st.bench = Some(b);
        }
        Stage::Report => {}
    }
    Ok(())
}

fn load_stage(cfg: &PipelineConfig, stage: Stage, st: &mut State) -> Result<()> {
    let dir = cfg.out_dir.as_path();
    match stage {
        Stage::Device => st.device = Some(read_device(dir)?),
        Stage::Profile => st.profile = Some(read_artifact(dir, stage.artifact())?),
        Stage::Schedule => st.schedule = Some(read_artifact(dir, stage.artifact())?),
        Stage::Calibrate => st.calibration = Some(read_artifact(dir, stage.artifact())?),
        Stage::Bench => st.bench = Some(read_artifact(dir, stage.artifact())?),
        Stage::Report => {}
    }
    Ok(())
}

/// Runs every stage from the device onward.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    run_pipeline_from(cfg, Stage::Device)
}

/// Reloads the artifacts of stages before `from`, then runs the rest. A
/// failing stage is recorded in the report; later stages are skipped and
/// artifacts already on disk are left untouched.
pub fn run_pipeline_from(cfg: &PipelineConfig, from: Stage) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut st = State::default();
    let mut records = Vec::with_capacity(Stage::ALL.len());
    let mut failed = false;
    for stage in Stage::ALL.into_iter().filter(|&s| s != Stage::Report) {
        let status = if failed || skipped(cfg, stage) {
            (StageStatus::Skipped, None)
        } else if stage < from {
            load_stage(cfg, stage, &mut st)?;
            (StageStatus::Reused, None)
        } else {
            let t0 = Instant::now();
            match run_stage(cfg, stage, &mut st) {
                Ok(()) => (StageStatus::Ok, Some(t0.elapsed().as_secs_f64())),
                Err(e) => {
                    failed = true;
                    (StageStatus::Failed { message: e.to_string() }, Some(t0.elapsed().as_secs_f64()))
                }
            }
        };
        records.push(StageRecord { stage, status: status.0, wall_clock_s: status.1 });
    }
    let t0 = Instant::now();
    records.push(StageRecord { stage: Stage::Report, status: StageStatus::Ok, wall_clock_s: None });
    let mut report = build_report(
        cfg,
        st.device.as_ref(),
        st.profile.as_ref(),
        st.schedule.as_ref(),
        st.calibration.as_ref(),
        st.bench.as_ref(),
        records,
    )?;
    write_artifact(&cfg.out_dir, CANONICAL_REPORT, &report.canonical())?;
    if let Some(r) = report.stages.last_mut() {
        r.wall_clock_s = Some(t0.elapsed().as_secs_f64());
    }
    write_artifact(&cfg.out_dir, Stage::Report.artifact(), &report)?;
    Ok(report)
}
