// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use paircal_core::bench::{
    app_benchmark, eplg, irb_gate_error, quantum_volume, AppCircuit, AppNoise, IrbNoise, PairChannel, QvNoise,
};
use paircal_core::device::{load_snapshot, save_snapshot, HeavyHexConfig};
use paircal_core::error::{Error, Result};
use paircal_core::pipeline::{
    derive_seed, read_artifact, report_render, run_pipeline_from, stage_bench, stage_calibrate, stage_device,
    stage_profile, stage_schedule, CalibrationArtifact, PipelineConfig, ProfileArtifact, RunMode, ScheduleArtifact, Stage,
};
use paircal_core::policy::{PolicyAssignment, PolicyKind};

#[derive(Parser)]
#[command(name = "paircal", version, about = "Per-pair CR pulse profiling, calibration and scheduling")]
struct Cli {
    /// Pipeline config (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic heavy-hex device snapshot.
    GenDevice {
        /// Unit cells as `X,Y`; the 127-qubit layout when omitted.
        #[arg(long, value_parser = parse_cells)]
        cells: Option<(usize, usize)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose a waveform family per edge.
    Profile {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Cluster count for the brute-force policy.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition edges into parallel calibration batches.
    Schedule {
        #[arg(long)]
        snapshot: PathBuf,
        /// Profile output or a bare policy assignment.
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long, value_enum)]
        cap: Option<Switch>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate every edge batch by batch.
    Calibrate {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one benchmark.
    Bench {
        #[command(subcommand)]
        kind: BenchCommand,
    },
    /// Render CSV tables and SVG plots for a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Run every stage, persisting artifacts in the output directory.
    Pipeline {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse artifacts of the stages before this one.
        #[arg(long, default_value = "device")]
        from: Stage,
        #[arg(long)]
        schedule_only: bool,
        #[arg(long, value_enum)]
        cap: Option<Switch>,
        #[arg(long)]
        policy: Option<PolicyKind>,
    },
}

#[derive(Args)]
struct NoiseSource {
    /// Uniform depolarizing error per two-qubit gate.
    #[arg(long, conflicts_with_all = ["snapshot", "calibration"])]
    epg: Option<f64>,
    /// Device snapshot; with `--calibration`, noise comes from calibrated edges.
    #[arg(long, requires = "calibration")]
    snapshot: Option<PathBuf>,
    #[arg(long, requires = "snapshot")]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Interleaved randomized benchmarking of one gate.
    Irb {
        #[command(flatten)]
        noise: NoiseSource,
    },
    /// Quantum volume up to a width.
    Qv {
        #[command(flatten)]
        noise: NoiseSource,
        #[arg(long)]
        max_width: Option<usize>,
    },
    /// Layer fidelity along a chain of qubits.
    Eplg {
        #[command(flatten)]
        noise: NoiseSource,
        #[arg(long)]
        qubits: Option<usize>,
    },
    /// Output-distribution error of a built-in program.
    App {
        #[command(flatten)]
        noise: NoiseSource,
        /// `ghz_state_n4`, `cat_state_n4`, `adder_n4`, …
        #[arg(long)]
        circuit: Option<String>,
    },
}

fn parse_cells(s: &str) -> std::result::Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(x)?, p(y)?))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => {
            use std::io::Write;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    read_artifact(dir, name)
}

fn read_assignment(path: &Path) -> Result<PolicyAssignment> {
    let text = fs::read_to_string(path)?;
    if let Ok(p) = serde_json::from_str::<ProfileArtifact>(&text) {
        return Ok(p.assignment);
    }
    serde_json::from_str(&text).map_err(|e| Error::Parse { context: path.display().to_string(), message: e.to_string() })
}

/// Config with a snapshot pinned, so the device stage loads rather than generates.
fn with_snapshot(mut cfg: PipelineConfig, snapshot: &Path) -> PipelineConfig {
    cfg.device.snapshot = Some(snapshot.to_path_buf());
    cfg
}

fn run_bench(cfg: PipelineConfig, kind: BenchCommand) -> Result<()> {
    let (noise, out) = match &kind {
        BenchCommand::Irb { noise } | BenchCommand::Qv { noise, .. } | BenchCommand::Eplg { noise, .. } | BenchCommand::App { noise, .. } => {
            (noise, noise.out.clone())
        }
    };
    let mut bench = paircal_core::pipeline::BenchSettings::none();
    match &kind {
        BenchCommand::Irb { .. } => bench.irb_edges = cfg.bench.irb_edges.max(1),
        BenchCommand::Qv { max_width, .. } => bench.qv_max_width = max_width.unwrap_or(cfg.bench.qv_max_width),
        BenchCommand::Eplg { qubits, .. } => bench.eplg_qubits = qubits.unwrap_or(cfg.bench.eplg_qubits),
        BenchCommand::App { circuit, .. } => {
            bench.apps = circuit.clone().map(|c| vec![c]).unwrap_or_else(|| cfg.bench.apps.clone());
        }
    }
    bench.irb = cfg.bench.irb.clone();
    bench.qv_circuits = cfg.bench.qv_circuits;
    bench.qv_shots = cfg.bench.qv_shots;

    if let (Some(snap), Some(cal)) = (&noise.snapshot, &noise.calibration) {
        let cfg = PipelineConfig { bench, ..with_snapshot(cfg, snap) };
        cfg.validate()?;
        let snapshot = load_snapshot(snap)?;
        let calibration: CalibrationArtifact = read_json(cal)?;
        return write_json(&stage_bench(&cfg, &snapshot, &calibration)?, out.as_deref());
    }
    let epg = noise.epg.ok_or_else(|| Error::InvalidArgument("give --epg or --snapshot with --calibration".into()))?;
    let seed = cfg.seed;
    match kind {
        BenchCommand::Irb { .. } => {
            let irb_cfg = paircal_core::bench::IrbConfig { seed: derive_seed(seed, 2), ..bench.irb };
            write_json(&irb_gate_error(&IrbNoise::from_gate_epg(epg)?, &irb_cfg)?, out.as_deref())
        }
        BenchCommand::Qv { .. } => {
            let (qv, trials) = quantum_volume(bench.qv_max_width, bench.qv_circuits, bench.qv_shots, &QvNoise::depolarizing(epg), derive_seed(seed, 3))?;
            write_json(&serde_json::json!({ "quantum_volume": qv, "noise_epg": epg, "trials": trials }), out.as_deref())
        }
        BenchCommand::Eplg { .. } => {
            let chain: Vec<usize> = (0..bench.eplg_qubits).collect();
            let eplg_cfg = paircal_core::bench::IrbConfig { seed: derive_seed(seed, 4), ..bench.irb };
            write_json(&eplg(&chain, |_, _| PairChannel::from_epg(epg), &eplg_cfg)?, out.as_deref())
        }
        BenchCommand::App { .. } => {
            let results = bench
                .apps
                .iter()
                .map(|name| {
                    let c: AppCircuit = name.parse()?;
                    Ok((c.name(), app_benchmark(c, &AppNoise::depolarizing(epg))?))
                })
                .collect::<Result<std::collections::BTreeMap<_, _>>>()?;
            write_json(&results, out.as_deref())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::GenDevice { cells, out } => {
            if let Some((x, y)) = cells {
                cfg.device.lattice = HeavyHexConfig::new(x, y);
            }
            cfg.device.snapshot = None;
            cfg.validate()?;
            let snapshot = stage_device(&cfg)?;
            save_snapshot(&snapshot, &out)?;
            eprintln!("{} qubits, {} couplers -> {}", snapshot.graph.num_nodes, snapshot.graph.edges.len(), out.display());
        }
        Command::Profile { snapshot, policy, n, out } => {
            if let Some(p) = policy {
                cfg.policy.kind = p;
            }
            if let Some(n) = n {
                cfg.policy.n = n;
            }
            let cfg = with_snapshot(cfg, &snapshot);
            cfg.validate()?;
            let snap = load_snapshot(&snapshot)?;
            let profile = stage_profile(&cfg, &snap)?;
            write_json(&profile, Some(&out))?;
            eprintln!("{:?}", profile.assignment.counts());
        }
        Command::Schedule { snapshot, assignment, cap, out } => {
            if let Some(c) = cap {
                cfg.schedule.cap = matches!(c, Switch::On);
            }
            let snap = load_snapshot(&snapshot)?;
            let a = read_assignment(&assignment)?;
            let sched = stage_schedule(&cfg, &snap, &a)?;
            write_json(&sched, Some(&out))?;
            let est = if sched.cap { sched.capped_estimate } else { sched.ideal_estimate };
            eprintln!("{} subgraphs, {} batches, speedup {:.2}", sched.subgraphs.len(), sched.active().batches.len(), est.speedup);
        }
        Command::Calibrate { snapshot, schedule, out } => {
            let cfg = with_snapshot(cfg, &snapshot);
            cfg.validate()?;
            let snap = load_snapshot(&snapshot)?;
            let sched: ScheduleArtifact = read_json(&schedule)?;
            let cal = stage_calibrate(&cfg, &snap, &sched)?;
            write_json(&cal, Some(&out))?;
            let ok = cal.edges.iter().filter(|o| o.met_escalated()).count();
            eprintln!("{ok}/{} edges within the escalated threshold", cal.edges.len());
        }
        Command::Bench { kind } => run_bench(cfg, kind)?,
        Command::Report { run_dir } => {
            for p in report_render(&run_dir)? {
                println!("{}", p.display());
            }
        }
        Command::Pipeline { out, from, schedule_only, cap, policy } => {
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if schedule_only {
                cfg.mode = RunMode::ScheduleOnly;
            }
            if let Some(c) = cap {
                cfg.schedule.cap = matches!(c, Switch::On);
            }
            if let Some(p) = policy {
                cfg.policy.kind = p;
            }
            let report = run_pipeline_from(&cfg, from)?;
            for s in &report.stages {
                eprintln!("{:<10} {:?}", s.stage.name(), s.status);
            }
            if let Some(c) = &report.calibration {
                eprintln!("escalated {}/{}, target {}/{}", c.met_escalated, c.edges, c.met_target, c.edges);
            }
            if !report.success {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
