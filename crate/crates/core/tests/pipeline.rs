// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::time::Instant;

use paircal_core::device::HeavyHexConfig;
use paircal_core::error::Error;
use paircal_core::pipeline::{
    report_render, run_pipeline, run_pipeline_from, BenchSettings, DeviceSettings, PipelineConfig, RunMode, Stage, StageStatus,
    CANONICAL_REPORT, RENDERED_FILES,
};

fn tiny(dir: &Path, seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        out_dir: dir.to_path_buf(),
        device: DeviceSettings { lattice: HeavyHexConfig::new(1, 1), ..Default::default() },
        bench: BenchSettings::none(),
        ..Default::default()
    }
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn tiny_device_smoke_run() {
    let tmp = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let report = run_pipeline(&tiny(tmp.path(), 3)).unwrap();
    assert!(t0.elapsed().as_secs_f64() < 60.0, "{:?}", t0.elapsed());
    assert!(report.failed_stage().is_none(), "{:?}", report.stages);
    assert_eq!(report.edges.len(), report.num_edges);
    for e in &report.edges {
        assert!(e.met_escalated || e.failure.is_some(), "edge {} neither calibrated nor flagged", e.edge_index);
    }
    for s in Stage::ALL {
        assert!(tmp.path().join(s.artifact()).exists(), "{}", s.artifact());
    }
    assert!(report.success);
    assert!(report.stages.iter().all(|s| s.wall_clock_s.is_some()));
}

#[test]
fn same_seed_gives_identical_canonical_reports_and_reruns_reproduce_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&tiny(a.path(), 5)).unwrap();
    run_pipeline(&tiny(b.path(), 5)).unwrap();
    for name in ["device.json", "profile.json", "schedule.json", "calibration.json", CANONICAL_REPORT] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }

    let before = read(a.path(), "calibration.json");
    let report = run_pipeline_from(&tiny(a.path(), 5), Stage::Calibrate).unwrap();
    assert_eq!(read(a.path(), "calibration.json"), before);
    assert_eq!(report.stages[0].status, StageStatus::Reused);
    assert_eq!(report.stages[3].status, StageStatus::Ok);

    let c = tempfile::tempdir().unwrap();
    run_pipeline(&tiny(c.path(), 6)).unwrap();
    assert_ne!(read(a.path(), "device.json"), read(c.path(), "device.json"));
}

#[test]
fn rerun_without_inputs_reports_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run_pipeline_from(&tiny(tmp.path(), 1), Stage::Schedule).unwrap_err();
    assert!(matches!(err, Error::MissingArtifacts { .. }), "{err}");
}

#[test]
fn eagle_schedule_only_needs_no_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { seed: 7, out_dir: tmp.path().to_path_buf(), mode: RunMode::ScheduleOnly, ..Default::default() };
    let t0 = Instant::now();
    let report = run_pipeline(&cfg).unwrap();
    assert!(t0.elapsed().as_secs_f64() < 10.0);
    let s = report.schedule.as_ref().unwrap();
    assert_eq!(s.subgraphs, 5);
    assert_eq!(s.max_subgraph, 38);
    assert!(report.calibration.is_none());
    assert!(!tmp.path().join("calibration.json").exists());
    assert!(report.success);
    assert_eq!(report.stages[3].status, StageStatus::Skipped);
}

#[test]
fn failing_stage_is_recorded_and_earlier_artifacts_survive() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path(), 2);
    cfg.bench.eplg_qubits = 40;
    let report = run_pipeline(&cfg).unwrap();
    let failed = report.failed_stage().unwrap();
    assert_eq!(failed.stage, Stage::Bench);
    assert!(!report.success);
    assert!(tmp.path().join("calibration.json").exists());
    assert!(!tmp.path().join("bench.json").exists());
    assert!(tmp.path().join("report.json").exists());
}

#[test]
fn render_needs_artifacts_and_is_deterministic() {
    let empty = tempfile::tempdir().unwrap();
    match report_render(empty.path()) {
        Err(Error::MissingArtifacts { missing, .. }) => {
            assert!(missing.contains(&"device.json".to_string()));
            assert!(missing.contains(&CANONICAL_REPORT.to_string()));
        }
        other => panic!("expected missing artifacts, got {other:?}"),
    }

    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path(), 4);
    cfg.bench = BenchSettings {
        irb_edges: 1,
        irb: paircal_core::bench::IrbConfig { repeats: 2, sequences_per_length: 3, shots: 200, ..Default::default() },
        qv_max_width: 3,
        qv_circuits: 20,
        qv_shots: 50,
        eplg_qubits: 4,
        ..BenchSettings::default()
    };
    let report = run_pipeline(&cfg).unwrap();
    assert!(report.failed_stage().is_none(), "{:?}", report.stages);
    let bench = report.bench.as_ref().unwrap();
    assert_eq!(bench.irb.len(), 1);
    assert_eq!(bench.apps.len(), 3);
    assert!(bench.eplg.unwrap() > 0.0);

    let first = report_render(tmp.path()).unwrap();
    let render = tmp.path().join("render");
    for f in RENDERED_FILES {
        assert!(render.join(f).exists(), "{f}");
    }
    let snapshot: Vec<String> = first.iter().map(|p| fs::read_to_string(p).unwrap()).collect();
    let second = report_render(tmp.path()).unwrap();
    assert_eq!(first, second);
    let again: Vec<String> = second.iter().map(|p| fs::read_to_string(p).unwrap()).collect();
    assert_eq!(snapshot, again);
    assert!(read(&render, "irb_decay.svg").contains("<polyline"));
}
