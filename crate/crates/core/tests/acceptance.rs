// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the report prints on every `cargo test`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use paircal_core::bench::{distribution_compare, irb_gate_error, layer_fidelity, qv_pass, qv_threshold_passes, IrbConfig, IrbNoise, QvNoise};
use paircal_core::calibration::{calibrate_direct, phase_sweep, CalibrationOptions, LinearResponseModel, PhaseSweepConfig, PhysicalCalibration};
use paircal_core::device::{eagle_127, line, CouplingGraph, DeviceSnapshot, QubitProps};
use paircal_core::dynamics::PairModel;
use paircal_core::pipeline::{
    run_pipeline, stage_calibrate, stage_device, stage_profile, stage_schedule, uniform_assignment, BenchSettings, DeviceSettings,
    PipelineConfig, CANONICAL_REPORT,
};
use paircal_core::policy::{
    birch_cluster, feature_vectors, leakage_pair, policy_hardware, position_classes, BirchConfig, EdgeAssignment, FeatureVector,
    HardwareRules, PolicyAssignment, PolicyKind, Provenance, Rule, WindowSweepConfig,
};
use paircal_core::pulse::{drag_transform, gaussian_square, multi_derivative_cr, ControlDetunings, CrParams, PulseConfig, WaveformFamily, ENDPOINT_TOLERANCE};
use paircal_core::scheduler::{
    build_subgraphs, estimate_runtime, split_batches, verify_subgraph, Batch, BatchPolicy, CalibrationSchedule, DurationModel,
};
use paircal_core::tomography::{generator_from, pauli_project, tomography_from_source, HamiltonianCoefficients, SyntheticSource, TomographyConfig};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ac1() -> Check {
    let g = eagle_127();
    let t0 = Instant::now();
    let subs = build_subgraphs(&g);
    let secs = t0.elapsed().as_secs_f64();
    let max = subs.iter().map(|s| s.len()).max().unwrap_or(0);
    for s in &subs {
        verify_subgraph(&g, &s.edges).map_err(|v| format!("subgraph {} invalid: {v:?}", s.index))?;
    }
    ensure(subs.len() <= 5, format!("{} subgraphs", subs.len()))?;
    ensure(max == 38, format!("max size {max}"))?;
    ensure(secs < 5.0, format!("{secs:.2} s"))?;
    Ok(format!("{} subgraphs, max {max}, {:.3} s", subs.len(), secs))
}

fn ac2() -> Check {
    let mut worst = 0i64;
    for seed in 0..50 {
        let g = common::random_graph(seed, 12);
        let subs = build_subgraphs(&g);
        for s in &subs {
            verify_subgraph(&g, &s.edges).map_err(|v| format!("graph {seed}: {v:?}"))?;
        }
        let covered: usize = subs.iter().map(|s| s.len()).sum();
        ensure(covered == g.edges.len(), format!("graph {seed}: {covered} of {} edges covered", g.edges.len()))?;
        let opt = common::exhaustive_min_partition(&g);
        let gap = subs.len() as i64 - opt as i64;
        ensure(gap <= 1, format!("graph {seed}: greedy {} vs optimum {opt}", subs.len()))?;
        worst = worst.max(gap);
    }
    Ok(format!("50 graphs, worst gap +{worst}"))
}

fn ac3() -> Check {
    let base = gaussian_square(Complex64::new(0.4, 0.0), 10.0, 180.0, 230.0, 0.5).map_err(|e| e.to_string())?;
    let d = ControlDetunings::from_pair(100.0, -330.0);
    let out = multi_derivative_cr(&base, d.d10, d.d21, d.d20).map_err(|e| e.to_string())?;
    let ratio = out.endpoint_ratio();
    ensure(ratio < ENDPOINT_TOLERANCE, format!("endpoint ratio {ratio:e}"))?;
    let seq = drag_transform(&base, d.d20, 2)
        .and_then(|w| drag_transform(&w, d.d10, 1))
        .and_then(|w| drag_transform(&w, d.d21, 1))
        .map_err(|e| e.to_string())?;
    let diff = out.samples.iter().zip(&seq.samples).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    ensure(diff < 1e-12, format!("composition differs by {diff:e}"))?;
    Ok(format!("endpoint ratio {ratio:.1e}, composition diff {diff:.1e}"))
}

fn ac4() -> Check {
    let cfg = WindowSweepConfig::default();
    let t0 = Instant::now();
    let (plain, multi) = leakage_pair(&cfg, 120.0).map_err(|e| e.to_string())?;
    let inside = plain / multi;
    let band = 0.5 * cfg.control_anharmonicity.abs();
    let hw = HardwareRules::default().band_half_width;
    // Δ20 vanishes at the band centre, so the grid steps around it.
    let grid: Vec<f64> = (0..=40).map(|k| band - hw + 0.25 * k as f64).filter(|d| (d - band).abs() > 1e-9).collect();
    let mut collapsed = Vec::new();
    let mut min = (f64::INFINITY, 0.0);
    for &d in &grid {
        let (p, m) = leakage_pair(&cfg, d).map_err(|e| e.to_string())?;
        if p / m < min.0 {
            min = (p / m, d);
        }
        if p / m < 2.0 {
            collapsed.push(d);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(inside >= 10.0, format!("ratio {inside:.2} at 120 MHz"))?;
    ensure(!collapsed.is_empty(), format!("smallest in-band ratio {:.2} at {} MHz", min.0, min.1))?;
    ensure(secs < 120.0, format!("{secs:.1} s"))?;
    Ok(format!(
        "leakage ratio {inside:.1}× at 120 MHz; in band below 2× at {} of {} points ({:.1}–{:.1} MHz), minimum {:.2}× at {} MHz",
        collapsed.len(),
        grid.len(),
        collapsed[0],
        collapsed[collapsed.len() - 1],
        min.0,
        min.1
    ))
}

fn ac5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let v: [f64; 7] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
        let h = generator_from(&HamiltonianCoefficients::from_values(v));
        let est = tomography_from_source(&SyntheticSource { generator: h.clone() }, &TomographyConfig::default()).map_err(|e| format!("generator {i}: {e}"))?;
        let truth = pauli_project(&h).map_err(|e| e.to_string())?;
        worst = worst.max(est.max_difference(&truth));
    }
    ensure(worst < 0.005, format!("worst coefficient error {worst:.4} MHz"))?;
    Ok(format!("worst coefficient error {worst:.2e} MHz"))
}

fn ac6() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = PipelineConfig { seed: 7, out_dir: dir.path().to_path_buf(), bench: BenchSettings::none(), ..Default::default() };
    let run = || -> paircal_core::error::Result<_> {
        let snap = stage_device(&cfg)?;
        let profile = stage_profile(&cfg, &snap)?;
        let sched = stage_schedule(&cfg, &snap, &profile.assignment)?;
        stage_calibrate(&cfg, &snap, &sched)
    };
    let cal = run().map_err(|e| e.to_string())?;
    let n = cal.edges.len();
    let escalated = cal.edges.iter().filter(|o| o.result.as_ref().is_some_and(|r| r.met_escalated && r.rounds <= 4)).count();
    let target = cal.edges.iter().filter(|o| o.result.as_ref().is_some_and(|r| r.met_target)).count();
    ensure(n == 144, format!("{n} edges"))?;
    ensure(escalated as f64 >= 0.99 * n as f64, format!("{escalated}/{n} within 0.3 MHz by round 4"))?;
    ensure(target as f64 >= 0.80 * n as f64, format!("{target}/{n} within 0.015 MHz"))?;
    Ok(format!("{escalated}/{n} escalated within 4 rounds, {target}/{n} at target"))
}

fn ac7() -> Check {
    let m = LinearResponseModel { stark_phase: 0.3, ..Default::default() };
    let cfg = PhaseSweepConfig::default();
    let s = phase_sweep(&m, &CrParams::default(), &cfg).map_err(|e| e.to_string())?;
    let half_step = PI / cfg.grid_points as f64;
    let err = (s.phi + 0.3).abs();
    ensure(err < half_step, format!("phase error {err:.4} rad vs half step {half_step:.4}"))?;
    let model = PairModel::ideal(100.0, 3.0, -330.0, -330.0, 100.0).map_err(|e| e.to_string())?;
    let cal = PhysicalCalibration::new(model, PulseConfig::default()).map_err(|e| e.to_string())?;
    let r = calibrate_direct((0, 1), &cal, &CalibrationOptions::default()).map_err(|e| e.to_string())?;
    let p = r.verification.unwrap_or(0.0);
    ensure(p >= 0.99, format!("verification return probability {p:.4}"))?;
    Ok(format!("phase error {err:.1e} rad (half step {half_step:.3}), verification {p:.4}"))
}

fn fixture(f_control: f64, t2_target: f64) -> DeviceSnapshot {
    let q = |f: f64, t2: f64| QubitProps { frequency: f, anharmonicity: -330.0, t1: 250.0, t2, sq_gate_error: 2e-4 };
    DeviceSnapshot {
        graph: line(5).unwrap(),
        qubits: vec![q(f_control, 172.0), q(4.9, t2_target), q(4.8, 172.0), q(4.9, 172.0), q(4.8, 172.0)],
        label: "fixture".into(),
        seed: 0,
    }
}

fn inherited_base(snap: &DeviceSnapshot, family: WaveformFamily) -> PolicyAssignment {
    let edges = (0..snap.graph.edges.len())
        .map(|i| {
            let (control, target) = paircal_core::device::oriented_edge(snap, i);
            EdgeAssignment { edge_index: i, control, target, family, provenance: Provenance::PositionClass(0), group: 0 }
        })
        .collect();
    PolicyAssignment { policy: PolicyKind::Topology, edges, representatives: vec![0], standardizer: None, degenerate: false }
}

fn nearest(v: &FeatureVector, centroids: &[[f64; 3]]) -> usize {
    let mut best = 0;
    for k in 1..centroids.len() {
        if v.dist2(&centroids[k]) < v.dist2(&centroids[best]) {
            best = k;
        }
    }
    best
}

fn ac8() -> Check {
    let rules = HardwareRules::default();
    let fire = |f: f64, t2: f64| -> std::result::Result<(WaveformFamily, Provenance), String> {
        let snap = fixture(f, t2);
        let a = policy_hardware(&snap, &rules, &inherited_base(&snap, WaveformFamily::MultiDerivEchoedCR)).map_err(|e| e.to_string())?;
        Ok((a.edges[0].family, a.edges[0].provenance))
    };
    let short = fire(5.0, 82.99)?;
    ensure(short == (WaveformFamily::DirectCR, Provenance::Rule(Rule::ShortT2)), format!("short T2 gave {short:?}"))?;
    let out = fire(4.9 + (rules.window_hi + 30.0) * 1e-3, 172.0)?;
    ensure(out == (WaveformFamily::EchoedCR, Provenance::Rule(Rule::OutsideWindow)), format!("out-of-window gave {out:?}"))?;
    let healthy = fire(5.0, 172.0)?;
    ensure(healthy == (WaveformFamily::MultiDerivEchoedCR, Provenance::Rule(Rule::Inherited)), format!("healthy gave {healthy:?}"))?;

    let snap = paircal_core::device::sample_device(&eagle_127(), 7, &Default::default()).map_err(|e| e.to_string())?;
    let (device_vectors, _) = feature_vectors(&snap).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let blobs: Vec<FeatureVector> = (0..7)
        .flat_map(|k| {
            let centre = [10.0 * k as f64, -5.0 * k as f64, 3.0 * (k % 2) as f64];
            (0..15).map(|_| FeatureVector(std::array::from_fn(|d| centre[d] + rng.random_range(-0.5..0.5)))).collect::<Vec<_>>()
        })
        .collect();
    for (name, vectors) in [("device", &device_vectors), ("blobs", &blobs)] {
        for n in [3, 5, 7] {
            let c = birch_cluster(vectors, n, &BirchConfig::default()).map_err(|e| e.to_string())?;
            let used: BTreeSet<usize> = c.labels.iter().copied().collect();
            ensure(c.centroids.len() == n && used.len() == n, format!("{name}: {} clusters for n={n}", used.len()))?;
            for (v, &l) in vectors.iter().zip(&c.labels) {
                ensure(nearest(v, &c.centroids) == l, format!("{name}: n={n} label differs from nearest centroid"))?;
            }
        }
    }
    let classes: BTreeSet<usize> = position_classes(&snap.graph).map_err(|e| e.to_string())?.into_iter().collect();
    ensure(classes.len() <= 12, format!("{} position classes", classes.len()))?;
    Ok(format!("three rule firings, Birch n=3/5/7 exact on two data sets, {} position classes", classes.len()))
}

fn qv_reference(n_h: u64, n_c: u64, n_s: u64) -> bool {
    let r = |x: u64| BigRational::from_integer(BigInt::from(x));
    let lhs = r(n_h) - r(2) * r(n_c) * r(n_s) / r(3);
    if lhs <= r(0) {
        return false;
    }
    lhs.clone() * lhs > r(4) * r(n_h) * (r(n_s) - r(n_h) / r(n_c))
}

fn ac9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut boundary = 0;
    for i in 0..1000 {
        let n_c = rng.random_range(1..=300u64);
        let n_s = rng.random_range(1..=1000u64);
        let total = n_c * n_s;
        let n_h = match i % 3 {
            0 => {
                boundary += 1;
                (2 * total).div_ceil(3)
            }
            1 => rng.random_range((2 * total / 3)..=total),
            _ => rng.random_range(0..=total),
        };
        let got = qv_threshold_passes(n_h, n_c, n_s).map_err(|e| e.to_string())?;
        ensure(got == qv_reference(n_h, n_c, n_s), format!("mismatch at n_h={n_h} n_c={n_c} n_s={n_s}"))?;
    }
    for d in [4, 5] {
        let r = qv_pass(d, 100, 100, &QvNoise::noiseless(), 3).map_err(|e| e.to_string())?;
        ensure(r.pass, format!("noiseless d={d} failed: h={:.3}", r.heavy_output_probability))?;
    }
    let noisy = qv_pass(4, 100, 100, &QvNoise::depolarizing(0.05), 3).map_err(|e| e.to_string())?;
    ensure(!noisy.pass, format!("EPG 0.05 passed at d=4: h={:.3}", noisy.heavy_output_probability))?;
    Ok(format!("1000 triples ({boundary} on the boundary) exact, d=4,5 pass noiseless, EPG 0.05 h={:.3} fails", noisy.heavy_output_probability))
}

fn ac10() -> Check {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    for (epg, tol) in [(0.006, 0.20), (0.0013, 0.25)] {
        let r = irb_gate_error(&IrbNoise::from_gate_epg(epg).map_err(|e| e.to_string())?, &IrbConfig { seed: 21, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let rel = (r.mean - epg).abs() / epg;
        ensure(rel < tol, format!("{epg}: recovered {:.3e} ({:.1}% off)", r.mean, 100.0 * rel))?;
        parts.push(format!("{epg} -> {:.3e}", r.mean));
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 300.0, format!("{secs:.0} s"))?;
    Ok(format!("{} in {secs:.1} s", parts.join(", ")))
}

fn ac11() -> Check {
    let r = layer_fidelity(&[vec![(0, 1, 0.999)]], 2).map_err(|e| e.to_string())?;
    let exact = 1.0 - 0.9990625f64.sqrt();
    ensure((r.lf - 0.9990625).abs() < 1e-9, format!("LF {}", r.lf))?;
    ensure((r.eplg - exact).abs() < 1e-9, format!("EPLG {} vs {exact}", r.eplg))?;
    ensure((r.eplg - 4.69e-4).abs() < 5e-7, format!("EPLG {:.4e} does not round to 4.69e-4", r.eplg))?;
    let r99 = layer_fidelity(&[vec![(0, 1, 0.99)]], 2).map_err(|e| e.to_string())?;
    ensure((r99.lf - 0.990625).abs() < 1e-9, format!("F(0.99) = {}", r99.lf))?;
    let dist = |p: &[(&str, f64)]| -> BTreeMap<String, f64> { p.iter().map(|(k, v)| (k.to_string(), *v)).collect() };
    let c = distribution_compare(&dist(&[("0", 1.0)]), &dist(&[("0", 0.5), ("1", 0.5)])).map_err(|e| e.to_string())?;
    ensure((c.e - 0.5).abs() < 1e-9 && (c.f - 0.5).abs() < 1e-9, format!("E={} F={}", c.e, c.f))?;
    Ok(format!("EPLG {:.6e} (α = 0.999), E = {} F = {}", r.eplg, c.e, c.f))
}

fn ac12() -> Check {
    let model = DurationModel::default();
    let check = |g: &CouplingGraph, a: &PolicyAssignment| -> std::result::Result<(f64, f64), String> {
        let subs = build_subgraphs(g);
        let mut speed = [0.0; 2];
        for (k, p) in [BatchPolicy::CAPPED, BatchPolicy::IDEAL].into_iter().enumerate() {
            let mut s = split_batches(g, &subs, a, p).map_err(|e| e.to_string())?;
            let est = estimate_runtime(&mut s, &model);
            ensure(est.parallel <= est.sequential + 1e-9, format!("parallel {} > sequential {}", est.parallel, est.sequential))?;
            speed[k] = est.speedup;
        }
        Ok((speed[0], speed[1]))
    };
    for seed in 0..30 {
        let g = common::random_graph(seed, 40);
        let snap = paircal_core::device::sample_device(&g, seed, &Default::default()).map_err(|e| e.to_string())?;
        let a = uniform_assignment(&snap, WaveformFamily::ALL[seed as usize % 3]);
        check(&g, &a)?;
    }
    let snap = paircal_core::device::sample_device(&eagle_127(), 7, &Default::default()).map_err(|e| e.to_string())?;
    let a = policy_hardware(&snap, &HardwareRules::default(), &uniform_assignment(&snap, WaveformFamily::MultiDerivEchoedCR))
        .map_err(|e| e.to_string())?;
    let (capped, ideal) = check(&snap.graph, &a)?;
    ensure(capped < ideal, format!("capped {capped:.2} vs ideal {ideal:.2}"))?;

    let singles = CalibrationSchedule {
        batches: a
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| Batch {
                subgraph: i,
                edges: vec![e.edge_index],
                families: vec![e.family],
                direct: e.family == WaveformFamily::DirectCR,
                composition: BTreeMap::from([(e.family, 1)]),
                estimated_duration: 0.0,
            })
            .collect(),
        policy: BatchPolicy { cap: Some(1), split_above: 0 },
    };
    let mut singles = singles;
    let one = estimate_runtime(&mut singles, &model);
    ensure((one.speedup - 1.0).abs() < 1e-12, format!("single-edge batches speedup {}", one.speedup))?;
    Ok(format!("31 devices parallel ≤ sequential, 127-qubit speedup capped {capped:.2} < ideal {ideal:.2}, singles {:.1}", one.speedup))
}

fn ac13() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = |dir: &std::path::Path| PipelineConfig {
        seed: 13,
        out_dir: dir.to_path_buf(),
        device: DeviceSettings { lattice: paircal_core::device::HeavyHexConfig::new(1, 1), ..Default::default() },
        bench: BenchSettings {
            irb_edges: 1,
            irb: IrbConfig { repeats: 2, sequences_per_length: 4, shots: 200, ..Default::default() },
            qv_max_width: 3,
            qv_circuits: 20,
            qv_shots: 50,
            eplg_qubits: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let ra = run_pipeline(&cfg(a.path())).map_err(|e| e.to_string())?;
    run_pipeline(&cfg(b.path())).map_err(|e| e.to_string())?;
    ensure(ra.failed_stage().is_none(), format!("stage failed: {:?}", ra.failed_stage()))?;
    let read = |d: &std::path::Path| std::fs::read(d.join(CANONICAL_REPORT)).map_err(|e| e.to_string());
    let (x, y) = (read(a.path())?, read(b.path())?);
    ensure(x == y, "canonical reports differ")?;
    Ok(format!("{} byte canonical report identical across two runs", x.len()))
}

fn main() {
    let checks: [(&str, fn() -> Check); 13] = [
        ("scheduler structure on the 127-qubit device", ac1),
        ("scheduler within +1 of exhaustive optimum", ac2),
        ("multi-derivative envelope endpoints and composition", ac3),
        ("DRAG leakage suppression and band collapse", ac4),
        ("tomography matches Pauli projection", ac5),
        ("calibration convergence on the 127-qubit device", ac6),
        ("direct CR phase calibration and verification", ac7),
        ("policy rules, Birch clustering, position classes", ac8),
        ("QV threshold exactness and simulated QV", ac9),
        ("IRB recovers injected error", ac10),
        ("EPLG and distribution worked values", ac11),
        ("runtime estimator properties", ac12),
        ("pipeline determinism", ac13),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let id = format!("AC{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| x.eq_ignore_ascii_case(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id:<5} PASS  {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("{id:<5} FAIL  {name}: {why} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
