// SPDX-License-Identifier: Apache-2.0

//! CSV tables and SVG plots from a finished run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{read_artifact, BenchArtifact, RunReport, Stage, CANONICAL_REPORT};
use crate::error::{Error, Result};

/// Artifacts that must exist before rendering.
const REQUIRED: [&str; 4] = ["device.json", "profile.json", "schedule.json", CANONICAL_REPORT];

/// Every file a render can produce, relative to `<run>/render`.
pub const RENDERED_FILES: [&str; 11] = [
    "edge_errors.csv",
    "edge_errors.svg",
    "policy_comparison.csv",
    "policy_comparison.svg",
    "calibration_time.csv",
    "calibration_time.svg",
    "irb.csv",
    "irb_decay.svg",
    "qv.csv",
    "eplg.csv",
    "apps.csv",
];

#[derive(Serialize)]
struct EdgeRow<'a> {
    edge_index: usize,
    control: usize,
    target: usize,
    family: &'a str,
    rounds: Option<usize>,
    max_error_mhz: Option<f64>,
    met_target: bool,
    met_escalated: bool,
    epg: Option<f64>,
}

#[derive(Serialize)]
struct PolicyRow<'a> {
    policy: &'a str,
    echoed_cr: usize,
    multi_deriv_echoed_cr: usize,
    direct_cr: usize,
    predicted_mean_epg: f64,
    total_cost_weight: f64,
}

#[derive(Serialize)]
struct TimeRow<'a> {
    mode: &'a str,
    seconds: f64,
    speedup: f64,
}

#[derive(Serialize)]
struct IrbRow<'a> {
    edge_index: usize,
    repeat: usize,
    sequence: &'a str,
    length: usize,
    survival: f64,
}

#[derive(Serialize)]
struct QvRow {
    d: usize,
    circuits: u64,
    shots: u64,
    heavy_outputs: u64,
    heavy_output_probability: f64,
    lhs: f64,
    pass: bool,
}

#[derive(Serialize)]
struct EplgRow {
    layer: usize,
    a: usize,
    b: usize,
    alpha: f64,
    process_fidelity: f64,
}

#[derive(Serialize)]
struct AppRow<'a> {
    circuit: &'a str,
    qubits: String,
    e: f64,
    f: f64,
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse { context: path.display().to_string(), message: e.to_string() }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path).map_err(|e| csv_error(path, e))?;
    if rows.is_empty() {
        w.write_record(header).map_err(|e| csv_error(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- svg

const W: f64 = 720.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - PAD, W - 20.0, H - PAD);
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="30" x2="{PAD}" y2="{}" stroke="black"/>"#, H - PAD);
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_axis(s: &mut String, top: f64, label: &str) {
    for k in 0..=4 {
        let v = top * k as f64 / 4.0;
        let y = H - PAD - (H - PAD - 30.0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3e}</text>"#, PAD - 4.0, y + 4.0, v);
    }
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, escape(label));
}

fn legend(s: &mut String, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let y = 36.0 + 14.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#, W - 200.0, y - 9.0, COLOURS[i % COLOURS.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - 186.0, y, escape(n));
    }
}

/// Grouped bars; `series[k][i]` is the height of series `k` in group `i`.
fn bar_chart(title: &str, ylabel: &str, groups: &[String], names: &[String], series: &[Vec<f64>], label_every: usize) -> String {
    let mut s = svg_open(title);
    let top = series.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0, f64::max).max(f64::MIN_POSITIVE) * 1.1;
    y_axis(&mut s, top, ylabel);
    let slot = (W - 20.0 - PAD) / groups.len().max(1) as f64;
    let bw = slot * 0.8 / series.len().max(1) as f64;
    for (i, g) in groups.iter().enumerate() {
        let x0 = PAD + slot * i as f64 + slot * 0.1;
        for (k, ser) in series.iter().enumerate() {
            let v = ser.get(i).copied().filter(|v| v.is_finite()).unwrap_or(0.0);
            let h = (H - PAD - 30.0) * v / top;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                x0 + bw * k as f64,
                H - PAD - h,
                bw,
                h,
                COLOURS[k % COLOURS.len()]
            );
        }
        if label_every > 0 && i % label_every == 0 {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x0 + slot * 0.4, H - PAD + 14.0, escape(g));
        }
    }
    if names.len() > 1 {
        legend(&mut s, names);
    }
    s.push_str("</svg>\n");
    s
}

fn line_chart(title: &str, xlabel: &str, ylabel: &str, names: &[String], series: &[Vec<(f64, f64)>]) -> String {
    let mut s = svg_open(title);
    let xmax = series.iter().flatten().map(|p| p.0).fold(0.0, f64::max).max(1.0);
    let ymax = 1.0;
    y_axis(&mut s, ymax, ylabel);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 20.0, escape(xlabel));
    for k in 0..=4 {
        let v = xmax * k as f64 / 4.0;
        let x = PAD + (W - 20.0 - PAD) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{v:.0}</text>"#, H - PAD + 14.0);
    }
    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", PAD + (W - 20.0 - PAD) * x / xmax, H - PAD - (H - PAD - 30.0) * y.clamp(0.0, ymax) / ymax))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, COLOURS[k % COLOURS.len()], pts.join(" "));
    }
    legend(&mut s, names);
    s.push_str("</svg>\n");
    s
}

// ---------------------------------------------------------------- render

/// Writes tables and plots into `<run_dir>/render` and returns their paths.
pub fn report_render(run_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = run_dir.as_ref();
    let missing: Vec<String> = REQUIRED.iter().filter(|f| !dir.join(f).exists()).map(|f| f.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts { dir: dir.display().to_string(), missing });
    }
    let report: RunReport = read_artifact(dir, CANONICAL_REPORT)?;
    let out = dir.join("render");
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    let mut emit_text = |name: &str, body: String| -> Result<()> {
        let p = out.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };

    let edge_rows: Vec<EdgeRow> = report
        .edges
        .iter()
        .map(|e| EdgeRow {
            edge_index: e.edge_index,
            control: e.control,
            target: e.target,
            family: e.family.name(),
            rounds: e.rounds,
            max_error_mhz: e.max_error,
            met_target: e.met_target,
            met_escalated: e.met_escalated,
            epg: e.epg,
        })
        .collect();
    write_csv(&out.join("edge_errors.csv"), &edge_rows, &[])?;
    let labels: Vec<String> = report.edges.iter().map(|e| format!("{}-{}", e.control, e.target)).collect();
    let epg: Vec<f64> = report.edges.iter().map(|e| e.epg.unwrap_or(f64::NAN)).collect();
    let every = (labels.len() / 12).max(1);
    emit_text("edge_errors.svg", bar_chart("Error per gate by edge", "EPG", &labels, &["EPG".into()], &[epg], every))?;

    let policy_rows: Vec<PolicyRow> = report
        .policies
        .iter()
        .map(|p| {
            let c = |f| p.counts.get(&f).copied().unwrap_or(0);
            PolicyRow {
                policy: policy_name(p.policy),
                echoed_cr: c(crate::pulse::WaveformFamily::EchoedCR),
                multi_deriv_echoed_cr: c(crate::pulse::WaveformFamily::MultiDerivEchoedCR),
                direct_cr: c(crate::pulse::WaveformFamily::DirectCR),
                predicted_mean_epg: p.predicted_mean_epg,
                total_cost_weight: p.total_cost_weight,
            }
        })
        .collect();
    write_csv(
        &out.join("policy_comparison.csv"),
        &policy_rows,
        &["policy", "echoed_cr", "multi_deriv_echoed_cr", "direct_cr", "predicted_mean_epg", "total_cost_weight"],
    )?;
    let groups: Vec<String> = policy_rows.iter().map(|p| p.policy.to_string()).collect();
    let fams = ["EchoedCR", "MultiDerivEchoedCR", "DirectCR"].map(String::from);
    let counts = vec![
        policy_rows.iter().map(|p| p.echoed_cr as f64).collect(),
        policy_rows.iter().map(|p| p.multi_deriv_echoed_cr as f64).collect(),
        policy_rows.iter().map(|p| p.direct_cr as f64).collect(),
    ];
    emit_text("policy_comparison.svg", bar_chart("Family counts per policy", "edges", &groups, &fams, &counts, 1))?;

    let mut time_rows = Vec::new();
    if let Some(s) = &report.schedule {
        time_rows.push(TimeRow { mode: "sequential", seconds: s.capped.sequential, speedup: 1.0 });
        time_rows.push(TimeRow { mode: "capped", seconds: s.capped.parallel, speedup: s.capped.speedup });
        time_rows.push(TimeRow { mode: "ideal", seconds: s.ideal.parallel, speedup: s.ideal.speedup });
    }
    write_csv(&out.join("calibration_time.csv"), &time_rows, &["mode", "seconds", "speedup"])?;
    let modes: Vec<String> = time_rows.iter().map(|t| t.mode.to_string()).collect();
    let secs = vec![time_rows.iter().map(|t| t.seconds).collect()];
    emit_text("calibration_time.svg", bar_chart("Calibration time", "seconds", &modes, &["time".into()], &secs, 1))?;

    let bench_path = dir.join(Stage::Bench.artifact());
    let bench: BenchArtifact = if bench_path.exists() { read_artifact(dir, Stage::Bench.artifact())? } else { BenchArtifact::default() };

    let mut irb_rows = Vec::new();
    let mut names = Vec::new();
    let mut curves = Vec::new();
    for i in &bench.irb {
        for (r, rep) in i.result.repeats.iter().enumerate() {
            for (kind, curve) in [("reference", &rep.reference_curve), ("interleaved", &rep.interleaved_curve)] {
                for (&m, &p) in i.result.lengths.iter().zip(curve) {
                    irb_rows.push(IrbRow { edge_index: i.edge_index, repeat: r, sequence: kind, length: m, survival: p });
                }
            }
        }
        for kind in ["reference", "interleaved"] {
            let n = i.result.repeats.len().max(1) as f64;
            let mean: Vec<(f64, f64)> = i
                .result
                .lengths
                .iter()
                .enumerate()
                .map(|(k, &m)| {
                    let s: f64 = i.result.repeats.iter().map(|rep| if kind == "reference" { rep.reference_curve[k] } else { rep.interleaved_curve[k] }).sum();
                    (m as f64, s / n)
                })
                .collect();
            names.push(format!("edge {} {kind}", i.edge_index));
            curves.push(mean);
        }
    }
    write_csv(&out.join("irb.csv"), &irb_rows, &["edge_index", "repeat", "sequence", "length", "survival"])?;
    emit_text("irb_decay.svg", line_chart("IRB decay", "sequence length", "survival probability", &names, &curves))?;

    let qv_rows: Vec<QvRow> = bench
        .qv
        .iter()
        .flat_map(|q| q.trials.iter())
        .map(|t| QvRow {
            d: t.d,
            circuits: t.n_c,
            shots: t.n_s,
            heavy_outputs: t.n_h,
            heavy_output_probability: t.heavy_output_probability,
            lhs: t.lhs,
            pass: t.pass,
        })
        .collect();
    write_csv(&out.join("qv.csv"), &qv_rows, &["d", "circuits", "shots", "heavy_outputs", "heavy_output_probability", "lhs", "pass"])?;

    let eplg_rows: Vec<EplgRow> = bench
        .eplg
        .iter()
        .flat_map(|e| e.result.layers.iter().enumerate())
        .flat_map(|(l, layer)| layer.iter().map(move |p| EplgRow { layer: l, a: p.a, b: p.b, alpha: p.alpha, process_fidelity: p.fidelity }))
        .collect();
    write_csv(&out.join("eplg.csv"), &eplg_rows, &["layer", "a", "b", "alpha", "process_fidelity"])?;

    let app_rows: Vec<AppRow> = bench
        .apps
        .iter()
        .map(|a| AppRow {
            circuit: &a.name,
            qubits: a.qubits.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" "),
            e: a.comparison.e,
            f: a.comparison.f,
        })
        .collect();
    write_csv(&out.join("apps.csv"), &app_rows, &["circuit", "qubits", "e", "f"])?;

    for f in RENDERED_FILES.iter().filter(|f| f.ends_with(".csv")) {
        written.push(out.join(f));
    }
    written.sort();
    Ok(written)
}

fn policy_name(p: crate::policy::PolicyKind) -> &'static str {
    match p {
        crate::policy::PolicyKind::Bruteforce => "bruteforce",
        crate::policy::PolicyKind::Topology => "topology",
        crate::policy::PolicyKind::Hardware => "hardware",
    }
}
