// SPDX-License-Identifier: Apache-2.0

//! Iterative CR calibration against a measurement model.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, embed, qutrit_rz, PairModel, DIM, LEVELS};
use crate::error::{invalid, Error, Result};
use crate::linalg::{c, CMat, ONE, TWO_PI, ZERO};
use crate::pulse::{cr_waveforms, echoed_cr_schedule, ControlDetunings, CrParams, PulseConfig, QubitRole, WaveformFamily};
use crate::tomography::{iy_drag_scan, tomography_from_source, HamiltonianCoefficients, PulseSource, TomographyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationThresholds {
    /// MHz.
    pub target: f64,
    /// MHz, accepted once `max_rounds_before_escalation` rounds have passed.
    pub escalated: f64,
    pub max_rounds_before_escalation: usize,
    /// Total round budget.
    pub max_rounds: usize,
}

impl Default for CalibrationThresholds {
    fn default() -> Self {
        Self { target: 0.015, escalated: 0.3, max_rounds_before_escalation: 4, max_rounds: 8 }
    }
}

impl CalibrationThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.target > 0.0 && self.target < self.escalated) {
            return invalid("thresholds must satisfy 0 < target < escalated");
        }
        if self.max_rounds_before_escalation < 1 || self.max_rounds < self.max_rounds_before_escalation {
            return invalid("round limits must satisfy 1 <= before escalation <= total");
        }
        Ok(())
    }
}

/// Coefficient combinations bounded by the thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorTerm {
    Zy,
    Iy,
    Ix,
    /// `ν_IX + ν_ZX`: rotation of the target with the control in |0⟩.
    IxPlusZx,
}

impl ErrorTerm {
    pub fn value(self, c: &HamiltonianCoefficients) -> f64 {
        match self {
            Self::Zy => c.zy.abs(),
            Self::Iy => c.iy.abs(),
            Self::Ix => c.ix.abs(),
            Self::IxPlusZx => (c.ix + c.zx).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DragScanConfig {
    /// Offset of the outer scan points from the current IY-DRAG amplitude.
    pub step: f64,
    /// MHz per unit amplitude.
    pub slope_tolerance: f64,
}

impl Default for DragScanConfig {
    fn default() -> Self {
        Self { step: 0.5, slope_tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseSweepConfig {
    /// Pulse pairs in the sweep sequence.
    pub repetitions: usize,
    pub grid_points: usize,
    /// Lowest acceptable peak return probability.
    pub peak_floor: f64,
}

impl Default for PhaseSweepConfig {
    fn default() -> Self {
        Self { repetitions: 1, grid_points: 64, peak_floor: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    pub thresholds: CalibrationThresholds,
    pub damping: f64,
    pub echoed_terms: Vec<ErrorTerm>,
    pub direct_terms: Vec<ErrorTerm>,
    /// `None` skips the ZZ scan.
    pub drag_scan: Option<DragScanConfig>,
    pub phase: PhaseSweepConfig,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            thresholds: CalibrationThresholds::default(),
            damping: 0.8,
            echoed_terms: vec![ErrorTerm::Zy, ErrorTerm::Iy, ErrorTerm::Ix],
            direct_terms: vec![ErrorTerm::Zy, ErrorTerm::Iy, ErrorTerm::IxPlusZx],
            drag_scan: Some(DragScanConfig::default()),
            phase: PhaseSweepConfig::default(),
        }
    }
}

impl CalibrationOptions {
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return invalid("damping must lie in (0, 1]");
        }
        if self.echoed_terms.is_empty() || self.direct_terms.is_empty() {
            return invalid("error term sets must not be empty");
        }
        if self.phase.repetitions < 1 || self.phase.grid_points < 3 {
            return invalid("phase sweep needs N >= 1 and at least three grid points");
        }
        Ok(())
    }

    pub fn terms(&self, family: WaveformFamily) -> &[ErrorTerm] {
        if family.is_echoed() {
            &self.echoed_terms
        } else {
            &self.direct_terms
        }
    }

    pub fn error(&self, family: WaveformFamily, c: &HamiltonianCoefficients) -> f64 {
        self.terms(family).iter().map(|t| t.value(c)).fold(0.0, f64::max)
    }
}

/// What the calibration loop can observe and control.
pub trait CalibrationModel: Sync {
    /// Hamiltonian tomography of one CR pulse; `round` is 1-based.
    fn tomography(&self, family: WaveformFamily, params: &CrParams, round: usize) -> Result<HamiltonianCoefficients>;
    /// Return probability of `H_c (R_Z(φ) CR)^{2N} H_c` on |00⟩ for each φ.
    fn phase_response(&self, params: &CrParams, repetitions: usize, phis: &[f64]) -> Result<Vec<f64>>;
    /// Return probability of the CNOT verification circuit.
    fn verification(&self, params: &CrParams) -> Result<f64>;
    /// Desired `|ν_ZX|`, MHz.
    fn target_zx(&self, family: WaveformFamily) -> f64;
    /// `∂ν_IX/∂Re(target_amp)`, MHz.
    fn tone_sensitivity(&self) -> f64;
    fn initial_params(&self, family: WaveformFamily) -> CrParams;
    fn gate_duration(&self, family: WaveformFamily) -> f64;
}

/// Calibration against the simulated two-transmon pair.
pub struct PhysicalCalibration {
    pub model: PairModel,
    pub pulse: PulseConfig,
    pub tomography: TomographyConfig,
    pub detunings: ControlDetunings,
}

impl PhysicalCalibration {
    pub fn new(model: PairModel, pulse: PulseConfig) -> Result<Self> {
        model.validate()?;
        pulse.validate()?;
        let detunings = ControlDetunings::from_features(&model.features);
        Ok(Self { model, pulse, tomography: TomographyConfig::default(), detunings })
    }

    fn source(&self, family: WaveformFamily, params: &CrParams) -> Result<PulseSource> {
        let (control, target) = cr_waveforms(params, family, &self.pulse, Some(self.detunings))?;
        PulseSource::new(&self.model, &control, target.as_ref())
    }

    /// Noiseless 9×9 propagator of the direct CR pulse.
    pub fn direct_pulse_unitary(&self, params: &CrParams) -> Result<CMat> {
        let (control, target) = cr_waveforms(params, WaveformFamily::DirectCR, &self.pulse, Some(self.detunings))?;
        dynamics::waveform_unitary(&self.model, &control, target.as_ref())
    }

    /// Noiseless 9×9 propagator of the calibrated two-qubit gate: the full echo
    /// sequence, or the direct pulse followed by its control phase.
    pub fn gate_unitary(&self, family: WaveformFamily, params: &CrParams) -> Result<CMat> {
        if family.is_echoed() {
            let sched = echoed_cr_schedule(params, family, &self.pulse, Some(self.detunings))?;
            dynamics::schedule_unitary(&self.model, &sched)
        } else {
            Ok(embed(QubitRole::Control, &qutrit_rz(params.direct_phase)) * self.direct_pulse_unitary(params)?)
        }
    }

    /// Effective duration of a unit CR envelope (area over peak), µs.
    fn effective_time(&self, family: WaveformFamily) -> f64 {
        let duration = self.pulse.cr_duration(family);
        self.pulse.envelope(ONE, duration).map(|w| w.area().re * 1e-3).unwrap_or(duration * 1e-3)
    }
}

fn qutrit_hadamard() -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = crate::linalg::identity(LEVELS);
    g[(0, 0)] = c(h, 0.0);
    g[(0, 1)] = c(h, 0.0);
    g[(1, 0)] = c(h, 0.0);
    g[(1, 1)] = c(-h, 0.0);
    g
}

/// Ideal CNOT on the computational states of the pair space.
fn ideal_cnot() -> CMat {
    let mut u = crate::linalg::identity(DIM);
    let (a, b) = (LEVELS, LEVELS + 1);
    u[(a, a)] = ZERO;
    u[(b, b)] = ZERO;
    u[(a, b)] = ONE;
    u[(b, a)] = ONE;
    u
}

impl CalibrationModel for PhysicalCalibration {
    fn tomography(&self, family: WaveformFamily, params: &CrParams, _round: usize) -> Result<HamiltonianCoefficients> {
        tomography_from_source(&self.source(family, params)?, &self.tomography)
    }

    fn phase_response(&self, params: &CrParams, repetitions: usize, phis: &[f64]) -> Result<Vec<f64>> {
        let u = self.direct_pulse_unitary(params)?;
        let h = embed(QubitRole::Control, &qutrit_hadamard());
        let start = h.column(0).into_owned();
        Ok(phis
            .iter()
            .map(|&phi| {
                let step = embed(QubitRole::Control, &qutrit_rz(phi)) * &u;
                let mut psi = start.clone();
                for _ in 0..2 * repetitions {
                    psi = &step * psi;
                }
                let out = &h * psi;
                out[0].norm_sqr()
            })
            .collect())
    }

    fn verification(&self, params: &CrParams) -> Result<f64> {
        let u = embed(QubitRole::Control, &qutrit_rz(params.direct_phase)) * self.direct_pulse_unitary(params)?;
        let h = embed(QubitRole::Control, &qutrit_hadamard());
        let psi = &h * (ideal_cnot() * (u * h.column(0)));
        Ok(psi[0].norm_sqr())
    }

    fn target_zx(&self, family: WaveformFamily) -> f64 {
        // echoed: π/4 of ZX rotation per half; direct: conditional π rotation
        let t = self.effective_time(family);
        if family.is_echoed() {
            1.0 / (16.0 * t)
        } else {
            1.0 / (8.0 * t)
        }
    }

    fn tone_sensitivity(&self) -> f64 {
        0.5 * self.model.drive_scale
    }

    fn initial_params(&self, family: WaveformFamily) -> CrParams {
        // leading-order |ν_ZX| = Ω J /(4Δ) · |α/(Δ+α)|
        let f = &self.model.features;
        let qutrit = (f.control_anharmonicity / (f.detuning + f.control_anharmonicity)).abs();
        let per_mhz = f.coupling / (4.0 * f.detuning.abs()) * qutrit;
        let amp = self.target_zx(family) / (per_mhz * self.model.drive_scale);
        CrParams { cr_amp: amp.clamp(0.02, 0.9), ..CrParams::default() }
    }

    fn gate_duration(&self, family: WaveformFamily) -> f64 {
        let cr = self.pulse.cr_duration(family);
        if family.is_echoed() {
            2.0 * cr + 2.0 * self.pulse.x_duration
        } else {
            cr + self.pulse.sx_duration + self.pulse.x_duration
        }
    }
}

/// Closed-form stand-in with linear parameter response, optional per-round
/// drift and a fixed Stark phase per direct pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearResponseModel {
    /// Terms present at zero phase and zero target tone, excluding the
    /// amplitude-driven ZX and IX.
    pub intrinsic: HamiltonianCoefficients,
    pub zx_per_amp: f64,
    pub ix_per_amp: f64,
    pub tone_sensitivity: f64,
    pub zz_per_drag: f64,
    /// Added per round after the first, in coefficient order.
    pub drift: [f64; 7],
    pub stark_phase: f64,
    pub target_zx_echoed: f64,
    pub target_zx_direct: f64,
    pub start: Option<CrParams>,
}

impl Default for LinearResponseModel {
    fn default() -> Self {
        Self {
            intrinsic: HamiltonianCoefficients::from_values([0.0; 7]),
            zx_per_amp: -1.0,
            ix_per_amp: 0.0,
            tone_sensitivity: 50.0,
            zz_per_drag: 0.0,
            drift: [0.0; 7],
            stark_phase: 0.0,
            target_zx_echoed: 0.25,
            target_zx_direct: 0.4,
            start: None,
        }
    }
}

impl CalibrationModel for LinearResponseModel {
    fn tomography(&self, _family: WaveformFamily, p: &CrParams, round: usize) -> Result<HamiltonianCoefficients> {
        let k = round.saturating_sub(1) as f64;
        let v = self.intrinsic.values();
        let rot = Complex64::from_polar(self.zx_per_amp * p.cr_amp, p.cr_phase) + Complex64::new(v[0], v[1]);
        let out = [
            rot.re,
            rot.im,
            v[2] + self.ix_per_amp * p.cr_amp + self.tone_sensitivity * p.target_amp.re,
            v[3] + self.tone_sensitivity * p.target_amp.im,
            v[4],
            v[5] + self.zz_per_drag * p.iy_drag,
            v[6],
        ];
        Ok(HamiltonianCoefficients::from_values(std::array::from_fn(|i| out[i] + self.drift[i] * k)))
    }

    fn phase_response(&self, p: &CrParams, repetitions: usize, phis: &[f64]) -> Result<Vec<f64>> {
        let _ = p;
        Ok(phis.iter().map(|phi| (repetitions as f64 * (self.stark_phase + phi)).cos().powi(2)).collect())
    }

    fn verification(&self, p: &CrParams) -> Result<f64> {
        Ok((0.5 * (self.stark_phase + p.direct_phase)).cos().powi(2))
    }

    fn target_zx(&self, family: WaveformFamily) -> f64 {
        if family.is_echoed() {
            self.target_zx_echoed
        } else {
            self.target_zx_direct
        }
    }

    fn tone_sensitivity(&self) -> f64 {
        self.tone_sensitivity
    }

    fn initial_params(&self, family: WaveformFamily) -> CrParams {
        self.start.unwrap_or(CrParams {
            cr_amp: (self.target_zx(family) / self.zx_per_amp.abs()).clamp(0.0, 1.0),
            ..CrParams::default()
        })
    }

    fn gate_duration(&self, family: WaveformFamily) -> f64 {
        if family.is_echoed() {
            665.0
        } else {
            450.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSweep {
    pub phi: f64,
    /// Return probability at the refined peak.
    pub peak: f64,
    /// Negative second difference at the grid maximum, per rad².
    pub sharpness: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// `points` angles starting at −π with spacing `2π/points`.
pub fn phase_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| -PI + TWO_PI * k as f64 / points as f64).collect()
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TWO_PI) - PI;
    if y >= PI {
        -PI
    } else {
        y
    }
}

/// Argmax of a periodic response on a uniform grid over [−π, π), ties to the
/// smallest |φ|, refined by a parabola through the neighbours.
pub fn locate_peak(grid: &[f64], values: &[f64]) -> Result<PhaseSweep> {
    let n = grid.len();
    if n < 3 || values.len() != n {
        return invalid("phase grid needs at least three points with one value each");
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * max.abs().max(1.0);
    let best = (0..n)
        .filter(|&k| values[k] >= max - tol)
        .min_by(|&a, &b| grid[a].abs().total_cmp(&grid[b].abs()).then(a.cmp(&b)))
        .expect("non-empty grid");
    let step = TWO_PI / n as f64;
    let (l, r) = (values[(best + n - 1) % n], values[(best + 1) % n]);
    let curvature = l - 2.0 * values[best] + r;
    let (mut phi, mut peak) = (grid[best], values[best]);
    if curvature < -tol {
        let offset = 0.5 * (l - r) / curvature;
        if offset.abs() <= 0.5 {
            phi = wrap_angle(grid[best] + offset * step);
            peak = values[best] - 0.25 * (l - r) * offset;
        }
    }
    Ok(PhaseSweep {
        phi,
        peak: peak.min(1.0),
        sharpness: -curvature / (step * step),
        grid: grid.to_vec(),
        values: values.to_vec(),
    })
}

/// Sweeps the control virtual-Z paired with each of the `2N` direct CR pulses.
pub fn phase_sweep(model: &dyn CalibrationModel, params: &CrParams, cfg: &PhaseSweepConfig) -> Result<PhaseSweep> {
    if cfg.repetitions < 1 {
        return invalid("N must be at least 1");
    }
    let grid = phase_grid(cfg.grid_points);
    let values = model.phase_response(params, cfg.repetitions, &grid)?;
    locate_peak(&grid, &values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// (control, target).
    pub edge: (usize, usize),
    pub family: WaveformFamily,
    pub params: CrParams,
    pub residuals: HamiltonianCoefficients,
    /// Largest thresholded term in the final tomography, MHz.
    pub max_error: f64,
    pub rounds: usize,
    pub met_target: bool,
    pub met_escalated: bool,
    pub duration_ns: f64,
    pub cost: f64,
    pub drag_scan_failures: usize,
    pub phase: Option<PhaseSweep>,
    pub verification: Option<f64>,
    pub failure: Option<String>,
}

impl CalibrationResult {
    pub fn succeeded(&self) -> bool {
        self.met_escalated && self.failure.is_none()
    }
}

struct LoopOutcome {
    params: CrParams,
    residuals: HamiltonianCoefficients,
    max_error: f64,
    rounds: usize,
    met_target: bool,
    met_escalated: bool,
    drag_scan_failures: usize,
}

fn amplitude_loop(
    model: &dyn CalibrationModel,
    family: WaveformFamily,
    opts: &CalibrationOptions,
    start: CrParams,
) -> Result<LoopOutcome> {
    let th = &opts.thresholds;
    let g = opts.damping;
    let s_tone = model.tone_sensitivity();
    let zx_goal = model.target_zx(family);
    let mut params = start;
    let mut failures = 0;
    let mut round = 0;
    loop {
        round += 1;
        let c = model.tomography(family, &params, round)?;
        if !c.is_finite() {
            return Err(Error::Numeric("non-finite tomography result".into()));
        }
        let err = opts.error(family, &c);
        let met_target = err <= th.target;
        let met_escalated = met_target || (round >= th.max_rounds_before_escalation && err <= th.escalated);
        if met_escalated || round >= th.max_rounds {
            return Ok(LoopOutcome {
                params,
                residuals: c,
                max_error: err,
                rounds: round,
                met_target,
                met_escalated,
                drag_scan_failures: failures,
            });
        }

        let ix_goal = if family.is_echoed() { 0.0 } else { -c.zx };
        let tone = Complex64::new(-(c.ix - ix_goal) / s_tone, -c.iy / s_tone);
        params.target_amp += tone * g;
        if params.target_amp.norm() > 1.0 {
            params.target_amp /= params.target_amp.norm();
        }
        if c.zx.abs() > 1e-9 {
            // ZY ≈ ν_ZX · δφ for a small change of the drive phase
            params.cr_phase -= g * (c.zy / c.zx).atan();
            params.cr_amp = (params.cr_amp * (1.0 + g * (zx_goal / c.zx.abs() - 1.0))).clamp(0.0, 1.0);
        }
        if let Some(scan) = &opts.drag_scan {
            let centre = params.iy_drag;
            let amps = [centre - scan.step, centre, centre + scan.step];
            let result = iy_drag_scan(
                amps,
                |a| model.tomography(family, &CrParams { iy_drag: a, ..params }, round),
                scan.slope_tolerance,
            );
            match result {
                Ok(s) if (s.root - centre).abs() <= 3.0 * scan.step => params.iy_drag += g * (s.root - centre),
                Ok(_) | Err(Error::NoCrossing(_)) => failures += 1,
                Err(e) => return Err(e),
            }
        }
    }
}

fn finish(
    edge: (usize, usize),
    model: &dyn CalibrationModel,
    family: WaveformFamily,
    out: LoopOutcome,
) -> CalibrationResult {
    CalibrationResult {
        edge,
        family,
        params: out.params,
        residuals: out.residuals,
        max_error: out.max_error,
        rounds: out.rounds,
        met_target: out.met_target,
        met_escalated: out.met_escalated,
        duration_ns: model.gate_duration(family),
        cost: family.cost_weight() * out.rounds as f64,
        drag_scan_failures: out.drag_scan_failures,
        phase: None,
        verification: None,
        failure: if out.met_escalated { None } else { Some("escalated threshold not met within the round budget".into()) },
    }
}

pub fn calibrate_echoed_from(
    edge: (usize, usize),
    model: &dyn CalibrationModel,
    family: WaveformFamily,
    opts: &CalibrationOptions,
    start: CrParams,
) -> Result<CalibrationResult> {
    if !family.is_echoed() {
        return invalid("calibrate_echoed needs an echoed family");
    }
    opts.validate()?;
    let out = amplitude_loop(model, family, opts, start)?;
    Ok(finish(edge, model, family, out))
}

pub fn calibrate_echoed(
    edge: (usize, usize),
    model: &dyn CalibrationModel,
    family: WaveformFamily,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    calibrate_echoed_from(edge, model, family, opts, model.initial_params(family))
}

/// Amplitude stage with `ν_IX = −ν_ZX`, then the control phase sweep and the
/// verification circuit. The sweep fixes φ* modulo π/N; the verification
/// circuit picks between φ* and φ* + π.
pub fn calibrate_direct(
    edge: (usize, usize),
    model: &dyn CalibrationModel,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let family = WaveformFamily::DirectCR;
    opts.validate()?;
    let out = amplitude_loop(model, family, opts, model.initial_params(family))?;
    let mut result = finish(edge, model, family, out);
    let sweep = phase_sweep(model, &result.params, &opts.phase)?;
    if sweep.peak < opts.phase.peak_floor {
        result.met_target = false;
        result.met_escalated = false;
        result.failure = Some(format!("phase sweep peak {:.3} below floor {:.3}", sweep.peak, opts.phase.peak_floor));
        result.phase = Some(sweep);
        return Ok(result);
    }
    let mut best = (f64::NEG_INFINITY, sweep.phi);
    for phi in [sweep.phi, wrap_angle(sweep.phi + PI)] {
        let v = model.verification(&CrParams { direct_phase: phi, ..result.params })?;
        if v > best.0 + 1e-12 {
            best = (v, phi);
        }
    }
    result.params.direct_phase = best.1;
    result.verification = Some(best.0);
    result.phase = Some(sweep);
    Ok(result)
}

pub fn calibrate_pair(
    edge: (usize, usize),
    model: &dyn CalibrationModel,
    family: WaveformFamily,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    match family {
        WaveformFamily::EchoedCR | WaveformFamily::MultiDerivEchoedCR => calibrate_echoed(edge, model, family, opts),
        WaveformFamily::DirectCR => calibrate_direct(edge, model, opts),
    }
}

/// Append-only JSON-lines store of calibration results.
pub struct ResultStore {
    path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResult {
    pub edge: (usize, usize),
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub result: CalibrationResult,
}

impl ResultStore {
    pub fn new(path: impl AsRef<Path>) -> Self {
        Self { path: path.as_ref().to_path_buf() }
    }

    pub fn append(&self, result: &CalibrationResult, timestamp: u64) -> Result<()> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&self.path)?;
        let line = serde_json::to_string(&StoredResult { edge: result.edge, timestamp, result: result.clone() })?;
        writeln!(f, "{line}")?;
        Ok(())
    }

    pub fn load(&self) -> Result<Vec<StoredResult>> {
        if !self.path.exists() {
            return Ok(Vec::new());
        }
        let f = std::io::BufReader::new(std::fs::File::open(&self.path)?);
        let mut out = Vec::new();
        for (i, line) in f.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                context: format!("{} line {}", self.path.display(), i + 1),
                message: e.to_string(),
            })?);
        }
        Ok(out)
    }

    /// Most recent entry per edge (later lines win on equal timestamps).
    pub fn latest(&self) -> Result<std::collections::BTreeMap<(usize, usize), StoredResult>> {
        let mut map: std::collections::BTreeMap<(usize, usize), StoredResult> = std::collections::BTreeMap::new();
        for r in self.load()? {
            match map.get(&r.edge) {
                Some(prev) if prev.timestamp > r.timestamp => {}
                _ => {
                    map.insert(r.edge, r);
                }
            }
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> CalibrationOptions {
        CalibrationOptions { drag_scan: None, ..Default::default() }
    }

    fn synthetic(iy: f64) -> LinearResponseModel {
        let mut m = LinearResponseModel::default();
        m.intrinsic.iy = iy;
        m
    }

    #[test]
    fn thresholds_validate() {
        assert!(CalibrationThresholds::default().validate().is_ok());
        let bad = CalibrationThresholds { target: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_iy_converges_in_two_rounds() {
        let r = calibrate_echoed((0, 1), &synthetic(0.06), WaveformFamily::EchoedCR, &opts()).unwrap();
        assert!(r.met_target && r.met_escalated);
        assert!(r.rounds <= 2, "rounds {}", r.rounds);
        assert!(r.residuals.iy.abs() <= 0.015);
        assert_eq!(r.cost, r.rounds as f64);
    }

    #[test]
    fn calibrated_input_is_fixed_point() {
        let mut m = synthetic(0.06);
        let first = calibrate_echoed((0, 1), &m, WaveformFamily::EchoedCR, &opts()).unwrap();
        let mut start = first.params;
        start.target_amp = Complex64::new(0.0, -0.06 / 50.0);
        m.start = Some(start);
        let again = calibrate_echoed((0, 1), &m, WaveformFamily::EchoedCR, &opts()).unwrap();
        assert_eq!(again.rounds, 1);
        assert_eq!(again.params, start);
    }

    #[test]
    fn drift_forces_escalation() {
        let mut m = synthetic(0.05);
        m.drift[3] = 0.1;
        let r = calibrate_echoed((0, 1), &m, WaveformFamily::EchoedCR, &opts()).unwrap();
        assert!(r.met_escalated && !r.met_target);
        assert_eq!(r.rounds, 4);
    }

    #[test]
    fn unbounded_drift_fails_without_panicking() {
        let mut m = synthetic(0.05);
        m.drift[2] = 2.0;
        let r = calibrate_echoed((0, 1), &m, WaveformFamily::EchoedCR, &opts()).unwrap();
        assert!(!r.met_escalated && !r.met_target);
        assert!(r.failure.is_some());
        assert_eq!(r.rounds, opts().thresholds.max_rounds);
    }

    #[test]
    fn phase_offset_is_cancelled() {
        let mut m = synthetic(0.0);
        m.intrinsic.zy = 0.05;
        let r = calibrate_echoed((0, 1), &m, WaveformFamily::EchoedCR, &opts()).unwrap();
        assert!(r.met_target, "{:?}", r.residuals);
    }

    #[test]
    fn cost_weights_follow_family() {
        let m = synthetic(0.06);
        for fam in WaveformFamily::ALL {
            let r = calibrate_pair((0, 1), &m, fam, &opts()).unwrap();
            assert!((r.cost - fam.cost_weight() * r.rounds as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_response_ties_to_zero() {
        let grid = phase_grid(64);
        let s = locate_peak(&grid, &vec![0.5; 64]).unwrap();
        assert_eq!(s.phi, 0.0);
    }

    #[test]
    fn sharp_peak_on_grid_point() {
        let grid = phase_grid(64);
        let mut v = vec![0.0; 64];
        v[40] = 1.0;
        let s = locate_peak(&grid, &v).unwrap();
        assert!((s.phi - grid[40]).abs() < 1e-12);
    }

    #[test]
    fn stark_phase_recovered() {
        let m = LinearResponseModel { stark_phase: 0.3, ..Default::default() };
        let cfg = PhaseSweepConfig::default();
        let s = phase_sweep(&m, &CrParams::default(), &cfg).unwrap();
        let half_step = PI / cfg.grid_points as f64;
        assert!((s.phi + 0.3).abs() < half_step, "{}", s.phi);
        let doubled = phase_sweep(&m, &CrParams::default(), &PhaseSweepConfig { repetitions: 2, ..cfg.clone() }).unwrap();
        assert!((doubled.phi + 0.3).abs() < half_step);
        assert!(doubled.sharpness > s.sharpness);
    }

    #[test]
    fn refinement_against_dense_grid() {
        for truth in [-2.9, -1.0, 0.123, 0.77, 2.5] {
            let grid = phase_grid(64);
            let values: Vec<f64> = grid.iter().map(|p| (p - truth as f64).cos().powi(2).powi(8)).collect();
            let s = locate_peak(&grid, &values).unwrap();
            let dense = phase_grid(65536);
            let dv: Vec<f64> = dense.iter().map(|p| (p - truth as f64).cos().powi(2).powi(8)).collect();
            let d = locate_peak(&dense, &dv).unwrap();
            assert!((s.phi - d.phi).abs() < 0.5 * TWO_PI / 64.0);
        }
    }

    #[test]
    fn direct_synthetic_picks_verified_branch() {
        let m = LinearResponseModel { stark_phase: 0.3, ..Default::default() };
        let r = calibrate_direct((0, 1), &m, &opts()).unwrap();
        assert!(r.verification.unwrap() > 0.99);
        assert!((r.params.direct_phase + 0.3).abs() < PI / 64.0);
    }

    #[test]
    fn physical_echoed_converges() {
        let model = PairModel::ideal(100.0, 3.0, -330.0, -330.0, 100.0).unwrap();
        let cal = PhysicalCalibration::new(model, PulseConfig::default()).unwrap();
        let r = calibrate_echoed((0, 1), &cal, WaveformFamily::EchoedCR, &CalibrationOptions::default()).unwrap();
        assert!(r.met_target, "{r:?}");
        assert!((r.residuals.zx.abs() / cal.target_zx(WaveformFamily::EchoedCR) - 1.0).abs() < 0.05);
        let fresh = cal.tomography(WaveformFamily::EchoedCR, &r.params, 1).unwrap();
        assert!(fresh.max_difference(&r.residuals) < 1e-9);
    }

    #[test]
    fn physical_direct_verifies() {
        let model = PairModel::ideal(100.0, 3.0, -330.0, -330.0, 100.0).unwrap();
        let cal = PhysicalCalibration::new(model, PulseConfig::default()).unwrap();
        let r = calibrate_direct((0, 1), &cal, &CalibrationOptions::default()).unwrap();
        assert!(r.met_target, "{r:?}");
        assert!(r.verification.unwrap() >= 0.99, "{:?}", r.verification);
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::new(dir.path().join("results.jsonl"));
        let m = synthetic(0.06);
        let a = calibrate_echoed((0, 1), &m, WaveformFamily::EchoedCR, &opts()).unwrap();
        let mut b = a.clone();
        b.rounds = 7;
        store.append(&a, 10).unwrap();
        store.append(&b, 20).unwrap();
        assert_eq!(store.load().unwrap().len(), 2);
        assert_eq!(store.latest().unwrap()[&(0, 1)].result.rounds, 7);
    }
}
