// SPDX-License-Identifier: Apache-2.0

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{derivative, gaussian_square, multi_derivative_cr, Waveform, WaveformFamily};
use crate::device::PairFeatures;
use crate::error::{invalid, Error, Result};
use crate::linalg::{I, ZERO};

/// Timing and shape defaults shared by all CR schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseConfig {
    /// ns per sample.
    pub dt: f64,
    /// Gaussian edge width, ns.
    pub sigma: f64,
    /// Zero padding on each side of every CR envelope, ns.
    pub pad: f64,
    /// Length of one echoed CR half, ns.
    pub echoed_cr_duration: f64,
    /// Length of the single direct CR pulse, ns.
    pub direct_cr_duration: f64,
    /// Single-qubit X and SX durations, ns.
    pub x_duration: f64,
    pub sx_duration: f64,
    /// Drive rate in MHz for a unit-magnitude sample.
    pub drive_scale: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            sigma: 10.0,
            pad: 2.5,
            echoed_cr_duration: 272.5,
            direct_cr_duration: 330.0,
            x_duration: 60.0,
            sx_duration: 60.0,
            drive_scale: 100.0,
        }
    }
}

impl PulseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("sigma", self.sigma),
            ("x_duration", self.x_duration),
            ("sx_duration", self.sx_duration),
            ("drive_scale", self.drive_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.pad >= 4.0 * self.dt) {
            return invalid("pad must cover at least four samples so transformed edges stay zero");
        }
        for d in [self.echoed_cr_duration, self.direct_cr_duration] {
            if d < 4.0 * self.sigma + 2.0 * self.pad + self.dt {
                return invalid(format!("CR duration {d} ns too short for the configured edges"));
            }
        }
        Ok(())
    }

    fn sample_count(&self, duration: f64) -> usize {
        (duration / self.dt).round() as usize
    }

    /// Flat-top width of a CR envelope whose total length is `duration`.
    pub fn flat_width(&self, duration: f64) -> f64 {
        self.sample_count(duration) as f64 * self.dt - self.dt - 4.0 * self.sigma - 2.0 * self.pad
    }

    /// Unit-amplitude CR envelope of total length `duration` (rounded to whole samples).
    pub fn envelope(&self, amp: Complex64, duration: f64) -> Result<Waveform> {
        let n = self.sample_count(duration);
        let span = (n - 1) as f64 * self.dt;
        gaussian_square(amp, self.sigma, self.flat_width(duration), span, self.dt)
    }

    pub fn cr_duration(&self, family: WaveformFamily) -> f64 {
        let d = if family.is_echoed() { self.echoed_cr_duration } else { self.direct_cr_duration };
        self.sample_count(d) as f64 * self.dt
    }
}

/// Transition detunings of the control relative to a drive at the target
/// frequency, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlDetunings {
    pub d10: f64,
    pub d21: f64,
    pub d20: f64,
}

impl ControlDetunings {
    pub fn from_pair(detuning: f64, control_anharmonicity: f64) -> Self {
        Self {
            d10: detuning,
            d21: detuning + control_anharmonicity,
            d20: 2.0 * detuning + control_anharmonicity,
        }
    }

    pub fn from_features(f: &PairFeatures) -> Self {
        Self::from_pair(f.detuning, f.control_anharmonicity)
    }
}

/// Tunable CR parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrParams {
    /// Dimensionless CR amplitude, 0..=1.
    pub cr_amp: f64,
    /// Radians.
    pub cr_phase: f64,
    /// Cancellation tone on the target, dimensionless complex amplitude.
    pub target_amp: Complex64,
    /// Derivative (quadrature) component of the cancellation tone, in units of σ.
    pub iy_drag: f64,
    /// Control virtual-Z applied after a direct CR pulse, radians.
    pub direct_phase: f64,
}

impl Default for CrParams {
    fn default() -> Self {
        Self { cr_amp: 0.0, cr_phase: 0.0, target_amp: ZERO, iy_drag: 0.0, direct_phase: 0.0 }
    }
}

impl CrParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cr_amp) {
            return invalid(format!("cr_amp must lie in [0, 1], got {}", self.cr_amp));
        }
        if self.target_amp.norm() > 1.0 {
            return invalid("target amplitude magnitude exceeds 1");
        }
        if ![self.cr_phase, self.iy_drag, self.direct_phase].iter().all(|v| v.is_finite()) {
            return invalid("CR parameters must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QubitRole {
    Control,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingleQubitGate {
    X,
    SX,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// Control driven at the target frequency, with an optional simultaneous
    /// tone on the target. Both waveforms share the sample grid.
    Cr { control: Waveform, target: Option<Waveform> },
    Gate { qubit: QubitRole, gate: SingleQubitGate },
    VirtualZ { qubit: QubitRole, phase: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// ns.
    pub start: f64,
    /// ns.
    pub duration: f64,
    pub kind: EventKind,
}

impl Event {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    fn channels(&self) -> Vec<&'static str> {
        match &self.kind {
            EventKind::Cr { target: Some(_), .. } => vec!["control_drive", "target_drive"],
            EventKind::Cr { target: None, .. } => vec!["control_drive"],
            EventKind::Gate { qubit: QubitRole::Control, .. } => vec!["control_drive"],
            EventKind::Gate { qubit: QubitRole::Target, .. } => vec!["target_drive"],
            EventKind::VirtualZ { qubit: QubitRole::Control, .. } => vec!["control_frame"],
            EventKind::VirtualZ { qubit: QubitRole::Target, .. } => vec!["target_frame"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub family: WaveformFamily,
    pub events: Vec<Event>,
    /// ns.
    pub duration: f64,
}

impl PulseSchedule {
    pub fn new(family: WaveformFamily, mut events: Vec<Event>) -> Result<Self> {
        events.sort_by(|a, b| a.start.total_cmp(&b.start));
        let duration = events.iter().map(Event::end).fold(0.0, f64::max);
        let s = Self { family, events, duration };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        const EPS: f64 = 1e-9;
        for (i, a) in self.events.iter().enumerate() {
            if !(a.start >= 0.0) || !(a.duration >= 0.0) {
                return invalid("event start and duration must be non-negative");
            }
            for b in &self.events[i + 1..] {
                let shared = a.channels().iter().any(|c| b.channels().contains(c));
                let overlap = a.start < b.end() - EPS && b.start < a.end() - EPS;
                if shared && overlap {
                    return Err(Error::Shape(format!("events at {} ns and {} ns overlap", a.start, b.start)));
                }
            }
        }
        let end = self.events.iter().map(Event::end).fold(0.0, f64::max);
        if (end - self.duration).abs() > EPS {
            return Err(Error::Shape("schedule duration differs from last event end".into()));
        }
        Ok(())
    }

    pub fn cr_events(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Cr { .. }))
    }
}

/// Control envelope and optional target tone of one CR pulse.
pub fn cr_waveforms(
    params: &CrParams,
    family: WaveformFamily,
    cfg: &PulseConfig,
    detunings: Option<ControlDetunings>,
) -> Result<(Waveform, Option<Waveform>)> {
    let duration = cfg.cr_duration(family);
    let base = cfg.envelope(Complex64::from_polar(params.cr_amp, params.cr_phase), duration)?;
    let control = if family.uses_multi_derivative() && params.cr_amp > 0.0 {
        let d = detunings.ok_or_else(|| {
            Error::InvalidArgument(format!("{} needs the control transition detunings", family.name()))
        })?;
        multi_derivative_cr(&base, d.d10, d.d21, d.d20)?
    } else {
        base
    };

    let target = if params.target_amp != ZERO || params.iy_drag != 0.0 {
        let unit = cfg.envelope(Complex64::new(1.0, 0.0), duration)?;
        let slope = derivative(&unit.samples, unit.dt);
        let samples = unit
            .samples
            .iter()
            .zip(&slope)
            .map(|(g, dg)| params.target_amp * (g - I * params.iy_drag * cfg.sigma * dg))
            .collect();
        Some(Waveform::new(samples, cfg.dt, "cancellation")?)
    } else {
        None
    };
    Ok((control, target))
}

/// `CR(+) · X_c · CR(−) · X_c`, with the target tone reversed in the second half.
pub fn echoed_cr_schedule(
    params: &CrParams,
    family: WaveformFamily,
    cfg: &PulseConfig,
    detunings: Option<ControlDetunings>,
) -> Result<PulseSchedule> {
    if !family.is_echoed() {
        return invalid("echoed schedule requested for the direct CR family");
    }
    params.validate()?;
    cfg.validate()?;
    let (control, target) = cr_waveforms(params, family, cfg, detunings)?;
    let minus = Complex64::new(-1.0, 0.0);
    let control_neg = control.scaled(minus)?;
    let target_neg = target.as_ref().map(|t| t.scaled(minus)).transpose()?;
    let t_cr = control.duration();
    let x = cfg.x_duration;
    let gate = |start| Event { start, duration: x, kind: EventKind::Gate { qubit: QubitRole::Control, gate: SingleQubitGate::X } };
    let events = vec![
        Event { start: 0.0, duration: t_cr, kind: EventKind::Cr { control, target } },
        gate(t_cr),
        Event { start: t_cr + x, duration: t_cr, kind: EventKind::Cr { control: control_neg, target: target_neg } },
        gate(2.0 * t_cr + x),
    ];
    PulseSchedule::new(family, events)
}

/// Single multi-derivative CR pulse, control virtual-Z by `φ*`, then SX and X
/// on the target.
pub fn direct_cr_schedule(params: &CrParams, cfg: &PulseConfig, detunings: ControlDetunings) -> Result<PulseSchedule> {
    params.validate()?;
    cfg.validate()?;
    let (control, target) = cr_waveforms(params, WaveformFamily::DirectCR, cfg, Some(detunings))?;
    let t_cr = control.duration();
    let mut events = vec![Event { start: 0.0, duration: t_cr, kind: EventKind::Cr { control, target } }];
    if params.direct_phase != 0.0 {
        events.push(Event {
            start: t_cr,
            duration: 0.0,
            kind: EventKind::VirtualZ { qubit: QubitRole::Control, phase: params.direct_phase },
        });
    }
    events.push(Event {
        start: t_cr,
        duration: cfg.sx_duration,
        kind: EventKind::Gate { qubit: QubitRole::Target, gate: SingleQubitGate::SX },
    });
    events.push(Event {
        start: t_cr + cfg.sx_duration,
        duration: cfg.x_duration,
        kind: EventKind::Gate { qubit: QubitRole::Target, gate: SingleQubitGate::X },
    });
    PulseSchedule::new(WaveformFamily::DirectCR, events)
}
