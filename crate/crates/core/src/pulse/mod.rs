// SPDX-License-Identifier: Apache-2.0

//! Sampled drive envelopes and the (multi-derivative) DRAG transforms.
//!
//! Samples are dimensionless, `|a| ≤ 1`; the simulator multiplies them by the
//! maximum drive rate. Times are in ns and detunings in MHz; inside the
//! transforms a detuning is converted to angular units (rad/ns).

mod schedule;

pub use schedule::{
    cr_waveforms, direct_cr_schedule, echoed_cr_schedule, ControlDetunings, CrParams, Event, EventKind, PulseConfig, PulseSchedule,
    QubitRole, SingleQubitGate,
};

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{I, ZERO};

/// Relative endpoint tolerance for transformed CR envelopes.
pub const ENDPOINT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<Complex64>,
    /// ns per sample.
    pub dt: f64,
    pub label: String,
    /// Factor applied to bring the peak magnitude down to 1 (1.0 if untouched).
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Waveform {
    pub fn new(samples: Vec<Complex64>, dt: f64, label: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return invalid("waveform must have at least one sample");
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return invalid(format!("dt must be positive, got {dt}"));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::Numeric("non-finite waveform sample".into()));
        }
        let mut w = Self { samples, dt, label: label.into(), scale: 1.0 };
        let peak = w.peak();
        if peak > 1.0 {
            w.samples.iter_mut().for_each(|s| *s /= peak);
            w.scale = 1.0 / peak;
        }
        Ok(w)
    }

    pub fn zeros(n: usize, dt: f64, label: impl Into<String>) -> Result<Self> {
        Self::new(vec![ZERO; n], dt, label)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Each sample is held for `dt`, so the duration is `len · dt`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn area(&self) -> Complex64 {
        self.samples.iter().sum::<Complex64>() * self.dt
    }

    /// Largest endpoint magnitude relative to the peak (0 for a zero waveform).
    pub fn endpoint_ratio(&self) -> f64 {
        let peak = self.peak();
        if peak == 0.0 {
            return 0.0;
        }
        let first = self.samples[0].norm();
        let last = self.samples[self.samples.len() - 1].norm();
        first.max(last) / peak
    }

    /// Multiplies every sample by `factor`; the result is rescaled if it overflows.
    pub fn scaled(&self, factor: Complex64) -> Result<Self> {
        let mut w = Self::new(self.samples.iter().map(|s| s * factor).collect(), self.dt, self.label.clone())?;
        w.scale *= self.scale;
        Ok(w)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_ns,re,im\n");
        for (k, s) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", k as f64 * self.dt, s.re, s.im);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// The three pulse implementations a pair can be calibrated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WaveformFamily {
    EchoedCR,
    MultiDerivEchoedCR,
    DirectCR,
}

impl WaveformFamily {
    pub const ALL: [WaveformFamily; 3] = [Self::EchoedCR, Self::MultiDerivEchoedCR, Self::DirectCR];

    /// Calibration cost relative to the plain echoed CR.
    pub fn cost_weight(self) -> f64 {
        match self {
            Self::EchoedCR => 1.0,
            Self::MultiDerivEchoedCR => 1.4,
            Self::DirectCR => 2.8,
        }
    }

    pub fn is_echoed(self) -> bool {
        !matches!(self, Self::DirectCR)
    }

    pub fn uses_multi_derivative(self) -> bool {
        !matches!(self, Self::EchoedCR)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::EchoedCR => "echoed_cr",
            Self::MultiDerivEchoedCR => "multi_deriv_echoed_cr",
            Self::DirectCR => "direct_cr",
        }
    }
}

impl std::str::FromStr for WaveformFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown waveform family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragParams {
    pub coefficient: f64,
    /// MHz.
    pub detuning: f64,
    pub order: u32,
}

impl DragParams {
    pub fn validate(&self) -> Result<()> {
        if self.detuning == 0.0 || !self.detuning.is_finite() {
            return invalid("DRAG detuning must be non-zero and finite");
        }
        if !(1..=2).contains(&self.order) {
            return invalid(format!("DRAG order must be 1 or 2, got {}", self.order));
        }
        Ok(())
    }
}

/// Flat-top pulse with lifted Gaussian edges of length `2σ` each.
///
/// Samples sit at `t_k = k·dt` for `k = 0..=round(duration/dt)`. The pulse
/// body (`width + 4σ`) is centred; any remaining time is zero padding, so the
/// first and last samples are exactly zero.
pub fn gaussian_square(amp: Complex64, sigma: f64, width: f64, duration: f64, dt: f64) -> Result<Waveform> {
    if !(dt > 0.0) {
        return invalid(format!("dt must be positive, got {dt}"));
    }
    if !(sigma > 0.0) || !(width >= 0.0) {
        return invalid("sigma must be positive and width non-negative");
    }
    if amp.norm() > 1.0 + 1e-12 {
        return invalid(format!("|amp| must be at most 1, got {}", amp.norm()));
    }
    let body = width + 4.0 * sigma;
    if duration + 1e-9 < body {
        return invalid(format!("duration {duration} ns shorter than width + 4σ = {body} ns"));
    }
    let n = (duration / dt).round() as usize;
    let t0 = 0.5 * (n as f64 * dt - body);
    let samples = (0..=n).map(|k| amp * gaussian_square_shape(k as f64 * dt - t0, sigma, width)).collect();
    Waveform::new(samples, dt, "gaussian_square")
}

/// Unit-height lifted Gaussian-square profile with the body starting at 0.
pub fn gaussian_square_shape(t: f64, sigma: f64, width: f64) -> f64 {
    let rise = 2.0 * sigma;
    let floor = (-2.0f64).exp();
    let lifted = |x: f64| ((-x * x / (2.0 * sigma * sigma)).exp() - floor) / (1.0 - floor);
    if t <= 0.0 || t >= width + 2.0 * rise {
        0.0
    } else if t < rise {
        lifted(t - rise)
    } else if t <= rise + width {
        1.0
    } else {
        lifted(t - rise - width)
    }
}

/// Converts a detuning in MHz to rad/ns.
pub fn angular(detuning_mhz: f64) -> f64 {
    std::f64::consts::TAU * detuning_mhz * 1e-3
}

/// Sample derivative: centred differences inside, one-sided at the ends.
pub fn derivative(samples: &[Complex64], dt: f64) -> Vec<Complex64> {
    let n = samples.len();
    if n < 2 {
        return vec![ZERO; n];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (samples[1] - samples[0]) / dt
            } else if k == n - 1 {
                (samples[n - 1] - samples[n - 2]) / dt
            } else {
                (samples[k + 1] - samples[k - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// `F_Δ^(n)(Ω) = (Ωⁿ − i·(dΩⁿ/dt)/Δ)^(1/n)` on raw samples.
///
/// For `n = 2` the principal root is sign-corrected for continuity: each
/// sample takes the branch closest to the previous output advanced by the
/// input's own increment.
pub fn drag_samples(samples: &[Complex64], dt: f64, detuning_mhz: f64, order: u32) -> Result<Vec<Complex64>> {
    DragParams { coefficient: 1.0, detuning: detuning_mhz, order }.validate()?;
    let omega = angular(detuning_mhz);
    let powered: Vec<Complex64> = samples.iter().map(|s| s.powu(order)).collect();
    let d = derivative(&powered, dt);
    let corrected: Vec<Complex64> = powered.iter().zip(&d).map(|(p, dp)| p - I * dp / omega).collect();
    if order == 1 {
        return Ok(corrected);
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = ZERO;
    let mut prev_in = ZERO;
    for (q, s) in corrected.iter().zip(samples) {
        let root = q.sqrt();
        // continue the previous output along the input's increment
        let reference = prev + (s - prev_in);
        let pick = if (root - reference).norm() <= (-root - reference).norm() { root } else { -root };
        out.push(pick);
        prev = pick;
        prev_in = *s;
    }
    Ok(out)
}

/// DRAG transform of a whole waveform. Overflow is rescaled and
/// recorded in [`Waveform::scale`].
pub fn drag_transform(w: &Waveform, detuning_mhz: f64, order: u32) -> Result<Waveform> {
    let samples = drag_samples(&w.samples, w.dt, detuning_mhz, order)?;
    let mut out = Waveform::new(samples, w.dt, format!("drag{order}({})", w.label))?;
    out.scale *= w.scale;
    Ok(out)
}

/// `F_Δ21^(1) ∘ F_Δ10^(1) ∘ F_Δ20^(2)` applied to `base`, innermost first.
pub fn multi_derivative_cr(base: &Waveform, d10: f64, d21: f64, d20: f64) -> Result<Waveform> {
    for (name, d) in [("Δ10", d10), ("Δ21", d21), ("Δ20", d20)] {
        if d == 0.0 || !d.is_finite() {
            return invalid(format!("{name} must be non-zero and finite"));
        }
    }
    let s = drag_samples(&base.samples, base.dt, d20, 2)?;
    let s = drag_samples(&s, base.dt, d10, 1)?;
    let s = drag_samples(&s, base.dt, d21, 1)?;
    let mut out = Waveform::new(s, base.dt, format!("multi_deriv({})", base.label))?;
    out.scale *= base.scale;
    if out.endpoint_ratio() > ENDPOINT_TOLERANCE {
        return Err(Error::Shape(format!(
            "multi-derivative envelope does not start and end at zero (ratio {:.3e})",
            out.endpoint_ratio()
        )));
    }
    Ok(out)
}
