// SPDX-License-Identifier: Apache-2.0

//! Error per gate of a calibrated pair: coherent fidelity of the simulated
//! gate times idle decoherence over its duration times single-qubit pulse
//! errors, expressed as a depolarizing error per gate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationResult, PhysicalCalibration};
use crate::device::DeviceSnapshot;
use crate::dynamics::computational_block;
use crate::error::{Error, Result};
use crate::linalg::{expm_hermitian, pauli2, CMat};
use crate::pulse::WaveformFamily;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateErrorBreakdown {
    pub family: WaveformFamily,
    /// Process fidelity of the noiseless 4×4 block against the ideal gate,
    /// after the best virtual-Z frame correction on both qubits.
    pub coherent_fidelity: f64,
    pub leakage: f64,
    pub incoherent_fidelity: f64,
    pub single_qubit_fidelity: f64,
    pub process_fidelity: f64,
    /// Average gate infidelity, `(1 − F_pro)·D/(D+1)`.
    pub epg: f64,
}

/// Ideal two-qubit gates the calibrated sequence may realize.
fn ideal_candidates(family: WaveformFamily) -> Vec<CMat> {
    let g = if family.is_echoed() { pauli2('Z', 'X') } else { pauli2('Z', 'X') - pauli2('I', 'X') };
    [1.0, -1.0].iter().map(|s| expm_hermitian(&g, s * std::f64::consts::FRAC_PI_4)).collect()
}

/// `max |Σ_k d_k m_k|` over diagonal `d = Rz(a)⊗Rz(b)`.
fn best_frame(m: [Complex64; 4]) -> f64 {
    let value = |a: f64, b: f64| {
        let d = [-(a + b), -(a - b), a - b, a + b].map(|x| Complex64::from_polar(1.0, 0.5 * x));
        d.iter().zip(&m).map(|(x, y)| x * y).sum::<Complex64>().norm()
    };
    let tau = std::f64::consts::TAU;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    let n = 72;
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (tau * i as f64 / n as f64, tau * j as f64 / n as f64);
            let v = value(a, b);
            if v > best.2 {
                best = (a, b, v);
            }
        }
    }
    // shrinking local grid
    let mut step = tau / n as f64;
    for _ in 0..30 {
        let (a0, b0, _) = best;
        for i in -2..=2 {
            for j in -2..=2 {
                let (a, b) = (a0 + step * i as f64 * 0.5, b0 + step * j as f64 * 0.5);
                let v = value(a, b);
                if v > best.2 {
                    best = (a, b, v);
                }
            }
        }
        step *= 0.5;
    }
    best.2
}

/// Coherent process fidelity and leakage of a 9×9 gate propagator.
pub fn coherent_fidelity(u9: &CMat, family: WaveformFamily) -> Result<(f64, f64)> {
    if u9.nrows() != 9 || u9.ncols() != 9 {
        return Err(Error::Shape("expected a 9×9 propagator".into()));
    }
    let b = computational_block(u9);
    let leakage = (1.0 - b.iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0).max(0.0);
    let f = ideal_candidates(family)
        .iter()
        .map(|v| {
            let bv = &b * v.adjoint();
            let t = best_frame([bv[(0, 0)], bv[(1, 1)], bv[(2, 2)], bv[(3, 3)]]);
            t * t / 16.0
        })
        .fold(0.0, f64::max);
    Ok((f.min(1.0), leakage))
}

/// Process fidelity of one qubit idling for `t_ns` under T1 and T2 (µs).
pub fn idle_process_fidelity(t_ns: f64, t1: f64, t2: f64) -> f64 {
    let t = t_ns * 1e-3;
    (1.0 + (-t / t1).exp() + 2.0 * (-t / t2).exp()) / 4.0
}

/// Single-qubit pulses per gate, as (on control, on target).
pub fn single_qubit_pulses(family: WaveformFamily) -> (u32, u32) {
    if family.is_echoed() {
        (2, 0)
    } else {
        (0, 2)
    }
}

pub fn epg_from_process_fidelity(f: f64) -> f64 {
    (1.0 - f) * 4.0 / 5.0
}

/// Combines the pieces for one pair; `u9` is the calibrated gate propagator.
pub fn gate_error_from_unitary(
    u9: &CMat,
    family: WaveformFamily,
    duration_ns: f64,
    snapshot: &DeviceSnapshot,
    control: usize,
    target: usize,
) -> Result<GateErrorBreakdown> {
    let (coherent_fidelity, leakage) = coherent_fidelity(u9, family)?;
    let (qc, qt) = (&snapshot.qubits[control], &snapshot.qubits[target]);
    let incoherent_fidelity = idle_process_fidelity(duration_ns, qc.t1, qc.t2) * idle_process_fidelity(duration_ns, qt.t1, qt.t2);
    let (nc, nt) = single_qubit_pulses(family);
    // a one-qubit average error e is a process infidelity of 3e/2
    let single_qubit_fidelity = (1.0 - 1.5 * qc.sq_gate_error).powi(nc as i32) * (1.0 - 1.5 * qt.sq_gate_error).powi(nt as i32);
    let process_fidelity = coherent_fidelity * incoherent_fidelity * single_qubit_fidelity;
    Ok(GateErrorBreakdown {
        family,
        coherent_fidelity,
        leakage,
        incoherent_fidelity,
        single_qubit_fidelity,
        process_fidelity,
        epg: epg_from_process_fidelity(process_fidelity),
    })
}

pub fn gate_error(cal: &PhysicalCalibration, snapshot: &DeviceSnapshot, result: &CalibrationResult) -> Result<GateErrorBreakdown> {
    let u = cal.gate_unitary(result.family, &result.params)?;
    gate_error_from_unitary(&u, result.family, result.duration_ns, snapshot, result.edge.0, result.edge.1)
}

/// 9×9 embedding of a 4×4 gate with identity on the leakage levels.
pub fn embed_two_qubit(g: &CMat) -> CMat {
    let mut u = crate::linalg::identity(9);
    let comp = crate::dynamics::COMPUTATIONAL;
    for i in 0..4 {
        for j in 0..4 {
            u[(comp[i], comp[j])] = g[(i, j)];
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate_pair, CalibrationOptions};
    use crate::device::{pair_features_oriented, sample_device, line, PropertyDistributions};
    use crate::dynamics::{embed, qutrit_rz, PairModel};
    use crate::linalg::kron;
    use crate::pulse::{PulseConfig, QubitRole};

    fn rz(a: f64) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::from_polar(1.0, -a / 2.0),
            Complex64::from_polar(1.0, a / 2.0),
        ]))
    }

    #[test]
    fn ideal_gates_score_one() {
        for fam in [WaveformFamily::EchoedCR, WaveformFamily::DirectCR] {
            for v in ideal_candidates(fam) {
                let framed = kron(&rz(0.7), &rz(-1.9)) * v;
                let (f, leak) = coherent_fidelity(&embed_two_qubit(&framed), fam).unwrap();
                assert!((f - 1.0).abs() < 1e-9, "{fam:?} {f}");
                assert!(leak < 1e-12);
            }
        }
        let cnot = super::super::sim::gates::cnot();
        let (f, _) = coherent_fidelity(&embed_two_qubit(&cnot), WaveformFamily::DirectCR).unwrap();
        assert!((f - 1.0).abs() < 1e-9);
    }

    #[test]
    fn over_rotation_matches_closed_form() {
        let eps = 0.05;
        let v = expm_hermitian(&pauli2('Z', 'X'), std::f64::consts::FRAC_PI_4 + eps);
        let (f, _) = coherent_fidelity(&embed_two_qubit(&v), WaveformFamily::EchoedCR).unwrap();
        assert!((f - eps.cos().powi(2)).abs() < 1e-9);
        // a qutrit-frame rotation on the control is free
        let u = embed(QubitRole::Control, &qutrit_rz(0.4)) * embed_two_qubit(&v);
        let (g, _) = coherent_fidelity(&u, WaveformFamily::EchoedCR).unwrap();
        assert!((g - f).abs() < 1e-9);
    }

    #[test]
    fn idle_fidelity_limits() {
        assert_eq!(idle_process_fidelity(0.0, 100.0, 100.0), 1.0);
        let f = idle_process_fidelity(500.0, 1e9, 1e9);
        assert!((f - 1.0).abs() < 1e-9);
        let f = idle_process_fidelity(1e9, 100.0, 100.0);
        assert!((f - 0.25).abs() < 1e-9);
    }

    #[test]
    fn calibrated_pair_has_small_error() {
        let snap = sample_device(&line(2).unwrap(), 1, &PropertyDistributions::zero_spread()).unwrap();
        let mut snap = snap;
        snap.qubits[0].frequency += 0.1;
        let f = pair_features_oriented(&snap, 0, 1).unwrap();
        let model = PairModel::new(f, 100.0).unwrap();
        let cal = PhysicalCalibration::new(model, PulseConfig::default()).unwrap();
        for fam in WaveformFamily::ALL {
            let r = calibrate_pair((0, 1), &cal, fam, &CalibrationOptions::default()).unwrap();
            let g = gate_error(&cal, &snap, &r).unwrap();
            assert!(g.coherent_fidelity > 0.99, "{fam:?} {g:?}");
            assert!(g.epg > 0.0 && g.epg < 0.02, "{fam:?} {g:?}");
        }
    }
}
