// SPDX-License-Identifier: Apache-2.0

//! Benchmarks of calibration quality: interleaved RB, quantum volume, layer
//! fidelity and application-level output distributions.

pub mod apps;
pub mod clifford;
pub mod gate_error;
pub mod qv;
pub mod rb;
pub mod sim;

pub use apps::{app_benchmark, distribution_compare, AppCircuit, AppNoise, DistributionComparison};
pub use gate_error::{gate_error, GateErrorBreakdown};
pub use qv::{qv_pass, qv_threshold_passes, quantum_volume, QvNoise, QvTrialResult};
pub use rb::{eplg, irb_gate_error, layer_fidelity, IrbConfig, IrbNoise, IrbResult, LayerFidelityResult, PairChannel};
