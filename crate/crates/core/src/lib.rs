// SPDX-License-Identifier: Apache-2.0

//! Per-pair two-qubit pulse profiling, cross-resonance calibration against a
//! simulated transmon pair, and parallel calibration scheduling for heavy-hex
//! devices.

pub mod bench;
pub mod calibration;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod policy;
pub mod pulse;
pub mod scheduler;
pub mod tomography;

pub use error::{Error, Result};
