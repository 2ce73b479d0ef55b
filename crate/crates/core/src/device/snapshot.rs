// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CouplingGraph, DeviceSnapshot, QubitProps};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct SnapshotOut<'a> {
    schema: u32,
    label: &'a str,
    seed: u64,
    graph: &'a CouplingGraph,
    qubits: &'a [QubitProps],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotIn {
    #[allow(dead_code)]
    schema: u32,
    label: String,
    seed: u64,
    graph: CouplingGraph,
    qubits: Vec<QubitProps>,
}

pub fn snapshot_to_json(snapshot: &DeviceSnapshot) -> Result<String> {
    let out = SnapshotOut {
        schema: SCHEMA_VERSION,
        label: &snapshot.label,
        seed: snapshot.seed,
        graph: &snapshot.graph,
        qubits: &snapshot.qubits,
    };
    Ok(serde_json::to_string_pretty(&out)?)
}

fn parse_error(context: &str, err: &serde_json::Error) -> Error {
    Error::Parse { context: context.to_string(), message: err.to_string() }
}

pub fn snapshot_from_json(text: &str) -> Result<DeviceSnapshot> {
    snapshot_from_json_in(text, "snapshot")
}

fn snapshot_from_json_in(text: &str, context: &str) -> Result<DeviceSnapshot> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(context, &e))?;
    let schema = value
        .get("schema")
        .ok_or_else(|| Error::Parse { context: context.to_string(), message: "missing field `schema`".into() })?;
    let found = schema.as_u64().ok_or_else(|| Error::Parse {
        context: context.to_string(),
        message: format!("field `schema` must be an unsigned integer, got {schema}"),
    })?;
    if found != SCHEMA_VERSION as u64 {
        return Err(Error::VersionMismatch { expected: SCHEMA_VERSION, found: found.min(u32::MAX as u64) as u32 });
    }
    // Parse from text again so errors carry line/column positions.
    let raw: SnapshotIn = serde_json::from_str(text).map_err(|e| parse_error(context, &e))?;
    let snapshot = DeviceSnapshot { graph: raw.graph, qubits: raw.qubits, label: raw.label, seed: raw.seed };
    snapshot.validate()?;
    Ok(snapshot)
}

pub fn save_snapshot(snapshot: &DeviceSnapshot, path: impl AsRef<Path>) -> Result<()> {
    let mut text = snapshot_to_json(snapshot)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<DeviceSnapshot> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    snapshot_from_json_in(&text, &path.display().to_string())
}
