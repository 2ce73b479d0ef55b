// SPDX-License-Identifier: Apache-2.0

//! Device description: qubit properties, the coupling graph and per-pair features.
//!
//! Internally every frequency-like quantity is in MHz and every time in
//! microseconds. Qubit frequencies are stored in GHz in the snapshot file and
//! converted on access.

mod heavy_hex;
mod sample;
mod snapshot;

pub use heavy_hex::{eagle_127, gen_heavy_hex, line, HeavyHexConfig, HeavyHexLayout, NodeKind, NodeSite};
pub use sample::{sample_device, NormalSpec, PropertyDistributions};
pub use snapshot::{load_snapshot, save_snapshot, snapshot_from_json, snapshot_to_json, SCHEMA_VERSION};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitProps {
    /// GHz.
    pub frequency: f64,
    /// MHz, negative for transmons.
    pub anharmonicity: f64,
    /// µs.
    pub t1: f64,
    /// µs.
    pub t2: f64,
    pub sq_gate_error: f64,
}

impl QubitProps {
    pub fn frequency_mhz(&self) -> f64 {
        self.frequency * 1e3
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0) {
            return invalid(format!("t1 must be positive, got {}", self.t1));
        }
        if !(self.t2 > 0.0) {
            return invalid(format!("t2 must be positive, got {}", self.t2));
        }
        if self.t2 > 2.0 * self.t1 * (1.0 + 1e-12) {
            return invalid(format!("t2 ({}) exceeds 2·t1 ({})", self.t2, 2.0 * self.t1));
        }
        if !(0.0..1.0).contains(&self.sq_gate_error) {
            return invalid(format!("sq_gate_error out of [0,1): {}", self.sq_gate_error));
        }
        if self.anharmonicity == 0.0 || !self.anharmonicity.is_finite() {
            return invalid("anharmonicity must be non-zero and finite");
        }
        if !(self.frequency > 0.0) {
            return invalid("frequency must be positive");
        }
        Ok(())
    }
}

/// An undirected coupler. Endpoints are stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupler {
    pub a: usize,
    pub b: usize,
    /// Exchange coupling J in MHz (the full avoided-crossing splitting).
    pub coupling: f64,
}

impl Coupler {
    pub fn key(&self) -> (usize, usize) {
        (self.a, self.b)
    }
}

/// Unordered edge key, normalized so the lower index comes first.
pub fn edge_key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingGraph {
    pub num_nodes: usize,
    pub edges: Vec<Coupler>,
    /// Lattice positions when the graph came from the heavy-hex generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<HeavyHexLayout>,
}

impl CouplingGraph {
    /// Builds a graph with a uniform coupling on every edge. Edges are sorted.
    pub fn new(num_nodes: usize, pairs: &[(usize, usize)], coupling: f64) -> Result<Self> {
        let edges = pairs
            .iter()
            .map(|&(u, v)| {
                let (a, b) = edge_key(u, v);
                Coupler { a, b, coupling }
            })
            .collect();
        let mut g = Self { num_nodes, edges, layout: None };
        g.edges.sort_by_key(|e| e.key());
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.a == e.b {
                return invalid(format!("self-loop on node {}", e.a));
            }
            if e.a > e.b {
                return invalid(format!("edge ({}, {}) not normalized", e.a, e.b));
            }
            if e.b >= self.num_nodes {
                return invalid(format!("edge ({}, {}) references node outside 0..{}", e.a, e.b, self.num_nodes));
            }
            if !(e.coupling > 0.0) {
                return invalid(format!("edge ({}, {}) has non-positive coupling {}", e.a, e.b, e.coupling));
            }
            if !seen.insert(e.key()) {
                return invalid(format!("duplicate edge ({}, {})", e.a, e.b));
            }
        }
        if let Some(layout) = &self.layout {
            if layout.sites.len() != self.num_nodes {
                return invalid("layout site count differs from node count");
            }
        }
        Ok(())
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_keys(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(Coupler::key).collect()
    }

    pub fn find_edge(&self, u: usize, v: usize) -> Option<&Coupler> {
        let key = edge_key(u, v);
        self.edges.iter().find(|e| e.key() == key)
    }

    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        let key = edge_key(u, v);
        self.edges.iter().position(|e| e.key() == key)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency().iter().map(Vec::len).collect()
    }

    /// All-pairs shortest path lengths by BFS; `usize::MAX` for unreachable pairs.
    pub fn distances(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        (0..self.num_nodes)
            .map(|src| {
                let mut dist = vec![usize::MAX; self.num_nodes];
                let mut queue = std::collections::VecDeque::new();
                dist[src] = 0;
                queue.push_back(src);
                while let Some(u) = queue.pop_front() {
                    for &v in &adj[u] {
                        if dist[v] == usize::MAX {
                            dist[v] = dist[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                dist
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSnapshot {
    pub graph: CouplingGraph,
    pub qubits: Vec<QubitProps>,
    pub label: String,
    pub seed: u64,
}

impl DeviceSnapshot {
    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        if self.qubits.len() != self.graph.num_nodes {
            return invalid(format!(
                "snapshot has {} qubits but graph has {} nodes",
                self.qubits.len(),
                self.graph.num_nodes
            ));
        }
        for (i, q) in self.qubits.iter().enumerate() {
            q.validate().map_err(|e| Error::InvalidArgument(format!("qubit {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn median_t2(&self) -> f64 {
        median(self.qubits.iter().map(|q| q.t2).collect())
    }

    pub fn median_t1(&self) -> f64 {
        median(self.qubits.iter().map(|q| q.t1).collect())
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Physical features of an oriented (control, target) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub control: usize,
    pub target: usize,
    /// Control minus target frequency, MHz.
    pub detuning: f64,
    /// MHz.
    pub coupling: f64,
    pub control_anharmonicity: f64,
    pub target_anharmonicity: f64,
    /// µs.
    pub min_t2: f64,
    pub control_t1: f64,
    pub target_t1: f64,
    pub control_t2: f64,
    pub target_t2: f64,
}

/// Features for the coupler `(u, v)`, lower index as control.
pub fn pair_features(snapshot: &DeviceSnapshot, u: usize, v: usize) -> Result<PairFeatures> {
    let (control, target) = edge_key(u, v);
    pair_features_oriented(snapshot, control, target)
}

/// Orientation used for calibration: the higher-frequency qubit drives, ties
/// go to the lower index.
pub fn oriented_edge(snapshot: &DeviceSnapshot, edge_index: usize) -> (usize, usize) {
    let e = &snapshot.graph.edges[edge_index];
    if snapshot.qubits[e.b].frequency > snapshot.qubits[e.a].frequency {
        (e.b, e.a)
    } else {
        (e.a, e.b)
    }
}

/// Features of coupler `edge_index` in the calibration orientation.
pub fn edge_features(snapshot: &DeviceSnapshot, edge_index: usize) -> Result<PairFeatures> {
    let (c, t) = oriented_edge(snapshot, edge_index);
    pair_features_oriented(snapshot, c, t)
}

/// Features with an explicit control/target orientation.
pub fn pair_features_oriented(snapshot: &DeviceSnapshot, control: usize, target: usize) -> Result<PairFeatures> {
    let coupler = snapshot
        .graph
        .find_edge(control, target)
        .ok_or_else(|| Error::NotFound(format!("edge ({control}, {target})")))?;
    let qc = &snapshot.qubits[control];
    let qt = &snapshot.qubits[target];
    Ok(PairFeatures {
        control,
        target,
        detuning: qc.frequency_mhz() - qt.frequency_mhz(),
        coupling: coupler.coupling,
        control_anharmonicity: qc.anharmonicity,
        target_anharmonicity: qt.anharmonicity,
        min_t2: qc.t2.min(qt.t2),
        control_t1: qc.t1,
        target_t1: qt.t1,
        control_t2: qc.t2,
        target_t2: qt.t2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_qubit_snapshot(fc: f64, ft: f64) -> DeviceSnapshot {
        let graph = line(2).unwrap();
        let q = |f: f64, t2: f64| QubitProps { frequency: f, anharmonicity: -330.0, t1: 250.0, t2, sq_gate_error: 2e-4 };
        DeviceSnapshot { graph, qubits: vec![q(fc, 120.0), q(ft, 90.0)], label: "pair".into(), seed: 0 }
    }

    #[test]
    fn detuning_is_control_minus_target() {
        let s = two_qubit_snapshot(5.0, 4.9);
        let f = pair_features(&s, 1, 0).unwrap();
        assert_eq!((f.control, f.target), (0, 1));
        assert!((f.detuning - 100.0).abs() < 1e-9);
        assert_eq!(f.min_t2, 90.0);
    }

    #[test]
    fn identical_frequencies_give_zero_detuning() {
        let s = two_qubit_snapshot(4.95, 4.95);
        assert_eq!(pair_features(&s, 0, 1).unwrap().detuning, 0.0);
    }

    #[test]
    fn missing_edge_is_not_found() {
        let s = two_qubit_snapshot(5.0, 4.9);
        assert!(matches!(pair_features(&s, 0, 0), Err(Error::NotFound(_))));
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(CouplingGraph::new(3, &[(0, 0)], 1.0).is_err());
        assert!(CouplingGraph::new(3, &[(0, 1), (1, 0)], 1.0).is_err());
        assert!(CouplingGraph::new(3, &[(0, 5)], 1.0).is_err());
        assert!(CouplingGraph::new(3, &[(0, 1)], 0.0).is_err());
    }

    #[test]
    fn qubit_invariants() {
        let mut q = QubitProps { frequency: 5.0, anharmonicity: -300.0, t1: 100.0, t2: 150.0, sq_gate_error: 1e-3 };
        assert!(q.validate().is_ok());
        q.t2 = 250.0;
        assert!(q.validate().is_err());
        q.t2 = 100.0;
        q.anharmonicity = 0.0;
        assert!(q.validate().is_err());
    }
}
