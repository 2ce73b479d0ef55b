// SPDX-License-Identifier: Apache-2.0

//! Heavy-hex lattice generation.
//!
//! The lattice is drawn as `cells_y + 1` horizontal "long rows" of qubits with
//! integer column coordinates, joined by bridge qubits. Hexagon row `r` sits
//! between long rows `r` and `r + 1` and is shifted right by two columns when
//! `r` is odd. Each hexagon spans columns `[x0, x0 + 4]`; its six corners are
//! the even columns of the two long rows it touches and its six edge qubits are
//! the odd columns in between plus the two bridges at `x0` and `x0 + 4`.
//!
//! Node numbering is row-major: long row 0 left to right, then the bridges
//! below it left to right, then long row 1, and so on. With
//! [`HeavyHexConfig::eagle`] this reproduces the familiar 127-qubit numbering
//! (rows of 14/15 qubits separated by groups of four bridges).

use serde::{Deserialize, Serialize};

use super::{CouplingGraph, Coupler};
use crate::error::{invalid, Result};

/// Nominal coupling assigned by the generators before device sampling, MHz.
pub const NOMINAL_COUPLING_MHZ: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// Even column on a long row (a hexagon corner).
    Corner,
    /// Odd column on a long row (edge qubit between two corners).
    RowEdge,
    /// Edge qubit joining two long rows.
    Bridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSite {
    /// Long row for row qubits; for bridges, the long row above.
    pub row: usize,
    pub col: i64,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyHexLayout {
    pub cells_x: usize,
    pub cells_y: usize,
    pub tails: bool,
    pub sites: Vec<NodeSite>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeavyHexConfig {
    pub cells_x: usize,
    pub cells_y: usize,
    /// Extend the first long row one column right and the last one column
    /// left with a pendant qubit, as on 127-qubit processors.
    pub tails: bool,
}

impl HeavyHexConfig {
    pub fn new(cells_x: usize, cells_y: usize) -> Self {
        Self { cells_x, cells_y, tails: false }
    }

    /// 3 × 6 hexagons with pendant tails: 127 qubits, 144 couplers.
    pub fn eagle() -> Self {
        Self { cells_x: 3, cells_y: 6, tails: true }
    }

    pub fn build(&self) -> Result<CouplingGraph> {
        build(self)
    }
}

pub fn gen_heavy_hex(cells_x: usize, cells_y: usize) -> Result<CouplingGraph> {
    HeavyHexConfig::new(cells_x, cells_y).build()
}

pub fn eagle_127() -> CouplingGraph {
    HeavyHexConfig::eagle().build().expect("eagle configuration is valid")
}

/// A path graph on `n` nodes.
pub fn line(n: usize) -> Result<CouplingGraph> {
    if n < 2 {
        return invalid("line graph needs at least two nodes");
    }
    let pairs: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    CouplingGraph::new(n, &pairs, NOMINAL_COUPLING_MHZ)
}

fn hex_offset(hex_row: usize) -> i64 {
    2 * (hex_row % 2) as i64
}

fn row_columns(cfg: &HeavyHexConfig, k: usize) -> Vec<i64> {
    let span = 4 * cfg.cells_x as i64;
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for r in [k.checked_sub(1), Some(k)].into_iter().flatten() {
        if r < cfg.cells_y {
            lo = lo.min(hex_offset(r));
            hi = hi.max(hex_offset(r) + span);
        }
    }
    if cfg.tails && k == 0 {
        hi += 1;
    }
    if cfg.tails && k == cfg.cells_y {
        lo -= 1;
    }
    (lo..=hi).collect()
}

fn build(cfg: &HeavyHexConfig) -> Result<CouplingGraph> {
    if cfg.cells_x == 0 || cfg.cells_y == 0 {
        return invalid("heavy-hex dimensions must be at least 1 × 1");
    }
    let rows: Vec<Vec<i64>> = (0..=cfg.cells_y).map(|k| row_columns(cfg, k)).collect();

    let mut sites = Vec::new();
    let mut row_index: Vec<std::collections::HashMap<i64, usize>> = Vec::new();
    let mut bridge_index: Vec<Vec<(i64, usize)>> = Vec::new();
    for (k, cols) in rows.iter().enumerate() {
        let mut map = std::collections::HashMap::new();
        for &x in cols {
            let kind = if x.rem_euclid(2) == 0 { NodeKind::Corner } else { NodeKind::RowEdge };
            map.insert(x, sites.len());
            sites.push(NodeSite { row: k, col: x, kind });
        }
        row_index.push(map);
        if k < cfg.cells_y {
            let mut bridges = Vec::new();
            for j in 0..=cfg.cells_x {
                let x = hex_offset(k) + 4 * j as i64;
                bridges.push((x, sites.len()));
                sites.push(NodeSite { row: k, col: x, kind: NodeKind::Bridge });
            }
            bridge_index.push(bridges);
        }
    }

    let mut edges = Vec::new();
    for (k, cols) in rows.iter().enumerate() {
        for pair in cols.windows(2) {
            edges.push((row_index[k][&pair[0]], row_index[k][&pair[1]]));
        }
    }
    for (k, bridges) in bridge_index.iter().enumerate() {
        for &(x, b) in bridges {
            edges.push((row_index[k][&x], b));
            edges.push((b, row_index[k + 1][&x]));
        }
    }

    let mut edges: Vec<Coupler> = edges
        .into_iter()
        .map(|(u, v)| {
            let (a, b) = super::edge_key(u, v);
            Coupler { a, b, coupling: NOMINAL_COUPLING_MHZ }
        })
        .collect();
    edges.sort_by_key(Coupler::key);

    let graph = CouplingGraph {
        num_nodes: sites.len(),
        edges,
        layout: Some(HeavyHexLayout { cells_x: cfg.cells_x, cells_y: cfg.cells_y, tails: cfg.tails, sites }),
    };
    graph.validate()?;
    Ok(graph)
}
