// SPDX-License-Identifier: Apache-2.0

//! Parallel calibration scheduling: distance-2 edge partitions, batching and
//! runtime estimates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::device::CouplingGraph;
use crate::error::{invalid, Error, Result};
use crate::policy::PolicyAssignment;
use crate::pulse::WaveformFamily;

/// Edges that may be calibrated at the same time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationSubgraph {
    pub index: usize,
    /// Edge indices into the graph, ascending.
    pub edges: Vec<usize>,
}

impl CalibrationSubgraph {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Distance between two edges: the shortest node distance over their four
/// endpoint pairs.
pub fn edge_distance(dist: &[Vec<usize>], graph: &CouplingGraph, e: usize, f: usize) -> usize {
    let (a, b) = (&graph.edges[e], &graph.edges[f]);
    [dist[a.a][b.a], dist[a.a][b.b], dist[a.b][b.a], dist[a.b][b.b]].into_iter().min().unwrap_or(usize::MAX)
}

/// Edge pairs closer than two, as adjacency lists over edge indices.
pub fn conflict_graph(graph: &CouplingGraph) -> Vec<Vec<usize>> {
    let dist = graph.distances();
    let m = graph.edges.len();
    let mut adj = vec![Vec::new(); m];
    for e in 0..m {
        for f in e + 1..m {
            if edge_distance(&dist, graph, e, f) < 2 {
                adj[e].push(f);
                adj[f].push(e);
            }
        }
    }
    adj
}

/// Saturation-ordered greedy colouring (ties: more conflicts, then lower index).
fn dsatur(adj: &[Vec<usize>]) -> Vec<usize> {
    let m = adj.len();
    let mut colour = vec![usize::MAX; m];
    let mut seen: Vec<Vec<bool>> = vec![Vec::new(); m];
    for _ in 0..m {
        let v = (0..m)
            .filter(|&v| colour[v] == usize::MAX)
            .max_by(|&a, &b| {
                let sa = seen[a].iter().filter(|&&x| x).count();
                let sb = seen[b].iter().filter(|&&x| x).count();
                sa.cmp(&sb).then(adj[a].len().cmp(&adj[b].len())).then(b.cmp(&a))
            })
            .expect("uncoloured vertex remains");
        let c = (0..).find(|&c| !seen[v].get(c).copied().unwrap_or(false)).unwrap();
        colour[v] = c;
        for &u in &adj[v] {
            if seen[u].len() <= c {
                seen[u].resize(c + 1, false);
            }
            seen[u][c] = true;
        }
    }
    colour
}

fn free_in(adj: &[Vec<usize>], colour: &[usize], v: usize, c: usize) -> bool {
    adj[v].iter().all(|&u| colour[u] != c)
}

/// Tries to empty the highest colour class by moving each of its vertices
/// into a lower class, directly or after relocating one blocking neighbour.
fn repair(adj: &[Vec<usize>], colour: &mut [usize]) -> bool {
    let k = match colour.iter().max() {
        Some(&k) if k > 0 => k,
        _ => return false,
    };
    let mut trial = colour.to_vec();
    let members: Vec<usize> = (0..adj.len()).filter(|&v| trial[v] == k).collect();
    for v in members {
        let mut placed = false;
        for c in 0..k {
            if free_in(adj, &trial, v, c) {
                trial[v] = c;
                placed = true;
                break;
            }
            let blockers: Vec<usize> = adj[v].iter().copied().filter(|&u| trial[u] == c).collect();
            if let [u] = blockers[..] {
                if let Some(c2) = (0..k).find(|&c2| c2 != c && free_in(adj, &trial, u, c2)) {
                    trial[u] = c2;
                    trial[v] = c;
                    placed = true;
                    break;
                }
            }
        }
        if !placed {
            return false;
        }
    }
    colour.copy_from_slice(&trial);
    true
}

/// Moves edges into the lowest-numbered class that can take them, so the
/// first subgraphs are as large as possible.
fn concentrate(adj: &[Vec<usize>], colour: &mut [usize]) {
    loop {
        let mut moved = false;
        for v in 0..adj.len() {
            if let Some(c) = (0..colour[v]).find(|&c| free_in(adj, colour, v, c)) {
                colour[v] = c;
                moved = true;
            }
        }
        if !moved {
            return;
        }
    }
}

/// Partitions the edges into subgraphs whose edges are pairwise at distance
/// two or more. Subgraphs come largest first.
pub fn build_subgraphs(graph: &CouplingGraph) -> Vec<CalibrationSubgraph> {
    let adj = conflict_graph(graph);
    if adj.is_empty() {
        return Vec::new();
    }
    let mut colour = dsatur(&adj);
    while repair(&adj, &mut colour) {}
    concentrate(&adj, &mut colour);
    let k = colour.iter().max().map_or(0, |c| c + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (e, &c) in colour.iter().enumerate() {
        groups[c].push(e);
    }
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    groups.into_iter().enumerate().map(|(index, edges)| CalibrationSubgraph { index, edges }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphViolation {
    pub first: usize,
    pub second: usize,
    pub distance: usize,
}

/// Checks every edge pair by exact BFS distance; reports the first pair closer than two.
pub fn verify_subgraph(graph: &CouplingGraph, edges: &[usize]) -> std::result::Result<(), SubgraphViolation> {
    let dist = graph.distances();
    verify_with(&dist, graph, edges)
}

fn verify_with(dist: &[Vec<usize>], graph: &CouplingGraph, edges: &[usize]) -> std::result::Result<(), SubgraphViolation> {
    for (i, &e) in edges.iter().enumerate() {
        for &f in &edges[i + 1..] {
            let d = edge_distance(dist, graph, e, f);
            if d < 2 {
                return Err(SubgraphViolation { first: e, second: f, distance: d });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPolicy {
    /// Largest batch for subgraphs above `split_above`; `None` keeps subgraphs whole.
    pub cap: Option<usize>,
    pub split_above: usize,
}

impl BatchPolicy {
    pub const CAPPED: Self = Self { cap: Some(10), split_above: 20 };
    pub const IDEAL: Self = Self { cap: None, split_above: 20 };
}

impl Default for BatchPolicy {
    fn default() -> Self {
        Self::CAPPED
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub subgraph: usize,
    pub edges: Vec<usize>,
    /// Family of each edge, aligned with `edges`.
    pub families: Vec<WaveformFamily>,
    pub direct: bool,
    pub composition: BTreeMap<WaveformFamily, usize>,
    /// Filled in by [`estimate_runtime`], seconds.
    #[serde(default)]
    pub estimated_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSchedule {
    pub batches: Vec<Batch>,
    pub policy: BatchPolicy,
}

impl CalibrationSchedule {
    pub fn num_edges(&self) -> usize {
        self.batches.iter().map(|b| b.edges.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn chunks(edges: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let base = edges.len() / parts;
    let extra = edges.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut at = 0;
    for p in 0..parts {
        let n = base + usize::from(p < extra);
        out.push(edges[at..at + n].to_vec());
        at += n;
    }
    out
}

/// Splits subgraphs into batches. DirectCR edges get their own batches, which
/// run after all others; subgraphs above `split_above` edges are cut into
/// near-equal batches of at most `cap` edges.
pub fn split_batches(
    graph: &CouplingGraph,
    subgraphs: &[CalibrationSubgraph],
    assignment: &PolicyAssignment,
    policy: BatchPolicy,
) -> Result<CalibrationSchedule> {
    if policy.cap == Some(0) {
        return invalid("batch cap must be positive");
    }
    let m = graph.edges.len();
    let mut family = vec![None; m];
    for e in &assignment.edges {
        if e.edge_index >= m {
            return invalid(format!("assignment references edge {} outside the graph", e.edge_index));
        }
        family[e.edge_index] = Some(e.family);
    }
    let mut covered = vec![false; m];
    for s in subgraphs {
        for &e in &s.edges {
            if e >= m || std::mem::replace(&mut covered[e], true) {
                return invalid(format!("edge {e} missing from the graph or in two subgraphs"));
            }
        }
    }
    if let Some(e) = covered.iter().position(|c| !c) {
        return invalid(format!("edge {e} is in no subgraph"));
    }

    let mut regular = Vec::new();
    let mut direct = Vec::new();
    for s in subgraphs {
        let fam = |e: &usize| family[*e].ok_or_else(|| Error::NotFound(format!("family for edge {e}")));
        let mut parts: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for e in &s.edges {
            parts[usize::from(fam(e)? == WaveformFamily::DirectCR)].push(*e);
        }
        for (is_direct, edges) in parts.into_iter().enumerate() {
            if edges.is_empty() {
                continue;
            }
            let pieces = match policy.cap {
                Some(cap) if s.len() > policy.split_above => edges.len().div_ceil(cap),
                _ => 1,
            };
            for piece in chunks(&edges, pieces) {
                let families: Vec<WaveformFamily> = piece.iter().map(|e| family[*e].expect("checked above")).collect();
                let mut composition = BTreeMap::new();
                for f in &families {
                    *composition.entry(*f).or_insert(0) += 1;
                }
                let b = Batch {
                    subgraph: s.index,
                    edges: piece,
                    families,
                    direct: is_direct == 1,
                    composition,
                    estimated_duration: 0.0,
                };
                if is_direct == 1 { direct.push(b) } else { regular.push(b) }
            }
        }
    }
    regular.extend(direct);
    Ok(CalibrationSchedule { batches: regular, policy })
}

/// Per-edge calibration time: family cost weight × base round time × rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    /// Seconds for one echoed-CR calibration round.
    pub base_round_time: f64,
    pub default_rounds: usize,
    /// Measured rounds per edge index, overriding the default.
    #[serde(default)]
    pub rounds: BTreeMap<usize, usize>,
}

impl Default for DurationModel {
    fn default() -> Self {
        Self { base_round_time: 60.0, default_rounds: 3, rounds: BTreeMap::new() }
    }
}

impl DurationModel {
    pub fn edge_time(&self, edge: usize, family: WaveformFamily) -> f64 {
        let rounds = self.rounds.get(&edge).copied().unwrap_or(self.default_rounds);
        family.cost_weight() * self.base_round_time * rounds as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeEstimate {
    pub sequential: f64,
    pub parallel: f64,
    pub speedup: f64,
}

/// Sequential time sums every edge; parallel time sums the slowest edge of each batch.
pub fn estimate_runtime(schedule: &mut CalibrationSchedule, model: &DurationModel) -> RuntimeEstimate {
    let mut sequential = 0.0;
    let mut parallel = 0.0;
    for b in &mut schedule.batches {
        let times: Vec<f64> = b.edges.iter().zip(&b.families).map(|(&e, &f)| model.edge_time(e, f)).collect();
        b.estimated_duration = times.iter().copied().fold(0.0, f64::max);
        sequential += times.iter().sum::<f64>();
        parallel += b.estimated_duration;
    }
    RuntimeEstimate { sequential, parallel, speedup: if parallel > 0.0 { sequential / parallel } else { 1.0 } }
}
