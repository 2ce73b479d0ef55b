// SPDX-License-Identifier: Apache-2.0

//! Waveform-family assignment: clustering, position classes and hardware rules.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{edge_features, oriented_edge, CouplingGraph, DeviceSnapshot, NodeKind};
use crate::dynamics::{cr_leakage, PairModel};
use crate::error::{invalid, Error, Result};
use crate::pulse::{gaussian_square, multi_derivative_cr, ControlDetunings, WaveformFamily};

/// Per-feature z-score parameters for (detuning, coupling, control anharmonicity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; 3],
    pub scale: [f64; 3],
}

impl Standardizer {
    pub fn fit(raw: &[[f64; 3]]) -> Self {
        let n = raw.len().max(1) as f64;
        let mut mean = [0.0; 3];
        let mut scale = [1.0; 3];
        for k in 0..3 {
            mean[k] = raw.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = raw.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
            // constant features are left unscaled
            scale[k] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn apply(&self, raw: &[f64; 3]) -> FeatureVector {
        FeatureVector(std::array::from_fn(|k| (raw[k] - self.mean[k]) / self.scale[k]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; 3]);

impl FeatureVector {
    pub fn dist2(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b).powi(2)).sum()
    }
}

/// Raw (detuning, coupling, control anharmonicity) per edge in calibration
/// orientation.
pub fn raw_features(snapshot: &DeviceSnapshot) -> Result<Vec<[f64; 3]>> {
    (0..snapshot.graph.edges.len())
        .map(|i| edge_features(snapshot, i).map(|f| [f.detuning, f.coupling, f.control_anharmonicity]))
        .collect()
}

pub fn feature_vectors(snapshot: &DeviceSnapshot) -> Result<(Vec<FeatureVector>, Standardizer)> {
    let raw = raw_features(snapshot)?;
    let st = Standardizer::fit(&raw);
    Ok((raw.iter().map(|r| st.apply(r)).collect(), st))
}

// ---------------------------------------------------------------- Birch

#[derive(Debug, Clone)]
struct Cf {
    n: f64,
    ls: Vec<f64>,
    ss: f64,
}

impl Cf {
    fn of(x: &[f64]) -> Self {
        Self { n: 1.0, ls: x.to_vec(), ss: x.iter().map(|v| v * v).sum() }
    }

    fn merge(&mut self, o: &Cf) {
        self.n += o.n;
        for (a, b) in self.ls.iter_mut().zip(&o.ls) {
            *a += b;
        }
        self.ss += o.ss;
    }

    fn merged(&self, o: &Cf) -> Cf {
        let mut m = self.clone();
        m.merge(o);
        m
    }

    fn centroid(&self) -> Vec<f64> {
        self.ls.iter().map(|v| v / self.n).collect()
    }

    fn radius(&self) -> f64 {
        let c2: f64 = self.ls.iter().map(|v| (v / self.n).powi(2)).sum();
        (self.ss / self.n - c2).max(0.0).sqrt()
    }

    fn dist2(&self, o: &Cf) -> f64 {
        self.centroid().iter().zip(o.centroid()).map(|(a, b)| (a - b).powi(2)).sum()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<Cf>),
    Inner(Vec<(Cf, usize)>),
}

/// Clustering feature tree. Leaves hold sub-cluster CFs, inner nodes hold
/// (summary CF, child) pairs; both are capped at `branching` entries.
pub struct CfTree {
    nodes: Vec<Node>,
    root: usize,
    branching: usize,
    threshold: f64,
}

impl CfTree {
    pub fn new(branching: usize, threshold: f64) -> Self {
        Self { nodes: vec![Node::Leaf(Vec::new())], root: 0, branching: branching.max(2), threshold }
    }

    pub fn insert(&mut self, x: &[f64]) {
        let cf = Cf::of(x);
        if let Some((a, b)) = self.insert_at(self.root, &cf) {
            let id = self.nodes.len();
            self.nodes.push(Node::Inner(vec![a, b]));
            self.root = id;
        }
    }

    /// Returns the two halves when `node` had to split.
    fn insert_at(&mut self, node: usize, cf: &Cf) -> Option<((Cf, usize), (Cf, usize))> {
        match &self.nodes[node] {
            Node::Leaf(entries) => {
                let closest = entries
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.dist2(cf).total_cmp(&b.1.dist2(cf)))
                    .map(|(i, _)| i);
                let absorb = closest.filter(|&i| entries[i].merged(cf).radius() <= self.threshold);
                let Node::Leaf(entries) = &mut self.nodes[node] else { unreachable!() };
                match absorb {
                    Some(i) => entries[i].merge(cf),
                    None => entries.push(cf.clone()),
                }
                if entries.len() > self.branching {
                    let all = std::mem::take(entries);
                    let (l, r) = split(all, |c| c.clone());
                    return Some(self.finish_split(node, Node::Leaf(l), Node::Leaf(r)));
                }
                None
            }
            Node::Inner(children) => {
                let (slot, child) = children
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1 .0.dist2(cf).total_cmp(&b.1 .0.dist2(cf)))
                    .map(|(i, c)| (i, c.1))
                    .expect("inner nodes are never empty");
                let res = self.insert_at(child, cf);
                let Node::Inner(children) = &mut self.nodes[node] else { unreachable!() };
                match res {
                    None => children[slot].0.merge(cf),
                    Some((a, b)) => {
                        children[slot] = a;
                        children.push(b);
                    }
                }
                if children.len() > self.branching {
                    let all = std::mem::take(children);
                    let (l, r) = split(all, |c| c.0.clone());
                    return Some(self.finish_split(node, Node::Inner(l), Node::Inner(r)));
                }
                None
            }
        }
    }

    fn finish_split(&mut self, node: usize, left: Node, right: Node) -> ((Cf, usize), (Cf, usize)) {
        let summary = |n: &Node| -> Cf {
            let cfs: Vec<Cf> = match n {
                Node::Leaf(e) => e.clone(),
                Node::Inner(c) => c.iter().map(|x| x.0.clone()).collect(),
            };
            let mut acc = cfs[0].clone();
            for c in &cfs[1..] {
                acc.merge(c);
            }
            acc
        };
        let (sl, sr) = (summary(&left), summary(&right));
        self.nodes[node] = left;
        let id = self.nodes.len();
        self.nodes.push(right);
        ((sl, node), (sr, id))
    }

    /// Leaf sub-clusters in tree order.
    fn leaf_entries(&self) -> Vec<Cf> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            match &self.nodes[n] {
                Node::Leaf(e) => out.extend(e.iter().cloned()),
                Node::Inner(c) => stack.extend(c.iter().rev().map(|x| x.1)),
            }
        }
        out
    }
}

/// Farthest-pair seeded split.
fn split<T>(items: Vec<T>, cf: impl Fn(&T) -> Cf) -> (Vec<T>, Vec<T>) {
    let cfs: Vec<Cf> = items.iter().map(&cf).collect();
    let (mut s0, mut s1, mut best) = (0, 1, -1.0);
    for i in 0..cfs.len() {
        for j in i + 1..cfs.len() {
            let d = cfs[i].dist2(&cfs[j]);
            if d > best {
                (s0, s1, best) = (i, j, d);
            }
        }
    }
    let mut l = Vec::new();
    let mut r = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        if i == s0 || (i != s1 && cfs[i].dist2(&cfs[s0]) <= cfs[i].dist2(&cfs[s1])) {
            l.push(item);
        } else {
            r.push(item);
        }
    }
    (l, r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BirchConfig {
    pub branching: usize,
    /// Starting absorption threshold in standardized units; halved until the
    /// tree has at least `n` leaf entries.
    pub initial_threshold: f64,
    pub max_refinement: usize,
}

impl Default for BirchConfig {
    fn default() -> Self {
        Self { branching: 50, initial_threshold: 0.5, max_refinement: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub centroids: Vec<[f64; 3]>,
    pub threshold: f64,
    /// Fewer distinct points than clusters.
    pub degenerate: bool,
}

impl Clustering {
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == k).collect()
    }
}

fn nearest(v: &FeatureVector, centroids: &[[f64; 3]]) -> usize {
    let mut best = 0;
    for k in 1..centroids.len() {
        if v.dist2(&centroids[k]) < v.dist2(&centroids[best]) {
            best = k;
        }
    }
    best
}

/// CF-tree construction, Ward agglomeration of the leaf entries down to `n`
/// clusters, then nearest-centroid refinement until assignments are stable.
pub fn birch_cluster(vectors: &[FeatureVector], n: usize, cfg: &BirchConfig) -> Result<Clustering> {
    if n == 0 || vectors.len() < n {
        return invalid(format!("cannot form {n} clusters from {} vectors", vectors.len()));
    }
    let mut distinct: Vec<[f64; 3]> = vectors.iter().map(|v| v.0).collect();
    distinct.sort_by(|a, b| a.iter().zip(b).fold(std::cmp::Ordering::Equal, |o, (x, y)| o.then(x.total_cmp(y))));
    distinct.dedup();
    if distinct.len() < n {
        // any partition is valid; keep it deterministic
        let labels = (0..vectors.len()).map(|i| i % n).collect::<Vec<_>>();
        let centroids = centroids_of(vectors, &labels, n);
        return Ok(Clustering { labels, centroids, threshold: 0.0, degenerate: true });
    }

    let mut threshold = cfg.initial_threshold;
    let entries = loop {
        let mut tree = CfTree::new(cfg.branching, threshold);
        for v in vectors {
            tree.insert(&v.0);
        }
        let e = tree.leaf_entries();
        if e.len() >= n || threshold < 1e-12 {
            break e;
        }
        threshold *= 0.5;
    };

    // Ward agglomeration
    let mut groups: Vec<Cf> = entries;
    while groups.len() > n {
        let mut best = (0, 1, f64::INFINITY);
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let (a, b) = (&groups[i], &groups[j]);
                let cost = a.n * b.n / (a.n + b.n) * a.dist2(b);
                if cost < best.2 {
                    best = (i, j, cost);
                }
            }
        }
        let g = groups.remove(best.1);
        groups[best.0].merge(&g);
    }
    let mut centroids: Vec<[f64; 3]> = groups.iter().map(|g| {
        let c = g.centroid();
        [c[0], c[1], c[2]]
    }).collect();

    let mut labels: Vec<usize> = vectors.iter().map(|v| nearest(v, &centroids)).collect();
    for _ in 0..cfg.max_refinement {
        // refill empty clusters with the point farthest from its centroid
        for k in 0..n {
            if !labels.contains(&k) {
                let far = (0..vectors.len())
                    .filter(|&i| labels.iter().filter(|&&l| l == labels[i]).count() > 1)
                    .max_by(|&a, &b| {
                        vectors[a].dist2(&centroids[labels[a]]).total_cmp(&vectors[b].dist2(&centroids[labels[b]]))
                    })
                    .expect("more points than clusters");
                labels[far] = k;
            }
        }
        centroids = centroids_of(vectors, &labels, n);
        let next: Vec<usize> = vectors.iter().map(|v| nearest(v, &centroids)).collect();
        let stable = next == labels;
        labels = next;
        if stable && (0..n).all(|k| labels.contains(&k)) {
            break;
        }
    }
    Ok(Clustering { labels, centroids, threshold, degenerate: false })
}

fn centroids_of(vectors: &[FeatureVector], labels: &[usize], n: usize) -> Vec<[f64; 3]> {
    let mut sum = vec![[0.0; 3]; n];
    let mut count = vec![0usize; n];
    for (v, &l) in vectors.iter().zip(labels) {
        count[l] += 1;
        for k in 0..3 {
            sum[l][k] += v.0[k];
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| std::array::from_fn(|k| if c > 0 { s[k] / c as f64 } else { 0.0 })).collect()
}

/// Medoid of `members` (indices into `vectors`), lowest index on ties.
pub fn medoid(vectors: &[FeatureVector], members: &[usize]) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &i in members {
        let s: f64 = members.iter().map(|&j| vectors[i].dist2(&vectors[j].0).sqrt()).sum();
        let better = match best {
            None => true,
            Some((bs, bi)) => s < bs - 1e-12 * bs.max(1.0) || ((s - bs).abs() <= 1e-12 * bs.max(1.0) && i < bi),
        };
        if better {
            best = Some((s, i));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::InvalidArgument("empty cluster".into()))
}

/// One representative (medoid) per group, in group order.
pub fn select_representatives(vectors: &[FeatureVector], groups: &[Vec<usize>]) -> Result<Vec<usize>> {
    groups.iter().map(|g| medoid(vectors, g)).collect()
}

// ---------------------------------------------------------------- positions

/// Number of distinct edge positions in a heavy-hex unit cell.
pub const POSITION_CLASSES: usize = 12;

/// Position of a heavy-hex edge within the repeating unit cell. The lattice
/// repeats every two long rows and every four columns, so an edge is
/// identified by how its edge qubit sits relative to the corner (left, right,
/// below, above) and by the corner's row and column parity within the cell.
/// Row edges give 8 classes and bridges 4.
pub fn classify_edge_position(graph: &CouplingGraph, edge_index: usize) -> Result<usize> {
    let layout = graph
        .layout
        .as_ref()
        .ok_or_else(|| Error::UnsupportedTopology("position classes need a heavy-hex layout".into()))?;
    let e = graph.edges.get(edge_index).ok_or_else(|| Error::NotFound(format!("edge index {edge_index}")))?;
    let (sa, sb) = (layout.sites[e.a], layout.sites[e.b]);
    let (corner, other) = match (sa.kind, sb.kind) {
        (NodeKind::Corner, k) if k != NodeKind::Corner => (sa, sb),
        (k, NodeKind::Corner) if k != NodeKind::Corner => (sb, sa),
        _ => {
            return Err(Error::UnsupportedTopology(format!(
                "edge ({}, {}) does not join a corner to an edge qubit",
                e.a, e.b
            )))
        }
    };
    let row_parity = (corner.row as i64).rem_euclid(2) as usize;
    let col_parity = corner.col.div_euclid(2).rem_euclid(2) as usize;
    Ok(match other.kind {
        NodeKind::RowEdge => {
            let side = usize::from(other.col > corner.col);
            side * 4 + row_parity * 2 + col_parity
        }
        // a bridge's row is the long row above it
        NodeKind::Bridge => {
            let below = usize::from(other.row == corner.row);
            8 + below * 2 + row_parity
        }
        NodeKind::Corner => unreachable!(),
    })
}

pub fn position_classes(graph: &CouplingGraph) -> Result<Vec<usize>> {
    (0..graph.edges.len()).map(|i| classify_edge_position(graph, i)).collect()
}

// ---------------------------------------------------------------- policies

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Bruteforce,
    Topology,
    Hardware,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bruteforce" => Ok(Self::Bruteforce),
            "topology" => Ok(Self::Topology),
            "hardware" => Ok(Self::Hardware),
            other => invalid(format!("unknown policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    OutsideWindow,
    ExclusionBand,
    ShortT2,
    Inherited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum Provenance {
    Cluster(usize),
    PositionClass(usize),
    Rule(Rule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeAssignment {
    pub edge_index: usize,
    pub control: usize,
    pub target: usize,
    pub family: WaveformFamily,
    pub provenance: Provenance,
    /// Group (cluster or class) the edge belongs to.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAssignment {
    pub policy: PolicyKind,
    pub edges: Vec<EdgeAssignment>,
    /// Representative edge index per group.
    pub representatives: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
    #[serde(default)]
    pub degenerate: bool,
}

impl PolicyAssignment {
    pub fn family_of(&self, edge_index: usize) -> Option<WaveformFamily> {
        self.edges.iter().find(|e| e.edge_index == edge_index).map(|e| e.family)
    }

    pub fn counts(&self) -> BTreeMap<WaveformFamily, usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            *m.entry(e.family).or_insert(0) += 1;
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Gate error per family for each representative edge.
pub type RepresentativeScores = BTreeMap<usize, BTreeMap<WaveformFamily, f64>>;

/// Best family with ties (within `tolerance`) resolved toward the lower cost weight.
pub fn best_family(scores: &BTreeMap<WaveformFamily, f64>, tolerance: f64) -> Result<WaveformFamily> {
    let min = scores.values().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return invalid("no finite representative score");
    }
    scores
        .iter()
        .filter(|(_, &v)| v <= min + tolerance)
        .min_by(|a, b| a.0.cost_weight().total_cmp(&b.0.cost_weight()))
        .map(|(f, _)| *f)
        .ok_or_else(|| Error::InvalidArgument("empty score set".into()))
}

/// Runs `evaluate(edge_index, family)` for every representative and family.
pub fn evaluate_representatives<F>(representatives: &[usize], evaluate: F) -> Result<RepresentativeScores>
where
    F: Fn(usize, WaveformFamily) -> Result<f64> + Sync,
{
    let jobs: Vec<(usize, WaveformFamily)> =
        representatives.iter().flat_map(|&r| WaveformFamily::ALL.into_iter().map(move |f| (r, f))).collect();
    let values: Vec<Result<f64>> = jobs.par_iter().map(|&(r, f)| evaluate(r, f)).collect();
    let mut out = RepresentativeScores::new();
    for ((r, f), v) in jobs.into_iter().zip(values) {
        out.entry(r).or_default().insert(f, v?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub groups: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
    pub standardizer: Standardizer,
    pub degenerate: bool,
}

pub fn plan_bruteforce(snapshot: &DeviceSnapshot, n: usize, cfg: &BirchConfig) -> Result<GroupPlan> {
    let (vectors, standardizer) = feature_vectors(snapshot)?;
    let cl = birch_cluster(&vectors, n, cfg)?;
    let groups: Vec<Vec<usize>> = (0..n).map(|k| cl.members(k)).collect();
    let representatives = select_representatives(&vectors, &groups)?;
    Ok(GroupPlan { groups, representatives, standardizer, degenerate: cl.degenerate })
}

pub fn plan_topology(snapshot: &DeviceSnapshot) -> Result<GroupPlan> {
    let (vectors, standardizer) = feature_vectors(snapshot)?;
    let classes = position_classes(&snapshot.graph)?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in classes.iter().enumerate() {
        by_class.entry(*c).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = by_class.into_values().collect();
    let representatives = select_representatives(&vectors, &groups)?;
    Ok(GroupPlan { groups, representatives, standardizer, degenerate: false })
}

fn assign_from_plan(
    snapshot: &DeviceSnapshot,
    plan: &GroupPlan,
    scores: &RepresentativeScores,
    policy: PolicyKind,
    tolerance: f64,
    provenance: impl Fn(usize) -> Provenance,
) -> Result<PolicyAssignment> {
    let mut edges = Vec::with_capacity(snapshot.graph.edges.len());
    for (g, members) in plan.groups.iter().enumerate() {
        let rep = plan.representatives[g];
        let s = scores.get(&rep).ok_or_else(|| Error::NotFound(format!("scores for representative edge {rep}")))?;
        if s.len() != WaveformFamily::ALL.len() {
            return invalid(format!("representative edge {rep} lacks results for all three families"));
        }
        let family = best_family(s, tolerance)?;
        for &i in members {
            let (control, target) = oriented_edge(snapshot, i);
            edges.push(EdgeAssignment { edge_index: i, control, target, family, provenance: provenance(g), group: g });
        }
    }
    edges.sort_by_key(|e| e.edge_index);
    if edges.len() != snapshot.graph.edges.len() {
        return invalid("groups do not cover every edge exactly once");
    }
    Ok(PolicyAssignment {
        policy,
        edges,
        representatives: plan.representatives.clone(),
        standardizer: Some(plan.standardizer.clone()),
        degenerate: plan.degenerate,
    })
}

pub fn policy_bruteforce(
    snapshot: &DeviceSnapshot,
    plan: &GroupPlan,
    scores: &RepresentativeScores,
    tolerance: f64,
) -> Result<PolicyAssignment> {
    assign_from_plan(snapshot, plan, scores, PolicyKind::Bruteforce, tolerance, Provenance::Cluster)
}

pub fn policy_topology(
    snapshot: &DeviceSnapshot,
    plan: &GroupPlan,
    scores: &RepresentativeScores,
    tolerance: f64,
) -> Result<PolicyAssignment> {
    let classes = position_classes(&snapshot.graph)?;
    let ids: Vec<usize> = plan.groups.iter().map(|g| classes[g[0]]).collect();
    assign_from_plan(snapshot, plan, scores, PolicyKind::Topology, tolerance, |g| Provenance::PositionClass(ids[g]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareRules {
    /// Detuning range where the multi-derivative envelope helps, MHz.
    pub window_lo: f64,
    pub window_hi: f64,
    /// Half-width of the excluded band around `|α_c|/2`, MHz.
    pub band_half_width: f64,
    pub t2_fraction: f64,
    /// µs.
    pub t2_floor: f64,
}

impl Default for HardwareRules {
    /// Window from [`sweep_drag_window`] with [`WindowSweepConfig::default`].
    fn default() -> Self {
        Self { window_lo: DEFAULT_WINDOW.0, window_hi: DEFAULT_WINDOW.1, band_half_width: 5.0, t2_fraction: 0.5, t2_floor: 60.0 }
    }
}

/// Output of the default window sweep, kept in sync by a test.
pub const DEFAULT_WINDOW: (f64, f64) = (98.0, 154.0);

impl HardwareRules {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_lo < self.window_hi) {
            return invalid("window must satisfy lo < hi");
        }
        if !(self.t2_fraction > 0.0 && self.t2_fraction < 1.0) {
            return invalid("T2 cutoff fraction must lie in (0, 1)");
        }
        if !(self.band_half_width >= 0.0) || !(self.t2_floor >= 0.0) {
            return invalid("band half-width and T2 floor must be non-negative");
        }
        Ok(())
    }

    pub fn t2_cutoff(&self, median_t2: f64) -> f64 {
        (self.t2_fraction * median_t2).max(self.t2_floor)
    }

    pub fn in_band(&self, detuning: f64, control_anharmonicity: f64) -> bool {
        (detuning.abs() - 0.5 * control_anharmonicity.abs()).abs() <= self.band_half_width
    }

    pub fn in_window(&self, detuning: f64) -> bool {
        (self.window_lo..=self.window_hi).contains(&detuning.abs())
    }
}

/// Rule order: exclusion band / detuning window → EchoedCR; short T2 →
/// DirectCR; otherwise the base assignment.
pub fn policy_hardware(snapshot: &DeviceSnapshot, rules: &HardwareRules, base: &PolicyAssignment) -> Result<PolicyAssignment> {
    rules.validate()?;
    let cutoff = rules.t2_cutoff(snapshot.median_t2());
    let mut edges = Vec::with_capacity(base.edges.len());
    for e in &base.edges {
        let f = edge_features(snapshot, e.edge_index)?;
        let (family, rule) = if rules.in_band(f.detuning, f.control_anharmonicity) {
            (WaveformFamily::EchoedCR, Rule::ExclusionBand)
        } else if !rules.in_window(f.detuning) {
            (WaveformFamily::EchoedCR, Rule::OutsideWindow)
        } else if f.min_t2 < cutoff {
            (WaveformFamily::DirectCR, Rule::ShortT2)
        } else {
            (e.family, Rule::Inherited)
        };
        edges.push(EdgeAssignment { family, provenance: Provenance::Rule(rule), ..e.clone() });
    }
    Ok(PolicyAssignment { policy: PolicyKind::Hardware, edges, ..base.clone() })
}

// ---------------------------------------------------------------- window sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSweepConfig {
    pub coupling: f64,
    pub control_anharmonicity: f64,
    pub amp: f64,
    pub sigma: f64,
    pub width: f64,
    pub duration: f64,
    pub dt: f64,
    pub drive_scale: f64,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Neighbours on each side averaged before taking the ratio.
    pub smoothing: usize,
    pub min_ratio: f64,
    /// Detuning the window must contain.
    pub anchor: f64,
    pub band_half_width: f64,
}

impl Default for WindowSweepConfig {
    fn default() -> Self {
        Self {
            coupling: 3.0,
            control_anharmonicity: -330.0,
            amp: 0.4,
            sigma: 8.0,
            width: 40.0,
            duration: 76.0,
            dt: 0.5,
            drive_scale: 100.0,
            lo: 40.0,
            hi: 300.0,
            step: 2.0,
            smoothing: 3,
            min_ratio: 10.0,
            anchor: 100.0,
            band_half_width: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub detuning: f64,
    pub plain: f64,
    pub multi: f64,
    pub ratio: f64,
    pub smoothed_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DragWindow {
    pub lo: f64,
    pub hi: f64,
    pub points: Vec<SweepPoint>,
}

/// Control leakage of a short CR pulse with the plain and multi-derivative
/// envelope at `detuning`.
pub fn leakage_pair(cfg: &WindowSweepConfig, detuning: f64) -> Result<(f64, f64)> {
    let a = cfg.control_anharmonicity;
    let model = PairModel::ideal(detuning, cfg.coupling, a, a, cfg.drive_scale)?;
    let base = gaussian_square(Complex64::new(cfg.amp, 0.0), cfg.sigma, cfg.width, cfg.duration, cfg.dt)?;
    let d = ControlDetunings::from_pair(detuning, a);
    let md = multi_derivative_cr(&base, d.d10, d.d21, d.d20)?;
    Ok((cr_leakage(&model, &base)?, cr_leakage(&model, &md)?))
}

/// Leakage sweep over detuning. The window is the contiguous run around
/// `anchor` where the smoothed plain/multi-derivative leakage ratio reaches
/// `min_ratio`; points inside the `|α|/2` band count as part of the run.
pub fn sweep_drag_window(cfg: &WindowSweepConfig) -> Result<DragWindow> {
    if !(cfg.step > 0.0 && cfg.lo < cfg.hi && (cfg.lo..=cfg.hi).contains(&cfg.anchor)) {
        return invalid("sweep range must be increasing and contain the anchor");
    }
    let n = ((cfg.hi - cfg.lo) / cfg.step).round() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|k| cfg.lo + cfg.step * k as f64).collect();
    let raw: Vec<(f64, f64)> = grid.par_iter().map(|&d| leakage_pair(cfg, d)).collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(n);
    for k in 0..n {
        let a = k.saturating_sub(cfg.smoothing);
        let b = (k + cfg.smoothing).min(n - 1);
        let plain: f64 = raw[a..=b].iter().map(|r| r.0).sum();
        let multi: f64 = raw[a..=b].iter().map(|r| r.1).sum();
        points.push(SweepPoint {
            detuning: grid[k],
            plain: raw[k].0,
            multi: raw[k].1,
            ratio: raw[k].0 / raw[k].1.max(1e-300),
            smoothed_ratio: plain / multi.max(1e-300),
        });
    }
    let half = 0.5 * cfg.control_anharmonicity.abs();
    let ok = |p: &SweepPoint| p.smoothed_ratio >= cfg.min_ratio || (p.detuning - half).abs() <= cfg.band_half_width;
    let anchor = grid.iter().position(|&d| (d - cfg.anchor).abs() < 0.5 * cfg.step).expect("anchor on grid");
    if !ok(&points[anchor]) {
        return Err(Error::Numeric(format!("no multi-derivative advantage at the anchor detuning {}", cfg.anchor)));
    }
    let mut lo = anchor;
    while lo > 0 && ok(&points[lo - 1]) {
        lo -= 1;
    }
    let mut hi = anchor;
    while hi + 1 < n && ok(&points[hi + 1]) {
        hi += 1;
    }
    Ok(DragWindow { lo: grid[lo], hi: grid[hi], points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{eagle_127, gen_heavy_hex, line, sample_device, PropertyDistributions, QubitProps};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, per: usize, seed: u64) -> (Vec<FeatureVector>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::new();
        let mut truth = Vec::new();
        for k in 0..n {
            let centre = [10.0 * k as f64, -5.0 * k as f64, 3.0 * (k % 2) as f64];
            for _ in 0..per {
                v.push(FeatureVector(std::array::from_fn(|d| centre[d] + rng.random_range(-0.5..0.5))));
                truth.push(k);
            }
        }
        (v, truth)
    }

    fn oracle_ok(v: &[FeatureVector], c: &Clustering) -> bool {
        v.iter().zip(&c.labels).all(|(x, &l)| {
            let d = x.dist2(&c.centroids[l]);
            c.centroids.iter().all(|cc| d <= x.dist2(cc) + 1e-12)
        })
    }

    #[test]
    fn separated_blobs_are_pure() {
        for n in [3, 5, 7] {
            let (v, truth) = blobs(n, 12, n as u64);
            let c = birch_cluster(&v, n, &BirchConfig::default()).unwrap();
            for k in 0..n {
                let m = c.members(k);
                assert!(!m.is_empty());
                assert!(m.iter().all(|&i| truth[i] == truth[m[0]]));
            }
            assert!(oracle_ok(&v, &c));
        }
    }

    #[test]
    fn small_branching_splits_nodes() {
        let (v, truth) = blobs(5, 40, 9);
        let cfg = BirchConfig { branching: 3, initial_threshold: 0.05, ..Default::default() };
        let c = birch_cluster(&v, 5, &cfg).unwrap();
        for k in 0..5 {
            let m = c.members(k);
            assert!(m.iter().all(|&i| truth[i] == truth[m[0]]));
        }
    }

    #[test]
    fn identical_vectors_flagged() {
        let v = vec![FeatureVector([1.0, 2.0, 3.0]); 10];
        let c = birch_cluster(&v, 3, &BirchConfig::default()).unwrap();
        assert!(c.degenerate);
        assert_eq!((0..3).filter(|k| c.labels.contains(k)).count(), 3);
    }

    #[test]
    fn too_few_vectors_rejected() {
        let v = vec![FeatureVector([0.0; 3]); 2];
        assert!(matches!(birch_cluster(&v, 3, &BirchConfig::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn device_clusters_exact_count() {
        let snap = sample_device(&eagle_127(), 11, &PropertyDistributions::default()).unwrap();
        let (v, _) = feature_vectors(&snap).unwrap();
        for n in [3, 5, 7] {
            let c = birch_cluster(&v, n, &BirchConfig::default()).unwrap();
            assert_eq!((0..n).filter(|k| c.labels.contains(k)).count(), n);
            assert!(oracle_ok(&v, &c));
        }
    }

    #[test]
    fn medoid_cases() {
        let v = vec![FeatureVector([0.0; 3]), FeatureVector([1.0, 0.0, 0.0]), FeatureVector([0.5, 3f64.sqrt() / 2.0, 0.0])];
        assert_eq!(medoid(&v, &[2]).unwrap(), 2);
        assert_eq!(medoid(&v, &[0, 1, 2]).unwrap(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r: Vec<FeatureVector> = (0..30).map(|_| FeatureVector(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))).collect();
        let members: Vec<usize> = (0..30).collect();
        let brute = members
            .iter()
            .map(|&i| (members.iter().map(|&j| r[i].dist2(&r[j].0).sqrt()).sum::<f64>(), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
            .1;
        assert_eq!(medoid(&r, &members).unwrap(), brute);
    }

    #[test]
    fn eagle_position_classes() {
        let g = eagle_127();
        let classes = position_classes(&g).unwrap();
        let distinct: std::collections::BTreeSet<_> = classes.iter().collect();
        assert_eq!(distinct.len(), POSITION_CLASSES);
        assert!(classes.iter().all(|&c| c < POSITION_CLASSES));
    }

    #[test]
    fn translated_edges_share_class() {
        let g = gen_heavy_hex(2, 1).unwrap();
        let layout = g.layout.as_ref().unwrap();
        let shifted = |i: usize| {
            let e = &g.edges[i];
            let (sa, sb) = (layout.sites[e.a], layout.sites[e.b]);
            let find = |s: crate::device::NodeSite| {
                layout.sites.iter().position(|t| t.row == s.row && t.col == s.col + 4 && t.kind == s.kind)
            };
            match (find(sa), find(sb)) {
                (Some(a), Some(b)) => g.find_edge(a, b).and_then(|_| g.edge_index(a, b)),
                _ => None,
            }
        };
        let mut checked = 0;
        for i in 0..g.edges.len() {
            if let Some(j) = shifted(i) {
                assert_eq!(classify_edge_position(&g, i).unwrap(), classify_edge_position(&g, j).unwrap());
                checked += 1;
            }
        }
        assert!(checked >= 4);
    }

    #[test]
    fn unit_cell_fully_classified() {
        let g = gen_heavy_hex(1, 1).unwrap();
        assert!(position_classes(&g).is_ok());
        assert!(matches!(classify_edge_position(&line(4).unwrap(), 0), Err(Error::UnsupportedTopology(_))));
    }

    #[test]
    fn ties_prefer_cheaper_family() {
        let mut s = BTreeMap::new();
        s.insert(WaveformFamily::DirectCR, 0.004);
        s.insert(WaveformFamily::EchoedCR, 0.004 + 1e-9);
        s.insert(WaveformFamily::MultiDerivEchoedCR, 0.004);
        assert_eq!(best_family(&s, 1e-6).unwrap(), WaveformFamily::EchoedCR);
        s.insert(WaveformFamily::EchoedCR, 0.006);
        assert_eq!(best_family(&s, 1e-6).unwrap(), WaveformFamily::MultiDerivEchoedCR);
    }

    fn scores_fn(best: WaveformFamily) -> impl Fn(usize, WaveformFamily) -> Result<f64> + Sync {
        move |_, f| Ok(if f == best { 0.003 } else { 0.006 })
    }

    #[test]
    fn bruteforce_inherits_and_covers() {
        let snap = sample_device(&eagle_127(), 5, &PropertyDistributions::default()).unwrap();
        let plan = plan_bruteforce(&snap, 7, &BirchConfig::default()).unwrap();
        assert_eq!(plan.representatives.len(), 7);
        let scores = evaluate_representatives(&plan.representatives, scores_fn(WaveformFamily::MultiDerivEchoedCR)).unwrap();
        assert_eq!(scores.values().map(|m| m.len()).sum::<usize>(), 21);
        let a = policy_bruteforce(&snap, &plan, &scores, 1e-9).unwrap();
        assert_eq!(a.edges.len(), snap.graph.edges.len());
        assert!(a.edges.iter().all(|e| e.family == WaveformFamily::MultiDerivEchoedCR));
    }

    #[test]
    fn topology_has_at_most_twelve_representatives() {
        let snap = sample_device(&eagle_127(), 5, &PropertyDistributions::default()).unwrap();
        let plan = plan_topology(&snap).unwrap();
        assert!(plan.representatives.len() <= 12);
        let scores = evaluate_representatives(&plan.representatives, scores_fn(WaveformFamily::DirectCR)).unwrap();
        let a = policy_topology(&snap, &plan, &scores, 1e-9).unwrap();
        let classes = position_classes(&snap.graph).unwrap();
        for x in &a.edges {
            for y in &a.edges {
                if classes[x.edge_index] == classes[y.edge_index] {
                    assert_eq!(x.family, y.family);
                }
            }
        }
    }

    fn pair_snapshot(f_control: f64, t2_target: f64) -> DeviceSnapshot {
        let q = |f: f64, t2: f64| QubitProps { frequency: f, anharmonicity: -330.0, t1: 250.0, t2, sq_gate_error: 2e-4 };
        // extra healthy qubits pin the device median T2 at 172 µs
        let graph = line(5).unwrap();
        DeviceSnapshot {
            graph,
            qubits: vec![q(f_control, 172.0), q(4.9, t2_target), q(4.8, 172.0), q(4.9, 172.0), q(4.8, 172.0)],
            label: "fixture".into(),
            seed: 0,
        }
    }

    fn base(snap: &DeviceSnapshot, family: WaveformFamily) -> PolicyAssignment {
        let edges = (0..snap.graph.edges.len())
            .map(|i| {
                let (control, target) = oriented_edge(snap, i);
                EdgeAssignment { edge_index: i, control, target, family, provenance: Provenance::PositionClass(0), group: 0 }
            })
            .collect();
        PolicyAssignment { policy: PolicyKind::Topology, edges, representatives: vec![0], standardizer: None, degenerate: false }
    }

    #[test]
    fn hardware_rules_fire() {
        let rules = HardwareRules::default();
        // short T2 on an in-window pair
        let snap = pair_snapshot(5.0, 82.99);
        let a = policy_hardware(&snap, &rules, &base(&snap, WaveformFamily::MultiDerivEchoedCR)).unwrap();
        assert_eq!(a.edges[0].family, WaveformFamily::DirectCR);
        assert_eq!(a.edges[0].provenance, Provenance::Rule(Rule::ShortT2));
        // out-of-window detuning overrides the T2 rule
        let snap = pair_snapshot(4.9 + (rules.window_hi + 30.0) * 1e-3, 82.99);
        let a = policy_hardware(&snap, &rules, &base(&snap, WaveformFamily::MultiDerivEchoedCR)).unwrap();
        assert_eq!(a.edges[0].family, WaveformFamily::EchoedCR);
        // healthy in-window pair inherits
        let snap = pair_snapshot(5.0, 172.0);
        let b = base(&snap, WaveformFamily::MultiDerivEchoedCR);
        let a = policy_hardware(&snap, &rules, &b).unwrap();
        assert_eq!(a.edges[0].family, WaveformFamily::MultiDerivEchoedCR);
    }

    #[test]
    fn band_never_gets_multi_derivative() {
        let rules = HardwareRules::default();
        let snap = pair_snapshot(4.9 + 0.165, 172.0);
        let a = policy_hardware(&snap, &rules, &base(&snap, WaveformFamily::MultiDerivEchoedCR)).unwrap();
        assert_eq!(a.edges[0].family, WaveformFamily::EchoedCR);
        assert_eq!(a.edges[0].provenance, Provenance::Rule(Rule::ExclusionBand));
    }

    #[test]
    fn default_window_matches_sweep() {
        let w = sweep_drag_window(&WindowSweepConfig::default()).unwrap();
        assert_eq!((w.lo, w.hi), DEFAULT_WINDOW);
    }

    proptest! {
        #[test]
        fn shared_affine_map_preserves_labels(
            scale in proptest::collection::vec(0.1f64..10.0, 3),
            shift in proptest::collection::vec(-5.0f64..5.0, 3),
            seed in 0u64..50,
        ) {
            let (v, _) = blobs(3, 6, seed);
            let c = birch_cluster(&v, 3, &BirchConfig::default()).unwrap();
            // uniform positive scale keeps Euclidean argmin intact
            let s = scale[0];
            let map = |x: &[f64; 3]| -> [f64; 3] { std::array::from_fn(|k| s * x[k] + shift[k]) };
            let mapped_c: Vec<[f64; 3]> = c.centroids.iter().map(map).collect();
            for (x, &l) in v.iter().zip(&c.labels) {
                let y = FeatureVector(map(&x.0));
                prop_assert_eq!(nearest(&y, &mapped_c), l);
            }
        }
    }
}
