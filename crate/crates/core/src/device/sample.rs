// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CouplingGraph, DeviceSnapshot, NodeKind, QubitProps};
use crate::error::{invalid, Result};

/// Location and spread of one property distribution.
///
/// For normally distributed properties `spread` is the standard deviation in
/// the property's own unit. For log-normal ones it is the standard deviation
/// of the natural log, so `median` is exactly the distribution median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalSpec {
    pub median: f64,
    pub spread: f64,
}

impl NormalSpec {
    pub const fn new(median: f64, spread: f64) -> Self {
        Self { median, spread }
    }

    fn normal(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.median + self.spread * z
    }

    fn log_normal(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.median * (self.spread * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropertyDistributions {
    /// GHz, normal.
    pub frequency: NormalSpec,
    /// Offsets in MHz added to the sampled frequency for the three lattice
    /// colours: control (edge qubits) and the two corner colours.
    #[serde(default)]
    pub frequency_pattern: Option<[f64; 3]>,
    /// MHz, normal, truncated to stay negative.
    pub anharmonicity: NormalSpec,
    /// µs, log-normal.
    pub t1: NormalSpec,
    /// µs, log-normal, clamped to 2·T1.
    pub t2: NormalSpec,
    /// MHz, normal, truncated to [0.25, 3]·median.
    pub coupling: NormalSpec,
    /// Log-normal.
    pub sq_gate_error: NormalSpec,
}

impl Default for PropertyDistributions {
    fn default() -> Self {
        Self {
            frequency: NormalSpec::new(4.9, 0.02),
            frequency_pattern: Some([50.0, -50.0, -120.0]),
            anharmonicity: NormalSpec::new(-330.0, 10.0),
            t1: NormalSpec::new(269.0, 0.35),
            t2: NormalSpec::new(172.0, 0.45),
            coupling: NormalSpec::new(3.0, 0.3),
            sq_gate_error: NormalSpec::new(2.5e-4, 0.5),
        }
    }
}

impl PropertyDistributions {
    /// Every spread zero and no frequency pattern: all qubits equal the medians.
    pub fn zero_spread() -> Self {
        let d = Self::default();
        let flat = |s: NormalSpec| NormalSpec::new(s.median, 0.0);
        Self {
            frequency: flat(d.frequency),
            frequency_pattern: None,
            anharmonicity: flat(d.anharmonicity),
            t1: flat(d.t1),
            t2: flat(d.t2),
            coupling: flat(d.coupling),
            sq_gate_error: flat(d.sq_gate_error),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frequency", self.frequency),
            ("t1", self.t1),
            ("t2", self.t2),
            ("coupling", self.coupling),
            ("sq_gate_error", self.sq_gate_error),
        ];
        for (name, dist) in positive {
            if !(dist.median > 0.0) || !dist.median.is_finite() {
                return invalid(format!("{name} median must be positive, got {}", dist.median));
            }
        }
        if !(self.anharmonicity.median < 0.0) {
            return invalid(format!("anharmonicity median must be negative, got {}", self.anharmonicity.median));
        }
        if self.sq_gate_error.median >= 1.0 {
            return invalid("sq_gate_error median must be below 1");
        }
        for (name, dist) in positive.iter().chain([("anharmonicity", self.anharmonicity)].iter()) {
            if !(dist.spread >= 0.0) || !dist.spread.is_finite() {
                return invalid(format!("{name} spread must be finite and non-negative"));
            }
        }
        if let Some(p) = self.frequency_pattern {
            if p.iter().any(|x| !x.is_finite()) {
                return invalid("frequency pattern offsets must be finite");
            }
        }
        Ok(())
    }
}

/// Lattice colour used for the frequency pattern: 0 for edge qubits, 1 and 2
/// for the two corner sublattices.
pub(crate) fn frequency_colour(graph: &CouplingGraph, node: usize) -> usize {
    match &graph.layout {
        Some(layout) => {
            let site = layout.sites[node];
            match site.kind {
                NodeKind::RowEdge | NodeKind::Bridge => 0,
                NodeKind::Corner => 1 + ((site.col.div_euclid(2) + site.row as i64).rem_euclid(2)) as usize,
            }
        }
        None => bipartite_parity(graph)[node],
    }
}

fn bipartite_parity(graph: &CouplingGraph) -> Vec<usize> {
    let adj = graph.adjacency();
    let mut colour = vec![usize::MAX; graph.num_nodes];
    for start in 0..graph.num_nodes {
        if colour[start] != usize::MAX {
            continue;
        }
        colour[start] = 0;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if colour[v] == usize::MAX {
                    colour[v] = 1 - colour[u];
                    stack.push(v);
                }
            }
        }
    }
    colour
}

fn truncated(d: &NormalSpec, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let x = d.normal(rng);
    x.clamp(lo, hi)
}

/// Draws per-qubit and per-coupler properties. The random stream is consumed
/// in a fixed order (qubits in index order, then couplers in edge order) so
/// the result depends only on the graph, the seed and the distributions.
pub fn sample_device(graph: &CouplingGraph, seed: u64, dist: &PropertyDistributions) -> Result<DeviceSnapshot> {
    graph.validate()?;
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut qubits = Vec::with_capacity(graph.num_nodes);
    for node in 0..graph.num_nodes {
        let offset_mhz = dist.frequency_pattern.map_or(0.0, |p| p[frequency_colour(graph, node)]);
        let frequency = (dist.frequency.normal(&mut rng) + offset_mhz * 1e-3).max(0.1 * dist.frequency.median);
        let anh_med = dist.anharmonicity.median;
        let anharmonicity = truncated(&dist.anharmonicity, &mut rng, 3.0 * anh_med, 0.25 * anh_med);
        let t1 = dist.t1.log_normal(&mut rng);
        let t2 = dist.t2.log_normal(&mut rng).min(2.0 * t1);
        let sq_gate_error = dist.sq_gate_error.log_normal(&mut rng).min(0.5);
        qubits.push(QubitProps { frequency, anharmonicity, t1, t2, sq_gate_error });
    }

    let mut graph = graph.clone();
    let j = dist.coupling;
    for e in &mut graph.edges {
        e.coupling = truncated(&j, &mut rng, 0.25 * j.median, 3.0 * j.median);
    }

    let snapshot = DeviceSnapshot { graph, qubits, label: format!("sampled-{seed}"), seed };
    snapshot.validate()?;
    Ok(snapshot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{eagle_127, median};

    #[test]
    fn default_medians_match_targets() {
        let s = sample_device(&eagle_127(), 7, &PropertyDistributions::default()).unwrap();
        let t1 = median(s.qubits.iter().map(|q| q.t1).collect());
        let t2 = median(s.qubits.iter().map(|q| q.t2).collect());
        assert!((t1 / 269.0 - 1.0).abs() < 0.1, "t1 median {t1}");
        assert!((t2 / 172.0 - 1.0).abs() < 0.1, "t2 median {t2}");
    }

    #[test]
    fn zero_spread_is_uniform() {
        let d = PropertyDistributions::zero_spread();
        let s = sample_device(&eagle_127(), 3, &d).unwrap();
        for q in &s.qubits {
            assert_eq!(q.frequency, 4.9);
            assert_eq!(q.anharmonicity, -330.0);
            assert_eq!(q.t1, 269.0);
            assert_eq!(q.t2, 172.0);
            assert_eq!(q.sq_gate_error, 2.5e-4);
        }
        assert!(s.graph.edges.iter().all(|e| e.coupling == 3.0));
    }

    #[test]
    fn same_seed_same_snapshot() {
        let g = eagle_127();
        let a = sample_device(&g, 11, &PropertyDistributions::default()).unwrap();
        let b = sample_device(&g, 11, &PropertyDistributions::default()).unwrap();
        assert_eq!(a, b);
        let c = sample_device(&g, 12, &PropertyDistributions::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_distributions() {
        let mut d = PropertyDistributions::default();
        d.t1.median = 0.0;
        assert!(sample_device(&eagle_127(), 1, &d).is_err());
        let mut d = PropertyDistributions::default();
        d.coupling.median = -1.0;
        assert!(sample_device(&eagle_127(), 1, &d).is_err());
        let mut d = PropertyDistributions::default();
        d.anharmonicity.median = 10.0;
        assert!(sample_device(&eagle_127(), 1, &d).is_err());
    }

    #[test]
    fn pattern_puts_edge_qubits_above_corners() {
        let g = eagle_127();
        let colours: Vec<_> = (0..g.num_nodes).map(|n| frequency_colour(&g, n)).collect();
        for e in &g.edges {
            // every coupler joins an edge qubit to a corner
            assert!((colours[e.a] == 0) ^ (colours[e.b] == 0));
        }
        assert!(colours.iter().any(|&c| c == 1) && colours.iter().any(|&c| c == 2));
    }
}
