// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use paircal_core::device::CouplingGraph;
use paircal_core::scheduler::conflict_graph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random simple graph with `1..=max_edges` edges.
pub fn random_graph(seed: u64, max_edges: usize) -> CouplingGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=10);
    let mut all: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    all.shuffle(&mut rng);
    let m = rng.random_range(1..=max_edges.min(all.len()));
    CouplingGraph::new(n, &all[..m], 1.0).unwrap()
}

/// Fewest subgraphs any distance-2 partition can use, by backtracking.
pub fn exhaustive_min_partition(graph: &CouplingGraph) -> usize {
    let adj = conflict_graph(graph);
    let m = adj.len();
    if m == 0 {
        return 0;
    }
    fn fits(adj: &[Vec<usize>], colour: &mut [usize], v: usize, k: usize) -> bool {
        if v == colour.len() {
            return true;
        }
        // symmetry: a new colour may only be the next unused one
        let used = colour[..v].iter().copied().max().map_or(0, |c| c + 1);
        for c in 0..k.min(used + 1) {
            if adj[v].iter().all(|&u| u >= v || colour[u] != c) {
                colour[v] = c;
                if fits(adj, colour, v + 1, k) {
                    return true;
                }
            }
        }
        false
    }
    (1..=m).find(|&k| fits(&adj, &mut vec![usize::MAX; m], 0, k)).unwrap()
}
