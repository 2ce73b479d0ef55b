// SPDX-License-Identifier: Apache-2.0

//! The two-qubit Clifford group, enumerated from H, S and CNOT generators.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::Rng;

use super::sim::gates;
use crate::linalg::{identity, kron, CMat};

/// Order of the two-qubit Clifford group modulo global phase.
pub const TWO_QUBIT_CLIFFORDS: usize = 11520;

pub struct CliffordGroup {
    elements: Vec<CMat>,
    /// CNOTs along the generator word that first reached each element.
    cnot_counts: Vec<u8>,
    index: HashMap<Vec<i64>, usize>,
}

/// Phase-free fingerprint: rescale by the phase of the first entry with
/// non-negligible magnitude and round.
fn key(u: &CMat) -> Vec<i64> {
    let pivot = u.iter().find(|z| z.norm() > 1e-6).copied().unwrap_or(crate::linalg::ONE);
    let phase = pivot.conj() / pivot.norm();
    u.iter().flat_map(|z| {
        let w = z * phase;
        [(w.re * 1e6).round() as i64, (w.im * 1e6).round() as i64]
    })
    .collect()
}

impl CliffordGroup {
    fn generate() -> Self {
        let i2 = identity(2);
        let gens: Vec<(CMat, u8)> = vec![
            (kron(&gates::h(), &i2), 0),
            (kron(&i2, &gates::h()), 0),
            (kron(&gates::s(), &i2), 0),
            (kron(&i2, &gates::s()), 0),
            (gates::cnot(), 1),
        ];
        let mut elements = vec![identity(4)];
        let mut cnot_counts = vec![0u8];
        let mut index = HashMap::new();
        index.insert(key(&elements[0]), 0);
        let mut frontier = 0;
        while frontier < elements.len() {
            let u = elements[frontier].clone();
            let cx = cnot_counts[frontier];
            for (g, w) in &gens {
                let v = g * &u;
                let k = key(&v);
                if !index.contains_key(&k) {
                    index.insert(k, elements.len());
                    elements.push(v);
                    cnot_counts.push(cx + w);
                }
            }
            frontier += 1;
        }
        Self { elements, cnot_counts, index }
    }

    /// Shared instance, built on first use.
    pub fn get() -> &'static Self {
        static GROUP: OnceLock<CliffordGroup> = OnceLock::new();
        GROUP.get_or_init(Self::generate)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, i: usize) -> &CMat {
        &self.elements[i]
    }

    pub fn cnot_count(&self, i: usize) -> usize {
        self.cnot_counts[i] as usize
    }

    pub fn mean_cnot_count(&self) -> f64 {
        self.cnot_counts.iter().map(|&c| c as f64).sum::<f64>() / self.len() as f64
    }

    /// Index of `u` up to global phase.
    pub fn find(&self, u: &CMat) -> Option<usize> {
        self.index.get(&key(u)).copied()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.len())
    }
}
