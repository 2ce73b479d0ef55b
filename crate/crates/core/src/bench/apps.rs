// SPDX-License-Identifier: Apache-2.0

//! Output-distribution comparison and the built-in application circuits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sim::{depolarizing_from_epg, gates, DensityMatrix, MAX_QUBITS};
use crate::error::{invalid, Error, Result};
use crate::linalg::CMat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionComparison {
    pub p_ideal: BTreeMap<String, f64>,
    pub p_real: BTreeMap<String, f64>,
    /// Total variation distance.
    pub e: f64,
    /// Classical (Bhattacharyya) fidelity.
    pub f: f64,
}

fn check_normalized(p: &BTreeMap<String, f64>, name: &str) -> Result<()> {
    if p.values().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return invalid(format!("{name} has negative or non-finite probabilities"));
    }
    let s: f64 = p.values().sum();
    if (s - 1.0).abs() > 1e-9 {
        return invalid(format!("{name} sums to {s}, not 1"));
    }
    Ok(())
}

/// `E = ½ Σ|P_ideal − P_real|` and `F = (Σ √(P_ideal·P_real))²` over the union of outcomes.
pub fn distribution_compare(p_ideal: &BTreeMap<String, f64>, p_real: &BTreeMap<String, f64>) -> Result<DistributionComparison> {
    check_normalized(p_ideal, "ideal distribution")?;
    check_normalized(p_real, "measured distribution")?;
    let mut e = 0.0;
    let mut overlap = 0.0;
    for k in p_ideal.keys().chain(p_real.keys().filter(|k| !p_ideal.contains_key(*k))) {
        let a = p_ideal.get(k).copied().unwrap_or(0.0);
        let b = p_real.get(k).copied().unwrap_or(0.0);
        e += (a - b).abs();
        overlap += (a * b).sqrt();
    }
    Ok(DistributionComparison {
        p_ideal: p_ideal.clone(),
        p_real: p_real.clone(),
        e: (0.5 * e).clamp(0.0, 1.0),
        f: (overlap * overlap).clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitOp {
    pub qubits: Vec<usize>,
    pub gate: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub name: String,
    pub num_qubits: usize,
    pub ops: Vec<CircuitOp>,
}

impl Circuit {
    fn new(name: impl Into<String>, num_qubits: usize) -> Self {
        Self { name: name.into(), num_qubits, ops: Vec::new() }
    }

    fn push(&mut self, qubits: &[usize], gate: CMat) {
        self.ops.push(CircuitOp { qubits: qubits.to_vec(), gate });
    }

    pub fn two_qubit_count(&self) -> usize {
        self.ops.iter().filter(|o| o.qubits.len() == 2).count()
    }

    fn toffoli(&mut self, c1: usize, c2: usize, t: usize) {
        let cx = gates::cnot;
        self.push(&[t], gates::h());
        self.push(&[c2, t], cx());
        self.push(&[t], gates::tdg());
        self.push(&[c1, t], cx());
        self.push(&[t], gates::t());
        self.push(&[c2, t], cx());
        self.push(&[t], gates::tdg());
        self.push(&[c1, t], cx());
        self.push(&[c2], gates::t());
        self.push(&[t], gates::t());
        self.push(&[t], gates::h());
        self.push(&[c1, c2], cx());
        self.push(&[c1], gates::t());
        self.push(&[c2], gates::tdg());
        self.push(&[c1, c2], cx());
    }
}

/// Built-in benchmark programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "n")]
pub enum AppCircuit {
    /// H then a CNOT chain.
    Ghz(usize),
    /// H then CNOT fan-out from qubit 0.
    Cat(usize),
    /// One-bit full adder on (a, b, c_in, c_out) with inputs in superposition.
    Adder,
}

impl AppCircuit {
    pub fn name(&self) -> String {
        match self {
            Self::Ghz(n) => format!("ghz_state_n{n}"),
            Self::Cat(n) => format!("cat_state_n{n}"),
            Self::Adder => "adder_n4".into(),
        }
    }

    pub fn builtin_set() -> Vec<Self> {
        vec![Self::Ghz(4), Self::Cat(4), Self::Adder]
    }

    pub fn build(&self) -> Result<Circuit> {
        match *self {
            Self::Ghz(n) | Self::Cat(n) => {
                if !(2..=MAX_QUBITS).contains(&n) {
                    return invalid(format!("circuit width must be 2..={MAX_QUBITS}, got {n}"));
                }
                let mut c = Circuit::new(self.name(), n);
                c.push(&[0], gates::h());
                for k in 1..n {
                    let ctrl = if matches!(self, Self::Ghz(_)) { k - 1 } else { 0 };
                    c.push(&[ctrl, k], gates::cnot());
                }
                Ok(c)
            }
            Self::Adder => {
                let mut c = Circuit::new(self.name(), 4);
                for q in 0..3 {
                    c.push(&[q], gates::h());
                }
                c.toffoli(0, 1, 3);
                c.push(&[0, 1], gates::cnot());
                c.toffoli(1, 2, 3);
                c.push(&[1, 2], gates::cnot());
                Ok(c)
            }
        }
    }
}

impl std::str::FromStr for AppCircuit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let width = |p: &str| p.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad circuit name {s:?}")));
        if s == "adder" || s == "adder_n4" {
            Ok(Self::Adder)
        } else if let Some(n) = s.strip_prefix("ghz_state_n").or_else(|| s.strip_prefix("ghz_")) {
            Ok(Self::Ghz(width(n)?))
        } else if let Some(n) = s.strip_prefix("cat_state_n").or_else(|| s.strip_prefix("cat_")) {
            Ok(Self::Cat(width(n)?))
        } else {
            invalid(format!("unknown circuit {s:?}"))
        }
    }
}

/// Depolarizing noise after each gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppNoise {
    pub two_qubit_epg: f64,
    /// Overrides keyed by the sorted logical qubit pair.
    #[serde(default)]
    pub per_pair: BTreeMap<String, f64>,
    #[serde(default)]
    pub one_qubit_epg: f64,
}

impl AppNoise {
    pub fn noiseless() -> Self {
        Self { two_qubit_epg: 0.0, per_pair: BTreeMap::new(), one_qubit_epg: 0.0 }
    }

    pub fn depolarizing(epg: f64) -> Self {
        Self { two_qubit_epg: epg, ..Self::noiseless() }
    }

    pub fn pair_key(a: usize, b: usize) -> String {
        format!("{}-{}", a.min(b), a.max(b))
    }

    fn epg(&self, qubits: &[usize]) -> f64 {
        match qubits {
            [a, b] => self.per_pair.get(&Self::pair_key(*a, *b)).copied().unwrap_or(self.two_qubit_epg),
            _ => self.one_qubit_epg,
        }
    }
}

/// Measured-outcome distribution keyed by bitstring (qubit 0 leftmost).
pub fn simulate(circuit: &Circuit, noise: &AppNoise) -> Result<BTreeMap<String, f64>> {
    let mut dm = DensityMatrix::zero(circuit.num_qubits)?;
    for op in &circuit.ops {
        dm.apply(&op.qubits, &op.gate)?;
        let epg = noise.epg(&op.qubits);
        if epg > 0.0 {
            dm.depolarize(&op.qubits, depolarizing_from_epg(epg, op.qubits.len()))?;
        }
    }
    let probs = dm.probabilities();
    let total: f64 = probs.iter().sum();
    let n = circuit.num_qubits;
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 1e-15)
        .map(|(i, &p)| (format!("{i:0n$b}"), p / total))
        .collect())
}

pub fn app_benchmark(circuit: AppCircuit, noise: &AppNoise) -> Result<DistributionComparison> {
    let c = circuit.build()?;
    let ideal = simulate(&c, &AppNoise::noiseless())?;
    let real = simulate(&c, noise)?;
    distribution_compare(&ideal, &real)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs, ONE, ZERO};
    use proptest::prelude::*;

    fn dist(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn worked_examples() {
        let a = dist(&[("0", 1.0)]);
        let b = dist(&[("0", 0.5), ("1", 0.5)]);
        let r = distribution_compare(&a, &b).unwrap();
        assert!((r.e - 0.5).abs() < 1e-12 && (r.f - 0.5).abs() < 1e-12);
        let r = distribution_compare(&a, &a).unwrap();
        assert_eq!((r.e, r.f), (0.0, 1.0));
        let r = distribution_compare(&a, &dist(&[("1", 1.0)])).unwrap();
        assert_eq!((r.e, r.f), (1.0, 0.0));
        assert!(distribution_compare(&a, &dist(&[("1", 0.9)])).is_err());
    }

    #[test]
    fn toffoli_decomposition_is_exact() {
        let mut c = Circuit::new("t", 3);
        c.toffoli(0, 1, 2);
        // compose the gate list into a full unitary column by column
        let mut u = CMat::zeros(8, 8);
        for s in 0..8 {
            let mut m = CMat::zeros(8, 8);
            m[(s, s)] = ONE;
            let mut dm = DensityMatrix::from_matrix(m).unwrap();
            for op in &c.ops {
                dm.apply(&op.qubits, &op.gate).unwrap();
            }
            let p = dm.probabilities();
            let k = p.iter().position(|&x| x > 0.5).unwrap();
            u[(k, s)] = ONE;
        }
        let mut expect = identity(8);
        expect[(6, 6)] = ZERO;
        expect[(7, 7)] = ZERO;
        expect[(6, 7)] = ONE;
        expect[(7, 6)] = ONE;
        assert!(max_abs(&(u - expect)) < 1e-12);
    }

    #[test]
    fn adder_truth_table() {
        let p = simulate(&AppCircuit::Adder.build().unwrap(), &AppNoise::noiseless()).unwrap();
        assert_eq!(p.len(), 8);
        for (k, v) in &p {
            let bits: Vec<u32> = k.chars().map(|c| c.to_digit(2).unwrap()).collect();
            let (a, axb, sum, cout) = (bits[0], bits[1], bits[2], bits[3]);
            let b = axb ^ a;
            let cin = sum ^ axb;
            assert_eq!(cout, (a & b) | (cin & (a ^ b)));
            assert!((v - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn ghz_noiseless() {
        let r = app_benchmark(AppCircuit::Ghz(4), &AppNoise::noiseless()).unwrap();
        assert!(r.e.abs() < 1e-12 && (r.f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn names_round_trip() {
        for c in AppCircuit::builtin_set() {
            assert_eq!(c.name().parse::<AppCircuit>().unwrap(), c);
        }
    }

    proptest! {
        #[test]
        fn e_f_relations(raw in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..8)) {
            let (sa, sb) = raw.iter().fold((0.0, 0.0), |s, x| (s.0 + x.0, s.1 + x.1));
            prop_assume!(sa > 1e-3 && sb > 1e-3);
            let a: BTreeMap<String, f64> = raw.iter().enumerate().map(|(i, x)| (i.to_string(), x.0 / sa)).collect();
            let b: BTreeMap<String, f64> = raw.iter().enumerate().map(|(i, x)| (i.to_string(), x.1 / sb)).collect();
            let r = distribution_compare(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.e) && (0.0..=1.0).contains(&r.f));
            prop_assert!(r.f >= (1.0 - r.e).powi(2) - 1e-12);
            let s = distribution_compare(&a, &a).unwrap();
            prop_assert!(s.e < 1e-12 && (s.f - 1.0).abs() < 1e-12);
        }
    }
}
