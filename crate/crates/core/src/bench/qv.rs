// SPDX-License-Identifier: Apache-2.0

//! Quantum volume trials on the density-matrix simulator.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sim::{depolarizing_from_epg, DensityMatrix};
use crate::error::{invalid, Result};
use crate::linalg::{c, CMat};

/// Largest width simulated by default.
pub const QV_MAX_WIDTH: usize = 6;

/// Exact heavy-output test
/// `(n_h − 2√(n_h(n_s − n_h/n_c))) / (n_c·n_s) > 2/3` in integer arithmetic.
///
/// With `T = 3n_h − 2n_c·n_s` the condition is `T > 6√(n_h(n_c n_s − n_h)/n_c)`,
/// i.e. `T > 0` and `n_c·T² > 36·n_h·(n_c n_s − n_h)`.
pub fn qv_threshold_passes(n_h: u64, n_c: u64, n_s: u64) -> Result<bool> {
    if n_c == 0 || n_s == 0 {
        return invalid("circuit and shot counts must be positive");
    }
    let total = n_c as i128 * n_s as i128;
    if n_h as i128 > total {
        return invalid(format!("heavy count {n_h} exceeds n_c·n_s = {total}"));
    }
    let t = 3 * n_h as i128 - 2 * total;
    if t <= 0 {
        return Ok(false);
    }
    Ok(n_c as i128 * t * t > 36 * n_h as i128 * (total - n_h as i128))
}

/// Left-hand side of the heavy-output test, for reporting.
pub fn qv_lhs(n_h: u64, n_c: u64, n_s: u64) -> f64 {
    let (h, c, s) = (n_h as f64, n_c as f64, n_s as f64);
    (h - 2.0 * (h * (s - h / c)).max(0.0).sqrt()) / (c * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvNoise {
    /// Error per native two-qubit gate.
    pub two_qubit_epg: f64,
    /// Native two-qubit gates per random SU(4) block.
    pub gates_per_block: u32,
}

impl QvNoise {
    pub fn noiseless() -> Self {
        Self { two_qubit_epg: 0.0, gates_per_block: 3 }
    }

    pub fn depolarizing(epg: f64) -> Self {
        Self { two_qubit_epg: epg, gates_per_block: 3 }
    }

    fn block_lambda(&self) -> f64 {
        let l = depolarizing_from_epg(self.two_qubit_epg, 2);
        1.0 - (1.0 - l).powi(self.gates_per_block as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvTrialResult {
    pub d: usize,
    pub n_c: u64,
    pub n_s: u64,
    pub n_h: u64,
    pub heavy_output_probability: f64,
    pub lhs: f64,
    pub pass: bool,
}

/// Haar-random unitary via QR of a complex Gaussian matrix.
pub fn haar_unitary<R: Rng>(dim: usize, rng: &mut R) -> CMat {
    let z = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) / std::f64::consts::SQRT_2
    });
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// One random model circuit as a list of (qubit pair, SU(4)).
pub fn qv_circuit<R: Rng>(d: usize, rng: &mut R) -> Vec<([usize; 2], CMat)> {
    let mut ops = Vec::new();
    for _ in 0..d {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);
        for p in perm.chunks_exact(2) {
            ops.push(([p[0], p[1]], haar_unitary(4, rng)));
        }
    }
    ops
}

fn run(d: usize, ops: &[([usize; 2], CMat)], lambda: f64) -> Result<Vec<f64>> {
    let mut dm = DensityMatrix::zero(d)?;
    for (q, u) in ops {
        dm.apply(q, u)?;
        if lambda > 0.0 {
            dm.depolarize(q, lambda)?;
        }
    }
    Ok(dm.probabilities())
}

/// Outcomes whose ideal probability is strictly above the median.
pub fn heavy_set(ideal: &[f64]) -> Vec<bool> {
    let mut sorted = ideal.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 0 { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) } else { sorted[n / 2] };
    ideal.iter().map(|&p| p > median).collect()
}

/// Heavy-output trial over `n_c` random circuits of width and depth `d`.
pub fn qv_pass(d: usize, n_c: u64, n_s: u64, noise: &QvNoise, seed: u64) -> Result<QvTrialResult> {
    if !(2..=QV_MAX_WIDTH).contains(&d) {
        return invalid(format!("QV width must be in 2..={QV_MAX_WIDTH}, got {d}"));
    }
    if !(0.0..=0.75).contains(&noise.two_qubit_epg) {
        return invalid("two-qubit error per gate must lie in [0, 0.75]");
    }
    let lambda = noise.block_lambda();
    let per_circuit: Vec<(u64, f64)> = (0..n_c)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((d as u64) << 32) | i);
            let ops = qv_circuit(d, &mut rng);
            let ideal = run(d, &ops, 0.0)?;
            let heavy = heavy_set(&ideal);
            let real = if lambda > 0.0 { run(d, &ops, lambda)? } else { ideal };
            let hop: f64 = real.iter().zip(&heavy).filter(|(_, &h)| h).map(|(p, _)| p).sum();
            let total: f64 = real.iter().sum();
            let mut hits = 0;
            for _ in 0..n_s {
                let mut u = rng.random::<f64>() * total;
                let mut k = real.len() - 1;
                for (j, p) in real.iter().enumerate() {
                    if u < *p {
                        k = j;
                        break;
                    }
                    u -= p;
                }
                hits += u64::from(heavy[k]);
            }
            Ok((hits, hop))
        })
        .collect::<Result<_>>()?;
    let n_h: u64 = per_circuit.iter().map(|x| x.0).sum();
    let hop = per_circuit.iter().map(|x| x.1).sum::<f64>() / n_c as f64;
    Ok(QvTrialResult {
        d,
        n_c,
        n_s,
        n_h,
        heavy_output_probability: hop,
        lhs: qv_lhs(n_h, n_c, n_s),
        pass: qv_threshold_passes(n_h, n_c, n_s)?,
    })
}

/// `2^d` for the largest consecutive passing width starting at 2.
pub fn quantum_volume(max_d: usize, n_c: u64, n_s: u64, noise: &QvNoise, seed: u64) -> Result<(u64, Vec<QvTrialResult>)> {
    let mut trials = Vec::new();
    let mut best = 0;
    for d in 2..=max_d.min(QV_MAX_WIDTH) {
        let t = qv_pass(d, n_c, n_s, noise, seed)?;
        let pass = t.pass;
        trials.push(t);
        if !pass {
            break;
        }
        best = d;
    }
    Ok((if best == 0 { 1 } else { 1 << best }, trials))
}
