// SPDX-License-Identifier: Apache-2.0

//! Small n-qubit density-matrix simulator. Qubit 0 is the most significant bit
//! of a basis index, so operators compose with `kron` in qubit order.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, CMat, ONE, ZERO};

/// Upper limit on simulated register width.
pub const MAX_QUBITS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    rho: CMat,
}

fn bit(n: usize, q: usize) -> usize {
    1 << (n - 1 - q)
}

/// Basis indices of the 2^k sub-block for `qubits` above `base`.
fn block(n: usize, qubits: &[usize], base: usize) -> Vec<usize> {
    let k = qubits.len();
    (0..1usize << k)
        .map(|s| {
            let mut idx = base;
            for (j, &q) in qubits.iter().enumerate() {
                if s & (1 << (k - 1 - j)) != 0 {
                    idx |= bit(n, q);
                }
            }
            idx
        })
        .collect()
}

fn mask(n: usize, qubits: &[usize]) -> usize {
    qubits.iter().fold(0, |m, &q| m | bit(n, q))
}

impl DensityMatrix {
    /// |0…0⟩⟨0…0|.
    pub fn zero(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return invalid(format!("register width must be 1..={MAX_QUBITS}, got {n}"));
        }
        let dim = 1 << n;
        let mut rho = CMat::zeros(dim, dim);
        rho[(0, 0)] = ONE;
        Ok(Self { n, rho })
    }

    pub fn from_matrix(rho: CMat) -> Result<Self> {
        let dim = rho.nrows();
        if dim != rho.ncols() || !dim.is_power_of_two() || dim < 2 {
            return Err(Error::Shape(format!("{}×{} is not a qubit density matrix", rho.nrows(), rho.ncols())));
        }
        Ok(Self { n: dim.trailing_zeros() as usize, rho })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMat {
        &self.rho
    }

    fn check(&self, qubits: &[usize], op_dim: usize) -> Result<()> {
        if op_dim != 1 << qubits.len() {
            return Err(Error::Shape(format!("operator of size {op_dim} on {} qubits", qubits.len())));
        }
        for (i, &q) in qubits.iter().enumerate() {
            if q >= self.n || qubits[..i].contains(&q) {
                return invalid(format!("bad qubit list {qubits:?} for {} qubits", self.n));
            }
        }
        Ok(())
    }

    /// `g·ρ` with `g` acting on `qubits`.
    fn left(&self, m: &CMat, qubits: &[usize], g: &CMat) -> CMat {
        let dim = 1 << self.n;
        let msk = mask(self.n, qubits);
        let k = g.nrows();
        let mut out = m.clone();
        let mut buf = vec![ZERO; k];
        for base in (0..dim).filter(|i| i & msk == 0) {
            let idx = block(self.n, qubits, base);
            for col in 0..dim {
                for (a, slot) in buf.iter_mut().enumerate() {
                    *slot = (0..k).map(|b| g[(a, b)] * m[(idx[b], col)]).sum();
                }
                for (a, &v) in buf.iter().enumerate() {
                    out[(idx[a], col)] = v;
                }
            }
        }
        out
    }

    /// `ρ → g ρ g†`.
    pub fn apply(&mut self, qubits: &[usize], g: &CMat) -> Result<()> {
        self.check(qubits, g.nrows())?;
        let half = self.left(&self.rho, qubits, g);
        self.rho = self.left(&half.adjoint(), qubits, g).adjoint();
        Ok(())
    }

    /// `ρ → Σ K ρ K†`.
    pub fn apply_kraus(&mut self, qubits: &[usize], kraus: &[CMat]) -> Result<()> {
        let mut acc = CMat::zeros(self.rho.nrows(), self.rho.ncols());
        for k in kraus {
            self.check(qubits, k.nrows())?;
            let half = self.left(&self.rho, qubits, k);
            acc += self.left(&half.adjoint(), qubits, k).adjoint();
        }
        self.rho = acc;
        Ok(())
    }

    /// `ρ → (1−λ)ρ + λ·Tr_S(ρ)⊗I/2^k` on the subsystem `qubits`.
    pub fn depolarize(&mut self, qubits: &[usize], lambda: f64) -> Result<()> {
        self.check(qubits, 1 << qubits.len())?;
        if !(0.0..=16.0 / 15.0 + 1e-12).contains(&lambda) {
            return invalid(format!("depolarizing parameter {lambda} out of range"));
        }
        if lambda == 0.0 {
            return Ok(());
        }
        let dim = 1 << self.n;
        let msk = mask(self.n, qubits);
        let sub = 1usize << qubits.len();
        let mut out = &self.rho * c(1.0 - lambda, 0.0);
        let w = c(lambda / sub as f64, 0.0);
        for bi in (0..dim).filter(|i| i & msk == 0) {
            let ri = block(self.n, qubits, bi);
            for bj in (0..dim).filter(|j| j & msk == 0) {
                let rj = block(self.n, qubits, bj);
                let tr: Complex64 = (0..sub).map(|s| self.rho[(ri[s], rj[s])]).sum();
                for s in 0..sub {
                    out[(ri[s], rj[s])] += w * tr;
                }
            }
        }
        self.rho = out;
        Ok(())
    }

    /// Computational-basis outcome probabilities, clipped at zero.
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.rho.nrows()).map(|i| self.rho[(i, i)].re.max(0.0)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }
}

/// Depolarizing parameter λ of `ρ → (1−λ)ρ + λI/D` for an average gate
/// infidelity `epg` on `qubits` qubits.
pub fn depolarizing_from_epg(epg: f64, qubits: usize) -> f64 {
    let d = (1usize << qubits) as f64;
    epg * d / (d - 1.0)
}

pub fn epg_from_depolarizing(lambda: f64, qubits: usize) -> f64 {
    let d = (1usize << qubits) as f64;
    lambda * (d - 1.0) / d
}

/// Common gates.
pub mod gates {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    pub fn h() -> CMat {
        CMat::from_row_slice(2, 2, &[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)])
    }

    pub fn x() -> CMat {
        crate::linalg::pauli('X')
    }

    pub fn s() -> CMat {
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, c(0.0, 1.0)])
    }

    pub fn t() -> CMat {
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)])
    }

    pub fn tdg() -> CMat {
        t().adjoint()
    }

    /// Control is the first qubit.
    pub fn cnot() -> CMat {
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = ONE;
        m[(1, 1)] = ONE;
        m[(2, 3)] = ONE;
        m[(3, 2)] = ONE;
        m
    }
}
