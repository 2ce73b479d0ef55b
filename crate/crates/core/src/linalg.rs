// SPDX-License-Identifier: Apache-2.0

//! Small dense complex linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// 2π, converting cyclic MHz·µs to radians.
pub const TWO_PI: f64 = std::f64::consts::TAU;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn trace(m: &CMat) -> Complex64 {
    m.trace()
}

/// Truncated annihilation operator on `levels` levels.
pub fn annihilation(levels: usize) -> CMat {
    let mut a = CMat::zeros(levels, levels);
    for n in 1..levels {
        a[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn pauli(label: char) -> CMat {
    match label {
        'I' => identity(2),
        'X' => CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        'Y' => CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        'Z' => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        other => panic!("unknown Pauli label {other}"),
    }
}

/// Two-qubit Pauli `P⊗Q`, first factor acting on the control.
pub fn pauli2(p: char, q: char) -> CMat {
    kron(&pauli(p), &pauli(q))
}

/// Largest absolute deviation from Hermiticity.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, returning (eigenvalues, eigenvectors as columns).
pub fn eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let herm = (h + h.adjoint()) * c(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// `exp(-i·theta·H)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMat, theta: f64) -> CMat {
    let (vals, vecs) = eigh(h);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -theta * v);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    scaled * vecs.adjoint()
}

/// Precomputed spectral form of a Hermitian generator for repeated exponentials.
#[derive(Debug, Clone)]
pub struct SpectralGenerator {
    values: Vec<f64>,
    vectors: CMat,
    vectors_adj: CMat,
}

impl SpectralGenerator {
    pub fn new(h: &CMat) -> Self {
        let (values, vectors) = eigh(h);
        let vectors_adj = vectors.adjoint();
        Self { values, vectors, vectors_adj }
    }

    /// `exp(-i·theta·H)`.
    pub fn propagator(&self, theta: f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -theta * v);
            for i in 0..n {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * &self.vectors_adj
    }
}

/// General matrix exponential (Padé, via nalgebra).
pub fn expm(m: &CMat) -> CMat {
    m.clone().exp()
}

/// Vectorization helpers using column stacking: vec(AXB) = (Bᵀ ⊗ A) vec(X).
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVec, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

/// Superoperator of the Lindblad dissipator `D[L]` in the column-stacking convention.
pub fn dissipator_superop(l: &CMat, rate: f64) -> CMat {
    let n = l.nrows();
    let id = identity(n);
    let ldl = l.adjoint() * l;
    let lconj = l.map(|z| z.conj());
    let term = kron(&lconj, l) - kron(&id, &ldl) * c(0.5, 0.0) - kron(&ldl.transpose(), &id) * c(0.5, 0.0);
    term * c(rate, 0.0)
}

/// Purity Tr(ρ²).
pub fn purity(rho: &CMat) -> f64 {
    (rho * rho).trace().re
}

/// Principal square root of a Hermitian positive semidefinite matrix.
pub fn sqrtm_psd(m: &CMat) -> CMat {
    let (vals, vecs) = eigh(m);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let r = v.max(0.0).sqrt();
        for i in 0..vals.len() {
            scaled[(i, j)] *= r;
        }
    }
    scaled * vecs.adjoint()
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²` between density operators.
pub fn state_fidelity(rho: &CMat, sigma: &CMat) -> f64 {
    let s = sqrtm_psd(rho);
    let inner = &s * sigma * &s;
    let (vals, _) = eigh(&inner);
    let t: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    t * t
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigh(m).0.into_iter().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_hermitian_matches_pade() {
        let h = pauli2('Z', 'X') * c(0.3, 0.0) + pauli2('I', 'Y') * c(-0.7, 0.0);
        let a = expm_hermitian(&h, 1.3);
        let b = expm(&(h * c(0.0, -1.3)));
        assert!(max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn dissipator_superop_is_trace_preserving() {
        let l = annihilation(3);
        let s = dissipator_superop(&l, 0.4);
        let mut rho = CMat::zeros(3, 3);
        rho[(1, 1)] = c(0.5, 0.0);
        rho[(2, 2)] = c(0.5, 0.0);
        rho[(1, 2)] = c(0.2, 0.1);
        rho[(2, 1)] = c(0.2, -0.1);
        let d = unvec(&(s * vec_of(&rho)), 3);
        assert!(d.trace().norm() < 1e-14);
        // |1⟩ decays at the rate, |2⟩ at twice the rate
        assert!((d[(1, 1)].re - (0.4 * 2.0 * 0.5 - 0.4 * 0.5)).abs() < 1e-14);
    }
}
