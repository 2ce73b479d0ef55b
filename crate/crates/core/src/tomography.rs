// SPDX-License-Identifier: Apache-2.0

//! Pauli coefficients of the effective CR generator.
//!
//! Trajectories are generated for flat-top widths `w` of a CR pulse. For each
//! control basis state `b` the target Bloch vectors under several target
//! preparations are fitted jointly to `n(w) = R(r_b, w)·m0` with a shared
//! rotation vector `r_b` (MHz). The control-conditioned terms follow as
//! `ν_I· = (r_0 + r_1)/2` and `ν_Z· = (r_0 − r_1)/2`. `ν_ZI` comes from a
//! control Ramsey experiment on the same pulse.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, PairModel, Segment, COMPUTATIONAL, DIM};
use crate::error::{invalid, Error, Result};
use crate::linalg::{c, dagger, expm_hermitian, hermiticity_defect, pauli, pauli2, CMat, CVec, ONE, TWO_PI, ZERO};
use crate::pulse::Waveform;

/// Effective generator coefficients in MHz (`H = Σ ν_PQ P⊗Q`, control first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianCoefficients {
    pub zx: f64,
    pub zy: f64,
    pub ix: f64,
    pub iy: f64,
    pub zi: f64,
    pub zz: f64,
    pub iz: f64,
    /// Covariance in the order zx, zy, ix, iy, zi, zz, iz (MHz²).
    #[serde(default)]
    pub covariance: Vec<Vec<f64>>,
    /// Root-mean-square Bloch-component residual of the worse branch fit.
    #[serde(default)]
    pub fit_rms: f64,
}

impl HamiltonianCoefficients {
    pub const NAMES: [&'static str; 7] = ["zx", "zy", "ix", "iy", "zi", "zz", "iz"];

    pub fn from_values(v: [f64; 7]) -> Self {
        Self { zx: v[0], zy: v[1], ix: v[2], iy: v[3], zi: v[4], zz: v[5], iz: v[6], covariance: vec![vec![0.0; 7]; 7], fit_rms: 0.0 }
    }

    pub fn values(&self) -> [f64; 7] {
        [self.zx, self.zy, self.ix, self.iy, self.zi, self.zz, self.iz]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Largest absolute difference over all seven coefficients.
    pub fn max_difference(&self, other: &Self) -> f64 {
        self.values().iter().zip(other.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// All sixteen `Tr((P⊗Q)·H)/4` for `P, Q ∈ {I, X, Y, Z}`, indexed `[p][q]`.
pub fn pauli_decompose(h: &CMat) -> Result<[[f64; 4]; 4]> {
    if h.nrows() != 4 || h.ncols() != 4 {
        return Err(Error::Shape("expected a 4×4 generator".into()));
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if hermiticity_defect(h) > 1e-10 * scale {
        return invalid("generator is not Hermitian");
    }
    let labels = ['I', 'X', 'Y', 'Z'];
    let mut out = [[0.0; 4]; 4];
    for (i, &p) in labels.iter().enumerate() {
        for (j, &q) in labels.iter().enumerate() {
            out[i][j] = (pauli2(p, q) * h).trace().re / 4.0;
        }
    }
    Ok(out)
}

/// `Σ ν_PQ P⊗Q` from a full decomposition.
pub fn pauli_reconstruct(coeffs: &[[f64; 4]; 4]) -> CMat {
    let labels = ['I', 'X', 'Y', 'Z'];
    let mut h = CMat::zeros(4, 4);
    for (i, &p) in labels.iter().enumerate() {
        for (j, &q) in labels.iter().enumerate() {
            h += pauli2(p, q) * c(coeffs[i][j], 0.0);
        }
    }
    h
}

/// Projection of a Hermitian two-qubit generator onto the CR coefficient set.
pub fn pauli_project(h: &CMat) -> Result<HamiltonianCoefficients> {
    let d = pauli_decompose(h)?;
    // indices: I=0, X=1, Y=2, Z=3
    Ok(HamiltonianCoefficients::from_values([d[3][1], d[3][2], d[0][1], d[0][2], d[3][0], d[3][3], d[0][3]]))
}

/// Builds the 4×4 generator with the given coefficients.
pub fn generator_from(coeffs: &HamiltonianCoefficients) -> CMat {
    let mut full = [[0.0; 4]; 4];
    full[3][1] = coeffs.zx;
    full[3][2] = coeffs.zy;
    full[0][1] = coeffs.ix;
    full[0][2] = coeffs.iy;
    full[3][0] = coeffs.zi;
    full[3][3] = coeffs.zz;
    full[0][3] = coeffs.iz;
    pauli_reconstruct(&full)
}

/// Something that yields the computational block of the CR propagator for a
/// given flat-top width.
pub trait TrajectorySource: Sync {
    /// 4×4 block (basis |00⟩, |01⟩, |10⟩, |11⟩) for a flat width in ns.
    fn block(&self, width_ns: f64) -> Result<CMat>;
}

/// Constant 4×4 generator switched on for exactly `w`.
pub struct SyntheticSource {
    pub generator: CMat,
}

impl TrajectorySource for SyntheticSource {
    fn block(&self, width_ns: f64) -> Result<CMat> {
        Ok(expm_hermitian(&self.generator, TWO_PI * width_ns * 1e-3))
    }
}

/// A simulated CR pulse split into rise, flat top and fall. The flat top is
/// the longest run of identical samples; its length is replaced by the
/// requested width.
pub struct PulseSource {
    rise: CMat,
    flat: crate::linalg::SpectralGenerator,
    fall: CMat,
    /// Flat length of the original pulse, ns.
    pub nominal_width: f64,
}

impl PulseSource {
    pub fn new(model: &PairModel, control: &Waveform, target: Option<&Waveform>) -> Result<Self> {
        let mut segs = Vec::new();
        let event = crate::pulse::Event {
            start: 0.0,
            duration: control.duration(),
            kind: crate::pulse::EventKind::Cr { control: control.clone(), target: target.cloned() },
        };
        let sched = crate::pulse::PulseSchedule::new(crate::pulse::WaveformFamily::EchoedCR, vec![event])?;
        for s in dynamics::compile_schedule(model, &sched)? {
            segs.push(s);
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                Segment::Evolve { duration, .. } => Some((i, *duration)),
                Segment::Apply(_) => None,
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .ok_or_else(|| Error::Shape("empty CR pulse".into()))?;
        let Segment::Evolve { h, duration } = &segs[idx] else { unreachable!() };
        Ok(Self {
            rise: dynamics::segments_unitary(&segs[..idx]),
            flat: crate::linalg::SpectralGenerator::new(h),
            fall: dynamics::segments_unitary(&segs[idx + 1..]),
            nominal_width: *duration,
        })
    }

    pub fn unitary(&self, width_ns: f64) -> CMat {
        &self.fall * self.flat.propagator(TWO_PI * width_ns * 1e-3) * &self.rise
    }
}

impl TrajectorySource for PulseSource {
    fn block(&self, width_ns: f64) -> Result<CMat> {
        Ok(dynamics::computational_block(&self.unitary(width_ns)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetPrep {
    Zero,
    Plus,
    PlusI,
}

impl TargetPrep {
    fn spinor(self) -> [Complex64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Self::Zero => [ONE, ZERO],
            Self::Plus => [c(h, 0.0), c(h, 0.0)],
            Self::PlusI => [c(h, 0.0), c(0.0, h)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyConfig {
    /// Flat-top widths, ns, strictly increasing.
    pub durations: Vec<f64>,
    /// Shots per expectation value; `None` uses exact expectations.
    pub shots: Option<u64>,
    pub seed: u64,
    pub preps: Vec<TargetPrep>,
    /// Width offset of the paired Ramsey points used to unwrap the ZI phase, ns.
    pub ramsey_offset: f64,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self {
            durations: (0..12).map(|k| 40.0 * k as f64).collect(),
            shots: None,
            seed: 0,
            preps: vec![TargetPrep::Zero, TargetPrep::Plus],
            ramsey_offset: 1.0,
        }
    }
}

impl TomographyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.durations.len() < 6 {
            return invalid("tomography needs at least six durations");
        }
        if self.durations.windows(2).any(|w| !(w[1] > w[0])) || self.durations[0] < 0.0 {
            return invalid("durations must be non-negative and strictly increasing");
        }
        if self.preps.is_empty() {
            return invalid("at least one target preparation is required");
        }
        if !(self.ramsey_offset > 0.0) {
            return invalid("ramsey offset must be positive");
        }
        if self.shots == Some(0) {
            return invalid("shots must be positive");
        }
        Ok(())
    }
}

/// Target Bloch vector (post-selected on the computational subspace) for a
/// 4-component state, control first.
fn target_bloch(psi: &CVec) -> Vector3<f64> {
    // ρ_t[a][b] = Σ_c ψ[2c+a] ψ*[2c+b]
    let mut rho = [[ZERO; 2]; 2];
    for cidx in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                rho[a][b] += psi[2 * cidx + a] * psi[2 * cidx + b].conj();
            }
        }
    }
    let tr = (rho[0][0] + rho[1][1]).re.max(1e-300);
    Vector3::new(2.0 * rho[0][1].re / tr, -2.0 * rho[0][1].im / tr, (rho[0][0] - rho[1][1]).re / tr)
}

fn prepared(control: usize, prep: TargetPrep) -> CVec {
    let s = prep.spinor();
    let mut v = CVec::zeros(4);
    v[2 * control] = s[0];
    v[2 * control + 1] = s[1];
    v
}

/// Rodrigues rotation by `4π|r|t` (r in MHz, t in ns) about `r̂`.
pub fn bloch_rotation(r: &Vector3<f64>, t_ns: f64) -> Matrix3<f64> {
    let norm = r.norm();
    if norm == 0.0 {
        return Matrix3::identity();
    }
    let k = r / norm;
    let theta = 2.0 * TWO_PI * norm * t_ns * 1e-3;
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
}

#[derive(Debug, Clone)]
struct BranchFit {
    r: Vector3<f64>,
    m0: Vec<Vector3<f64>>,
    covariance: Matrix3<f64>,
    rms: f64,
}

/// Hand-rolled Levenberg–Marquardt on a small dense problem.
pub struct LevenbergMarquardt {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-15 }
    }
}

pub struct LmOutcome {
    pub params: DVector<f64>,
    pub cost: f64,
    pub jacobian: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub converged: bool,
}

impl LevenbergMarquardt {
    pub fn minimize(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>, p0: DVector<f64>) -> LmOutcome {
        let jac = |p: &DVector<f64>, r0: &DVector<f64>| {
            let mut j = DMatrix::zeros(r0.len(), p.len());
            for k in 0..p.len() {
                let h = 1e-7 * p[k].abs().max(1e-3);
                let mut pp = p.clone();
                pp[k] += h;
                let mut pm = p.clone();
                pm[k] -= h;
                j.set_column(k, &((f(&pp) - f(&pm)) / (2.0 * h)));
            }
            j
        };
        let mut p = p0;
        let mut r = f(&p);
        let mut cost = r.norm_squared();
        let mut lambda = 1e-3;
        let mut converged = false;
        let mut j = jac(&p, &r);
        for _ in 0..self.max_iter {
            let jt = j.transpose();
            let jtj = &jt * &j;
            let g = &jt * &r;
            let mut improved = false;
            for _ in 0..30 {
                let mut a = jtj.clone();
                for d in 0..a.nrows() {
                    a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
                }
                let Some(step) = a.lu().solve(&(-&g)) else {
                    lambda *= 10.0;
                    continue;
                };
                let cand = &p + &step;
                let rc = f(&cand);
                let cc = rc.norm_squared();
                if cc.is_finite() && cc < cost {
                    let rel = (cost - cc) / cost.max(1e-300);
                    p = cand;
                    r = rc;
                    cost = cc;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if rel < 1e-12 || cost < self.tol || step.norm() < 1e-14 * (1.0 + p.norm()) {
                        converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                converged = true;
                break;
            }
            if converged {
                break;
            }
            j = jac(&p, &r);
        }
        let jacobian = jac(&p, &r);
        LmOutcome { params: p, cost, jacobian, residuals: r, converged }
    }
}

/// Rotation best mapping frame `a` to frame `b` (columns are vectors), as a rotation vector in rad.
fn rotation_between(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Vector3<f64> {
    let mut m = Matrix3::zeros();
    for (x, y) in a.iter().zip(b) {
        m += y * x.transpose();
    }
    if a.len() == 1 {
        // single vector: minimal rotation
        let axis = a[0].cross(&b[0]);
        let s = axis.norm();
        let cth = a[0].dot(&b[0]);
        if s < 1e-15 {
            return Vector3::zeros();
        }
        return axis / s * s.atan2(cth);
    }
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rot = u * d * vt;
    let angle = ((rot.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
    if angle < 1e-15 {
        return Vector3::zeros();
    }
    let w = Vector3::new(rot[(2, 1)] - rot[(1, 2)], rot[(0, 2)] - rot[(2, 0)], rot[(1, 0)] - rot[(0, 1)]);
    if w.norm() < 1e-12 {
        return Vector3::zeros();
    }
    w.normalize() * angle
}

fn fit_branch(widths: &[f64], data: &[Vec<Vector3<f64>>]) -> Result<BranchFit> {
    // data[prep][k]
    let np = data.len();
    let nw = widths.len();
    // initial rotation from consecutive frames
    let mut guesses = Vec::new();
    for k in 0..nw - 1 {
        let a: Vec<_> = data.iter().map(|d| d[k]).collect();
        let b: Vec<_> = data.iter().map(|d| d[k + 1]).collect();
        let rv = rotation_between(&a, &b);
        guesses.push(rv / (2.0 * TWO_PI * (widths[k + 1] - widths[k]) * 1e-3));
    }
    let mut r0 = Vector3::zeros();
    for g in &guesses {
        r0 += g;
    }
    r0 /= guesses.len() as f64;

    let residual = |p: &DVector<f64>| {
        let r = Vector3::new(p[0], p[1], p[2]);
        let mut out = DVector::zeros(3 * np * nw);
        for (k, &w) in widths.iter().enumerate() {
            let rot = bloch_rotation(&r, w);
            for (j, d) in data.iter().enumerate() {
                let m0 = Vector3::new(p[3 + 3 * j], p[4 + 3 * j], p[5 + 3 * j]);
                let pred = rot * m0;
                for a in 0..3 {
                    out[3 * (j * nw + k) + a] = pred[a] - d[k][a];
                }
            }
        }
        out
    };

    let lm = LevenbergMarquardt::default();
    let mut best: Option<LmOutcome> = None;
    let starts = [r0, Vector3::zeros()];
    for start in starts {
        let mut p = DVector::zeros(3 + 3 * np);
        p[0] = start.x;
        p[1] = start.y;
        p[2] = start.z;
        // back-rotate the first sample to width zero
        let back = bloch_rotation(&start, -widths[0]);
        for (j, d) in data.iter().enumerate() {
            let m = back * d[0];
            p[3 + 3 * j] = m.x;
            p[4 + 3 * j] = m.y;
            p[5 + 3 * j] = m.z;
        }
        let out = lm.minimize(residual, p);
        if best.as_ref().is_none_or(|b| out.cost < b.cost) {
            best = Some(out);
        }
        if best.as_ref().is_some_and(|b| b.cost < 1e-20) {
            break;
        }
    }
    let out = best.expect("at least one start");
    let dof = (out.residuals.len() as f64 - out.params.len() as f64).max(1.0);
    let sigma2 = out.cost / dof;
    let rms = (out.cost / out.residuals.len() as f64).sqrt();
    // a converged but poor fit (e.g. strong leakage) is reported through rms and covariance
    if !out.cost.is_finite() || rms > 0.5 || (!out.converged && rms > 0.05) {
        return Err(Error::FitFailed {
            message: format!("Bloch trajectory fit rms {rms:.3e}"),
            residuals: out.residuals.iter().copied().collect(),
        });
    }
    let jtj = out.jacobian.transpose() * &out.jacobian;
    let cov_full = jtj.try_inverse().unwrap_or_else(|| DMatrix::zeros(out.params.len(), out.params.len())) * sigma2;
    let covariance = Matrix3::from_fn(|i, j| cov_full[(i, j)]);
    let p = &out.params;
    Ok(BranchFit {
        r: Vector3::new(p[0], p[1], p[2]),
        m0: (0..np).map(|j| Vector3::new(p[3 + 3 * j], p[4 + 3 * j], p[5 + 3 * j])).collect(),
        covariance,
        rms,
    })
}

fn sample_expectation(value: f64, shots: u64, rng: &mut ChaCha8Rng) -> f64 {
    let p = ((1.0 + value) / 2.0).clamp(0.0, 1.0);
    let k = Binomial::new(shots, p).map(|b| b.sample(rng)).unwrap_or(0);
    2.0 * k as f64 / shots as f64 - 1.0
}

/// Spinor (up to phase) with the given Bloch direction.
fn spinor_of(m: &Vector3<f64>) -> [Complex64; 2] {
    let n = m.norm().max(1e-300);
    let theta = (m.z / n).clamp(-1.0, 1.0).acos();
    let phi = m.y.atan2(m.x);
    [c((theta / 2.0).cos(), 0.0), Complex64::from_polar((theta / 2.0).sin(), phi)]
}

fn su2(r: &Vector3<f64>, t_ns: f64) -> CMat {
    let h = pauli('X') * c(r.x, 0.0) + pauli('Y') * c(r.y, 0.0) + pauli('Z') * c(r.z, 0.0);
    expm_hermitian(&h, TWO_PI * t_ns * 1e-3)
}

/// Fits the CR coefficients from any trajectory source.
pub fn tomography_from_source(source: &dyn TrajectorySource, cfg: &TomographyConfig) -> Result<HamiltonianCoefficients> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let widths = &cfg.durations;
    let blocks: Vec<CMat> = widths.iter().map(|&w| source.block(w)).collect::<Result<_>>()?;
    let shifted: Vec<CMat> = widths.iter().map(|&w| source.block(w + cfg.ramsey_offset)).collect::<Result<_>>()?;

    let mut fits = Vec::with_capacity(2);
    for b in 0..2 {
        let mut data = Vec::with_capacity(cfg.preps.len());
        for &prep in &cfg.preps {
            let psi0 = prepared(b, prep);
            let traj: Vec<Vector3<f64>> = blocks
                .iter()
                .map(|u| {
                    let v = target_bloch(&(u * &psi0));
                    match cfg.shots {
                        Some(s) => v.map(|x| sample_expectation(x, s, &mut rng)),
                        None => v,
                    }
                })
                .collect();
            data.push(traj);
        }
        fits.push(fit_branch(widths, &data)?);
    }
    let (r0, r1) = (fits[0].r, fits[1].r);
    let i_part = (r0 + r1) / 2.0;
    let z_part = (r0 - r1) / 2.0;

    let zi = ramsey_zi(&blocks, &shifted, widths, cfg, &fits)?;

    let mut coeffs = HamiltonianCoefficients::from_values([z_part.x, z_part.y, i_part.x, i_part.y, zi, z_part.z, i_part.z]);
    // axis of r_b feeding zx, zy, ix, iy, zi, zz, iz
    let map = [0usize, 1, 0, 1, usize::MAX, 2, 2];
    let mut cov = vec![vec![0.0; 7]; 7];
    for (i, &ai) in map.iter().enumerate() {
        for (j, &aj) in map.iter().enumerate() {
            if ai == usize::MAX || aj == usize::MAX {
                continue;
            }
            let si = if i < 2 || i == 5 { -1.0 } else { 1.0 };
            let sj = if j < 2 || j == 5 { -1.0 } else { 1.0 };
            cov[i][j] = 0.25 * (fits[0].covariance[(ai, aj)] + si * sj * fits[1].covariance[(ai, aj)]);
        }
    }
    coeffs.covariance = cov;
    coeffs.fit_rms = fits[0].rms.max(fits[1].rms);
    Ok(coeffs)
}

/// Control Ramsey: control in |+⟩, target in |0⟩. The control coherence
/// carries `exp(-i 4π ν_ZI w)` times the overlap of the two conditional target
/// states, which is predicted from the fitted branches and divided out.
fn ramsey_zi(
    blocks: &[CMat],
    shifted: &[CMat],
    widths: &[f64],
    cfg: &TomographyConfig,
    fits: &[BranchFit],
) -> Result<f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi0 = CVec::zeros(4);
    psi0[0] = c(h, 0.0);
    psi0[2] = c(h, 0.0);
    let coherence = |u: &CMat| {
        let psi = u * &psi0;
        psi[0] * psi[2].conj() + psi[1] * psi[3].conj()
    };
    let zero_idx = cfg.preps.iter().position(|p| *p == TargetPrep::Zero);
    let chi: Vec<[Complex64; 2]> = (0..2)
        .map(|b| match zero_idx {
            Some(j) => spinor_of(&fits[b].m0[j]),
            None => [ONE, ZERO],
        })
        .collect();
    let model_overlap = |w: f64| {
        let u0 = su2(&fits[0].r, w);
        let u1 = su2(&fits[1].r, w);
        let a = &u0 * CVec::from_column_slice(&chi[0]);
        let b = &u1 * CVec::from_column_slice(&chi[1]);
        // ⟨φ1|φ0⟩
        b[0].conj() * a[0] + b[1].conj() * a[1]
    };
    let residual_phase = |u: &CMat, w: f64| {
        let c0 = coherence(u);
        let m = model_overlap(w);
        (c0 * m.conj()).arg()
    };
    let mut coarse = Vec::new();
    let mut phases = Vec::new();
    for (k, &w) in widths.iter().enumerate() {
        let p = residual_phase(&blocks[k], w);
        let q = residual_phase(&shifted[k], w + cfg.ramsey_offset);
        let dphi = wrap(q - p);
        coarse.push(-dphi / (2.0 * TWO_PI * cfg.ramsey_offset * 1e-3));
        phases.push(p);
    }
    let nu_coarse = coarse.iter().sum::<f64>() / coarse.len() as f64;
    // unwrap against the coarse slope, then least squares on the unwrapped phases
    let mut unwrapped = Vec::with_capacity(phases.len());
    let base = phases[0];
    for (k, &w) in widths.iter().enumerate() {
        let predicted = base - 2.0 * TWO_PI * nu_coarse * (w - widths[0]) * 1e-3;
        let p = phases[k];
        let turns = ((predicted - p) / TWO_PI).round();
        unwrapped.push(p + turns * TWO_PI);
    }
    let n = widths.len() as f64;
    let mx = widths.iter().sum::<f64>() / n;
    let my = unwrapped.iter().sum::<f64>() / n;
    let sxx: f64 = widths.iter().map(|w| (w - mx).powi(2)).sum();
    let sxy: f64 = widths.iter().zip(&unwrapped).map(|(w, y)| (w - mx) * (y - my)).sum();
    let slope = sxy / sxx; // rad per ns
    Ok(-slope / (2.0 * TWO_PI * 1e-3))
}

fn wrap(x: f64) -> f64 {
    (x + std::f64::consts::PI).rem_euclid(TWO_PI) - std::f64::consts::PI
}

/// Tomography of a simulated CR pulse on `model`.
pub fn cr_tomography(
    model: &PairModel,
    control: &Waveform,
    target: Option<&Waveform>,
    cfg: &TomographyConfig,
) -> Result<HamiltonianCoefficients> {
    let source = PulseSource::new(model, control, target)?;
    tomography_from_source(&source, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragScan {
    /// Amplitude where the fitted line crosses zero.
    pub root: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Root outside the sampled amplitude range.
    pub extrapolated: bool,
}

/// Least-squares line through `(a, ν_ZZ)` points and its zero.
pub fn linear_zero_crossing(points: &[(f64, f64)], slope_tolerance: f64) -> Result<DragScan> {
    if points.len() < 2 {
        return invalid("need at least two points");
    }
    let mut amps: Vec<f64> = points.iter().map(|p| p.0).collect();
    amps.sort_by(f64::total_cmp);
    if amps.windows(2).any(|w| w[1] - w[0] <= 0.0) {
        return invalid("scan amplitudes must be distinct");
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if !(slope.abs() > slope_tolerance) {
        return Err(Error::NoCrossing(format!("|slope| {:.3e} below tolerance {slope_tolerance:.1e}", slope.abs())));
    }
    let root = -intercept / slope;
    let extrapolated = root < amps[0] || root > amps[amps.len() - 1];
    Ok(DragScan { root, slope, intercept, extrapolated })
}

/// Measures `ν_ZZ` at three IY-DRAG amplitudes and returns the zero crossing.
pub fn iy_drag_scan(
    amps: [f64; 3],
    mut measure: impl FnMut(f64) -> Result<HamiltonianCoefficients>,
    slope_tolerance: f64,
) -> Result<DragScan> {
    let mut points = Vec::with_capacity(3);
    for a in amps {
        points.push((a, measure(a)?.zz));
    }
    linear_zero_crossing(&points, slope_tolerance)
}

/// Effective 4×4 generator of a 9×9 unitary restricted to the computational
/// block, via the principal matrix logarithm of its unitary part.
pub fn effective_generator(u9: &CMat, duration_ns: f64) -> Result<CMat> {
    if u9.nrows() != DIM {
        return Err(Error::Shape("expected a 9×9 propagator".into()));
    }
    let blk = CMat::from_fn(4, 4, |i, j| u9[(COMPUTATIONAL[i], COMPUTATIONAL[j])]);
    // polar part: blk (blk† blk)^(-1/2)
    let p = crate::linalg::sqrtm_psd(&(dagger(&blk) * &blk));
    let pinv = p.try_inverse().ok_or_else(|| Error::Numeric("singular computational block".into()))?;
    let w = blk * pinv;
    let eig = w.clone().schur();
    let (q, t) = eig.unpack();
    let mut logt = CMat::zeros(4, 4);
    for i in 0..4 {
        logt[(i, i)] = c(0.0, t[(i, i)].arg());
    }
    let log_w = &q * logt * dagger(&q);
    // W = exp(-i 2π H t)  ⇒  H = i log W / (2π t)
    let h = log_w * c(0.0, 1.0 / (TWO_PI * duration_ns * 1e-3));
    Ok((&h + dagger(&h)) * c(0.5, 0.0))
}
