// SPDX-License-Identifier: Apache-2.0

//! Two-qubit randomized benchmarking: interleaved RB and layer fidelity.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clifford::CliffordGroup;
use super::sim::{depolarizing_from_epg, gates, DensityMatrix};
use crate::error::{invalid, Error, Result};
use crate::linalg::{identity, CMat};
use crate::tomography::LevenbergMarquardt;

/// Error channel applied after a two-qubit operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairChannel {
    Ideal,
    /// `ρ → (1−λ)ρ + λI/4`.
    Depolarizing { lambda: f64 },
    Kraus(Vec<CMat>),
}

impl PairChannel {
    pub fn from_epg(epg: f64) -> Result<Self> {
        if !(0.0..=0.75).contains(&epg) {
            return invalid(format!("two-qubit error per gate {epg} outside [0, 0.75]"));
        }
        Ok(if epg == 0.0 { Self::Ideal } else { Self::Depolarizing { lambda: depolarizing_from_epg(epg, 2) } })
    }

    pub fn apply(&self, dm: &mut DensityMatrix, qubits: &[usize]) -> Result<()> {
        match self {
            Self::Ideal => Ok(()),
            Self::Depolarizing { lambda } => dm.depolarize(qubits, *lambda),
            Self::Kraus(k) => dm.apply_kraus(qubits, k),
        }
    }

    /// `k` applications of a depolarizing channel collapse to one.
    fn depolarizing_power(&self, k: usize) -> Option<Self> {
        match self {
            Self::Ideal => Some(Self::Ideal),
            Self::Depolarizing { lambda } => Some(Self::Depolarizing { lambda: 1.0 - (1.0 - lambda).powi(k as i32) }),
            Self::Kraus(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrbConfig {
    pub lengths: Vec<usize>,
    pub repeats: usize,
    pub sequences_per_length: usize,
    pub shots: u64,
    pub seed: u64,
}

impl Default for IrbConfig {
    fn default() -> Self {
        Self { lengths: vec![1, 10, 20, 50, 100, 150, 250, 400], repeats: 5, sequences_per_length: 12, shots: 1000, seed: 0 }
    }
}

impl IrbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.len() < 3 || self.lengths.windows(2).any(|w| w[0] >= w[1]) || self.lengths[0] == 0 {
            return invalid("sequence lengths must be ≥ 3 positive, strictly increasing values");
        }
        if self.repeats == 0 || self.sequences_per_length == 0 || self.shots == 0 {
            return invalid("repeats, sequences per length and shots must be positive");
        }
        Ok(())
    }
}

/// Noise seen by an IRB experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrbNoise {
    /// Error of the interleaved gate.
    pub gate: PairChannel,
    /// Error per CNOT inside each reference Clifford.
    pub clifford_cnot: PairChannel,
}

impl IrbNoise {
    /// Cliffords compiled from the same native gate as the one under test.
    pub fn from_gate_epg(epg: f64) -> Result<Self> {
        let ch = PairChannel::from_epg(epg)?;
        Ok(Self { gate: ch.clone(), clifford_cnot: ch })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub rms: f64,
}

/// Fits `A·α^m + B` to mean survival probabilities.
pub fn fit_decay(lengths: &[usize], survival: &[f64]) -> Result<DecayFit> {
    if lengths.len() != survival.len() || lengths.len() < 3 {
        return invalid("decay fit needs ≥ 3 matching points");
    }
    // log-linear start on p − 1/4
    let pts: Vec<(f64, f64)> =
        lengths.iter().zip(survival).filter(|(_, &p)| p > 0.26).map(|(&m, &p)| (m as f64, (p - 0.25).ln())).collect();
    let alpha0 = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / n, sy / n);
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxy / sxx.max(1e-300)).exp().clamp(0.5, 1.0)
    } else {
        0.9
    };
    let xs: Vec<f64> = lengths.iter().map(|&m| m as f64).collect();
    let model = |p: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(xs.len(), xs.iter().zip(survival).map(|(&m, &y)| p[0] * p[1].powf(m) + p[2] - y))
    };
    let lm = LevenbergMarquardt { max_iter: 300, tol: 1e-16 };
    let out = lm.minimize(model, DVector::from_vec(vec![0.75, alpha0, 0.25]));
    let (a, alpha, b) = (out.params[0], out.params[1], out.params[2]);
    let rms = (out.cost / xs.len() as f64).sqrt();
    if !(alpha > 0.0 && alpha <= 1.0 + 1e-9) || !a.is_finite() || !b.is_finite() {
        return Err(Error::FitFailed {
            message: format!("decay rate {alpha} outside (0, 1]"),
            residuals: out.residuals.iter().copied().collect(),
        });
    }
    Ok(DecayFit { a, alpha: alpha.min(1.0), b, rms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SeqKind {
    Reference,
    Interleaved,
    Direct,
}

fn sequence_rng(seed: u64, repeat: usize, kind: SeqKind, length: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = match kind {
        SeqKind::Reference => 0u64,
        SeqKind::Interleaved => 1,
        SeqKind::Direct => 2,
    };
    rng.set_stream(((repeat as u64) << 48) | (k << 44) | ((length as u64) << 16) | index as u64);
    rng
}

/// Survival probability of |00⟩ after one random sequence, plus its shot estimate.
fn run_sequence(
    group: &CliffordGroup,
    length: usize,
    kind: SeqKind,
    gate_channel: &PairChannel,
    clifford_cnot: &PairChannel,
    rng: &mut ChaCha8Rng,
    shots: u64,
) -> Result<f64> {
    let q = [0, 1];
    let mut dm = DensityMatrix::zero(2)?;
    let mut net = identity(4);
    let cnot = gates::cnot();
    let clifford_noise = |dm: &mut DensityMatrix, idx: usize| -> Result<()> {
        let k = group.cnot_count(idx);
        match clifford_cnot.depolarizing_power(k) {
            Some(ch) => ch.apply(dm, &q),
            None => (0..k).try_for_each(|_| clifford_cnot.apply(dm, &q)),
        }
    };
    for _ in 0..length {
        let idx = group.sample(rng);
        let c = group.element(idx);
        dm.apply(&q, c)?;
        clifford_noise(&mut dm, idx)?;
        net = c * net;
        match kind {
            SeqKind::Reference => {}
            SeqKind::Interleaved => {
                dm.apply(&q, &cnot)?;
                gate_channel.apply(&mut dm, &q)?;
                net = &cnot * net;
            }
            SeqKind::Direct => gate_channel.apply(&mut dm, &q)?,
        }
    }
    let inv = net.adjoint();
    dm.apply(&q, &inv)?;
    if kind != SeqKind::Direct {
        let idx = group.find(&inv).ok_or_else(|| Error::Numeric("recovery is not a Clifford".into()))?;
        clifford_noise(&mut dm, idx)?;
    }
    let p = dm.probabilities()[0].clamp(0.0, 1.0);
    let hits = Binomial::new(shots, p).map_err(|e| Error::Numeric(e.to_string()))?.sample(rng);
    Ok(hits as f64 / shots as f64)
}

fn survival_curve(
    cfg: &IrbConfig,
    repeat: usize,
    kind: SeqKind,
    gate_channel: &PairChannel,
    clifford_cnot: &PairChannel,
) -> Result<Vec<f64>> {
    let group = CliffordGroup::get();
    cfg.lengths
        .par_iter()
        .map(|&m| {
            let mut acc = 0.0;
            for i in 0..cfg.sequences_per_length {
                let mut rng = sequence_rng(cfg.seed, repeat, kind, m, i);
                acc += run_sequence(group, m, kind, gate_channel, clifford_cnot, &mut rng, cfg.shots)?;
            }
            Ok(acc / cfg.sequences_per_length as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrbRepeat {
    pub reference: DecayFit,
    pub interleaved: DecayFit,
    pub reference_curve: Vec<f64>,
    pub interleaved_curve: Vec<f64>,
    pub gate_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrbResult {
    pub lengths: Vec<usize>,
    pub mean: f64,
    pub std: f64,
    pub repeats: Vec<IrbRepeat>,
}

/// Gate error from reference and interleaved decays, `(1 − α_int/α_ref)(D−1)/D` with D = 4.
pub fn irb_error(alpha_ref: f64, alpha_int: f64) -> f64 {
    (1.0 - alpha_int / alpha_ref) * 3.0 / 4.0
}

pub fn irb_gate_error(noise: &IrbNoise, cfg: &IrbConfig) -> Result<IrbResult> {
    cfg.validate()?;
    let repeats = (0..cfg.repeats)
        .map(|r| {
            let reference_curve = survival_curve(cfg, r, SeqKind::Reference, &noise.gate, &noise.clifford_cnot)?;
            let interleaved_curve = survival_curve(cfg, r, SeqKind::Interleaved, &noise.gate, &noise.clifford_cnot)?;
            let reference = fit_decay(&cfg.lengths, &reference_curve)?;
            let interleaved = fit_decay(&cfg.lengths, &interleaved_curve)?;
            let gate_error = irb_error(reference.alpha, interleaved.alpha);
            Ok(IrbRepeat { reference, interleaved, reference_curve, interleaved_curve, gate_error })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(repeats.iter().map(|r| r.gate_error));
    Ok(IrbResult { lengths: cfg.lengths.clone(), mean, std, repeats })
}

pub(crate) fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count().max(1) as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 { xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

// ---------------------------------------------------------------- layer fidelity

/// `(1 + (D²−1)α)/D²`.
pub fn process_fidelity(alpha: f64, dim: usize) -> f64 {
    let d2 = (dim * dim) as f64;
    (1.0 + (d2 - 1.0) * alpha) / d2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPair {
    pub a: usize,
    pub b: usize,
    pub alpha: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFidelityResult {
    pub layers: Vec<Vec<LayerPair>>,
    pub n: usize,
    pub m: usize,
    pub lf: f64,
    pub eplg: f64,
}

/// Layer fidelity `Π_m Π_j F_{j,m}` and `EPLG = 1 − LF^{1/n}` from per-pair decays.
pub fn layer_fidelity(layers: &[Vec<(usize, usize, f64)>], n: usize) -> Result<LayerFidelityResult> {
    if n < 2 {
        return invalid("layer fidelity needs at least two qubits");
    }
    let mut lf = 1.0;
    let mut out = Vec::with_capacity(layers.len());
    for layer in layers {
        let mut pairs = Vec::with_capacity(layer.len());
        for &(a, b, alpha) in layer {
            if !(0.0..=1.0).contains(&alpha) {
                return invalid(format!("decay rate {alpha} outside [0, 1]"));
            }
            let fidelity = process_fidelity(alpha, 4);
            lf *= fidelity;
            pairs.push(LayerPair { a, b, alpha, fidelity });
        }
        out.push(pairs);
    }
    Ok(LayerFidelityResult { m: out.len(), layers: out, n, lf, eplg: 1.0 - lf.powf(1.0 / n as f64) })
}

/// Two disjoint layers over a qubit chain: pairs starting at even, then odd positions.
pub fn chain_layers(chain: &[usize]) -> Result<Vec<Vec<(usize, usize)>>> {
    if chain.len() < 2 {
        return invalid("chain needs at least two qubits");
    }
    let pairs: Vec<(usize, usize)> = chain.windows(2).map(|w| (w[0], w[1])).collect();
    let even = pairs.iter().step_by(2).copied().collect();
    let odd: Vec<_> = pairs.iter().skip(1).step_by(2).copied().collect();
    Ok(if odd.is_empty() { vec![even] } else { vec![even, odd] })
}

/// Simulated layer fidelity: every pair in every layer gets an independent
/// direct-RB decay under its own channel.
pub fn eplg(
    chain: &[usize],
    channel: impl Fn(usize, usize) -> Result<PairChannel> + Sync,
    cfg: &IrbConfig,
) -> Result<LayerFidelityResult> {
    cfg.validate()?;
    let layers = chain_layers(chain)?;
    let group = CliffordGroup::get();
    let mut decays = Vec::with_capacity(layers.len());
    for (li, layer) in layers.iter().enumerate() {
        let fitted = layer
            .par_iter()
            .enumerate()
            .map(|(pi, &(a, b))| {
                let ch = channel(a, b)?;
                let curve = cfg
                    .lengths
                    .iter()
                    .map(|&m| {
                        let mut acc = 0.0;
                        for i in 0..cfg.sequences_per_length {
                            let mut rng = sequence_rng(cfg.seed, li * 1024 + pi, SeqKind::Direct, m, i);
                            acc += run_sequence(group, m, SeqKind::Direct, &ch, &PairChannel::Ideal, &mut rng, cfg.shots)?;
                        }
                        Ok(acc / cfg.sequences_per_length as f64)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok((a, b, fit_decay(&cfg.lengths, &curve)?.alpha))
            })
            .collect::<Result<Vec<_>>>()?;
        decays.push(fitted);
    }
    layer_fidelity(&decays, chain.len())
}
