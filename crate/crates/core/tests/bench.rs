// SPDX-License-Identifier: Apache-2.0

use num_bigint::BigInt;
use num_rational::BigRational;
use paircal_core::bench::{
    app_benchmark, irb_gate_error, qv_pass, qv_threshold_passes, AppCircuit, AppNoise, IrbConfig, IrbNoise, QvNoise,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reference for the heavy-output test in exact rationals:
/// `n_h − (2/3)·n_c·n_s > 2·√(n_h(n_s − n_h/n_c))`, squared when the left side is positive.
fn qv_reference(n_h: u64, n_c: u64, n_s: u64) -> bool {
    let r = |x: u64| BigRational::from_integer(BigInt::from(x));
    let lhs = r(n_h) - r(2) * r(n_c) * r(n_s) / r(3);
    let radicand = r(n_h) * (r(n_s) - r(n_h) / r(n_c));
    if lhs <= r(0) {
        return false;
    }
    lhs.clone() * lhs > r(4) * radicand
}

#[test]
fn qv_threshold_matches_rational_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut passes = 0;
    for i in 0..1000 {
        let n_c = rng.random_range(1..=200u64);
        let n_s = rng.random_range(1..=2000u64);
        let total = n_c * n_s;
        let n_h = match i % 4 {
            // boundary ⌈(2/3)·n_c·n_s⌉
            0 => (2 * total).div_ceil(3),
            1 => rng.random_range((2 * total / 3)..=total),
            _ => rng.random_range(0..=total),
        };
        let got = qv_threshold_passes(n_h, n_c, n_s).unwrap();
        assert_eq!(got, qv_reference(n_h, n_c, n_s), "n_h={n_h} n_c={n_c} n_s={n_s}");
        passes += usize::from(got);
    }
    assert!(passes > 50);
}

#[test]
fn qv_noiseless_and_noisy() {
    for d in [4, 5] {
        let r = qv_pass(d, 100, 100, &QvNoise::noiseless(), 11).unwrap();
        assert!(r.pass, "{r:?}");
    }
    let r = qv_pass(4, 100, 100, &QvNoise::depolarizing(0.05), 11).unwrap();
    assert!(!r.pass, "{r:?}");
}

#[test]
fn irb_recovers_injected_error() {
    for (epg, tol) in [(0.006, 0.20), (0.0013, 0.25)] {
        let cfg = IrbConfig { seed: 17, ..Default::default() };
        let r = irb_gate_error(&IrbNoise::from_gate_epg(epg).unwrap(), &cfg).unwrap();
        let rel = (r.mean - epg).abs() / epg;
        assert!(rel < tol, "injected {epg}: recovered {} ± {} ({rel:.3})", r.mean, r.std);
    }
}

/// GHZ chain output under i.i.d. two-qubit depolarizing noise. Each
/// depolarizing event draws one of 16 Paulis; propagated to the end of the
/// CNOT chain it flips either nothing, only the control, the target and all
/// later qubits, or the control and all later qubits.
fn ghz_fidelity_oracle(n: usize, epg: f64) -> f64 {
    let lambda = epg * 4.0 / 3.0;
    let mut dist = vec![0.0; 1 << n];
    dist[0] = 1.0;
    for k in 0..n - 1 {
        let tail: usize = (k + 1..n).map(|q| 1 << (n - 1 - q)).sum();
        let ctrl = 1 << (n - 1 - k);
        let patterns = [(0, 1.0 - lambda + lambda / 4.0), (ctrl, lambda / 4.0), (tail, lambda / 4.0), (ctrl | tail, lambda / 4.0)];
        let mut next = vec![0.0; 1 << n];
        for (x, p) in dist.iter().enumerate() {
            for (f, w) in patterns {
                next[x ^ f] += p * w;
            }
        }
        dist = next;
    }
    dist[0] + dist[(1 << n) - 1]
}

#[test]
fn ghz_matches_channel_oracle() {
    let epg = 0.1 * 3.0 / 4.0; // λ = 0.1
    for n in [3, 4, 5] {
        let r = app_benchmark(AppCircuit::Ghz(n), &AppNoise::depolarizing(epg)).unwrap();
        let oracle = ghz_fidelity_oracle(n, epg);
        assert!((r.f - oracle).abs() < 0.02, "n={n}: {} vs {oracle}", r.f);
    }
}

#[test]
fn lower_error_never_lowers_fidelity() {
    for c in AppCircuit::builtin_set() {
        let mut last = -1.0;
        for epg in [0.08, 0.04, 0.02, 0.01, 0.005, 0.0] {
            let r = app_benchmark(c, &AppNoise::depolarizing(epg)).unwrap();
            assert!(r.f >= last - 1e-12, "{c:?} at {epg}");
            last = r.f;
        }
    }
}
