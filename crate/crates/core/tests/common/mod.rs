//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use mms_core::gates::{standard_gate, RotationParams, StandardGate};
use mms_core::history::{
    build_history_state, EvolutionSegment, GateKind, GateOp, HistorySpec, InitialState,
    PremeasureBasis, PremeasureEvent,
};
use mms_core::mms::readout_rotation;
use mms_core::qstate::{QubitLabel, Register, StateVector, Tensor, C64};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn angle(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>() * std::f64::consts::TAU - std::f64::consts::PI
}

pub fn rotation(rng: &mut impl Rng) -> RotationParams {
    RotationParams::new(rng.random::<f64>() * std::f64::consts::FRAC_PI_2, angle(rng))
}

/// Normalized amplitudes with Gaussian-ish components.
pub fn amplitudes(rng: &mut impl Rng, len: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..len)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

pub fn qubit_amplitudes(rng: &mut impl Rng) -> (C64, C64) {
    let a = amplitudes(rng, 2);
    (a[0], a[1])
}

fn gate(rng: &mut impl Rng, d: usize) -> GateOp {
    let q = rng.random_range(0..d as u32);
    let kind = match rng.random_range(0..if d > 1 { 5 } else { 4 }) {
        0 => GateKind::H,
        1 => GateKind::X,
        2 => GateKind::Z,
        3 => GateKind::R(rotation(rng)),
        _ => GateKind::Cnot,
    };
    let targets = if kind == GateKind::Cnot {
        let mut t = rng.random_range(0..d as u32 - 1);
        if t >= q {
            t += 1;
        }
        vec![q, t]
    } else {
        vec![q]
    };
    GateOp { kind, targets }
}

/// A random valid spec with the given sizes and no readouts.
pub fn random_spec(rng: &mut impl Rng, d: usize, n: usize, pure: bool) -> HistorySpec {
    let segments = (0..=n)
        .map(|_| EvolutionSegment {
            gates: (0..rng.random_range(0..4)).map(|_| gate(rng, d)).collect(),
        })
        .collect();
    let events = (0..n)
        .map(|l| PremeasureEvent {
            label: format!("e{}", l + 1),
            target: rng.random_range(0..d as u32),
            basis: match rng.random_range(0..3) {
                0 => None,
                1 => Some(PremeasureBasis::H),
                _ => Some(PremeasureBasis::Rotation(rotation(rng))),
            },
        })
        .collect();
    let init = if pure {
        InitialState::Pure(amplitudes(rng, 1 << d))
    } else {
        InitialState::MaximallyMixed
    };
    HistorySpec::new(d, init, segments, events, vec![]).expect("generated spec is valid")
}

/// Joint probabilities of every apparatus bit string after an explicit
/// readout: each event in `rotated` gets its readout rotation, is copied
/// onto a fresh `X` qubit by CNOT, and every apparatus qubit is then read
/// in the computational basis. Indexed with event 1 as the top bit.
pub fn explicit_joint_distribution(spec: &HistorySpec, rotated: &[(usize, RotationParams)]) -> Vec<f64> {
    let mut state = build_history_state(spec).expect("pure spec");
    for &(l, p) in rotated {
        let a = QubitLabel::A(l as u32 + 1);
        let x = QubitLabel::X(l as u32 + 1);
        state = state
            .apply(&readout_rotation(p), &[a])
            .unwrap()
            .tensor(&StateVector::zeros(Register::new([x]).unwrap()))
            .unwrap()
            .apply(&standard_gate(StandardGate::Cnot), &[a, x])
            .unwrap();
    }
    let n = spec.n();
    let shifts: Vec<usize> = (0..n)
        .map(|l| state.register().shift_of(QubitLabel::A(l as u32 + 1)).unwrap())
        .collect();
    let mut dist = vec![0.0; 1 << n];
    for (i, amp) in state.amplitudes().iter().enumerate() {
        let alpha = shifts
            .iter()
            .fold(0usize, |acc, &s| (acc << 1) | ((i >> s) & 1));
        dist[alpha] += amp.norm_sqr();
    }
    dist
}
