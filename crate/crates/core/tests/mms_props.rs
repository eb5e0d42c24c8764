mod common;

use mms_core::gates::RotationParams;
use mms_core::mms::{kraus_ops, mms_measure, premeasure, ReadoutMode};
use mms_core::qstate::{
    max_abs_diff, shannon_entropy, von_neumann_entropy, QubitLabel, Register, StateVector, Tensor, C64,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn premeasured(c0: C64, c1: C64) -> StateVector {
    let s = QubitLabel::System(0);
    let a = QubitLabel::A(1);
    let psi = StateVector::new(Register::new([s]).unwrap(), vec![c0, c1]).unwrap();
    premeasure(&psi.tensor(&StateVector::zeros(Register::new([a]).unwrap())).unwrap(), s, a, None).unwrap()
}

fn amp() -> impl Strategy<Value = (C64, C64)> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
        .prop_map(|(a, b, c, d)| (C64::new(a, b), C64::new(c, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kraus_pair_is_complete(theta in -4.0..4.0f64, phi in -4.0..4.0f64) {
        prop_assert!(kraus_ops(RotationParams::new(theta, phi)).completeness_defect() < 1e-12);
    }

    #[test]
    fn readout_modes_agree((c0, c1) in amp(), theta in 0.0..1.6f64, phi in -3.0..3.0f64) {
        let st = premeasured(c0, c1);
        let p = RotationParams::new(theta, phi);
        let x = mms_measure(&st, QubitLabel::A(1), p, ReadoutMode::ExplicitX).unwrap();
        let d = mms_measure(&st, QubitLabel::A(1), p, ReadoutMode::Dephase).unwrap();
        prop_assert!(max_abs_diff(x.rho_sa.matrix(), d.rho_sa.matrix()) < 1e-12);
        for r in [0u8, 1] {
            prop_assert!((x.probability(r) - d.probability(r)).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_of_readout_equals_outcome_entropy((c0, c1) in amp(), theta in 0.0..1.6f64, phi in -3.0..3.0f64) {
        let out = mms_measure(&premeasured(c0, c1), QubitLabel::A(1), RotationParams::new(theta, phi), ReadoutMode::ExplicitX).unwrap();
        let probs = [out.probability(0), out.probability(1)];
        let s_vn = von_neumann_entropy(&out.rho_sa).unwrap();
        prop_assert!((s_vn - shannon_entropy(&probs).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn branches_are_normalized((c0, c1) in amp(), theta in 0.0..1.6f64, phi in -3.0..3.0f64) {
        let out = mms_measure(&premeasured(c0, c1), QubitLabel::A(1), RotationParams::new(theta, phi), ReadoutMode::Dephase).unwrap();
        let total: f64 = out.branches.iter().map(|b| b.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for b in &out.branches {
            prop_assert!((b.post_state.norm_sqr() - 1.0).abs() < 1e-12);
        }
        prop_assert!((out.rho_sa.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitaries_preserve_norm((c0, c1) in amp(), theta in -3.0..3.0f64, phi in -3.0..3.0f64) {
        let st = premeasured(c0, c1);
        let u = mms_core::gates::rotation_gate(RotationParams::new(theta, phi));
        let out = st.apply(&u, &[QubitLabel::System(0)]).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        let m = u.matrix();
        prop_assert!(max_abs_diff(&(m.adjoint() * m), &DMatrix::identity(2, 2)) < 1e-12);
    }
}
