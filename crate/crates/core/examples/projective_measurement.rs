//! A projective measurement built from premeasurement and an isolated copy.
//!
//! Run with `cargo run --example projective_measurement`.

use mms_core::mms::{mms_measure, premeasure, ReadoutMode};
use mms_core::gates::RotationParams;
use mms_core::qstate::{von_neumann_entropy, QubitLabel, Register, StateVector, Tensor, C64};

fn main() -> mms_core::Result<()> {
    let s = QubitLabel::System(0);
    let a = QubitLabel::A(1);
    let psi = StateVector::qubit(s, C64::new(0.6, 0.0), C64::new(0.0, 0.8))?;
    let joint = psi.tensor(&StateVector::zeros(Register::new([a])?))?;
    let entangled = premeasure(&joint, s, a, None)?;

    let out = mms_measure(&entangled, a, RotationParams::projective(), ReadoutMode::ExplicitX)?;
    println!("reduced S+A state after isolating X:");
    println!("{:.4}", out.rho_sa.matrix().map(|z| z.re));
    for b in &out.branches {
        println!("r = {}  p = {:.4}", b.r, b.probability);
    }
    println!("entropy of S+A: {:.6} bits", von_neumann_entropy(&out.rho_sa)?);
    Ok(())
}
