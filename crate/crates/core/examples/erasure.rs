//! Undoing a premeasurement by reading the apparatus out in the rotated
//! basis and correcting the `r = 0` branch with a Z.

use mms_core::mms::{erasure_branches, erase_premeasurement};
use mms_core::qstate::{fidelity, QubitLabel, Register, StateVector, Tensor, C64};

fn main() -> mms_core::Result<()> {
    let s = QubitLabel::System(0);
    let a = QubitLabel::A(1);
    let psi = StateVector::qubit(s, C64::new(0.6, 0.0), C64::new(0.0, 0.8))?;
    let entangled = mms_core::mms::premeasure(
        &psi.tensor(&StateVector::zeros(Register::new([a])?))?,
        s,
        a,
        None,
    )?;

    for b in erasure_branches(&entangled, s, a)? {
        println!(
            "r = {}  p = {:.6}  fidelity with original = {:.12}",
            b.r,
            b.probability,
            fidelity(&psi, &b.post_state)?
        );
    }
    for seed in 0..4 {
        let (restored, r) = erase_premeasurement(&entangled, s, a, seed)?;
        println!("seed {seed}: r = {r}, fidelity {:.12}", fidelity(&psi, &restored)?);
    }
    Ok(())
}
