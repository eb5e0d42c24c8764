//! Weak readout: rotate the apparatus before isolating it.
//!
//! Prints Kraus operators, outcome probabilities and post-measurement
//! states for a few rotation angles, then samples one outcome.

use mms_core::gates::RotationParams;
use mms_core::mms::{kraus_ops, mms_measure, premeasure, sample_outcome, ReadoutMode};
use mms_core::qstate::{QubitLabel, Register, StateVector, Tensor, C64};

fn main() -> mms_core::Result<()> {
    let s = QubitLabel::System(0);
    let a = QubitLabel::A(1);
    let psi = StateVector::qubit(s, C64::new(0.8, 0.0), C64::new(0.36, 0.48))?;
    let joint = premeasure(&psi.tensor(&StateVector::zeros(Register::new([a])?))?, s, a, None)?;

    for theta in [0.0, 0.3, 0.6, std::f64::consts::FRAC_PI_4] {
        let p = RotationParams::new(theta, 0.25);
        let k = kraus_ops(p);
        println!("theta = {theta:.3}  completeness defect {:.1e}", k.completeness_defect());
        let out = mms_measure(&joint, a, p, ReadoutMode::Dephase)?;
        for b in &out.branches {
            let amp = b.post_state.amplitudes();
            println!(
                "  r={} p={:.4}  post = {:.3}|0> + {:.3}|1>",
                b.r, b.probability, amp[0], amp[1]
            );
        }
        let r = sample_outcome(&out.branches, 42)?.r;
        println!("  sampled r = {r}");
    }
    Ok(())
}
