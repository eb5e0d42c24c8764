//! Two premeasurements of one qubit with a rotation in between.
//!
//! The histories interfere until the apparatus qubits are read out; after
//! readout the history matrix splits into independent branches.

use mms_core::cli::parse_history_spec;
use mms_core::history::{apply_mms_to_history, consistency_check, history_density_matrix, MeasuredEvent};
use mms_core::gates::RotationParams;

const SPEC: &str = "
system 1
init pure 0.6,0 0.8,0
premeasure first target=0
gate r 0 theta=0.39269908169872414 phi=0
premeasure second target=0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = parse_history_spec(SPEC)?;
    let d = history_density_matrix(&spec)?;
    println!("history density matrix (real part):\n{:.4}", d.entries.map(|z| z.re));
    let before = consistency_check(&d, 1e-12);
    println!("consistent before readout: {} (max off-diagonal {:.4})", before.consistent, before.max_off_diagonal);

    let measure_all: Vec<MeasuredEvent> = ["first", "second"]
        .iter()
        .map(|l| MeasuredEvent { label: l.to_string(), rotation: RotationParams::projective() })
        .collect();
    let tree = apply_mms_to_history(&d, &measure_all)?;
    let after = consistency_check(&tree.full_matrix(), 1e-12);
    println!("consistent after readout:  {} (max off-diagonal {:.1e})", after.consistent, after.max_off_diagonal);
    for b in &tree.branches {
        println!("  beta = {:?}  p = {:.4}", b.beta, b.probability);
    }

    // read only the second event; the first keeps its coherence
    let partial = apply_mms_to_history(&d, &measure_all[1..])?;
    for b in &partial.branches {
        println!("second = {}: p = {:.4}, residual (real part)\n{:.4}", b.beta[0], b.probability, b.residual.map(|z| z.re));
    }
    Ok(())
}
