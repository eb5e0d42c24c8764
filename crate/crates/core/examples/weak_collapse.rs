//! Gradual collapse under repeated weak readouts.
//!
//! Prints the extracted fraction of the initial entropy as `N` grows for a
//! few rotation angles, next to the `1 - exp(-N/N*)` model.

use std::f64::consts::FRAC_PI_4;

use mms_core::collapse::{extraction_curve, nstar_asymptotic, outcome_distribution};

fn main() -> mms_core::Result<()> {
    let p = outcome_distribution(0.5, 0.5, 0.6, 8)?;
    println!("outcome distribution, N = 8, theta = 0.6:");
    for (l, x) in p.iter().enumerate() {
        println!("  l = {l}  {x:.6}");
    }

    for x in [0.1, 0.2, 0.4] {
        let theta = FRAC_PI_4 + x;
        let ns = nstar_asymptotic(theta);
        let n_max = (10.0 * ns).ceil() as usize;
        let curve = extraction_curve(0.5, 0.5, theta, n_max)?;
        println!("\ntheta = pi/4 + {x}, N* ~ {ns:.2}");
        for n in [1, n_max / 10, n_max / 4, n_max / 2, n_max] {
            let n = n.max(1);
            let model = 1.0 - (-(n as f64) / ns).exp();
            println!("  N = {n:5}  extracted {:.5}  model {model:.5}", curve.fraction_at(n).unwrap());
        }
    }
    Ok(())
}
