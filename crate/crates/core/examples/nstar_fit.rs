//! Fits the collapse scale `N*` across a grid of rotation angles and
//! compares it with the asymptotic formula. Pass `--csv` for CSV output.

use mms_core::collapse::{default_theta_grid, estimate_nstar, extraction_curve, nstar_asymptotic};

fn main() -> mms_core::Result<()> {
    let csv = std::env::args().any(|a| a == "--csv");
    if csv {
        println!("theta,c0_sq,n_star_fit,n_star_asymptotic");
    }
    for c0_sq in [0.5, 0.1] {
        for theta in default_theta_grid(0.05) {
            let ns = nstar_asymptotic(theta);
            let n_max = ((10.0 * ns).ceil() as usize).max(50);
            let curve = extraction_curve(c0_sq, 1.0 - c0_sq, theta, n_max)?;
            let Ok(est) = estimate_nstar(&curve) else { continue };
            if csv {
                println!("{theta},{c0_sq},{},{ns}", est.n_star_fit);
            } else {
                println!(
                    "c0^2 = {c0_sq}  theta = {theta:.2}  fit {:9.3}  asymptotic {ns:9.3}  ({:+.1}%)",
                    est.n_star_fit,
                    100.0 * est.relative_error()
                );
            }
        }
    }
    Ok(())
}
