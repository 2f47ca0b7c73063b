//! Huber loss, its derivative, and a finite-difference check of the factor
//! gradients in the quadratic and clipped regimes.

use robust_tucker::diagnostics::{clipped_varpi, gradient_fd_check, random_instance};
use robust_tucker::huber::{huber_psi, huber_value, HuberParams};

fn main() -> robust_tucker::Result<()> {
    let p = HuberParams::new(1.5)?;
    for x in [-4.0, -1.0, 0.0, 0.5, 3.0] {
        println!("x = {x:5.1}  H = {:7.4}  psi = {:7.4}", huber_value(x, &p), huber_psi(x, &p));
    }

    let (samples, factors) = random_instance([4, 5, 6], [2, 2, 2], 30, 11)?;
    let quad = gradient_fd_check(&samples, &factors, &HuberParams::new(1e6)?, 0.3, 1.2, 1e-6, 5, 1)?;
    println!("quadratic regime: max relative error {:.2e}", quad.max_relative_error);

    let clip = HuberParams::new(clipped_varpi(&samples, &factors, 0.5)?)?;
    let clipped = gradient_fd_check(&samples, &factors, &clip, 0.3, 1.2, 1e-6, 5, 2)?;
    println!(
        "clipped regime (varpi = {:.3}): max relative error {:.2e}, per block {:?}, {} redraws",
        clip.varpi(),
        clipped.max_relative_error,
        clipped.per_block,
        clipped.redraws
    );
    Ok(())
}
