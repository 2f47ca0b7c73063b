//! Unfoldings, mode products, HOSVD and the spectrum summary on a small
//! Tucker tensor.

use robust_tucker::init::hosvd;
use robust_tucker::simulation::gen_target_factors;
use robust_tucker::tensor::{fold, mode_product, spectrum_summary, tucker_reconstruct, unfold, Matrix};

fn main() -> robust_tucker::Result<()> {
    let factors = gen_target_factors([5, 6, 7], [2, 2, 3], [1.0, 4.0], 7)?;
    let a = tucker_reconstruct(&factors);
    println!("dims {:?}, ranks {:?}, |A|_F = {:.4}", a.dims(), factors.ranks(), a.fro_norm());

    for mode in 1..=3 {
        let m = unfold(&a, mode)?;
        let back = fold(&m, mode, a.dims())?;
        println!("mode-{mode} unfolding {}x{}, fold round trip exact: {}", m.nrows(), m.ncols(), back == a);
    }

    let summary = spectrum_summary(&a, factors.ranks())?;
    println!("lambda_bar = {:.4}, lambda_underbar = {:.4}, kappa = {:?}", summary.lambda_bar, summary.lambda_underbar, summary.kappa);

    // HOSVD recovers an exactly low-rank tensor.
    let h = hosvd(&a, factors.ranks())?;
    let err = tucker_reconstruct(&h).sub(&a)?.fro_norm() / a.fro_norm();
    println!("HOSVD relative reconstruction error {err:.2e}");

    let doubling = Matrix::identity(6, 6) * 2.0;
    let b = mode_product(&a, &doubling, 2)?;
    println!("|A x_2 2I|_F / |A|_F = {:.4}", b.fro_norm() / a.fro_norm());
    Ok(())
}
