//! Exact recovery from noiseless measurements with the default tuning.

use robust_tucker::optimizer::{default_tuning, fit};
use robust_tucker::simulation::{gen_dataset, NoiseModel, SyntheticSpec};
use robust_tucker::tensor::degrees_of_freedom;

fn main() -> robust_tucker::Result<()> {
    let (dims, ranks) = ([6, 6, 6], [2, 2, 2]);
    let spec = SyntheticSpec {
        dims,
        ranks,
        n: 30 * degrees_of_freedom(dims, ranks),
        noise: NoiseModel::none(),
        spectrum: [3.0, 4.0],
        seed: 1,
        contamination: None,
    };
    let (samples, truth) = gen_dataset(&spec)?;
    let cfg = default_tuning(&samples, ranks, 1.0)?;
    println!("tuning: tau = {:.3}, a = {:.4}, b = {:.3}, eta = {:.3e}", cfg.tau, cfg.a, cfg.b, cfg.eta);

    let res = fit(&samples, &cfg, Some(&truth))?;
    for (t, e) in res.error_trace.iter().enumerate().step_by(20) {
        println!("iter {t:4}  objective {:.4e}  error {e:.4e}", res.objective_trace[t]);
    }
    println!(
        "{} iterations, converged {}, relative error {:.2e}",
        res.iterations_run,
        res.converged,
        res.error_trace.last().unwrap() / truth.fro_norm()
    );
    Ok(())
}
