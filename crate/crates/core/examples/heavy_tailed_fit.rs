//! Robust fit against the squared-loss baseline when the noise has only a
//! (1+δ)-th moment and a few responses are grossly corrupted.

use robust_tucker::optimizer::{default_tuning_with, estimation_error, fit, squared_loss_tuning, TuningOptions};
use robust_tucker::simulation::{gen_dataset, Contamination, NoiseModel, SyntheticSpec};
use robust_tucker::tensor::degrees_of_freedom;

fn main() -> robust_tucker::Result<()> {
    let (dims, ranks) = ([8, 8, 8], [2, 2, 2]);
    let spec = SyntheticSpec {
        dims,
        ranks,
        n: 20 * degrees_of_freedom(dims, ranks),
        noise: NoiseModel::student_t(1.6, 1.0)?,
        spectrum: [2.0, 3.0],
        seed: 5,
        contamination: Some(Contamination {
            fraction: 0.05,
            factor: 100.0,
        }),
    };
    let (samples, truth) = gen_dataset(&spec)?;
    let robust = default_tuning_with(&samples, ranks, 0.5, &TuningOptions::default())?;
    let baseline = squared_loss_tuning(&samples, ranks, &TuningOptions::default())?;

    for (name, cfg) in [("robust", &robust), ("squared loss", &baseline)] {
        let res = fit(&samples, cfg, None)?;
        println!(
            "{name:>12}: tau = {:8.3}, error {:.4}, {} iterations",
            cfg.tau,
            estimation_error(&res.estimate, &truth)?,
            res.iterations_run
        );
    }
    Ok(())
}
