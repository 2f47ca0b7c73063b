//! Median error against sample size on a log-log scale.
//!
//! Usage: `rate_sweep [nu] [delta] [reps] [seed]`, defaults `3 1 5 1`.

use robust_tucker::simulation::{monte_carlo, EstimatorConfig, NoiseModel, SyntheticSpec};
use robust_tucker::tensor::degrees_of_freedom;

fn main() -> robust_tucker::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (nu, delta, reps, seed) = (arg(0, 3.0), arg(1, 1.0), arg(2, 5.0) as usize, arg(3, 1.0) as u64);

    let (dims, ranks) = ([8, 8, 8], [2, 2, 2]);
    let df = degrees_of_freedom(dims, ranks);
    let noise = NoiseModel::student_t(nu, 1.0)?;
    let cells: Vec<SyntheticSpec> = [5, 10, 20, 40]
        .iter()
        .map(|m| SyntheticSpec {
            dims,
            ranks,
            n: m * df,
            noise,
            spectrum: [2.0, 3.0],
            seed: 0,
            contamination: None,
        })
        .collect();
    let est = EstimatorConfig {
        delta,
        ..Default::default()
    };
    let table = monte_carlo(&cells, reps, seed, &est)?;
    for s in table.summaries() {
        println!("n = {:5}  median error {:.4}  converged {}/{}", s.n, s.median_error, s.converged, s.reps);
    }
    println!("{noise}, delta = {delta}: log-log slope {:.3}", table.loglog_slope_vs_n());
    Ok(())
}
