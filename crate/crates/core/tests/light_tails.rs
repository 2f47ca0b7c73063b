//! With Gaussian noise the robust fit and the squared-loss fit end up at
//! nearly the same error.

use robust_tucker::simulation::{monte_carlo, EstimatorConfig, NoiseModel, SyntheticSpec};
use robust_tucker::stats::median;
use robust_tucker::tensor::degrees_of_freedom;

#[test]
fn huber_costs_little_under_gaussian_noise() {
    let (dims, ranks) = ([6, 6, 6], [2, 2, 2]);
    let cell = SyntheticSpec {
        dims,
        ranks,
        n: 20 * degrees_of_freedom(dims, ranks),
        noise: NoiseModel::gaussian(1.0).unwrap(),
        spectrum: [2.0, 3.0],
        seed: 0,
        contamination: None,
    };
    let robust = EstimatorConfig::default();
    let squared = EstimatorConfig {
        squared_loss: true,
        ..robust.clone()
    };
    let med = |est: &EstimatorConfig| {
        let t = monte_carlo(std::slice::from_ref(&cell), 20, 12, est).unwrap();
        median(&t.rows.iter().map(|r| r.error_frobenius).collect::<Vec<_>>())
    };
    let (r, s) = (med(&robust), med(&squared));
    assert!((s - r).abs() <= 0.1 * r, "robust {r}, squared loss {s}");
}
