//! Restricted strong convexity, truncated singular-value bounds and
//! operator-norm concentration, each at a small scale.

use robust_tucker::diagnostics::{
    coverage_over_t, fourth_moment_constant, lemma1_varpi, lemma2, opnorm_concentration, rsc_check, Lemma3Config,
    TauRule,
};
use robust_tucker::huber::HuberParams;
use robust_tucker::simulation::{gen_dataset, NoiseModel, SyntheticSpec};
use robust_tucker::tensor::degrees_of_freedom;

fn main() -> robust_tucker::Result<()> {
    let t3 = NoiseModel::student_t(3.0, 1.0)?;

    let (dims, ranks) = ([6, 6, 6], [2, 2, 2]);
    let spec = SyntheticSpec {
        dims,
        ranks,
        n: 30 * degrees_of_freedom(dims, ranks),
        noise: t3,
        spectrum: [2.0, 3.0],
        seed: 1,
        contamination: None,
    };
    let (samples, truth) = gen_dataset(&spec)?;
    let c1 = fourth_moment_constant(&samples, 50, 2)?;
    let varpi = lemma1_varpi(t3.abs_moment(2.0), 1.0, c1, 1.0);
    let rsc = rsc_check(&samples, &truth, 1.0, ranks, &HuberParams::new(varpi)?, 100, 3)?;
    println!(
        "RSC: c1 = {c1:.3}, varpi = {varpi:.3}, satisfied {}/{}, min ratio {:.3}",
        rsc.satisfied_count, rsc.trials, rsc.min_ratio
    );

    let cfg = lemma2::Lemma2Config {
        reps: 200,
        seed: 4,
        ..lemma2::reference_config()
    };
    for r in coverage_over_t(&cfg, &[1.0, 3.0, 5.0])? {
        println!(
            "singular-value bounds, t = {}: upper coverage {:.3}, lower coverage {:.3}",
            r.config.t, r.upper_coverage, r.lower_coverage
        );
    }

    let report = opnorm_concentration(&Lemma3Config {
        d1: 10,
        d2: 10,
        rank: 1,
        signal: 1.0,
        noise: t3,
        n_grid: vec![250, 500, 1000, 2000],
        tau_rule: TauRule::Scaled,
        reps: 50,
        seed: 5,
    })?;
    for (n, m) in &report.medians {
        println!("n = {n:5}: median operator-norm deviation {m:.4}");
    }
    println!("deviation slope {:.3}, paired decrease {:.2}", report.slope, report.paired_fraction);
    Ok(())
}
