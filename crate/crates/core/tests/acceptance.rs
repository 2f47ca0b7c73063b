//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs without the libtest harness so that the report lines are printed by
//! `cargo test` rather than captured.

use std::time::Instant;

use robust_tucker::cli;
use robust_tucker::diagnostics::{
    clipped_varpi, fourth_moment_constant, gradient_fd_check, lemma1_varpi, lemma2, opnorm_concentration,
    random_instance, rsc_check, truncated_singular_bounds, Lemma3Config, TauRule, LEMMA2_CONSTANT,
};
use robust_tucker::huber::HuberParams;
use robust_tucker::init::{select_rank, RankSelectConfig};
use robust_tucker::simulation::{
    derive_seed, gen_dataset, monte_carlo, Contamination, EstimatorConfig, NoiseModel, SyntheticSpec,
};
use robust_tucker::stats::median;
use robust_tucker::tensor::degrees_of_freedom;

const MASTER_SEED: u64 = 2024;
const DIMS: [usize; 3] = [8, 8, 8];
const RANKS: [usize; 3] = [2, 2, 2];

struct Outcome {
    pass: bool,
    detail: String,
}

fn spec(dims: [usize; 3], n: usize, noise: NoiseModel, spectrum: [f64; 2]) -> SyntheticSpec {
    SyntheticSpec {
        dims,
        ranks: RANKS,
        n,
        noise,
        spectrum,
        seed: 0,
        contamination: None,
    }
}

fn rate_cells(noise: NoiseModel) -> Vec<SyntheticSpec> {
    let df = degrees_of_freedom(DIMS, RANKS);
    [5, 10, 20, 40].iter().map(|m| spec(DIMS, m * df, noise, [2.0, 3.0])).collect()
}

fn gradients() -> Outcome {
    let mut worst = 0.0_f64;
    for i in 0..20u64 {
        let (s, f) = random_instance([4, 5, 6], RANKS, 30, derive_seed(MASTER_SEED, &[1, i])).unwrap();
        let clipped = HuberParams::new(clipped_varpi(&s, &f, 0.5).unwrap()).unwrap();
        for (k, p) in [HuberParams::new(1e6).unwrap(), clipped].iter().enumerate() {
            let seed = derive_seed(MASTER_SEED, &[2, i, k as u64]);
            let r = gradient_fd_check(&s, &f, p, 0.3, 1.2, 1e-6, 5, seed).unwrap();
            worst = worst.max(r.max_relative_error);
        }
    }
    Outcome {
        pass: worst <= 1e-5,
        detail: format!("max relative error {worst:.2e} over 20 instances, quadratic and clipped (<= 1e-5)"),
    }
}

fn noiseless_recovery() -> Outcome {
    let dims = [6, 6, 6];
    let n = 30 * degrees_of_freedom(dims, RANKS);
    let cell = spec(dims, n, NoiseModel::none(), [3.0, 4.0]);
    let table = monte_carlo(&[cell], 20, derive_seed(MASTER_SEED, &[3]), &EstimatorConfig::default()).unwrap();
    let ok = table.rows.iter().filter(|r| r.relative_error <= 1e-3).count();
    let worst = table.rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    Outcome {
        pass: n == 1320 && ok >= 18,
        detail: format!("n = {n}: {ok}/20 seeds with relative error <= 1e-3 (worst {worst:.2e}; need 18)"),
    }
}

fn rate_slope(noise: NoiseModel, delta: f64) -> f64 {
    let est = EstimatorConfig {
        delta,
        ..Default::default()
    };
    monte_carlo(&rate_cells(noise), 20, derive_seed(MASTER_SEED, &[4]), &est)
        .unwrap()
        .loglog_slope_vs_n()
}

fn contamination() -> Outcome {
    let df = degrees_of_freedom(DIMS, RANKS);
    let mut cell = spec(DIMS, 20 * df, NoiseModel::student_t(1.6, 1.0).unwrap(), [2.0, 3.0]);
    cell.contamination = Some(Contamination {
        fraction: 0.05,
        factor: 100.0,
    });
    let seed = derive_seed(MASTER_SEED, &[5]);
    let robust = EstimatorConfig {
        delta: 0.5,
        ..Default::default()
    };
    let baseline = EstimatorConfig {
        squared_loss: true,
        ..robust.clone()
    };
    let errors = |est: &EstimatorConfig| {
        let t = monte_carlo(std::slice::from_ref(&cell), 20, seed, est).unwrap();
        median(&t.rows.iter().map(|r| r.error_frobenius).collect::<Vec<_>>())
    };
    let (r, b) = (errors(&robust), errors(&baseline));
    Outcome {
        pass: r <= 0.5 * b,
        detail: format!("median error robust {r:.4} vs squared loss {b:.4}, ratio {:.4} (<= 0.5)", r / b),
    }
}

fn rank_selection() -> Outcome {
    let df = degrees_of_freedom(DIMS, RANKS);
    let cfg = RankSelectConfig::default();
    let mut hits = 0;
    let mut max_steps = 0;
    for r in 0..20u64 {
        let s = spec(DIMS, 50 * df, NoiseModel::student_t(3.0, 1.0).unwrap(), [2.0, 3.0])
            .with_seed(derive_seed(MASTER_SEED, &[6, r]));
        let (samples, _) = gen_dataset(&s).unwrap();
        let sel = select_rank(&samples, &cfg).unwrap();
        hits += usize::from(sel.ranks == RANKS);
        max_steps = max_steps.max(sel.trace.len() - 1);
    }
    Outcome {
        pass: hits >= 18 && max_steps <= 10,
        detail: format!("true ranks recovered in {hits}/20 runs (need 18), at most {max_steps} outer iterations (<= 10)"),
    }
}

fn rsc() -> Outcome {
    let df = degrees_of_freedom(DIMS, RANKS);
    let noise = NoiseModel::student_t(3.0, 1.0).unwrap();
    let s = spec(DIMS, 30 * df, noise, [2.0, 3.0]).with_seed(derive_seed(MASTER_SEED, &[7]));
    let (samples, truth) = gen_dataset(&s).unwrap();
    let radius = 1.0;
    let c1 = fourth_moment_constant(&samples, 50, derive_seed(MASTER_SEED, &[7, 1])).unwrap();
    let varpi = lemma1_varpi(noise.abs_moment(2.0), 1.0, c1, radius);
    let p = HuberParams::new(varpi).unwrap();
    let r = rsc_check(&samples, &truth, radius, RANKS, &p, 200, derive_seed(MASTER_SEED, &[7, 2])).unwrap();
    Outcome {
        pass: r.satisfied_fraction() >= 0.95,
        detail: format!(
            "satisfied {}/{} (fraction {:.3} >= 0.95), c1 = {c1:.3}, varpi = {varpi:.3}, min ratio {:.3}",
            r.satisfied_count,
            r.trials,
            r.satisfied_fraction(),
            r.min_ratio
        ),
    }
}

fn lemmas() -> Outcome {
    let cfg = lemma2::Lemma2Config {
        reps: 200,
        seed: derive_seed(MASTER_SEED, &[8]),
        ..lemma2::reference_config()
    };
    assert_eq!(cfg.constant, LEMMA2_CONSTANT);
    let l2 = truncated_singular_bounds(&cfg).unwrap();
    let l3 = opnorm_concentration(&Lemma3Config {
        d1: 10,
        d2: 10,
        rank: 1,
        signal: 1.0,
        noise: NoiseModel::student_t(3.0, 1.0).unwrap(),
        n_grid: vec![250, 500, 1000, 2000],
        tau_rule: TauRule::Scaled,
        reps: 100,
        seed: derive_seed(MASTER_SEED, &[9]),
    })
    .unwrap();
    let pass = l2.upper_coverage >= 0.95
        && l2.lower_coverage >= 0.95
        && (-0.62..=-0.38).contains(&l3.slope)
        && l3.paired_fraction >= 0.95;
    Outcome {
        pass,
        detail: format!(
            "C = {LEMMA2_CONSTANT}: coverage upper {:.3}, lower {:.3} (>= 0.95); deviation slope {:.3} in [-0.62, -0.38], paired decrease {:.2}",
            l2.upper_coverage, l2.lower_coverage, l3.slope, l3.paired_fraction
        ),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let cfg = path("bench.toml");
    std::fs::write(&cfg, "dims = [5, 5, 5]\nn_multipliers = [10, 20]\nreps = 4\nspectrum = [2.0, 3.0]\n").unwrap();
    let l3 = path("l3.toml");
    std::fs::write(&l3, "reps = 20\nn_grid = [100, 200]\n").unwrap();
    let runs: [(&str, &[&str]); 4] = [
        ("benchmark", &["--config", &cfg, "--format", "csv"]),
        ("benchmark", &["--config", &cfg, "--format", "json"]),
        ("check-lemma3", &["--config", &l3]),
        ("check-rsc", &["--format", "json"]),
    ];
    let mut identical = 0;
    for (i, (cmd, extra)) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = path(&format!("out{i}_{rep}"));
            let mut argv = vec!["robust-tucker", cmd, "--seed", "77", "--out", &out];
            argv.extend_from_slice(extra);
            assert_eq!(cli::run(argv), 0, "{cmd} failed");
            outputs.push(std::fs::read(&out).unwrap());
        }
        identical += usize::from(outputs[0] == outputs[1] && !outputs[0].is_empty());
    }
    Outcome {
        pass: identical == runs.len(),
        detail: format!("{identical}/{} output files bit-identical across reruns", runs.len()),
    }
}

fn main() {
    let mut failures = 0;
    let mut report = |id: &str, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failures += usize::from(!o.pass);
        println!("[{verdict}] criterion {id} {name}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
    };

    report("1", "gradient correctness", &gradients);
    report("2", "noiseless recovery", &noiseless_recovery);

    let t = Instant::now();
    let s3 = rate_slope(NoiseModel::student_t(3.0, 1.0).unwrap(), 1.0);
    let s3_secs = t.elapsed().as_secs_f64();
    report("3", "rate under finite variance", &|| Outcome {
        pass: (-0.62..=-0.38).contains(&s3),
        detail: format!("t(3), delta = 1: log-log slope {s3:.3} in [-0.62, -0.38], sweep {s3_secs:.1}s"),
    });
    report("4", "rate ordering under heavier tails", &|| {
        let s4 = rate_slope(NoiseModel::student_t(1.6, 1.0).unwrap(), 0.5);
        Outcome {
            pass: s4 < 0.0 && s4 >= s3 + 0.05,
            detail: format!("t(1.6), delta = 0.5: slope {s4:.3}, shallower than {s3:.3} by {:.3} (>= 0.05)", s4 - s3),
        }
    });
    report("5", "robustness dominance", &contamination);
    report("6", "rank selection", &rank_selection);
    report("7", "restricted strong convexity", &rsc);
    report("8", "singular-value bounds and concentration", &lemmas);
    report("9", "determinism", &determinism);

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
