use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::huber::{loss_gradient_full, HuberParams};
use crate::samples::SampleSet;
use crate::simulation::{random_orthonormal, rng_from_seed};
use crate::tensor::{inner, tucker_reconstruct, Ranks, Tensor3, TuckerFactors};

/// Curvature level the restricted strong convexity check asks for.
pub const RSC_THRESHOLD: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RSCReport {
    pub trials: usize,
    pub satisfied_count: usize,
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub radius: f64,
    pub varpi: f64,
    pub ranks: Ranks,
    pub threshold: f64,
    pub seed: u64,
}

impl RSCReport {
    pub fn satisfied_fraction(&self) -> f64 {
        self.satisfied_count as f64 / self.trials as f64
    }
}

/// `⟨∇L(A* + Δ) − ∇L(A*), Δ⟩ / ‖Δ‖²_F`.
pub fn rsc_ratio(samples: &SampleSet, a_star: &Tensor3, delta: &Tensor3, p: &HuberParams) -> Result<f64> {
    let norm2 = inner(delta, delta)?;
    if norm2 == 0.0 {
        return Err(Error::DegenerateDirection("zero perturbation"));
    }
    let mut a = a_star.clone();
    a.axpy(1.0, delta)?;
    let g = loss_gradient_full(samples, &a, p)?.sub(&loss_gradient_full(samples, a_star, p)?)?;
    Ok(inner(&g, delta)? / norm2)
}

/// Random Tucker tensor of multilinear rank at most `2 r_k` (capped at `p_k`)
/// with Frobenius norm `R u`, `u ~ Uniform(0.1, 1]`.
pub fn random_perturbation(dims: [usize; 3], ranks: Ranks, radius: f64, rng: &mut impl Rng) -> Tensor3 {
    let q = [0, 1, 2].map(|k| (2 * ranks[k]).min(dims[k]));
    let u = [0, 1, 2].map(|k| random_orthonormal(dims[k], q[k], rng));
    let core = Tensor3::from_fn(q, |_, _, _| rng.sample(StandardNormal));
    let d = tucker_reconstruct(&TuckerFactors::new(core, u).expect("valid shapes"));
    let scale = radius * rng.sample(Uniform::new_inclusive(0.1, 1.0).expect("valid range"));
    let n = d.fro_norm();
    d.scaled(scale / n)
}

/// Samples `trials` points `A* + Δ` of the restricted set and counts how many
/// satisfy the curvature bound `ratio ≥ 4/5`.
pub fn rsc_check(
    samples: &SampleSet,
    a_star: &Tensor3,
    radius: f64,
    ranks: Ranks,
    p: &HuberParams,
    trials: usize,
    seed: u64,
) -> Result<RSCReport> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", format!("must be finite and positive, got {radius}")));
    }
    a_star.check_same_dims(&Tensor3::zeros(samples.dims()), "rsc_check")?;
    let mut rng = rng_from_seed(seed);
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let delta = random_perturbation(samples.dims(), ranks, radius, &mut rng);
        ratios.push(rsc_ratio(samples, a_star, &delta, p)?);
    }
    Ok(RSCReport {
        trials,
        satisfied_count: ratios.iter().filter(|&&r| r >= RSC_THRESHOLD).count(),
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        median_ratio: crate::stats::median(&ratios),
        radius,
        varpi: p.varpi(),
        ranks,
        threshold: RSC_THRESHOLD,
        seed,
    })
}

/// Empirical fourth-moment constant `max_V (mean_i ⟨V, X_i⟩⁴)^{1/4}` over
/// `directions` random unit tensors `V`.
pub fn fourth_moment_constant(samples: &SampleSet, directions: usize, seed: u64) -> Result<f64> {
    if directions == 0 {
        return Err(Error::param("directions", "must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut best = 0.0_f64;
    for _ in 0..directions {
        let v = Tensor3::from_fn(samples.dims(), |_, _, _| rng.sample(StandardNormal));
        let v = v.scaled(1.0 / v.fro_norm());
        let proj = samples.predictions(&v)?;
        let m4 = proj.iter().map(|z| z.powi(4)).sum::<f64>() / samples.n() as f64;
        best = best.max(m4.powf(0.25));
    }
    Ok(best)
}

/// Huber threshold `max{(4 M)^{1/(1+δ)}, 4 c₁² R}` where `M` is the
/// `(1+δ)`-th absolute noise moment.
pub fn lemma1_varpi(noise_moment: f64, delta: f64, c1: f64, radius: f64) -> f64 {
    (4.0 * noise_moment).powf(1.0 / (1.0 + delta)).max(4.0 * c1 * c1 * radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{gen_dataset, NoiseModel, SyntheticSpec};
    use crate::tensor::{singular_values, unfold};

    fn data(n: usize, noise: NoiseModel, seed: u64) -> (SampleSet, Tensor3) {
        gen_dataset(&SyntheticSpec {
            dims: [5, 5, 5],
            ranks: [1, 1, 1],
            n,
            noise,
            spectrum: [2.0, 2.0],
            seed,
            contamination: None,
        })
        .unwrap()
    }

    #[test]
    fn perturbations_lie_in_the_restricted_set() {
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let d = random_perturbation([5, 6, 4], [1, 2, 1], 0.7, &mut rng);
            assert!(d.fro_norm() <= 0.7 * (1.0 + 1e-12));
            for (k, cap) in [2usize, 4, 2].iter().enumerate() {
                let sv = singular_values(&unfold(&d, k + 1).unwrap());
                let rank = sv.iter().filter(|&&s| s > 1e-10 * sv[0]).count();
                assert!(rank <= *cap);
            }
        }
    }

    #[test]
    fn zero_perturbation_is_rejected() {
        let (s, a) = data(30, NoiseModel::none(), 1);
        assert!(matches!(
            rsc_ratio(&s, &a, &Tensor3::zeros([5, 5, 5]), &HuberParams::quadratic()),
            Err(Error::DegenerateDirection(_))
        ));
        assert!(rsc_check(&s, &a, 1.0, [1, 1, 1], &HuberParams::quadratic(), 0, 0).is_err());
    }

    #[test]
    fn squared_loss_ratio_is_the_empirical_quadratic_form() {
        let (s, a) = data(40, NoiseModel::student_t(3.0, 1.0).unwrap(), 2);
        let mut rng = rng_from_seed(9);
        let d = random_perturbation([5, 5, 5], [1, 1, 1], 1.0, &mut rng);
        let got = rsc_ratio(&s, &a, &d, &HuberParams::quadratic()).unwrap();
        let pred = s.predictions(&d).unwrap();
        let oracle = pred.iter().map(|z| z * z).sum::<f64>() / 40.0 / inner(&d, &d).unwrap();
        assert!((got - oracle).abs() <= 1e-10 * oracle);
    }

    #[test]
    fn quadratic_loss_with_many_samples_satisfies_rsc() {
        let (s, a) = data(2000, NoiseModel::gaussian(1.0).unwrap(), 4);
        let r = rsc_check(&s, &a, 1.0, [1, 1, 1], &HuberParams::quadratic(), 50, 5).unwrap();
        assert_eq!(r.satisfied_count, 50, "{r:?}");
        assert!(r.satisfied_count <= r.trials);
    }

    #[test]
    fn gaussian_fourth_moment_constant_near_three_to_the_quarter() {
        let (s, _) = data(5000, NoiseModel::none(), 6);
        let c1 = fourth_moment_constant(&s, 50, 7).unwrap();
        assert!((c1 - 3f64.powf(0.25)).abs() < 0.1, "{c1}");
        assert_eq!(lemma1_varpi(3.0, 1.0, 1.0, 0.1), 12f64.sqrt());
        assert_eq!(lemma1_varpi(3.0, 1.0, 1.0, 2.0), 8.0);
    }
}
