//! Truncated-response initialization and rank selection.
//!
//! The initializer is the moment tensor of clipped responses,
//! `Ã = (1/n) Σ ψ_τ(y_i) X_i` with `ψ_τ(y) = sign(y) min(|y|, τ)`, followed by
//! a truncated HOSVD whose factors are rescaled by the balance parameter `b`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samples::SampleSet;
use crate::stats::winsorized_moment;
use crate::tensor::{
    degrees_of_freedom, mode_product, singular_values, top_left_singular, unfold, Ranks, Tensor3,
    TuckerFactors,
};

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    Ok(())
}

/// `sign(y) min(|y|, τ)`. `τ = +∞` disables truncation.
pub fn truncate(y: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(y.clamp(-tau, tau))
}

/// `(1/n) Σ ψ_τ(y_i) X_i`.
pub fn robust_moment_tensor(samples: &SampleSet, tau: f64) -> Result<Tensor3> {
    check_tau(tau)?;
    let n = samples.n() as f64;
    let w: Vec<f64> = samples
        .responses()
        .iter()
        .map(|y| y.clamp(-tau, tau) / n)
        .collect();
    samples.weighted_sum(&w)
}

fn check_ranks(t: &Tensor3, ranks: Ranks) -> Result<()> {
    let dims = t.dims();
    let total: usize = dims.iter().product();
    for k in 0..3 {
        let max_rank = dims[k].min(total / dims[k]);
        if ranks[k] == 0 || ranks[k] > max_rank {
            return Err(Error::param(
                "ranks",
                format!("r{} must be in 1..={max_rank}, got {}", k + 1, ranks[k]),
            ));
        }
    }
    Ok(())
}

/// Truncated higher-order SVD.
///
/// `Ũ_k` are the leading `r_k` left singular vectors of each unfolding (sign
/// rule of [`top_left_singular`]) and the core is `T ×1 Ũ1ᵀ ×2 Ũ2ᵀ ×3 Ũ3ᵀ`.
/// A zero tensor yields a zero core and the deterministic factors the SVD
/// returns for a zero matrix.
pub fn hosvd(t: &Tensor3, ranks: Ranks) -> Result<TuckerFactors> {
    check_ranks(t, ranks)?;
    let u = [
        top_left_singular(&unfold(t, 1)?, ranks[0])?,
        top_left_singular(&unfold(t, 2)?, ranks[1])?,
        top_left_singular(&unfold(t, 3)?, ranks[2])?,
    ];
    let mut core = t.clone();
    for (k, uk) in u.iter().enumerate() {
        core = mode_product(&core, &uk.transpose(), k + 1)?;
    }
    TuckerFactors::new(core, u)
}

/// `U_k⁽⁰⁾ = b Ũ_k`, `S⁽⁰⁾ = S̃ / b³` from the HOSVD of `a_tilde`.
pub fn init_factors(a_tilde: &Tensor3, ranks: Ranks, b: f64) -> Result<TuckerFactors> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::param("b", format!("must be finite and positive, got {b}")));
    }
    let (core, u) = hosvd(a_tilde, ranks)?.into_parts();
    let core = core.scaled(1.0 / (b * b * b));
    let u = u.map(|m| m * b);
    TuckerFactors::new(core, u)
}

/// How `τ_t` is recomputed from the current rank guess.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSchedule {
    /// `τ_t = (M n / df_t)^{1/2}` with `M` the winsorized second moment of
    /// the responses and `df_t` the degrees of freedom of the current guess.
    DegreesOfFreedom,
    /// Constant `τ` at every outer iteration.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSelectConfig {
    /// A singular value is kept only above this fraction of the leading one.
    pub singular_value_ratio_threshold: f64,
    pub max_outer_iters: usize,
    pub tau_schedule: TauSchedule,
    /// Multiple of the pure-noise spectral edge a singular value must also
    /// exceed; `0` disables the noise floor.
    pub noise_edge_factor: f64,
    /// Quantile of `|y|` at which responses are winsorized for the moment `M`.
    pub winsor_quantile: f64,
}

impl Default for RankSelectConfig {
    fn default() -> Self {
        RankSelectConfig {
            singular_value_ratio_threshold: 0.1,
            max_outer_iters: 10,
            tau_schedule: TauSchedule::DegreesOfFreedom,
            noise_edge_factor: 1.2,
            winsor_quantile: crate::optimizer::DEFAULT_WINSOR_QUANTILE,
        }
    }
}

impl RankSelectConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.singular_value_ratio_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::param(
                "singular_value_ratio_threshold",
                format!("must lie in (0, 1), got {t}"),
            ));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::param("max_outer_iters", "must be at least 1"));
        }
        if !(self.noise_edge_factor >= 0.0) {
            return Err(Error::param("noise_edge_factor", "must be nonnegative"));
        }
        if !(self.winsor_quantile > 0.0 && self.winsor_quantile <= 1.0) {
            return Err(Error::param("winsor_quantile", "must lie in (0, 1]"));
        }
        if let TauSchedule::Fixed(tau) = self.tau_schedule {
            check_tau(tau)?;
        }
        Ok(())
    }
}

/// One outer iteration of [`select_rank`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankIterate {
    /// Truncation level used; `None` for the untruncated starting moment.
    pub tau: Option<f64>,
    pub ranks: Ranks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub ranks: Ranks,
    pub trace: Vec<RankIterate>,
    /// The rank triple repeated before `max_outer_iters` ran out.
    pub converged: bool,
    pub warning: Option<String>,
}

/// Numerical multilinear rank of a moment tensor built from `n` samples.
///
/// Mode `k` keeps the singular values of its unfolding that exceed both
/// `ratio * σ_1` and `edge_factor * sqrt(m2 / n) (√p_k + √(P / p_k))`, where
/// `m2` is the mean squared (clipped) response and `P = p1 p2 p3`. The second
/// term is the spectral edge of a pure-noise moment matrix. Each entry is
/// floored at 1.
pub fn numerical_rank(t: &Tensor3, ratio: f64, edge_factor: f64, m2: f64, n: usize) -> Result<Ranks> {
    let dims = t.dims();
    let total = dims.iter().product::<usize>() as f64;
    let scale = (m2 / n as f64).sqrt();
    let mut ranks = [1; 3];
    for k in 0..3 {
        let sv = singular_values(&unfold(t, k + 1)?);
        let p = dims[k] as f64;
        let edge = edge_factor * scale * (p.sqrt() + (total / p).sqrt());
        let threshold = (ratio * sv[0]).max(edge);
        ranks[k] = sv.iter().filter(|&&s| s > threshold).count().max(1);
    }
    Ok(ranks)
}

fn clipped_second_moment(y: &[f64], tau: f64) -> f64 {
    y.iter().map(|v| v.clamp(-tau, tau).powi(2)).sum::<f64>() / y.len() as f64
}

/// Iterative rank selection: start from the rank of the untruncated moment
/// tensor, recompute `τ_t` from the current guess, rebuild the truncated
/// moment tensor and re-estimate, until the triple repeats.
pub fn select_rank(samples: &SampleSet, cfg: &RankSelectConfig) -> Result<RankSelection> {
    cfg.validate()?;
    let y = samples.responses();
    let n = samples.n();
    if y.iter().all(|&v| v == 0.0) {
        let msg = "all responses are zero; returning rank (1, 1, 1)".to_string();
        warn!("{msg}");
        return Ok(RankSelection {
            ranks: [1, 1, 1],
            trace: vec![RankIterate {
                tau: None,
                ranks: [1, 1, 1],
            }],
            converged: true,
            warning: Some(msg),
        });
    }
    let ratio = cfg.singular_value_ratio_threshold;
    let naive = robust_moment_tensor(samples, f64::INFINITY)?;
    let m2 = clipped_second_moment(y, f64::INFINITY);
    let mut ranks = numerical_rank(&naive, ratio, cfg.noise_edge_factor, m2, n)?;
    let mut trace = vec![RankIterate { tau: None, ranks }];

    let moment = winsorized_moment(y, 2.0, cfg.winsor_quantile);
    let mut converged = false;
    for _ in 0..cfg.max_outer_iters {
        let tau = match cfg.tau_schedule {
            TauSchedule::DegreesOfFreedom => {
                let df = degrees_of_freedom(samples.dims(), ranks) as f64;
                (moment * n as f64 / df).sqrt()
            }
            TauSchedule::Fixed(tau) => tau,
        };
        let tau = if tau > 0.0 { tau } else { f64::MIN_POSITIVE };
        let a_t = robust_moment_tensor(samples, tau)?;
        let m2_t = clipped_second_moment(y, tau);
        let next = numerical_rank(&a_t, ratio, cfg.noise_edge_factor, m2_t, n)?;
        trace.push(RankIterate {
            tau: Some(tau),
            ranks: next,
        });
        if next == ranks {
            converged = true;
            break;
        }
        ranks = next;
    }
    Ok(RankSelection {
        ranks,
        trace,
        converged,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tucker_reconstruct;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_tensor(dims: [usize; 3], rng: &mut impl Rng) -> Tensor3 {
        Tensor3::from_fn(dims, |_, _, _| rng.sample(StandardNormal))
    }

    fn low_rank(rng: &mut impl Rng) -> Tensor3 {
        let m = |p: usize, r: usize, rng: &mut _| DMatrix::from_fn(p, r, |_, _| Rng::sample(rng, StandardNormal));
        let f = TuckerFactors::new(
            gaussian_tensor([2, 3, 2], rng),
            [m(5, 2, rng), m(6, 3, rng), m(4, 2, rng)],
        )
        .unwrap();
        tucker_reconstruct(&f)
    }

    fn random_samples(n: usize, dims: [usize; 3], rng: &mut impl Rng) -> SampleSet {
        let xs: Vec<Tensor3> = (0..n).map(|_| gaussian_tensor(dims, rng)).collect();
        let y = (0..n).map(|_| 5.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        SampleSet::new(dims, &xs, y).unwrap()
    }

    #[test]
    fn truncate_clips_symmetrically() {
        assert_eq!(truncate(5.0, 2.0).unwrap(), 2.0);
        assert_eq!(truncate(-0.5, 2.0).unwrap(), -0.5);
        assert_eq!(truncate(-7.0, 3.0).unwrap(), -3.0);
        assert!(truncate(1.0, 0.0).is_err());
        assert!(truncate(1.0, -1.0).is_err());
        assert_eq!(truncate(1e300, f64::INFINITY).unwrap(), 1e300);
    }

    #[test]
    fn moment_tensor_of_zero_responses_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_samples(10, [2, 3, 2], &mut rng);
        let s = s.with_responses(vec![0.0; 10]).unwrap();
        assert_eq!(robust_moment_tensor(&s, 1.0).unwrap().fro_norm(), 0.0);
        assert!(robust_moment_tensor(&s, 0.0).is_err());
    }

    #[test]
    fn inactive_truncation_gives_naive_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_samples(20, [2, 3, 2], &mut rng);
        let big = s.responses().iter().fold(0.0_f64, |m, y| m.max(y.abs()));
        let w: Vec<f64> = s.responses().iter().map(|y| y / 20.0).collect();
        let naive = s.weighted_sum(&w).unwrap();
        assert_eq!(robust_moment_tensor(&s, big).unwrap(), naive);
    }

    #[test]
    fn two_sample_moment_by_hand() {
        let x1 = Tensor3::from_vec([1, 2, 1], vec![1.0, 2.0]).unwrap();
        let x2 = Tensor3::from_vec([1, 2, 1], vec![-1.0, 4.0]).unwrap();
        let s = SampleSet::new([1, 2, 1], &[x1, x2], vec![10.0, -0.5]).unwrap();
        // (1/2)(ψ_3(10) x1 + ψ_3(−0.5) x2) = (1/2)(3 x1 − 0.5 x2)
        let got = robust_moment_tensor(&s, 3.0).unwrap();
        assert_eq!(got.data(), &[0.5 * (3.0 + 0.5), 0.5 * (6.0 - 2.0)]);
    }

    #[test]
    fn hosvd_recovers_exact_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = low_rank(&mut rng);
        let f = hosvd(&t, [2, 3, 2]).unwrap();
        let rec = tucker_reconstruct(&f);
        assert!(rec.sub(&t).unwrap().fro_norm() <= 1e-8 * t.fro_norm());
        for u in f.factors() {
            let g = u.transpose() * u;
            assert!((g - DMatrix::identity(u.ncols(), u.ncols())).norm() < 1e-10);
        }
        assert!(f.core().fro_norm() <= t.fro_norm() * (1.0 + 1e-12));
        assert!(hosvd(&t, [6, 1, 1]).is_err());
    }

    #[test]
    fn hosvd_of_zero_tensor_is_deterministic() {
        let z = Tensor3::zeros([3, 3, 3]);
        let a = hosvd(&z, [2, 2, 2]).unwrap();
        let b = hosvd(&z, [2, 2, 2]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.core().fro_norm(), 0.0);
        for u in a.factors() {
            assert!((u.transpose() * u - DMatrix::identity(2, 2)).norm() < 1e-12);
        }
    }

    #[test]
    fn hosvd_quasi_optimality_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = gaussian_tensor([5, 4, 6], &mut rng);
        let ranks = [2, 2, 3];
        let rec = tucker_reconstruct(&hosvd(&t, ranks).unwrap());
        let err = rec.sub(&t).unwrap().fro_norm().powi(2);
        let mut bound = 0.0;
        for k in 0..3 {
            let sv = singular_values(&unfold(&t, k + 1).unwrap());
            bound += sv[ranks[k]..].iter().map(|s| s * s).sum::<f64>();
        }
        assert!(err <= bound * (1.0 + 1e-10), "{err} > {bound}");
    }

    #[test]
    fn init_factors_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = low_rank(&mut rng);
        let ranks = [2, 3, 2];
        let base = tucker_reconstruct(&hosvd(&t, ranks).unwrap());
        assert_eq!(init_factors(&t, ranks, 1.0).unwrap(), hosvd(&t, ranks).unwrap());
        for b in [0.5, 2.0, 10.0] {
            let f = init_factors(&t, ranks, b).unwrap();
            let rec = tucker_reconstruct(&f);
            assert!(rec.sub(&base).unwrap().fro_norm() <= 1e-10 * base.fro_norm());
            for u in f.factors() {
                let r = u.ncols();
                let g = u.transpose() * u;
                assert!((g - DMatrix::identity(r, r) * (b * b)).norm() < 1e-10 * b * b);
            }
        }
        assert!(init_factors(&t, ranks, 0.0).is_err());
        assert!(init_factors(&t, ranks, -2.0).is_err());
    }

    #[test]
    fn select_rank_zero_responses_warns() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_samples(10, [3, 3, 3], &mut rng);
        let s = s.with_responses(vec![0.0; 10]).unwrap();
        let sel = select_rank(&s, &RankSelectConfig::default()).unwrap();
        assert_eq!(sel.ranks, [1, 1, 1]);
        assert!(sel.warning.is_some());
    }

    #[test]
    fn first_iterate_matches_thresholding_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_samples(40, [3, 4, 3], &mut rng);
        let cfg = RankSelectConfig {
            noise_edge_factor: 0.0,
            singular_value_ratio_threshold: 0.5,
            ..Default::default()
        };
        let sel = select_rank(&s, &cfg).unwrap();
        // Oracle: SVD of each unfolding of (1/n) Σ y_i X_i, count above 0.5 σ_1.
        let mut naive = Tensor3::zeros([3, 4, 3]);
        for i in 0..s.n() {
            naive.axpy(s.responses()[i] / 40.0, &s.design(i)).unwrap();
        }
        let mut oracle = [0; 3];
        for k in 0..3 {
            let m = unfold(&naive, k + 1).unwrap();
            let sv = nalgebra::SVD::new(m, false, false).singular_values;
            let top = sv.max();
            oracle[k] = sv.iter().filter(|&&x| x > 0.5 * top).count().max(1);
        }
        assert_eq!(sel.trace[0].ranks, oracle);
        assert!(sel.trace[0].tau.is_none());
    }

    #[test]
    fn config_validation() {
        let bad = |f: fn(&mut RankSelectConfig)| {
            let mut c = RankSelectConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.singular_value_ratio_threshold = 1.0));
        assert!(bad(|c| c.singular_value_ratio_threshold = 0.0));
        assert!(bad(|c| c.max_outer_iters = 0));
        assert!(bad(|c| c.tau_schedule = TauSchedule::Fixed(-1.0)));
        assert!(RankSelectConfig::default().validate().is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn moment_tensor_is_lipschitz_in_tau(seed in any::<u64>(), t1 in 0.1f64..10.0, t2 in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_samples(15, [2, 2, 3], &mut rng);
            let a1 = robust_moment_tensor(&s, t1).unwrap();
            let a2 = robust_moment_tensor(&s, t2).unwrap();
            let abs_w = [1.0 / 15.0; 15];
            let mut abs_sum = Tensor3::zeros([2, 2, 3]);
            for i in 0..15 {
                let x = s.design(i);
                let ax = Tensor3::from_vec(x.dims(), x.data().iter().map(|v| v.abs()).collect()).unwrap();
                abs_sum.axpy(abs_w[i], &ax).unwrap();
            }
            for ((x, y), m) in a1.data().iter().zip(a2.data()).zip(abs_sum.data()) {
                prop_assert!((x - y).abs() <= (t1 - t2).abs() * m + 1e-12);
            }
        }

        #[test]
        fn select_rank_terminates_in_range(seed in any::<u64>(), iters in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_samples(25, [3, 2, 4], &mut rng);
            let cfg = RankSelectConfig { max_outer_iters: iters, ..Default::default() };
            let sel = select_rank(&s, &cfg).unwrap();
            prop_assert!(sel.trace.len() <= iters + 1);
            for k in 0..3 {
                prop_assert!(sel.ranks[k] >= 1 && sel.ranks[k] <= s.dims()[k]);
            }
        }
    }
}
