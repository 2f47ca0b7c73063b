//! Extreme singular values of truncated-noise Gaussian matrix sums.
//!
//! For `A = (1/n) Σ ψ_τ(η_i) X_i` with `d1 × d2` standard normal `X_i`, the
//! checked events are
//!
//! ```text
//! σ_max²(A) ≤ (m + τ² √(2t/n)) / n · (√d1 + C √d2 + √(2t))²
//! σ_min²(A) ≥ (m − τ² √(2t/n)) / n · max(0, √d1 − C √d2 − √(2t))²
//! ```
//!
//! with `m = E[ψ_τ(η)²]` from numerical integration. The constant `C` is
//! fitted once by [`calibrate_constant`] on the [`reference_config`] and
//! frozen as [`LEMMA2_CONSTANT`].

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::robustification_level;
use crate::simulation::{derive_seed, rng_from_seed, NoiseModel};
use crate::tensor::singular_values;

/// Output of [`calibrate_constant`] on [`reference_config`] with
/// [`CALIBRATION_REPS`] replications and [`CALIBRATION_SEED`].
pub const LEMMA2_CONSTANT: f64 = 0.0;
pub const CALIBRATION_REPS: usize = 1000;
pub const CALIBRATION_SEED: u64 = 20_240_611;
pub const CALIBRATION_TARGET: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Config {
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub noise: NoiseModel,
    pub tau: f64,
    /// Tail parameter of the bound.
    pub t: f64,
    pub reps: usize,
    pub seed: u64,
    pub constant: f64,
}

impl Lemma2Config {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::param("n/d1/d2", "must be positive"));
        }
        if self.reps == 0 {
            return Err(Error::param("reps", "must be at least 1"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::param("tau", "must be positive"));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::param("t", "must be finite and positive"));
        }
        if !(self.constant >= 0.0) {
            return Err(Error::param("constant", "must be nonnegative"));
        }
        self.noise.validate()
    }
}

/// `τ = (E[η²] n / (d1 + d2 + 1))^{1/2}`: the scale rule with the degrees
/// of freedom of a rank-one `d1 × d2` matrix.
pub fn reference_tau(noise: &NoiseModel, n: usize, d1: usize, d2: usize) -> Result<f64> {
    let m = noise
        .variance()
        .ok_or_else(|| Error::param("noise", "the reference truncation level needs a finite variance"))?;
    if m == 0.0 {
        return Ok(1.0);
    }
    Ok(robustification_level(m, n, d1 + d2 + 1, 1.0))
}

/// Gaussian noise, `d1 = 100`, `d2 = 5`, `n = 200`, `t = 3`.
pub fn reference_config() -> Lemma2Config {
    let noise = NoiseModel::gaussian(1.0).expect("valid");
    Lemma2Config {
        n: 200,
        d1: 100,
        d2: 5,
        noise,
        tau: reference_tau(&noise, 200, 100, 5).expect("finite variance"),
        t: 3.0,
        reps: CALIBRATION_REPS,
        seed: CALIBRATION_SEED,
        constant: LEMMA2_CONSTANT,
    }
}

/// `(upper, lower)` bounds on `σ_max²` and `σ_min²`.
pub fn lemma2_bounds(psi2: f64, tau: f64, n: usize, d1: usize, d2: usize, t: f64, c: f64) -> (f64, f64) {
    let n_f = n as f64;
    let slack = if tau.is_infinite() {
        f64::INFINITY
    } else {
        tau * tau * (2.0 * t / n_f).sqrt()
    };
    let (r1, r2, rt) = ((d1 as f64).sqrt(), (d2 as f64).sqrt(), (2.0 * t).sqrt());
    let upper = (psi2 + slack) / n_f * (r1 + c * r2 + rt).powi(2);
    let lower_scale = psi2 - slack;
    let lower = if lower_scale > 0.0 {
        lower_scale / n_f * (r1 - c * r2 - rt).max(0.0).powi(2)
    } else {
        0.0
    };
    (upper, lower)
}

/// `[σ_max², σ_min²]` of `A` for each replication.
pub fn simulate_truncated_spectra(cfg: &Lemma2Config) -> Result<Vec<[f64; 2]>> {
    cfg.validate()?;
    let tau = cfg.tau;
    Ok((0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, &[rep as u64]));
            let eta = cfg.noise.sample_n(cfg.n, &mut rng);
            let mut a = DMatrix::<f64>::zeros(cfg.d1, cfg.d2);
            for e in eta {
                let w = e.clamp(-tau, tau) / cfg.n as f64;
                for v in a.iter_mut() {
                    *v += w * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let sv = singular_values(&a);
            [sv[0] * sv[0], sv[sv.len() - 1] * sv[sv.len() - 1]]
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub config: Lemma2Config,
    /// `E[ψ_τ(η)²]` by numerical integration.
    pub psi_second_moment: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub upper_coverage: f64,
    pub lower_coverage: f64,
}

pub fn truncated_singular_bounds(cfg: &Lemma2Config) -> Result<Lemma2Report> {
    let spectra = simulate_truncated_spectra(cfg)?;
    let psi2 = cfg.noise.truncated_second_moment(cfg.tau);
    let (upper, lower) = lemma2_bounds(psi2, cfg.tau, cfg.n, cfg.d1, cfg.d2, cfg.t, cfg.constant);
    let reps = spectra.len() as f64;
    Ok(Lemma2Report {
        config: cfg.clone(),
        psi_second_moment: psi2,
        upper_bound: upper,
        lower_bound: lower,
        upper_coverage: spectra.iter().filter(|s| s[0] <= upper).count() as f64 / reps,
        lower_coverage: spectra.iter().filter(|s| s[1] >= lower).count() as f64 / reps,
    })
}

/// One report per tail parameter, sharing the simulated matrices.
pub fn coverage_over_t(cfg: &Lemma2Config, ts: &[f64]) -> Result<Vec<Lemma2Report>> {
    let spectra = simulate_truncated_spectra(cfg)?;
    let psi2 = cfg.noise.truncated_second_moment(cfg.tau);
    let reps = spectra.len() as f64;
    ts.iter()
        .map(|&t| {
            let c = Lemma2Config { t, ..cfg.clone() };
            c.validate()?;
            let (upper, lower) = lemma2_bounds(psi2, cfg.tau, cfg.n, cfg.d1, cfg.d2, t, cfg.constant);
            Ok(Lemma2Report {
                config: c,
                psi_second_moment: psi2,
                upper_bound: upper,
                lower_bound: lower,
                upper_coverage: spectra.iter().filter(|s| s[0] <= upper).count() as f64 / reps,
                lower_coverage: spectra.iter().filter(|s| s[1] >= lower).count() as f64 / reps,
            })
        })
        .collect()
}

/// Smallest `C ≥ 0` for which both events hold in at least `target` of the
/// replications of `cfg` (its `constant` field is ignored).
pub fn calibrate_constant(cfg: &Lemma2Config, target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::param("target", "must lie in (0, 1]"));
    }
    let spectra = simulate_truncated_spectra(cfg)?;
    let psi2 = cfg.noise.truncated_second_moment(cfg.tau);
    let n = cfg.n as f64;
    let slack = cfg.tau * cfg.tau * (2.0 * cfg.t / n).sqrt();
    let (r1, r2, rt) = ((cfg.d1 as f64).sqrt(), (cfg.d2 as f64).sqrt(), (2.0 * cfg.t).sqrt());
    let mut need_upper = Vec::with_capacity(spectra.len());
    let mut need_lower = Vec::with_capacity(spectra.len());
    for [smax, smin] in spectra {
        need_upper.push((((smax * n / (psi2 + slack)).sqrt() - r1 - rt) / r2).max(0.0));
        let lower_scale = psi2 - slack;
        need_lower.push(if lower_scale > 0.0 {
            ((r1 - rt - (smin * n / lower_scale).sqrt()) / r2).max(0.0)
        } else {
            0.0
        });
    }
    let order_stat = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let k = ((target * v.len() as f64).ceil() as usize).clamp(1, v.len());
        v[k - 1]
    };
    Ok(order_stat(need_upper).max(order_stat(need_lower)))
}
