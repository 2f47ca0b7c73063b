//! Operator-norm deviation of the truncated gradient at the truth.
//!
//! With `y_i = ⟨X_i, A*⟩ + ε_i` and standard normal `d1 × d2` designs,
//! `E[y_i X_i] = A*`, so the deviation `‖(1/n) Σ ψ_τ(y_i) X_i − A*‖_op` is
//! measured exactly and its median is regressed on `n` in log-log scale.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::optimizer::robustification_level;
use crate::simulation::{derive_seed, random_orthonormal, rng_from_seed, NoiseModel};
use crate::stats::{loglog_slope, median};
use crate::tensor::singular_values;

/// How the truncation level depends on `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TauRule {
    /// `τ = (M n / df)^{1/2}` with `M = ‖A*‖_F² + E[ε²] = E[y²]` and
    /// `df = r(d1 + d2) + r²`.
    Scaled,
    Fixed { tau: f64 },
    /// No truncation.
    Disabled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Config {
    pub d1: usize,
    pub d2: usize,
    /// Rank of `A*`.
    pub rank: usize,
    /// `‖A*‖_F`; all nonzero singular values of `A*` are equal.
    pub signal: f64,
    pub noise: NoiseModel,
    pub n_grid: Vec<usize>,
    pub tau_rule: TauRule,
    pub reps: usize,
    pub seed: u64,
}

impl Lemma3Config {
    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::param("d1/d2", "must be positive"));
        }
        if self.rank == 0 || self.rank > self.d1.min(self.d2) {
            return Err(Error::param("rank", format!("must lie in [1, {}]", self.d1.min(self.d2))));
        }
        if !(self.signal >= 0.0 && self.signal.is_finite()) {
            return Err(Error::param("signal", "must be finite and nonnegative"));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("n_grid", "must be nonempty, positive and strictly ascending"));
        }
        if self.reps == 0 {
            return Err(Error::param("reps", "must be at least 1"));
        }
        match self.tau_rule {
            TauRule::Fixed { tau } if !(tau > 0.0) => return Err(Error::param("tau", "must be positive")),
            TauRule::Scaled if self.noise.variance().is_none() => {
                return Err(Error::param("tau_rule", "the scaled rule needs noise with finite variance"))
            }
            _ => {}
        }
        self.noise.validate()
    }

    fn df(&self) -> usize {
        self.rank * (self.d1 + self.d2) + self.rank * self.rank
    }

    pub fn tau(&self, n: usize) -> f64 {
        match self.tau_rule {
            TauRule::Fixed { tau } => tau,
            TauRule::Disabled => f64::INFINITY,
            TauRule::Scaled => {
                let m = self.signal * self.signal + self.noise.variance().unwrap_or(f64::INFINITY);
                if m == 0.0 {
                    1.0
                } else {
                    robustification_level(m, n, self.df(), 1.0)
                }
            }
        }
    }

    /// `A* = (signal / √r) U Vᵀ` with random orthonormal `U`, `V`.
    pub fn target(&self) -> DMatrix<f64> {
        let mut rng = rng_from_seed(derive_seed(self.seed, &[u64::MAX]));
        let u = random_orthonormal(self.d1, self.rank, &mut rng);
        let v = random_orthonormal(self.d2, self.rank, &mut rng);
        u * v.transpose() * (self.signal / (self.rank as f64).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub n: usize,
    pub rep: usize,
    pub tau: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Report {
    pub config: Lemma3Config,
    /// Ordered by `(n, rep)`.
    pub rows: Vec<DeviationRow>,
    /// `(n, median deviation)` per grid point.
    pub medians: Vec<(usize, f64)>,
    pub slope: f64,
    /// Fraction of reps whose deviation at the largest `n` is below the one
    /// at the smallest `n`.
    pub paired_fraction: f64,
}

impl Lemma3Report {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn deviation(cfg: &Lemma3Config, a_star: &DMatrix<f64>, n: usize, tau: f64, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let eps = cfg.noise.sample_n(n, &mut rng);
    let mut acc = DMatrix::<f64>::zeros(cfg.d1, cfg.d2);
    let mut x = DMatrix::<f64>::zeros(cfg.d1, cfg.d2);
    for e in eps {
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let y = x.dot(a_star) + e;
        acc += &x * (y.clamp(-tau, tau) / n as f64);
    }
    singular_values(&(acc - a_star))[0]
}

/// Replication `r` at grid index `g` uses `derive_seed(seed, [g, r])`.
pub fn opnorm_concentration(cfg: &Lemma3Config) -> Result<Lemma3Report> {
    cfg.validate()?;
    let a_star = cfg.target();
    let jobs: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|g| (0..cfg.reps).map(move |r| (g, r)))
        .collect();
    let rows: Vec<DeviationRow> = jobs
        .par_iter()
        .map(|&(g, rep)| {
            let n = cfg.n_grid[g];
            let tau = cfg.tau(n);
            DeviationRow {
                n,
                rep,
                tau,
                deviation: deviation(cfg, &a_star, n, tau, derive_seed(cfg.seed, &[g as u64, rep as u64])),
            }
        })
        .collect();
    let medians: Vec<(usize, f64)> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let d: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.deviation).collect();
            (n, median(&d))
        })
        .collect();
    let slope = if medians.len() >= 2 && medians.iter().all(|m| m.1 > 0.0) {
        let ns: Vec<f64> = medians.iter().map(|m| m.0 as f64).collect();
        let ds: Vec<f64> = medians.iter().map(|m| m.1).collect();
        loglog_slope(&ns, &ds)
    } else {
        f64::NAN
    };
    let (first, last) = (&rows[..cfg.reps], &rows[rows.len() - cfg.reps..]);
    let paired_fraction = first
        .iter()
        .zip(last)
        .filter(|(a, b)| b.deviation < a.deviation)
        .count() as f64
        / cfg.reps as f64;
    Ok(Lemma3Report {
        config: cfg.clone(),
        rows,
        medians,
        slope,
        paired_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(noise: NoiseModel, signal: f64) -> Lemma3Config {
        Lemma3Config {
            d1: 6,
            d2: 5,
            rank: 1,
            signal,
            noise,
            n_grid: vec![100, 400],
            tau_rule: TauRule::Scaled,
            reps: 20,
            seed: 3,
        }
    }

    #[test]
    fn no_noise_zero_signal_gives_zero_deviation() {
        let mut c = cfg(NoiseModel::none(), 0.0);
        c.tau_rule = TauRule::Disabled;
        let r = opnorm_concentration(&c).unwrap();
        assert!(r.rows.iter().all(|row| row.deviation == 0.0));
        assert!(r.slope.is_nan());
    }

    #[test]
    fn target_has_requested_norm_and_rank() {
        let mut c = cfg(NoiseModel::none(), 2.5);
        c.rank = 2;
        let a = c.target();
        let sv = singular_values(&a);
        assert!((a.norm() - 2.5).abs() < 1e-12);
        assert!((sv[0] - sv[1]).abs() < 1e-12 && sv[2] < 1e-12);
    }

    #[test]
    fn scaled_rule_oracle() {
        let c = cfg(NoiseModel::student_t(3.0, 1.0).unwrap(), 1.0);
        // M = 1 + 3, df = 11 + 1
        assert!((c.tau(300) - (4.0f64 * 300.0 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn deviation_shrinks_with_n() {
        let r = opnorm_concentration(&cfg(NoiseModel::gaussian(1.0).unwrap(), 1.0)).unwrap();
        assert!(r.medians[1].1 < r.medians[0].1);
        assert!(r.slope < 0.0);
        assert_eq!(r.rows.len(), 40);
        assert_eq!(r, opnorm_concentration(&cfg(NoiseModel::gaussian(1.0).unwrap(), 1.0)).unwrap());
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mut c = cfg(NoiseModel::none(), 1.0);
        c.n_grid = vec![400, 100];
        assert!(opnorm_concentration(&c).is_err());
        let mut c = cfg(NoiseModel::student_t(1.5, 1.0).unwrap(), 1.0);
        assert!(opnorm_concentration(&c).is_err());
        c.tau_rule = TauRule::Fixed { tau: 5.0 };
        assert!(opnorm_concentration(&c).is_ok());
    }
}
