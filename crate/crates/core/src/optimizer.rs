//! Regularized gradient descent on the factored Huber objective.
//!
//! One call to [`fit`] runs: truncated moment tensor, HOSVD, scaling of the
//! factors by `b`, then `t_max` simultaneous gradient steps on
//! `(S, U1, U2, U3)` with every gradient evaluated at the iterate from the
//! start of the step.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::huber::{balance_penalty, factor_gradients, loss_and_gradient, HuberParams};
use crate::init::{init_factors, robust_moment_tensor};
use crate::samples::SampleSet;
use crate::stats::winsorized_moment;
use crate::tensor::{
    degrees_of_freedom, spectrum_summary, tucker_reconstruct, Ranks, Tensor3, TuckerFactors,
};

/// Quantile of `|y|` used to winsorize responses for the moment plug-in.
pub const DEFAULT_WINSOR_QUANTILE: f64 = 0.9;
/// `η = DEFAULT_STEP_SCALE / b⁶`.
pub const DEFAULT_STEP_SCALE: f64 = 0.25;
pub const DEFAULT_T_MAX: usize = 400;
pub const DEFAULT_REL_TOL: f64 = 1e-8;
/// Number of times the step size is halved after a divergent run.
pub const MAX_HALVINGS: u32 = 5;
/// Objective growth (relative to the starting value) treated as divergence.
const BLOWUP_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GDConfig {
    /// Response truncation level of the initializer; `+∞` disables it.
    pub tau: f64,
    /// Huber threshold; `+∞` gives the squared loss.
    pub varpi: f64,
    /// Balance regularization weight.
    pub a: f64,
    /// Target factor scale.
    pub b: f64,
    pub eta: f64,
    pub t_max: usize,
    pub rel_tol: f64,
    /// Moment exponent: the noise is assumed to have a finite `(1+δ)`-th moment.
    pub delta: f64,
    /// Plug-in for the unknown `(1+δ)`-th noise moment.
    pub moment_proxy: f64,
    pub ranks: Ranks,
}

impl GDConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        positive("tau", self.tau)?;
        positive("varpi", self.varpi)?;
        positive("b", self.b)?;
        positive("eta", self.eta)?;
        if !self.b.is_finite() || !self.eta.is_finite() {
            return Err(Error::param("b/eta", "must be finite"));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::param("a", format!("must be finite and nonnegative, got {}", self.a)));
        }
        if self.t_max == 0 {
            return Err(Error::param("t_max", "must be at least 1"));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::param("rel_tol", "must be nonnegative"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::param("delta", format!("must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.moment_proxy >= 0.0 && self.moment_proxy.is_finite()) {
            return Err(Error::param("moment_proxy", "must be finite and nonnegative"));
        }
        if self.ranks.contains(&0) {
            return Err(Error::param("ranks", "every rank must be at least 1"));
        }
        Ok(())
    }

    /// Same step and balance settings with truncation and robustification
    /// switched off: the squared-loss estimator.
    pub fn squared_loss(&self) -> GDConfig {
        GDConfig {
            tau: f64::INFINITY,
            varpi: f64::INFINITY,
            ..self.clone()
        }
    }
}

/// Knobs of [`default_tuning_with`] that are not tied to the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningOptions {
    pub winsor_quantile: f64,
    pub step_scale: f64,
    pub t_max: usize,
    pub rel_tol: f64,
}

impl Default for TuningOptions {
    fn default() -> Self {
        TuningOptions {
            winsor_quantile: DEFAULT_WINSOR_QUANTILE,
            step_scale: DEFAULT_STEP_SCALE,
            t_max: DEFAULT_T_MAX,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

/// `(M n / df)^{1/(1+δ)}`.
pub fn robustification_level(moment_proxy: f64, n: usize, df: usize, delta: f64) -> f64 {
    (moment_proxy * n as f64 / df as f64).powf(1.0 / (1.0 + delta))
}

pub fn default_tuning(samples: &SampleSet, ranks: Ranks, delta: f64) -> Result<GDConfig> {
    default_tuning_with(samples, ranks, delta, &TuningOptions::default())
}

/// Data-driven configuration.
///
/// `M` is the winsorized `(1+δ)`-th moment of the responses,
/// `τ = ϖ = (M n / df)^{1/(1+δ)}`, and `λ̄`, `κ` come from the unfolding
/// spectra of the truncated moment tensor at that `τ`; then `b = λ̄^{1/4}`,
/// `a = λ̄ / κ²` and `η = step_scale / b⁶`. Degenerate inputs fall back to
/// `τ = 1` (all-zero responses), `b = 1` (zero moment tensor) and `κ = 10`
/// (rank-deficient moment tensor).
pub fn default_tuning_with(
    samples: &SampleSet,
    ranks: Ranks,
    delta: f64,
    opts: &TuningOptions,
) -> Result<GDConfig> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param("delta", format!("must lie in (0, 1], got {delta}")));
    }
    let dims = samples.dims();
    for k in 0..3 {
        if ranks[k] == 0 || ranks[k] > dims[k] {
            return Err(Error::param("ranks", format!("{ranks:?} invalid for dims {dims:?}")));
        }
    }
    let n = samples.n();
    let df = degrees_of_freedom(dims, ranks);
    let moment_proxy = winsorized_moment(samples.responses(), 1.0 + delta, opts.winsor_quantile);
    let tau = if moment_proxy > 0.0 {
        robustification_level(moment_proxy, n, df, delta)
    } else {
        1.0
    };
    let cfg = tune_scales(samples, ranks, delta, moment_proxy, tau, opts)?;
    debug!("default tuning: {cfg:?}");
    Ok(cfg)
}

/// `b`, `a` and `η` from the unfolding spectra of the moment tensor
/// truncated at `tau`, with `ϖ = τ`.
fn tune_scales(
    samples: &SampleSet,
    ranks: Ranks,
    delta: f64,
    moment_proxy: f64,
    tau: f64,
    opts: &TuningOptions,
) -> Result<GDConfig> {
    let spec = spectrum_summary(&robust_moment_tensor(samples, tau)?, ranks)?;
    let (b, a) = if spec.lambda_bar > 0.0 {
        let kappa = spec.kappa.unwrap_or(10.0);
        (spec.lambda_bar.powf(0.25), spec.lambda_bar / (kappa * kappa))
    } else {
        (1.0, 1.0)
    };
    Ok(GDConfig {
        tau,
        varpi: tau,
        a,
        b,
        eta: opts.step_scale / b.powi(6),
        t_max: opts.t_max,
        rel_tol: opts.rel_tol,
        delta,
        moment_proxy,
        ranks,
    })
}

/// Squared-loss estimator tuned like [`default_tuning_with`] but from the
/// untruncated moment tensor: `τ = ϖ = +∞`, and `b`, `a`, `η` from its
/// unfolding spectra. `moment_proxy` records the mean squared response.
pub fn squared_loss_tuning(samples: &SampleSet, ranks: Ranks, opts: &TuningOptions) -> Result<GDConfig> {
    let dims = samples.dims();
    for k in 0..3 {
        if ranks[k] == 0 || ranks[k] > dims[k] {
            return Err(Error::param("ranks", format!("{ranks:?} invalid for dims {dims:?}")));
        }
    }
    let m2 = samples.responses().iter().map(|y| y * y).sum::<f64>() / samples.n() as f64;
    tune_scales(samples, ranks, 1.0, m2, f64::INFINITY, opts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub factors: TuckerFactors,
    pub estimate: Tensor3,
    /// Objective at the initializer followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    /// `‖A⁽ᵀ⁾ − A*‖_F` aligned with `objective_trace`; empty without ground truth.
    pub error_trace: Vec<f64>,
    pub iterations_run: usize,
    /// The relative-change stopping rule fired before `t_max`.
    pub converged: bool,
    /// The final attempt still produced a non-finite or exploding objective.
    pub diverged: bool,
    /// Step size of the returned run, after any halvings.
    pub eta_used: f64,
    pub halvings: u32,
}

pub fn estimation_error(a_hat: &Tensor3, a_star: &Tensor3) -> Result<f64> {
    Ok(a_hat.sub(a_star)?.fro_norm())
}

/// Runs the estimator; when the objective blows up the step size is halved
/// and the run restarted, at most [`MAX_HALVINGS`] times.
pub fn fit(samples: &SampleSet, cfg: &GDConfig, ground_truth: Option<&Tensor3>) -> Result<FitResult> {
    cfg.validate()?;
    let dims = samples.dims();
    for k in 0..3 {
        if cfg.ranks[k] > dims[k] {
            return Err(Error::param(
                "ranks",
                format!("{:?} exceeds dims {dims:?}", cfg.ranks),
            ));
        }
    }
    if let Some(truth) = ground_truth {
        truth.check_same_dims(&Tensor3::zeros(dims), "fit ground truth")?;
    }
    let huber = HuberParams::new(cfg.varpi)?;
    let a_tilde = robust_moment_tensor(samples, cfg.tau)?;
    let start = init_factors(&a_tilde, cfg.ranks, cfg.b)?;

    let mut eta = cfg.eta;
    let mut halvings = 0;
    loop {
        let result = descend(samples, cfg, &huber, start.clone(), eta, ground_truth)?;
        if !result.diverged || halvings == MAX_HALVINGS {
            if result.diverged {
                warn!("objective diverged after {halvings} step halvings");
            }
            return Ok(FitResult { halvings, ..result });
        }
        halvings += 1;
        eta *= 0.5;
        debug!("divergence detected; retrying with eta = {eta:e}");
    }
}

fn descend(
    samples: &SampleSet,
    cfg: &GDConfig,
    huber: &HuberParams,
    mut factors: TuckerFactors,
    eta: f64,
    ground_truth: Option<&Tensor3>,
) -> Result<FitResult> {
    let (a, b) = (cfg.a, cfg.b);
    let mut estimate = tucker_reconstruct(&factors);
    let (loss, mut grad) = loss_and_gradient(samples, &estimate, huber)?;
    let mut objective = loss + balance_penalty(&factors, a, b);
    let mut objective_trace = vec![objective];
    let mut error_trace = Vec::new();
    if let Some(truth) = ground_truth {
        error_trace.push(estimation_error(&estimate, truth)?);
    }
    let limit = BLOWUP_FACTOR * objective.max(f64::MIN_POSITIVE);
    let mut converged = false;
    let mut diverged = !objective.is_finite();
    let mut iterations_run = 0;

    while !diverged && iterations_run < cfg.t_max {
        let step = factor_gradients(&grad, &factors, a, b)?;
        {
            let (core, u) = factors.parts_mut();
            core.axpy(-eta, &step.core)?;
            for (uk, gk) in u.iter_mut().zip(&step.factors) {
                *uk -= gk * eta;
            }
        }
        estimate = tucker_reconstruct(&factors);
        let (loss, g) = loss_and_gradient(samples, &estimate, huber)?;
        grad = g;
        let previous = objective;
        objective = loss + balance_penalty(&factors, a, b);
        objective_trace.push(objective);
        if let Some(truth) = ground_truth {
            error_trace.push(estimation_error(&estimate, truth)?);
        }
        iterations_run += 1;
        if !objective.is_finite() || objective > limit {
            diverged = true;
        } else if (objective - previous).abs() <= cfg.rel_tol * previous.max(1.0) {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        factors,
        estimate,
        objective_trace,
        error_trace,
        iterations_run,
        converged,
        diverged,
        eta_used: eta,
        halvings: 0,
    })
}
