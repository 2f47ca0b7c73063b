//! Centered noise families and their numerically integrated moments.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Pareto, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{self as sd, Continuous, ContinuousCDF};

use crate::error::{Error, Result};

/// Base law before centering and scaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseFamily {
    None,
    Gaussian,
    /// Student t with `nu` degrees of freedom.
    StudentT { nu: f64 },
    /// Pareto with unit scale and shape `alpha`, shifted by its mean.
    ParetoCentered { alpha: f64 },
    /// `exp(σ Z)` shifted by its mean `exp(σ²/2)`.
    LognormalCentered { sigma: f64 },
}

/// `ε = scale · (Z − E Z)` with `Z` drawn from `family`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub family: NoiseFamily,
    pub scale: f64,
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            NoiseFamily::None => write!(f, "none"),
            NoiseFamily::Gaussian => write!(f, "gaussian(scale={})", self.scale),
            NoiseFamily::StudentT { nu } => write!(f, "student_t(nu={nu}, scale={})", self.scale),
            NoiseFamily::ParetoCentered { alpha } => {
                write!(f, "pareto_centered(alpha={alpha}, scale={})", self.scale)
            }
            NoiseFamily::LognormalCentered { sigma } => {
                write!(f, "lognormal_centered(sigma={sigma}, scale={})", self.scale)
            }
        }
    }
}

/// Absolute tolerance handed to the double-exponential rule.
const QUAD_TOL: f64 = 1e-12;

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            family: NoiseFamily::None,
            scale: 1.0,
        }
    }

    pub fn gaussian(scale: f64) -> Result<Self> {
        Self::new(NoiseFamily::Gaussian, scale)
    }

    pub fn student_t(nu: f64, scale: f64) -> Result<Self> {
        Self::new(NoiseFamily::StudentT { nu }, scale)
    }

    pub fn pareto_centered(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(NoiseFamily::ParetoCentered { alpha }, scale)
    }

    pub fn lognormal_centered(sigma: f64, scale: f64) -> Result<Self> {
        Self::new(NoiseFamily::LognormalCentered { sigma }, scale)
    }

    pub fn new(family: NoiseFamily, scale: f64) -> Result<Self> {
        let m = NoiseModel { family, scale };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::param("noise scale", format!("must be finite and positive, got {}", self.scale)));
        }
        match self.family {
            NoiseFamily::StudentT { nu } if !(nu > 1.0 && nu.is_finite()) => Err(Error::param(
                "nu",
                format!("student_t needs nu > 1 for a finite mean, got {nu}"),
            )),
            NoiseFamily::ParetoCentered { alpha } if !(alpha > 1.0 && alpha.is_finite()) => {
                Err(Error::param(
                    "alpha",
                    format!("pareto_centered needs alpha > 1 for a finite mean, got {alpha}"),
                ))
            }
            NoiseFamily::LognormalCentered { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::param("sigma", format!("must be finite and positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_none(&self) -> bool {
        self.family == NoiseFamily::None
    }

    /// `E Z` of the base law.
    fn base_mean(&self) -> f64 {
        match self.family {
            NoiseFamily::ParetoCentered { alpha } => alpha / (alpha - 1.0),
            NoiseFamily::LognormalCentered { sigma } => (0.5 * sigma * sigma).exp(),
            _ => 0.0,
        }
    }

    /// Left end of the support of `ε`, if bounded.
    fn support_start(&self) -> Option<f64> {
        match self.family {
            NoiseFamily::ParetoCentered { .. } => Some(self.scale * (1.0 - self.base_mean())),
            NoiseFamily::LognormalCentered { .. } => Some(-self.scale * self.base_mean()),
            _ => None,
        }
    }

    /// Whether `E|ε|^s` is finite.
    pub fn has_finite_moment(&self, s: f64) -> bool {
        match self.family {
            NoiseFamily::StudentT { nu } => s < nu,
            NoiseFamily::ParetoCentered { alpha } => s < alpha,
            _ => true,
        }
    }

    /// Population variance; `None` when infinite.
    pub fn variance(&self) -> Option<f64> {
        let s2 = self.scale * self.scale;
        match self.family {
            NoiseFamily::None => Some(0.0),
            NoiseFamily::Gaussian => Some(s2),
            NoiseFamily::StudentT { nu } => (nu > 2.0).then(|| s2 * nu / (nu - 2.0)),
            NoiseFamily::ParetoCentered { alpha } => {
                (alpha > 2.0).then(|| s2 * alpha / ((alpha - 1.0).powi(2) * (alpha - 2.0)))
            }
            NoiseFamily::LognormalCentered { sigma } => {
                let v = sigma * sigma;
                Some(s2 * (v.exp() - 1.0) * v.exp())
            }
        }
    }

    /// `n` i.i.d. draws.
    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let s = self.scale;
        let m = self.base_mean();
        match self.family {
            NoiseFamily::None => vec![0.0; n],
            NoiseFamily::Gaussian => {
                let d = Normal::new(0.0, 1.0).expect("valid normal");
                (0..n).map(|_| s * d.sample(rng)).collect()
            }
            NoiseFamily::StudentT { nu } => {
                let d = StudentT::new(nu).expect("validated nu");
                (0..n).map(|_| s * d.sample(rng)).collect()
            }
            NoiseFamily::ParetoCentered { alpha } => {
                let d = Pareto::new(1.0, alpha).expect("validated alpha");
                (0..n).map(|_| s * (d.sample(rng) - m)).collect()
            }
            NoiseFamily::LognormalCentered { sigma } => {
                let d = LogNormal::new(0.0, sigma).expect("validated sigma");
                (0..n).map(|_| s * (d.sample(rng) - m)).collect()
            }
        }
    }

    fn base_pdf(&self, z: f64) -> f64 {
        match self.family {
            NoiseFamily::None => 0.0,
            NoiseFamily::Gaussian => sd::Normal::new(0.0, 1.0).expect("valid").pdf(z),
            NoiseFamily::StudentT { nu } => sd::StudentsT::new(0.0, 1.0, nu).expect("valid").pdf(z),
            NoiseFamily::ParetoCentered { alpha } => {
                sd::Pareto::new(1.0, alpha).expect("valid").pdf(z)
            }
            NoiseFamily::LognormalCentered { sigma } => {
                if z <= 0.0 {
                    0.0
                } else {
                    sd::LogNormal::new(0.0, sigma).expect("valid").pdf(z)
                }
            }
        }
    }

    fn base_cdf(&self, z: f64) -> f64 {
        match self.family {
            NoiseFamily::None => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseFamily::Gaussian => sd::Normal::new(0.0, 1.0).expect("valid").cdf(z),
            NoiseFamily::StudentT { nu } => sd::StudentsT::new(0.0, 1.0, nu).expect("valid").cdf(z),
            NoiseFamily::ParetoCentered { alpha } => {
                sd::Pareto::new(1.0, alpha).expect("valid").cdf(z)
            }
            NoiseFamily::LognormalCentered { sigma } => {
                if z <= 0.0 {
                    0.0
                } else {
                    sd::LogNormal::new(0.0, sigma).expect("valid").cdf(z)
                }
            }
        }
    }

    /// Density of `ε` (zero for the degenerate family).
    pub fn pdf(&self, x: f64) -> f64 {
        self.base_pdf(x / self.scale + self.base_mean()) / self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.base_cdf(x / self.scale + self.base_mean())
    }

    /// `P(|ε| > x)` for `x ≥ 0`.
    pub fn abs_tail(&self, x: f64) -> f64 {
        (1.0 - self.cdf(x)) + self.cdf(-x)
    }

    /// `q`-quantile of `|ε|`, by bisection on [`Self::abs_tail`].
    pub fn abs_quantile(&self, q: f64) -> f64 {
        if self.is_none() {
            return 0.0;
        }
        let target = 1.0 - q;
        let mut hi = self.scale;
        while self.abs_tail(hi) > target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.abs_tail(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// `∫_lo^hi g(x) f(x) dx` with the support boundary as an extra breakpoint.
    fn integrate(&self, g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let lo = match self.support_start() {
            Some(s) => lo.max(s),
            None => lo,
        };
        if hi <= lo {
            return 0.0;
        }
        let f = |x: f64| g(x) * self.pdf(x);
        let mut total = 0.0;
        let mut a = lo;
        for b in [0.0, hi] {
            if b > a {
                total += quadrature::double_exponential::integrate(f, a, b, QUAD_TOL).integral;
                a = b;
            }
        }
        total
    }

    /// Power-law tail index of the density, if any.
    fn tail_index(&self) -> Option<f64> {
        match self.family {
            NoiseFamily::StudentT { nu } => Some(nu),
            NoiseFamily::ParetoCentered { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// `∫ g(x) f(x) dx` over `[c, ∞)` (`sign = 1`) or `(−∞, −c]` (`sign = −1`)
    /// for `g` growing like `|x|^growth`.
    ///
    /// Substituting `x = sign c t^{-q}` with `q = 1 / (tail_index − growth)`
    /// turns a power-law tail into a bounded integrand on `(0, 1]`.
    fn integrate_tail(&self, g: impl Fn(f64) -> f64, c: f64, sign: f64, growth: f64) -> f64 {
        let q = self
            .tail_index()
            .map_or(1.0, |a| 1.0 / (a - growth))
            .max(1.0);
        let h = |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            let x = c * t.powf(-q);
            let v = g(sign * x) * self.pdf(sign * x) * q * x / t;
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        quadrature::double_exponential::integrate(h, 0.0, 1.0, QUAD_TOL).integral
    }

    /// `E|ε|^s`; infinite when the moment does not exist.
    pub fn abs_moment(&self, s: f64) -> f64 {
        if self.is_none() {
            return 0.0;
        }
        if !self.has_finite_moment(s) {
            return f64::INFINITY;
        }
        let g = |x: f64| x.abs().powf(s);
        let c = self.scale;
        let central = self.integrate(g, -c, c);
        let upper = self.integrate_tail(g, c, 1.0, s);
        let lower = match self.support_start() {
            Some(start) => self.integrate(g, start, -c),
            None => self.integrate_tail(g, c, -1.0, s),
        };
        central + upper + lower
    }

    /// `E[ψ_τ(ε)²] = E[min(ε², τ²)]`.
    pub fn truncated_second_moment(&self, tau: f64) -> f64 {
        if self.is_none() {
            return 0.0;
        }
        if tau.is_infinite() {
            return self.variance().unwrap_or(f64::INFINITY);
        }
        self.integrate(|x| x * x, -tau, tau) + tau * tau * self.abs_tail(tau)
    }
}
