//! Huber loss and the gradients of the regularized factored objective
//!
//! ```text
//! F(S, U1, U2, U3) = L_ϖ(⟦S; U1, U2, U3⟧) + (a/2) Σ_k ‖U_kᵀU_k − b² I‖²_F
//! L_ϖ(A)           = (1/n) Σ_i ℓ_ϖ(y_i − ⟨X_i, A⟩)
//! ```
//!
//! Factor gradients go through the unfolding identity of [`crate::tensor`]:
//! with `G = ∇L_ϖ(A)`,
//!
//! ```text
//! ∇_S  = G ×1 U1ᵀ ×2 U2ᵀ ×3 U3ᵀ
//! ∇_U1 = M1(G) (U3 ⊗ U2) M1(S)ᵀ + 2a U1 (U1ᵀU1 − b² I)
//! ```
//!
//! and cyclically for modes 2 and 3. The balance term's gradient is the exact
//! derivative of `(a/2)‖UᵀU − b²I‖²_F`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samples::SampleSet;
use crate::tensor::{mode_product, tucker_reconstruct, unfold, Matrix, Tensor3, TuckerFactors};

/// Robustification threshold of the Huber loss. `+∞` is accepted and turns
/// the loss into the plain squared loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HuberParams {
    varpi: f64,
}

impl HuberParams {
    pub fn new(varpi: f64) -> Result<Self> {
        if !(varpi > 0.0) {
            return Err(Error::param("varpi", format!("must be positive, got {varpi}")));
        }
        Ok(HuberParams { varpi })
    }

    /// Squared-loss limit `ϖ = ∞`.
    pub fn quadratic() -> Self {
        HuberParams {
            varpi: f64::INFINITY,
        }
    }

    #[inline]
    pub fn varpi(&self) -> f64 {
        self.varpi
    }
}

#[inline]
pub fn huber_value(x: f64, p: &HuberParams) -> f64 {
    let ax = x.abs();
    if ax <= p.varpi {
        0.5 * x * x
    } else {
        p.varpi * ax - 0.5 * p.varpi * p.varpi
    }
}

/// Derivative of [`huber_value`]: `sign(x) min(|x|, ϖ)`.
#[inline]
pub fn huber_psi(x: f64, p: &HuberParams) -> f64 {
    x.clamp(-p.varpi, p.varpi)
}

pub fn empirical_loss(samples: &SampleSet, a: &Tensor3, p: &HuberParams) -> Result<f64> {
    let r = samples.residuals(a)?;
    Ok(r.iter().map(|&x| huber_value(x, p)).sum::<f64>() / samples.n() as f64)
}

/// `∇L_ϖ(A) = −(1/n) Σ ψ_ϖ(r_i) X_i`.
pub fn loss_gradient_full(samples: &SampleSet, a: &Tensor3, p: &HuberParams) -> Result<Tensor3> {
    Ok(loss_and_gradient(samples, a, p)?.1)
}

/// Empirical loss and its gradient from a single pass over the residuals.
pub fn loss_and_gradient(
    samples: &SampleSet,
    a: &Tensor3,
    p: &HuberParams,
) -> Result<(f64, Tensor3)> {
    let r = samples.residuals(a)?;
    let n = samples.n() as f64;
    let loss = r.iter().map(|&x| huber_value(x, p)).sum::<f64>() / n;
    let weights: Vec<f64> = r.iter().map(|&x| -huber_psi(x, p) / n).collect();
    Ok((loss, samples.weighted_sum(&weights)?))
}

/// Gradients of the factored objective with respect to `S`, `U1`, `U2`, `U3`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorGradients {
    pub core: Tensor3,
    pub factors: [Matrix; 3],
}

fn check_balance_params(a: f64, b: f64) -> Result<()> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::param("a", format!("must be finite and nonnegative, got {a}")));
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::param("b", format!("must be finite and positive, got {b}")));
    }
    Ok(())
}

/// Chain rule from the full-tensor gradient `g` to the factor parameters,
/// including the balance regularizer.
pub fn factor_gradients(g: &Tensor3, f: &TuckerFactors, a: f64, b: f64) -> Result<FactorGradients> {
    check_balance_params(a, b)?;
    if g.dims() != f.dims() {
        return Err(Error::shape(
            "factor_gradients",
            format!("{:?}", f.dims()),
            format!("{:?}", g.dims()),
        ));
    }
    let u = f.factors();
    let ut = [u[0].transpose(), u[1].transpose(), u[2].transpose()];

    // Partial projections: G with two of the three modes contracted.
    let g_1 = mode_product(g, &ut[0], 1)?;
    let g_12 = mode_product(&g_1, &ut[1], 2)?;
    let core = mode_product(&g_12, &ut[2], 3)?;
    let g_13 = mode_product(&g_1, &ut[2], 3)?;
    let g_23 = mode_product(&mode_product(g, &ut[1], 2)?, &ut[2], 3)?;

    let s = f.core();
    let mut factors = [
        unfold(&g_23, 1)? * unfold(s, 1)?.transpose(),
        unfold(&g_13, 2)? * unfold(s, 2)?.transpose(),
        unfold(&g_12, 3)? * unfold(s, 3)?.transpose(),
    ];
    if a > 0.0 {
        for (grad, uk) in factors.iter_mut().zip(u) {
            *grad += balance_gradient(uk, a, b);
        }
    }
    Ok(FactorGradients { core, factors })
}

/// `2a U (UᵀU − b² I)`, the gradient of `(a/2)‖UᵀU − b²I‖²_F`.
fn balance_gradient(u: &Matrix, a: f64, b: f64) -> Matrix {
    let r = u.ncols();
    let dev = u.transpose() * u - Matrix::identity(r, r) * (b * b);
    u * dev * (2.0 * a)
}

/// `‖U_kᵀU_k − b²I‖_F` for each factor.
pub fn balance_deviation(f: &TuckerFactors, b: f64) -> [f64; 3] {
    let dev = |u: &Matrix| {
        let r = u.ncols();
        (u.transpose() * u - Matrix::identity(r, r) * (b * b)).norm()
    };
    [dev(f.factor(0)), dev(f.factor(1)), dev(f.factor(2))]
}

/// `(a/2) Σ_k ‖U_kᵀU_k − b²I‖²_F`.
pub fn balance_penalty(f: &TuckerFactors, a: f64, b: f64) -> f64 {
    0.5 * a * balance_deviation(f, b).iter().map(|d| d * d).sum::<f64>()
}

pub fn objective(
    samples: &SampleSet,
    f: &TuckerFactors,
    p: &HuberParams,
    a: f64,
    b: f64,
) -> Result<f64> {
    check_balance_params(a, b)?;
    let est = tucker_reconstruct(f);
    Ok(empirical_loss(samples, &est, p)? + balance_penalty(f, a, b))
}
