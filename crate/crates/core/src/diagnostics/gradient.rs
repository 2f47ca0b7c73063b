use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::huber::{factor_gradients, loss_gradient_full, objective, HuberParams};
use crate::samples::SampleSet;
use crate::simulation::rng_from_seed;
use crate::stats::median;
use crate::tensor::{tucker_reconstruct, Matrix, Ranks, Tensor3, TuckerFactors};

/// Redraws allowed per direction before giving up on avoiding the kinks.
const MAX_REDRAWS: usize = 200;
/// Denominator floor of the relative error.
const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// Worst `|analytic − fd| / max(|analytic|, |fd|, 1e-8)` over all directions.
    pub max_relative_error: f64,
    /// Same, per block `[S, U1, U2, U3]`.
    pub per_block: [f64; 4],
    pub max_abs_analytic: f64,
    pub max_abs_fd: f64,
    pub directions: usize,
    /// Directions rejected because a residual came within `10h` of `±ϖ`.
    pub redraws: usize,
}

fn unit_tensor(dims: [usize; 3], rng: &mut impl Rng) -> Tensor3 {
    let t = Tensor3::from_fn(dims, |_, _, _| rng.sample(StandardNormal));
    let n = t.fro_norm();
    t.scaled(1.0 / n)
}

fn unit_matrix(r: usize, c: usize, rng: &mut impl Rng) -> Matrix {
    let m = Matrix::from_vec(r, c, (0..r * c).map(|_| rng.sample(StandardNormal)).collect());
    let n = m.norm();
    m / n
}

/// Direction in one block of the factor parameters.
enum Direction {
    Core(Tensor3),
    Factor(usize, Matrix),
}

impl Direction {
    fn shift(&self, f: &TuckerFactors, t: f64) -> TuckerFactors {
        let (mut core, mut u) = f.clone().into_parts();
        match self {
            Direction::Core(v) => core.axpy(t, v).expect("same dims"),
            Direction::Factor(k, v) => u[*k] += v * t,
        }
        TuckerFactors::new(core, u).expect("shapes preserved")
    }
}

/// A direction is usable when along `[−h, h]` no residual comes within `10h`
/// of a Huber kink `±ϖ`.
fn avoids_kinks(samples: &SampleSet, f: &TuckerFactors, d: &Direction, h: f64, varpi: f64) -> Result<bool> {
    if varpi.is_infinite() {
        return Ok(true);
    }
    let r0 = samples.residuals(&tucker_reconstruct(f))?;
    let rp = samples.residuals(&tucker_reconstruct(&d.shift(f, h)))?;
    let rm = samples.residuals(&tucker_reconstruct(&d.shift(f, -h)))?;
    let margin = 10.0 * h;
    for ((a, b), c) in r0.iter().zip(&rp).zip(&rm) {
        let lo = a.abs().min(b.abs()).min(c.abs());
        let hi = a.abs().max(b.abs()).max(c.abs());
        if lo - margin <= varpi && varpi <= hi + margin {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Compares directional derivatives of the regularized objective against
/// central differences with step `h`, along `directions_per_block` random
/// unit directions in each of `S`, `U1`, `U2`, `U3`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_fd_check(
    samples: &SampleSet,
    f: &TuckerFactors,
    p: &HuberParams,
    a: f64,
    b: f64,
    h: f64,
    directions_per_block: usize,
    seed: u64,
) -> Result<GradientCheck> {
    if !(h > 0.0) {
        return Err(Error::param("h", format!("must be positive, got {h}")));
    }
    let g = loss_gradient_full(samples, &tucker_reconstruct(f), p)?;
    let grads = factor_gradients(&g, f, a, b)?;
    let mut rng = rng_from_seed(seed);
    let mut report = GradientCheck {
        max_relative_error: 0.0,
        per_block: [0.0; 4],
        max_abs_analytic: 0.0,
        max_abs_fd: 0.0,
        directions: 0,
        redraws: 0,
    };
    for block in 0..4 {
        for _ in 0..directions_per_block {
            let mut tries = 0;
            let dir = loop {
                let d = if block == 0 {
                    Direction::Core(unit_tensor(f.core().dims(), &mut rng))
                } else {
                    let u = f.factor(block - 1);
                    Direction::Factor(block - 1, unit_matrix(u.nrows(), u.ncols(), &mut rng))
                };
                if avoids_kinks(samples, f, &d, h, p.varpi())? {
                    break d;
                }
                tries += 1;
                report.redraws += 1;
                if tries == MAX_REDRAWS {
                    return Err(Error::DegenerateDirection(
                        "no kink-free direction found; reduce h or move the iterate",
                    ));
                }
            };
            let analytic = match &dir {
                Direction::Core(v) => grads.core.data().iter().zip(v.data()).map(|(x, y)| x * y).sum::<f64>(),
                Direction::Factor(k, v) => grads.factors[*k].dot(v),
            };
            let fp = objective(samples, &dir.shift(f, h), p, a, b)?;
            let fm = objective(samples, &dir.shift(f, -h), p, a, b)?;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(REL_FLOOR);
            report.per_block[block] = report.per_block[block].max(rel);
            report.max_relative_error = report.max_relative_error.max(rel);
            report.max_abs_analytic = report.max_abs_analytic.max(analytic.abs());
            report.max_abs_fd = report.max_abs_fd.max(fd.abs());
            report.directions += 1;
        }
    }
    Ok(report)
}

/// Random instance for the check: standard normal designs, responses
/// `3 N(0, 1)`, a standard normal core and factors `2 V` with `V` random
/// unit-norm matrices.
pub fn random_instance(dims: [usize; 3], ranks: Ranks, n: usize, seed: u64) -> Result<(SampleSet, TuckerFactors)> {
    let mut rng = rng_from_seed(seed);
    let xs: Vec<Tensor3> = (0..n)
        .map(|_| Tensor3::from_fn(dims, |_, _, _| rng.sample(StandardNormal)))
        .collect();
    let y = (0..n).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let s = SampleSet::new(dims, &xs, y)?;
    let core = Tensor3::from_fn(ranks, |_, _, _| rng.sample(StandardNormal));
    let u = [0, 1, 2].map(|k| unit_matrix(dims[k], ranks[k], &mut rng) * 2.0);
    Ok((s, TuckerFactors::new(core, u)?))
}

/// `fraction` times the median absolute residual at `f`: a Huber threshold
/// that puts roughly half the samples in the clipped regime for `fraction = 1`.
pub fn clipped_varpi(samples: &SampleSet, f: &TuckerFactors, fraction: f64) -> Result<f64> {
    let res = samples.residuals(&tucker_reconstruct(f))?;
    Ok(fraction * median(&res.iter().map(|x| x.abs()).collect::<Vec<_>>()))
}
