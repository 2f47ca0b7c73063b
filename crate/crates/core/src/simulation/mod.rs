//! Synthetic data: low-rank targets, Gaussian designs, heavy-tailed noise.
//!
//! Every generator is a deterministic function of its arguments. Random
//! streams come from [`rand_chacha::ChaCha8Rng`] seeded through
//! [`derive_seed`], a SplitMix64-based hash of a master seed and a path of
//! integer tags, so each component (target, design, noise, contamination) and
//! each Monte Carlo replication draws from its own stream.

mod monte_carlo;
mod noise;

pub use monte_carlo::{
    monte_carlo, run_replication, EstimatorConfig, ErrorRow, ErrorTable, CellSummary,
    ERROR_TABLE_COLUMNS,
};
pub use noise::{NoiseFamily, NoiseModel};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samples::SampleSet;
use crate::tensor::{
    fold, singular_values, tucker_reconstruct, unfold, Dims, Matrix, Ranks, Tensor3, TuckerFactors,
};

/// Stream tags of [`SyntheticSpec`] components.
const TAG_TARGET: u64 = 1;
const TAG_DESIGN: u64 = 2;
const TAG_NOISE: u64 = 3;
const TAG_CONTAMINATION: u64 = 4;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a master seed and a path of tags, e.g. `(cell, rep)`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |h, &p| {
            splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)))
        })
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random subset of responses multiplied by a common factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    /// Share of responses affected; the count is `round(fraction · n)`.
    pub fraction: f64,
    pub factor: f64,
}

impl Contamination {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::param("contamination fraction", "must lie in [0, 1]"));
        }
        if !self.factor.is_finite() {
            return Err(Error::param("contamination factor", "must be finite"));
        }
        Ok(())
    }

    /// Multiplies the chosen responses in place and returns their indices.
    pub fn apply(&self, y: &mut [f64], seed: u64) -> Vec<usize> {
        let count = (self.fraction * y.len() as f64).round() as usize;
        let mut rng = rng_from_seed(seed);
        let mut picked = index::sample(&mut rng, y.len(), count.min(y.len())).into_vec();
        picked.sort_unstable();
        for &i in &picked {
            y[i] *= self.factor;
        }
        picked
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dims: Dims,
    pub ranks: Ranks,
    pub n: usize,
    pub noise: NoiseModel,
    /// `[λ_min, λ_max]` range for the unfolding singular values of the target.
    pub spectrum: [f64; 2],
    pub seed: u64,
    #[serde(default)]
    pub contamination: Option<Contamination>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        check_dims_ranks(self.dims, self.ranks)?;
        if self.n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        self.noise.validate()?;
        check_spectrum(self.spectrum)?;
        if let Some(c) = &self.contamination {
            c.validate()?;
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SyntheticSpec {
            seed,
            ..self.clone()
        }
    }
}

fn check_dims_ranks(dims: Dims, ranks: Ranks) -> Result<()> {
    for k in 0..3 {
        if dims[k] == 0 {
            return Err(Error::param("dims", format!("must be positive, got {dims:?}")));
        }
        if ranks[k] == 0 || ranks[k] > dims[k] {
            return Err(Error::param(
                "ranks",
                format!("need 1 <= r_k <= p_k, got ranks {ranks:?} for dims {dims:?}"),
            ));
        }
        let others = ranks[(k + 1) % 3] * ranks[(k + 2) % 3];
        if ranks[k] > others {
            return Err(Error::param(
                "ranks",
                format!("r{} = {} exceeds the product of the other ranks", k + 1, ranks[k]),
            ));
        }
    }
    Ok(())
}

fn check_spectrum(spectrum: [f64; 2]) -> Result<()> {
    let [lo, hi] = spectrum;
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::param(
            "spectrum",
            format!("need 0 < lambda_min <= lambda_max < inf, got {spectrum:?}"),
        ));
    }
    Ok(())
}

/// Orthonormal `p × r` matrix: thin QR of a Gaussian matrix with the signs
/// fixed so that `R` has a nonnegative diagonal.
pub fn random_orthonormal(p: usize, r: usize, rng: &mut impl Rng) -> Matrix {
    let g = Matrix::from_vec(p, r, (0..p * r).map(|_| rng.sample(StandardNormal)).collect());
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

const SPECTRUM_SWEEPS: usize = 5000;
const SPECTRUM_TOL: f64 = 1e-9;

fn spectra_within(core: &Tensor3, lo: f64, hi: f64) -> Result<bool> {
    for mode in 1..=3 {
        for s in singular_values(&unfold(core, mode)?) {
            if s < lo * (1.0 - SPECTRUM_TOL) || s > hi * (1.0 + SPECTRUM_TOL) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Replaces the singular values of each unfolding by their clamp into
/// `[lo, hi]`, cycling through the modes until all three spectra fit.
fn fit_core_spectrum(mut core: Tensor3, lo: f64, hi: f64) -> Result<Tensor3> {
    let dims = core.dims();
    for _ in 0..SPECTRUM_SWEEPS {
        if spectra_within(&core, lo, hi)? {
            return Ok(core);
        }
        for mode in 1..=3 {
            let svd = unfold(&core, mode)?.svd(true, true);
            let u = svd.u.expect("requested");
            let vt = svd.v_t.expect("requested");
            let s = svd.singular_values.map(|s| s.clamp(lo, hi));
            let m = u * Matrix::from_diagonal(&s) * vt;
            core = fold(&m, mode, dims)?;
        }
    }
    Err(Error::InfeasibleSpectrum(format!(
        "unfolding spectra of a {dims:?} core did not settle in [{lo}, {hi}]"
    )))
}

/// Factorized low-rank target with orthonormal factors.
pub fn gen_target_factors(dims: Dims, ranks: Ranks, spectrum: [f64; 2], seed: u64) -> Result<TuckerFactors> {
    check_dims_ranks(dims, ranks)?;
    check_spectrum(spectrum)?;
    let [lo, hi] = spectrum;
    // All three unfoldings share the Frobenius norm, so r_k λ_min² ≤ ‖S‖² ≤ r_k λ_max² for each k.
    let rmax = *ranks.iter().max().expect("three ranks") as f64;
    let rmin = *ranks.iter().min().expect("three ranks") as f64;
    if rmax * lo * lo > rmin * hi * hi * (1.0 + SPECTRUM_TOL) {
        return Err(Error::InfeasibleSpectrum(format!(
            "ranks {ranks:?} force incompatible Frobenius norms for spectrum [{lo}, {hi}]"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let u = [
        random_orthonormal(dims[0], ranks[0], &mut rng),
        random_orthonormal(dims[1], ranks[1], &mut rng),
        random_orthonormal(dims[2], ranks[2], &mut rng),
    ];
    let core = Tensor3::from_fn(ranks, |_, _, _| rng.sample(StandardNormal));
    let sv = singular_values(&unfold(&core, 1)?);
    let centre = (sv[0] * sv[sv.len() - 1]).sqrt();
    let core = core.scaled((lo * hi).sqrt() / centre);
    let core = fit_core_spectrum(core, lo, hi)?;
    TuckerFactors::new(core, u)
}

/// Target tensor of exact multilinear rank `ranks` whose unfolding singular
/// values lie in `spectrum`.
pub fn gen_target(dims: Dims, ranks: Ranks, spectrum: [f64; 2], seed: u64) -> Result<Tensor3> {
    Ok(tucker_reconstruct(&gen_target_factors(dims, ranks, spectrum, seed)?))
}

/// `(p1 p2 p3) × n` matrix of i.i.d. standard normal entries; column `i` is
/// `vec(X_i)`, drawn entry by entry in linearization order.
pub fn gen_design_matrix(n: usize, dims: Dims, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let len: usize = dims.iter().product();
    let mut rng = rng_from_seed(seed);
    let data = (0..len * n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Matrix::from_vec(len, n, data))
}

pub fn gen_design(n: usize, dims: Dims, seed: u64) -> Result<Vec<Tensor3>> {
    let m = gen_design_matrix(n, dims, seed)?;
    m.column_iter()
        .map(|c| Tensor3::from_vec(dims, c.iter().copied().collect()))
        .collect()
}

pub fn gen_noise(model: &NoiseModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    Ok(model.sample_n(n, &mut rng_from_seed(seed)))
}

/// Samples `y_i = ⟨X_i, A*⟩ + ε_i`, then applies the contamination if any.
/// The returned sample set carries the ground truth.
pub fn gen_dataset(spec: &SyntheticSpec) -> Result<(SampleSet, Tensor3)> {
    spec.validate()?;
    let seed = spec.seed;
    let truth = gen_target(spec.dims, spec.ranks, spec.spectrum, derive_seed(seed, &[TAG_TARGET]))?;
    let design = gen_design_matrix(spec.n, spec.dims, derive_seed(seed, &[TAG_DESIGN]))?;
    let noise = gen_noise(&spec.noise, spec.n, derive_seed(seed, &[TAG_NOISE]))?;
    let mut y: Vec<f64> = design
        .column_iter()
        .zip(&noise)
        .map(|(x, e)| x.iter().zip(truth.data()).map(|(a, b)| a * b).sum::<f64>() + e)
        .collect();
    if let Some(c) = &spec.contamination {
        c.apply(&mut y, derive_seed(seed, &[TAG_CONTAMINATION]));
    }
    let samples = SampleSet::from_design_matrix(spec.dims, design, y)?.with_ground_truth(truth.clone())?;
    Ok((samples, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{inner, spectrum_summary};

    fn spec(noise: NoiseModel) -> SyntheticSpec {
        SyntheticSpec {
            dims: [4, 3, 5],
            ranks: [2, 2, 2],
            n: 50,
            noise,
            spectrum: [1.0, 3.0],
            seed: 11,
            contamination: None,
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_ne!(derive_seed(0, &[]), derive_seed(0, &[0]));
    }

    #[test]
    fn rank_one_target() {
        let a = gen_target([4, 5, 3], [1, 1, 1], [2.0, 2.0], 3).unwrap();
        assert!((a.fro_norm() - 2.0).abs() < 1e-12);
        let s = spectrum_summary(&a, [1, 1, 1]).unwrap();
        assert!((s.lambda_bar - 2.0).abs() < 1e-12);
        assert!((s.lambda_underbar - 2.0).abs() < 1e-12);
        assert!((s.kappa.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn target_spectrum_and_exact_rank() {
        for (dims, ranks, spectrum) in [
            ([6, 6, 6], [2, 2, 2], [1.0, 3.0]),
            ([8, 8, 8], [2, 2, 2], [4.0, 5.0]),
            ([5, 6, 7], [2, 3, 2], [1.0, 2.0]),
            ([5, 5, 5], [3, 3, 3], [2.0, 2.0]),
        ] {
            let a = gen_target(dims, ranks, spectrum, 17).unwrap();
            let s = spectrum_summary(&a, ranks).unwrap();
            assert!(s.lambda_underbar >= spectrum[0] * (1.0 - 1e-6));
            assert!(s.lambda_bar <= spectrum[1] * (1.0 + 1e-6));
            for k in 0..3 {
                let sv = singular_values(&unfold(&a, k + 1).unwrap());
                assert!(sv[ranks[k]] <= 1e-10 * sv[0], "{dims:?} {ranks:?} mode {k}");
            }
            assert_eq!(a, gen_target(dims, ranks, spectrum, 17).unwrap());
        }
    }

    #[test]
    fn target_rejects_bad_spectra() {
        assert!(gen_target([4, 4, 4], [2, 2, 2], [0.0, 1.0], 0).is_err());
        assert!(gen_target([4, 4, 4], [2, 2, 2], [2.0, 1.0], 0).is_err());
        assert!(matches!(
            gen_target([4, 4, 4], [1, 2, 2], [2.0, 2.0], 0),
            Err(Error::InfeasibleSpectrum(_))
        ));
        assert!(gen_target([4, 4, 4], [1, 1, 2], [1.0, 2.0], 0).is_err());
    }

    #[test]
    fn design_moments() {
        let m = gen_design_matrix(10_000, [2, 2, 2], 5).unwrap();
        let n = m.len() as f64;
        let mean = m.iter().sum::<f64>() / n;
        let var = m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 4.0 / n.sqrt());
        assert!((0.97..=1.03).contains(&var));
        let xs = gen_design(3, [2, 2, 2], 5).unwrap();
        assert_eq!(xs, gen_design(3, [2, 2, 2], 5).unwrap());
        assert_eq!(xs[1].data(), m.column(1).as_slice());
    }

    #[test]
    fn noiseless_responses_are_exact_inner_products() {
        let (s, truth) = gen_dataset(&spec(NoiseModel::none())).unwrap();
        for i in 0..s.n() {
            assert_eq!(s.responses()[i], inner(&s.design(i), &truth).unwrap());
        }
        assert_eq!(s.ground_truth(), Some(&truth));
    }

    #[test]
    fn residuals_at_truth_are_the_noise() {
        let sp = spec(NoiseModel::student_t(3.0, 1.0).unwrap());
        let (s, truth) = gen_dataset(&sp).unwrap();
        let eps = gen_noise(&sp.noise, sp.n, derive_seed(sp.seed, &[TAG_NOISE])).unwrap();
        for (r, e) in s.residuals(&truth).unwrap().iter().zip(&eps) {
            assert!((r - e).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn contamination_hits_the_requested_share() {
        let mut y = vec![1.0; 200];
        let c = Contamination { fraction: 0.05, factor: 100.0 };
        let idx = c.apply(&mut y, 9);
        assert_eq!(idx.len(), 10);
        assert_eq!(y.iter().filter(|&&v| v == 100.0).count(), 10);
        let mut y2 = vec![1.0; 200];
        assert_eq!(c.apply(&mut y2, 9), idx);
    }

    #[test]
    fn least_squares_oracle_recovers_target() {
        let sp = SyntheticSpec {
            dims: [2, 2, 2],
            ranks: [1, 1, 1],
            n: 4000,
            noise: NoiseModel::gaussian(0.5).unwrap(),
            spectrum: [2.0, 2.0],
            seed: 21,
            contamination: None,
        };
        let (s, truth) = gen_dataset(&sp).unwrap();
        let x = s.design_matrix();
        let gram = x * x.transpose() + Matrix::identity(8, 8) * 1e-8;
        let rhs = x * nalgebra::DVector::from_column_slice(s.responses());
        let beta = gram.cholesky().unwrap().solve(&rhs);
        let est = Tensor3::from_vec([2, 2, 2], beta.as_slice().to_vec()).unwrap();
        assert!(est.sub(&truth).unwrap().fro_norm() <= 0.05 * truth.fro_norm());
    }

    #[test]
    fn dataset_is_deterministic() {
        let sp = SyntheticSpec {
            contamination: Some(Contamination { fraction: 0.1, factor: -50.0 }),
            ..spec(NoiseModel::pareto_centered(1.5, 1.0).unwrap())
        };
        let (a, _) = gen_dataset(&sp).unwrap();
        let (b, _) = gen_dataset(&sp).unwrap();
        assert_eq!(a, b);
        let (c, _) = gen_dataset(&sp.with_seed(12)).unwrap();
        assert_ne!(a, c);
    }
}
