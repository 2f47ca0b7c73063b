//! Dense order-3 tensors and the multilinear algebra the estimator is built on.
//!
//! # Layout
//!
//! A [`Tensor3`] with dimensions `(p1, p2, p3)` stores entry `(i, j, k)` at
//! linear position `i + p1 * (j + p2 * k)`: the first index varies fastest.
//!
//! The mode-`k` unfolding places mode `k` on the rows and orders the columns
//! with the lower-numbered remaining mode varying fastest:
//!
//! | mode | row | column        |
//! |------|-----|---------------|
//! | 1    | `i` | `j + p2 * k`  |
//! | 2    | `j` | `i + p1 * k`  |
//! | 3    | `k` | `i + p1 * j`  |
//!
//! With this convention a Tucker tensor `S x1 U1 x2 U2 x3 U3` satisfies
//! `unfold(., 1) = U1 * unfold(S, 1) * (U3 ⊗ U2)ᵀ` and cyclically
//! `(U3 ⊗ U1)` for mode 2 and `(U2 ⊗ U1)` for mode 3.
//!
//! Everything outside this module touches the layout only through
//! [`unfold`] and [`fold`].

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Tensor dimensions `(p1, p2, p3)`.
pub type Dims = [usize; 3];

/// Multilinear rank `(r1, r2, r3)`.
pub type Ranks = [usize; 3];

/// Below this fraction of `lambda_bar` the smallest retained singular value
/// counts as zero.
const RANK_DEFICIENT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor3 {
    /// All-zero tensor. Panics if any dimension is zero.
    pub fn zeros(dims: Dims) -> Self {
        assert!(
            dims.iter().all(|&d| d > 0),
            "tensor dimensions must be positive, got {dims:?}"
        );
        Tensor3 {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::param("dims", format!("must be positive, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape("Tensor3::from_vec", len, data.len()));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(dims);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = t.index(i, j, k);
                    t.data[idx] = f(i, j, k);
                }
            }
        }
        t
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Entries in linearization order.
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.index(i, j, k);
        self.data[idx] = value;
    }

    pub fn fro_norm(&self) -> f64 {
        let scale = self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return scale;
        }
        scale * self.data.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &Tensor3) -> Result<()> {
        self.check_same_dims(x, "Tensor3::axpy")?;
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub(crate) fn check_same_dims(&self, other: &Tensor3, context: &'static str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(
                context,
                format!("{:?}", self.dims),
                format!("{:?}", other.dims),
            ));
        }
        Ok(())
    }
}

fn check_mode(mode: usize) -> Result<usize> {
    if (1..=3).contains(&mode) {
        Ok(mode - 1)
    } else {
        Err(Error::InvalidMode(mode))
    }
}

/// Mode-`mode` matricization; `mode` is 1-based.
pub fn unfold(t: &Tensor3, mode: usize) -> Result<Matrix> {
    let m = check_mode(mode)?;
    let [p1, p2, p3] = t.dims;
    Ok(match m {
        0 => Matrix::from_column_slice(p1, p2 * p3, &t.data),
        1 => Matrix::from_fn(p2, p1 * p3, |j, c| t.get(c % p1, j, c / p1)),
        _ => Matrix::from_column_slice(p1 * p2, p3, &t.data).transpose(),
    })
}

/// Inverse of [`unfold`].
pub fn fold(mat: &Matrix, mode: usize, dims: Dims) -> Result<Tensor3> {
    let m = check_mode(mode)?;
    if dims.contains(&0) {
        return Err(Error::param("dims", format!("must be positive, got {dims:?}")));
    }
    let total: usize = dims.iter().product();
    let expected = (dims[m], total / dims[m]);
    if mat.shape() != expected {
        return Err(Error::shape(
            "fold",
            format!("{}x{}", expected.0, expected.1),
            format!("{}x{}", mat.nrows(), mat.ncols()),
        ));
    }
    let [p1, _, _] = dims;
    Ok(match m {
        0 => Tensor3 {
            dims,
            data: mat.as_slice().to_vec(),
        },
        1 => Tensor3::from_fn(dims, |i, j, k| mat[(j, i + p1 * k)]),
        _ => Tensor3 {
            dims,
            data: mat.transpose().as_slice().to_vec(),
        },
    })
}

/// `t ×_mode mat` for a `q × p_mode` matrix.
pub fn mode_product(t: &Tensor3, mat: &Matrix, mode: usize) -> Result<Tensor3> {
    let m = check_mode(mode)?;
    if mat.ncols() != t.dims[m] {
        return Err(Error::shape(
            "mode_product",
            format!("{} columns", t.dims[m]),
            format!("{} columns", mat.ncols()),
        ));
    }
    if mat.nrows() == 0 {
        return Err(Error::param("mat", "matrix must have at least one row"));
    }
    let mut dims = t.dims;
    dims[m] = mat.nrows();
    let unfolded = unfold(t, mode)?;
    fold(&(mat * unfolded), mode, dims)
}

pub fn inner(a: &Tensor3, b: &Tensor3) -> Result<f64> {
    a.check_same_dims(b, "inner")?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// A Tucker factorization `⟦S; U1, U2, U3⟧`.
#[derive(Clone, Debug, PartialEq)]
pub struct TuckerFactors {
    core: Tensor3,
    factors: [Matrix; 3],
}

impl TuckerFactors {
    pub fn new(core: Tensor3, factors: [Matrix; 3]) -> Result<Self> {
        for (k, u) in factors.iter().enumerate() {
            let r = core.dims[k];
            if u.ncols() != r {
                return Err(Error::shape(
                    "TuckerFactors::new",
                    format!("factor {} with {r} columns", k + 1),
                    format!("{} columns", u.ncols()),
                ));
            }
            if r > u.nrows() {
                return Err(Error::param(
                    "ranks",
                    format!("r{} = {r} exceeds p{} = {}", k + 1, k + 1, u.nrows()),
                ));
            }
        }
        Ok(TuckerFactors { core, factors })
    }

    pub fn core(&self) -> &Tensor3 {
        &self.core
    }

    pub fn factor(&self, k: usize) -> &Matrix {
        &self.factors[k]
    }

    pub fn factors(&self) -> &[Matrix; 3] {
        &self.factors
    }

    pub fn ranks(&self) -> Ranks {
        self.core.dims
    }

    pub fn dims(&self) -> Dims {
        [
            self.factors[0].nrows(),
            self.factors[1].nrows(),
            self.factors[2].nrows(),
        ]
    }

    pub fn into_parts(self) -> (Tensor3, [Matrix; 3]) {
        (self.core, self.factors)
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Tensor3, &mut [Matrix; 3]) {
        (&mut self.core, &mut self.factors)
    }
}

/// `S ×1 U1 ×2 U2 ×3 U3`.
pub fn tucker_reconstruct(f: &TuckerFactors) -> Tensor3 {
    let t = mode_product(&f.core, &f.factors[0], 1).expect("shapes validated at construction");
    let t = mode_product(&t, &f.factors[1], 2).expect("shapes validated at construction");
    mode_product(&t, &f.factors[2], 3).expect("shapes validated at construction")
}

/// Singular values in descending order.
pub fn singular_values(mat: &Matrix) -> Vec<f64> {
    if mat.is_empty() {
        return Vec::new();
    }
    mat.singular_values().iter().copied().collect()
}

/// Leading `r` left singular vectors of `mat`.
///
/// Each column is sign-normalized so that its largest-magnitude entry
/// (first one on ties) is positive.
pub fn top_left_singular(mat: &Matrix, r: usize) -> Result<Matrix> {
    let max_rank = mat.nrows().min(mat.ncols());
    if r == 0 || r > max_rank {
        return Err(Error::param(
            "rank",
            format!("must be in 1..={max_rank}, got {r}"),
        ));
    }
    let svd = SVD::new(mat.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut out = u.columns(0, r).into_owned();
    for mut col in out.column_iter_mut() {
        let mut pivot = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(out)
}

/// Extreme unfolding singular values of a tensor at a given multilinear rank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    /// Largest operator norm over the three unfoldings.
    pub lambda_bar: f64,
    /// Smallest `r_k`-th singular value over the three unfoldings.
    pub lambda_underbar: f64,
    /// `lambda_bar / lambda_underbar`; `None` when the tensor is rank deficient
    /// at the requested ranks.
    pub kappa: Option<f64>,
}

impl SpectrumSummary {
    pub fn is_rank_deficient(&self) -> bool {
        self.kappa.is_none()
    }
}

pub fn spectrum_summary(t: &Tensor3, ranks: Ranks) -> Result<SpectrumSummary> {
    let mut lambda_bar = 0.0_f64;
    let mut lambda_underbar = f64::INFINITY;
    for mode in 1..=3 {
        let m = unfold(t, mode)?;
        let r = ranks[mode - 1];
        let max_rank = m.nrows().min(m.ncols());
        if r == 0 || r > max_rank {
            return Err(Error::param(
                "ranks",
                format!("r{mode} must be in 1..={max_rank}, got {r}"),
            ));
        }
        let sv = singular_values(&m);
        lambda_bar = lambda_bar.max(sv[0]);
        lambda_underbar = lambda_underbar.min(sv[r - 1]);
    }
    let kappa = if lambda_underbar > RANK_DEFICIENT_TOL * lambda_bar && lambda_underbar > 0.0 {
        Some(lambda_bar / lambda_underbar)
    } else {
        None
    };
    Ok(SpectrumSummary {
        lambda_bar,
        lambda_underbar,
        kappa,
    })
}

/// Effective parameter count `r1 r2 r3 + Σ p_k r_k` of the Tucker model.
pub fn degrees_of_freedom(dims: Dims, ranks: Ranks) -> usize {
    ranks.iter().product::<usize>() + dims.iter().zip(&ranks).map(|(p, r)| p * r).sum::<usize>()
}
