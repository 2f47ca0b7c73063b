use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::tensor::{Dims, Matrix, Tensor3};

/// `n` covariate/response pairs `(X_i, y_i)` sharing one tensor shape.
///
/// Covariates are held column-wise in a `(p1 p2 p3) × n` matrix, each column
/// being `X_i` in [`Tensor3`] linearization order, so that all inner products
/// `⟨X_i, A⟩` are a single matrix-vector product with a fixed summation order.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dims: Dims,
    design: Matrix,
    responses: Vec<f64>,
    ground_truth: Option<Tensor3>,
}

impl SampleSet {
    pub fn new(dims: Dims, designs: &[Tensor3], responses: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        let mut design = Matrix::zeros(len, designs.len());
        for (i, x) in designs.iter().enumerate() {
            if x.dims() != dims {
                return Err(Error::shape(
                    "SampleSet::new",
                    format!("{dims:?}"),
                    format!("{:?} at sample {i}", x.dims()),
                ));
            }
            design.column_mut(i).copy_from_slice(x.data());
        }
        Self::from_design_matrix(dims, design, responses)
    }

    /// Builds a sample set from a `(p1 p2 p3) × n` covariate matrix.
    pub fn from_design_matrix(dims: Dims, design: Matrix, responses: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::param("dims", format!("must be positive, got {dims:?}")));
        }
        if responses.is_empty() {
            return Err(Error::EmptySamples);
        }
        let len: usize = dims.iter().product();
        if design.nrows() != len || design.ncols() != responses.len() {
            return Err(Error::shape(
                "SampleSet::from_design_matrix",
                format!("{len}x{}", responses.len()),
                format!("{}x{}", design.nrows(), design.ncols()),
            ));
        }
        Ok(SampleSet {
            dims,
            design,
            responses,
            ground_truth: None,
        })
    }

    pub fn with_ground_truth(mut self, truth: Tensor3) -> Result<Self> {
        if truth.dims() != self.dims {
            return Err(Error::shape(
                "SampleSet::with_ground_truth",
                format!("{:?}", self.dims),
                format!("{:?}", truth.dims()),
            ));
        }
        self.ground_truth = Some(truth);
        Ok(self)
    }

    /// Same covariates, new responses.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        if responses.len() != self.n() {
            return Err(Error::shape("SampleSet::with_responses", self.n(), responses.len()));
        }
        Ok(SampleSet {
            responses,
            ..self.clone()
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.responses.len()
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn ground_truth(&self) -> Option<&Tensor3> {
        self.ground_truth.as_ref()
    }

    /// Covariate matrix; column `i` is `X_i`.
    pub fn design_matrix(&self) -> &Matrix {
        &self.design
    }

    pub fn design(&self, i: usize) -> Tensor3 {
        Tensor3::from_vec(self.dims, self.design.column(i).iter().copied().collect())
            .expect("column length matches dims")
    }

    fn check_dims(&self, a: &Tensor3, context: &'static str) -> Result<()> {
        if a.dims() != self.dims {
            return Err(Error::shape(
                context,
                format!("{:?}", self.dims),
                format!("{:?}", a.dims()),
            ));
        }
        Ok(())
    }

    /// `⟨X_i, A⟩` for every sample.
    pub fn predictions(&self, a: &Tensor3) -> Result<DVector<f64>> {
        self.check_dims(a, "SampleSet::predictions")?;
        let v = DVector::from_column_slice(a.data());
        Ok(self.design.tr_mul(&v))
    }

    /// `y_i − ⟨X_i, A⟩` for every sample.
    pub fn residuals(&self, a: &Tensor3) -> Result<Vec<f64>> {
        let pred = self.predictions(a)?;
        Ok(self
            .responses
            .iter()
            .zip(pred.iter())
            .map(|(y, p)| y - p)
            .collect())
    }

    /// `Σ_i w_i X_i`.
    pub fn weighted_sum(&self, weights: &[f64]) -> Result<Tensor3> {
        if weights.len() != self.n() {
            return Err(Error::shape("SampleSet::weighted_sum", self.n(), weights.len()));
        }
        let w = DVector::from_column_slice(weights);
        let sum = &self.design * w;
        Tensor3::from_vec(self.dims, sum.as_slice().to_vec())
    }
}
