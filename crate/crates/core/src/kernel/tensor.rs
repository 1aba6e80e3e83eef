use std::fmt::Debug;

use num_traits::Float;

use super::KernelError;

/// Element type of a [`Tensor`].
///
/// Implemented for `f32` (training and inference) and `f64` (gradient
/// verification). Every reduction in the kernel widens to `f64` through
/// [`Scalar::as_f64`] regardless of the element type.
pub trait Scalar: Float + Copy + Default + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major array of rank 1 to 3 with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
    grad: Option<Vec<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: &[usize], data: Vec<F>) -> Result<Self, KernelError> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(KernelError::Rank { rank: shape.len() });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(KernelError::DataLength {
                shape: shape.to_vec(),
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![F::zero(); n]).expect("zeros: rank must be 1..=3")
    }

    /// A single-channel `1 × T` signal.
    pub fn signal(samples: &[F]) -> Self {
        Self {
            shape: vec![1, samples.len()],
            data: samples.to_vec(),
            grad: None,
        }
    }

    pub fn from_f32(shape: &[usize], data: &[f32]) -> Result<Self, KernelError> {
        Self::new(shape, data.iter().map(|&v| F::from_f64(v as f64)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<F>) -> Result<(), KernelError> {
        if grad.len() != self.data.len() {
            return Err(KernelError::DataLength {
                shape: self.shape.clone(),
                expected: self.data.len(),
                actual: grad.len(),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Number of rows and columns when viewed as a `C × K` matrix.
    pub fn as_matrix_dims(&self) -> Result<(usize, usize), KernelError> {
        match self.shape.as_slice() {
            [c, k] => Ok((*c, *k)),
            other => Err(KernelError::ExpectedRank {
                what: "channels × time",
                expected: 2,
                shape: other.to_vec(),
            }),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::from_f64(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| G::from_f64(v.as_f64())).collect()),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Squared L2 norm accumulated in 64-bit.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum()
    }
}
