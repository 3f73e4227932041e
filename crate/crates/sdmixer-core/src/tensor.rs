//! Dense row-major tensors and the error type shared by every module.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Failure modes of the engine. Dimension and argument errors are caller
/// mistakes; contract errors are misuse of the tape API; integrity errors come
/// from checkpoint decoding; training errors report divergence.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not conform.
    Dimension(String),
    /// A value is outside its documented domain.
    Argument(String),
    /// An API contract was violated, e.g. backward from a non-scalar node.
    Contract(String),
    /// A serialized artifact failed validation.
    Integrity(String),
    /// The loss became non-finite.
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Argument(m) => write!(f, "argument error: {m}"),
            Error::Contract(m) => write!(f, "contract error: {m}"),
            Error::Integrity(m) => write!(f, "integrity error: {m}"),
            Error::Training {
                epoch,
                batch,
                message,
            } => write!(f, "training error at epoch {epoch}, batch {batch}: {message}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl fmt::Display) -> Result<T> {
    Err(Error::Dimension(format!("{msg}")))
}

pub(crate) fn arg_err<T>(msg: impl fmt::Display) -> Result<T> {
    Err(Error::Argument(format!("{msg}")))
}

/// Dense tensor of `f64` in row-major order. Rank is the shape length; a
/// scalar is represented as shape `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.is_empty() || expect != data.len() {
            return dim_err(format!(
                "shape {shape:?} does not describe a buffer of {} elements",
                data.len()
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Identity matrix of shape `[n, n]`.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterprets the buffer under a new shape of identical element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let expect: usize = shape.iter().product();
        if shape.is_empty() || expect != self.data.len() {
            return dim_err(format!(
                "cannot reshape {:?} ({} elements) to {shape:?}",
                self.shape,
                self.data.len()
            ));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Element at a fully specified index. Intended for tests and small code
    /// paths, not inner loops.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0;
        for (i, (&ix, &ext)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < ext, "index {ix} out of bounds at axis {i}");
            flat = flat * ext + ix;
        }
        self.data[flat]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn map_mut(&mut self, mut f: impl FnMut(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute difference against another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, f64::max)
    }
}

/// Complex tensor stored as separate real and imaginary planes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.is_empty() || expect != re.len() || re.len() != im.len() {
            return dim_err(format!(
                "shape {shape:?} does not describe planes of {}/{} elements",
                re.len(),
                im.len()
            ));
        }
        Ok(ComplexTensor { shape, re, im })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        ComplexTensor {
            shape,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    /// Elementwise modulus, returned as a real tensor of the same shape.
    pub fn magnitude(&self) -> Tensor {
        let data = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| math::sqrt(r * r + i * i))
            .collect();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Splits into real and imaginary tensors of the same shape.
    pub fn into_planes(self) -> (Tensor, Tensor) {
        (
            Tensor {
                shape: self.shape.clone(),
                data: self.re,
            },
            Tensor {
                shape: self.shape,
                data: self.im,
            },
        )
    }
}
