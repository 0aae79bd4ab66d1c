//! Linear spatio-temporal degradation operators `Y = A(X)` with exact
//! adjoints.
//!
//! Every operator is bound to a fixed input shape and works on flat 64-bit
//! buffers laid out like [`VideoTensor`](crate::tensor::VideoTensor). The
//! [`Degradation`] handle wraps any [`LinearOperator`] behind an `Arc` and
//! adds tensor-level helpers and composition.

mod conv;
mod dense;
mod spatial;
mod spec;
mod temporal;

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{Shape, VideoTensor};

pub use conv::{gaussian_kernel, reflect_index, Axis, Padding};
pub use dense::DenseOperator;
pub use spatial::{AvgPool, GaussianBlur, MaskPattern, RandomMask};
pub use spec::{OperatorSpec, Task, TaskSpec, DEFAULT_BLUR_KERNEL, DEFAULT_BLUR_SIGMA};
pub use temporal::FrameAverage;

/// A linear map between two fixed tensor shapes together with its adjoint.
pub trait LinearOperator: fmt::Debug + Send + Sync {
    fn input_shape(&self) -> Shape;
    fn output_shape(&self) -> Shape;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;
    /// Structured parameters that rebuild this operator, when it has any.
    fn descriptor(&self) -> Option<OperatorSpec>;
}

/// Shared handle to a linear degradation.
#[derive(Clone, Debug)]
pub struct Degradation(Arc<dyn LinearOperator>);

impl Degradation {
    pub fn new(op: impl LinearOperator + 'static) -> Self {
        Degradation(Arc::new(op))
    }

    pub fn identity(shape: Shape) -> Self {
        Degradation::new(Identity { shape })
    }

    pub fn input_shape(&self) -> Shape {
        self.0.input_shape()
    }

    pub fn output_shape(&self) -> Shape {
        self.0.output_shape()
    }

    pub fn descriptor(&self) -> Option<OperatorSpec> {
        self.0.descriptor()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("apply", x.len(), self.input_shape())?;
        Ok(self.0.apply(x))
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("adjoint", y.len(), self.output_shape())?;
        Ok(self.0.adjoint(y))
    }

    pub fn apply_video(&self, x: &VideoTensor) -> Result<VideoTensor> {
        expect_shape("apply", x.shape(), self.input_shape())?;
        let out = self.0.apply(&x.to_f64());
        VideoTensor::from_f64(self.output_shape(), x.range(), &out)
    }

    pub fn adjoint_video(&self, y: &VideoTensor) -> Result<VideoTensor> {
        expect_shape("adjoint", y.shape(), self.output_shape())?;
        let out = self.0.adjoint(&y.to_f64());
        VideoTensor::from_f64(self.input_shape(), y.range(), &out)
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &Degradation, inner: &Degradation) -> Result<Degradation> {
        if inner.output_shape() != outer.input_shape() {
            return Err(Error::shape(format!(
                "cannot compose: inner produces {} but outer expects {}",
                inner.output_shape(),
                outer.input_shape()
            )));
        }
        Ok(Degradation::new(Compose {
            outer: outer.clone(),
            inner: inner.clone(),
        }))
    }

    /// Dense row-major matrix of the operator, one column per basis vector.
    pub fn materialize(&self) -> Vec<f64> {
        let (rows, cols) = (self.output_shape().len(), self.input_shape().len());
        let mut m = vec![0.0; rows * cols];
        let mut e = vec![0.0; cols];
        for j in 0..cols {
            e[j] = 1.0;
            let col = self.0.apply(&e);
            for (i, v) in col.into_iter().enumerate() {
                m[i * cols + j] = v;
            }
            e[j] = 0.0;
        }
        m
    }
}

fn check_len(what: &str, len: usize, shape: Shape) -> Result<()> {
    if len != shape.len() {
        return Err(Error::shape(format!(
            "{what}: buffer of {len} samples does not match {shape}"
        )));
    }
    Ok(())
}

fn expect_shape(what: &str, got: Shape, want: Shape) -> Result<()> {
    if got != want {
        return Err(Error::shape(format!("{what}: got {got}, expected {want}")));
    }
    Ok(())
}

#[derive(Debug)]
struct Identity {
    shape: Shape,
}

impl LinearOperator for Identity {
    fn input_shape(&self) -> Shape {
        self.shape
    }
    fn output_shape(&self) -> Shape {
        self.shape
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }
    fn descriptor(&self) -> Option<OperatorSpec> {
        Some(OperatorSpec::Identity)
    }
}

#[derive(Debug)]
struct Compose {
    outer: Degradation,
    inner: Degradation,
}

impl LinearOperator for Compose {
    fn input_shape(&self) -> Shape {
        self.inner.input_shape()
    }
    fn output_shape(&self) -> Shape {
        self.outer.output_shape()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.outer.0.apply(&self.inner.0.apply(x))
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.inner.0.adjoint(&self.outer.0.adjoint(y))
    }
    fn descriptor(&self) -> Option<OperatorSpec> {
        Some(OperatorSpec::Compose {
            outer: Box::new(self.outer.descriptor()?),
            inner: Box::new(self.inner.descriptor()?),
        })
    }
}

/// Wraps an operator and multiplies its adjoint by a constant. Used to
/// inject a known-wrong adjoint when exercising the consistency checks.
#[derive(Debug)]
pub struct ScaledAdjoint {
    pub inner: Degradation,
    pub scale: f64,
}

impl LinearOperator for ScaledAdjoint {
    fn input_shape(&self) -> Shape {
        self.inner.input_shape()
    }
    fn output_shape(&self) -> Shape {
        self.inner.output_shape()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.inner.0.apply(x)
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.inner.0.adjoint(y);
        out.iter_mut().for_each(|v| *v *= self.scale);
        out
    }
    fn descriptor(&self) -> Option<OperatorSpec> {
        None
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest `|⟨Ax,y⟩ − ⟨x,Aᵀy⟩| / (‖Ax‖‖y‖ + ε)` over `trials` Gaussian
/// draws of `x` and `y`.
pub fn adjoint_check(op: &Degradation, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::param("adjoint_check needs at least one trial"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_in, n_out) = (op.input_shape().len(), op.output_shape().len());
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..n_in).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n_out)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let ax = op.apply(&x)?;
        let aty = op.adjoint(&y)?;
        let err = (dot(&ax, &y) - dot(&x, &aty)).abs() / (norm(&ax) * norm(&y) + f64::EPSILON);
        worst = worst.max(err);
    }
    Ok(worst)
}
