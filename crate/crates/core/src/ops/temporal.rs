use super::conv::{correlate, correlate_adjoint, Axis, Padding};
use super::{LinearOperator, OperatorSpec};
use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Uniform temporal averaging over an odd window of frames, replicate padding
/// at both ends, same frame count in and out.
#[derive(Debug, Clone)]
pub struct FrameAverage {
    shape: Shape,
    window: usize,
    kernel: Vec<f64>,
}

impl FrameAverage {
    pub fn new(shape: Shape, window: usize) -> Result<Self> {
        if window == 0 || window.is_multiple_of(2) {
            return Err(Error::param(format!(
                "frame-average window must be odd and positive, got {window}"
            )));
        }
        if window > shape.n {
            return Err(Error::param(format!(
                "frame-average window {window} exceeds {} frames",
                shape.n
            )));
        }
        Ok(FrameAverage {
            shape,
            window,
            kernel: vec![1.0 / window as f64; window],
        })
    }
}

impl LinearOperator for FrameAverage {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn output_shape(&self) -> Shape {
        self.shape
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.window == 1 {
            return x.to_vec();
        }
        correlate(
            x,
            self.shape,
            Axis::Frames,
            &self.kernel,
            Padding::Replicate,
        )
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        if self.window == 1 {
            return y.to_vec();
        }
        correlate_adjoint(
            y,
            self.shape,
            Axis::Frames,
            &self.kernel,
            Padding::Replicate,
        )
    }

    fn descriptor(&self) -> Option<OperatorSpec> {
        Some(OperatorSpec::FrameAverage {
            window: self.window,
        })
    }
}
