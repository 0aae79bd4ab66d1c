use super::{LinearOperator, OperatorSpec};
use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Operator backed by an explicit row-major matrix. Handy for small
/// verification problems; it has no descriptor.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    input: Shape,
    output: Shape,
    matrix: Vec<f64>,
}

impl DenseOperator {
    pub fn new(input: Shape, output: Shape, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != input.len() * output.len() {
            return Err(Error::shape(format!(
                "{}x{} matrix needs {} entries, got {}",
                output.len(),
                input.len(),
                input.len() * output.len(),
                matrix.len()
            )));
        }
        Ok(DenseOperator {
            input,
            output,
            matrix,
        })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn input_shape(&self) -> Shape {
        self.input
    }

    fn output_shape(&self) -> Shape {
        self.output
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.input.len())
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let cols = self.input.len();
        let mut out = vec![0.0; cols];
        for (row, &yi) in self.matrix.chunks_exact(cols).zip(y) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }

    fn descriptor(&self) -> Option<OperatorSpec> {
        None
    }
}
