use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ops::{Degradation, OperatorSpec, TaskSpec};
use crate::tensor::{Shape, VideoTensor};

/// A degraded video together with everything needed to rebuild its
/// operator.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub video: VideoTensor,
    pub record: MeasurementRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub task: TaskSpec,
    pub operator: OperatorSpec,
    /// Shape of the clean video the operator acts on.
    pub input_shape: [usize; 4],
}

impl MeasurementRecord {
    pub fn input_shape(&self) -> Shape {
        let [n, c, h, w] = self.input_shape;
        Shape::new(n, c, h, w)
    }

    pub fn operator(&self) -> Result<Degradation> {
        self.operator.build(self.input_shape())
    }
}

pub fn degrade(x: &VideoTensor, task: &TaskSpec) -> Result<Measurement> {
    let operator = task.operator_spec();
    let a = operator.build(x.shape())?;
    let s = x.shape();
    Ok(Measurement {
        video: a.apply_video(x)?,
        record: MeasurementRecord {
            task: task.clone(),
            operator,
            input_shape: [s.n, s.c, s.h, s.w],
        },
    })
}
