use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AvgPool, Degradation, FrameAverage, GaussianBlur, RandomMask};
use crate::error::{Error, Result};
use crate::tensor::Shape;

pub const DEFAULT_BLUR_KERNEL: usize = 61;
pub const DEFAULT_BLUR_SIGMA: f64 = 3.0;
const DEFAULT_SR_FACTOR: usize = 4;
const DEFAULT_MASK_RATE: f64 = 0.5;
const DEFAULT_WINDOW: usize = 7;

/// Serializable description of an operator tree. Building it against an
/// input shape reproduces the operator exactly (masks are re-drawn from
/// their seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OperatorSpec {
    Identity,
    GaussianBlur {
        kernel_size: usize,
        sigma: f64,
    },
    AvgPool {
        factor: usize,
    },
    RandomMask {
        rate: f64,
        seed: u64,
        per_frame: bool,
    },
    FrameAverage {
        window: usize,
    },
    Compose {
        outer: Box<OperatorSpec>,
        inner: Box<OperatorSpec>,
    },
}

impl OperatorSpec {
    pub fn build(&self, input: Shape) -> Result<Degradation> {
        Ok(match self {
            OperatorSpec::Identity => Degradation::identity(input),
            OperatorSpec::GaussianBlur { kernel_size, sigma } => {
                Degradation::new(GaussianBlur::new(input, *kernel_size, *sigma)?)
            }
            OperatorSpec::AvgPool { factor } => Degradation::new(AvgPool::new(input, *factor)?),
            OperatorSpec::RandomMask {
                rate,
                seed,
                per_frame,
            } => Degradation::new(RandomMask::new(input, *rate, *seed, *per_frame)?),
            OperatorSpec::FrameAverage { window } => {
                Degradation::new(FrameAverage::new(input, *window)?)
            }
            OperatorSpec::Compose { outer, inner } => {
                let inner = inner.build(input)?;
                let outer = outer.build(inner.output_shape())?;
                Degradation::compose(&outer, &inner)?
            }
        })
    }
}

/// The six benchmark degradations: three spatial tasks and their
/// combinations with temporal frame averaging.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "deblur")]
    Deblur,
    #[serde(rename = "sr")]
    Sr,
    #[serde(rename = "inpaint")]
    Inpaint,
    #[serde(rename = "deblur+")]
    DeblurPlus,
    #[serde(rename = "sr+")]
    SrPlus,
    #[serde(rename = "inpaint+")]
    InpaintPlus,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Deblur,
        Task::Sr,
        Task::Inpaint,
        Task::DeblurPlus,
        Task::SrPlus,
        Task::InpaintPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Deblur => "deblur",
            Task::Sr => "sr",
            Task::Inpaint => "inpaint",
            Task::DeblurPlus => "deblur+",
            Task::SrPlus => "sr+",
            Task::InpaintPlus => "inpaint+",
        }
    }

    pub fn has_frame_averaging(self) -> bool {
        matches!(self, Task::DeblurPlus | Task::SrPlus | Task::InpaintPlus)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::param(format!("unknown task {s:?}")))
    }
}

/// Task name, its parameters and the seed; enough to rebuild the operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_blur_kernel")]
    pub blur_kernel: usize,
    #[serde(default = "default_blur_sigma")]
    pub blur_sigma: f64,
    #[serde(default = "default_sr_factor")]
    pub sr_factor: usize,
    #[serde(default = "default_mask_rate")]
    pub mask_rate: f64,
    #[serde(default = "default_true")]
    pub mask_per_frame: bool,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Apply frame averaging before the spatial degradation.
    #[serde(default = "default_true")]
    pub temporal_first: bool,
}

fn default_blur_kernel() -> usize {
    DEFAULT_BLUR_KERNEL
}
fn default_blur_sigma() -> f64 {
    DEFAULT_BLUR_SIGMA
}
fn default_sr_factor() -> usize {
    DEFAULT_SR_FACTOR
}
fn default_mask_rate() -> f64 {
    DEFAULT_MASK_RATE
}
fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_true() -> bool {
    true
}

impl TaskSpec {
    pub fn new(task: Task, seed: u64) -> Self {
        TaskSpec {
            task,
            seed,
            blur_kernel: DEFAULT_BLUR_KERNEL,
            blur_sigma: DEFAULT_BLUR_SIGMA,
            sr_factor: DEFAULT_SR_FACTOR,
            mask_rate: DEFAULT_MASK_RATE,
            mask_per_frame: true,
            window: DEFAULT_WINDOW,
            temporal_first: true,
        }
    }

    fn spatial(&self) -> OperatorSpec {
        match self.task {
            Task::Deblur | Task::DeblurPlus => OperatorSpec::GaussianBlur {
                kernel_size: self.blur_kernel,
                sigma: self.blur_sigma,
            },
            Task::Sr | Task::SrPlus => OperatorSpec::AvgPool {
                factor: self.sr_factor,
            },
            Task::Inpaint | Task::InpaintPlus => OperatorSpec::RandomMask {
                rate: self.mask_rate,
                seed: self.seed,
                per_frame: self.mask_per_frame,
            },
        }
    }

    pub fn operator_spec(&self) -> OperatorSpec {
        let spatial = self.spatial();
        if !self.task.has_frame_averaging() {
            return spatial;
        }
        let temporal = OperatorSpec::FrameAverage {
            window: self.window,
        };
        let (outer, inner) = if self.temporal_first {
            (spatial, temporal)
        } else {
            (temporal, spatial)
        };
        OperatorSpec::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    pub fn build(&self, input: Shape) -> Result<Degradation> {
        self.operator_spec().build(input)
    }
}
