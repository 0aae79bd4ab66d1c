use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{correlate, correlate_adjoint, gaussian_kernel, Axis, Padding};
use super::{LinearOperator, OperatorSpec};
use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Per-frame, per-channel 2-D Gaussian blur with reflect padding.
#[derive(Debug, Clone)]
pub struct GaussianBlur {
    shape: Shape,
    kernel_size: usize,
    sigma: f64,
    kernel: Vec<f64>,
}

impl GaussianBlur {
    pub fn new(shape: Shape, kernel_size: usize, sigma: f64) -> Result<Self> {
        if kernel_size == 0 || kernel_size.is_multiple_of(2) {
            return Err(Error::param(format!(
                "blur kernel size must be odd and positive, got {kernel_size}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!(
                "blur sigma must be positive, got {sigma}"
            )));
        }
        Ok(GaussianBlur {
            shape,
            kernel_size,
            sigma,
            kernel: gaussian_kernel(kernel_size, sigma),
        })
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }
}

impl LinearOperator for GaussianBlur {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn output_shape(&self) -> Shape {
        self.shape
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.kernel_size == 1 {
            return x.to_vec();
        }
        let rows = correlate(x, self.shape, Axis::Rows, &self.kernel, Padding::Reflect);
        correlate(
            &rows,
            self.shape,
            Axis::Cols,
            &self.kernel,
            Padding::Reflect,
        )
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        if self.kernel_size == 1 {
            return y.to_vec();
        }
        let cols = correlate_adjoint(y, self.shape, Axis::Cols, &self.kernel, Padding::Reflect);
        correlate_adjoint(
            &cols,
            self.shape,
            Axis::Rows,
            &self.kernel,
            Padding::Reflect,
        )
    }

    fn descriptor(&self) -> Option<OperatorSpec> {
        Some(OperatorSpec::GaussianBlur {
            kernel_size: self.kernel_size,
            sigma: self.sigma,
        })
    }
}

/// Non-overlapping `factor×factor` block mean.
#[derive(Debug, Clone)]
pub struct AvgPool {
    shape: Shape,
    factor: usize,
}

impl AvgPool {
    pub fn new(shape: Shape, factor: usize) -> Result<Self> {
        if factor < 2 {
            return Err(Error::param(format!(
                "pool factor must be ≥ 2, got {factor}"
            )));
        }
        if !shape.h.is_multiple_of(factor) || !shape.w.is_multiple_of(factor) {
            return Err(Error::shape(format!(
                "{}x{} frames are not divisible by pool factor {factor}",
                shape.h, shape.w
            )));
        }
        Ok(AvgPool { shape, factor })
    }
}

impl LinearOperator for AvgPool {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn output_shape(&self) -> Shape {
        let f = self.factor;
        Shape::new(
            self.shape.n,
            self.shape.c,
            self.shape.h / f,
            self.shape.w / f,
        )
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (s, f) = (self.shape, self.factor);
        let (oh, ow) = (s.h / f, s.w / f);
        let scale = 1.0 / (f * f) as f64;
        let mut out = vec![0.0; s.n * s.c * oh * ow];
        for plane in 0..s.n * s.c {
            let src = &x[plane * s.h * s.w..(plane + 1) * s.h * s.w];
            let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
            for y in 0..s.h {
                for xx in 0..s.w {
                    dst[(y / f) * ow + xx / f] += src[y * s.w + xx];
                }
            }
            dst.iter_mut().for_each(|v| *v *= scale);
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let (s, f) = (self.shape, self.factor);
        let (oh, ow) = (s.h / f, s.w / f);
        let scale = 1.0 / (f * f) as f64;
        let mut out = vec![0.0; s.len()];
        for plane in 0..s.n * s.c {
            let src = &y[plane * oh * ow..(plane + 1) * oh * ow];
            let dst = &mut out[plane * s.h * s.w..(plane + 1) * s.h * s.w];
            for yy in 0..s.h {
                for xx in 0..s.w {
                    dst[yy * s.w + xx] = src[(yy / f) * ow + xx / f] * scale;
                }
            }
        }
        out
    }

    fn descriptor(&self) -> Option<OperatorSpec> {
        Some(OperatorSpec::AvgPool {
            factor: self.factor,
        })
    }
}

/// A realized `N×H×W` keep/drop mask, broadcast over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPattern {
    pub seed: u64,
    pub rate: f64,
    pub per_frame: bool,
    frames: usize,
    height: usize,
    width: usize,
    keep: Vec<bool>,
}

impl MaskPattern {
    /// Each pixel is dropped independently with probability `rate`. With
    /// `per_frame == false` the first frame's pattern is shared by all frames.
    pub fn realize(seed: u64, rate: f64, per_frame: bool, shape: Shape) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::param(format!(
                "mask rate must lie in [0,1], got {rate}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plane = shape.h * shape.w;
        let drawn = if per_frame { shape.n } else { 1 };
        let mut keep: Vec<bool> = (0..drawn * plane)
            .map(|_| rng.random::<f64>() >= rate)
            .collect();
        if !per_frame {
            let first = keep.clone();
            for _ in 1..shape.n {
                keep.extend_from_slice(&first);
            }
        }
        Ok(MaskPattern {
            seed,
            rate,
            per_frame,
            frames: shape.n,
            height: shape.h,
            width: shape.w,
            keep,
        })
    }

    pub fn keeps(&self, n: usize, y: usize, x: usize) -> bool {
        self.keep[(n * self.height + y) * self.width + x]
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / self.keep.len() as f64
    }

    pub fn len(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }
}

/// Elementwise `{0,1}` mask; self-adjoint.
#[derive(Debug, Clone)]
pub struct RandomMask {
    shape: Shape,
    pattern: MaskPattern,
}

impl RandomMask {
    pub fn new(shape: Shape, rate: f64, seed: u64, per_frame: bool) -> Result<Self> {
        Ok(RandomMask {
            shape,
            pattern: MaskPattern::realize(seed, rate, per_frame, shape)?,
        })
    }

    pub fn pattern(&self) -> &MaskPattern {
        &self.pattern
    }

    fn mask(&self, x: &[f64]) -> Vec<f64> {
        let s = self.shape;
        let plane = s.h * s.w;
        let mut out = x.to_vec();
        for n in 0..s.n {
            let keep = &self.pattern.keep[n * plane..(n + 1) * plane];
            for c in 0..s.c {
                let base = (n * s.c + c) * plane;
                for (v, &k) in out[base..base + plane].iter_mut().zip(keep) {
                    if !k {
                        *v = 0.0;
                    }
                }
            }
        }
        out
    }
}

impl LinearOperator for RandomMask {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn output_shape(&self) -> Shape {
        self.shape
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mask(x)
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.mask(y)
    }

    fn descriptor(&self) -> Option<OperatorSpec> {
        Some(OperatorSpec::RandomMask {
            rate: self.pattern.rate,
            seed: self.pattern.seed,
            per_frame: self.pattern.per_frame,
        })
    }
}
