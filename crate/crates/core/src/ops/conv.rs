//! 1-D correlation along one axis of an `N×C×H×W` buffer, with its exact
//! transpose. Boundary handling is folded into the index map so the
//! transpose scatters into the same source samples the forward pass read.

use rayon::prelude::*;

use crate::tensor::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Frames,
    Rows,
    Cols,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Mirror without repeating the edge sample (`d c b | a b c d | c b a`).
    Reflect,
    /// Clamp to the nearest edge sample.
    Replicate,
}

impl Padding {
    pub fn index(self, i: isize, n: usize) -> usize {
        match self {
            Padding::Reflect => reflect_index(i, n),
            Padding::Replicate => i.clamp(0, n as isize - 1) as usize,
        }
    }
}

/// Reflect padding that folds repeatedly, so offsets larger than the
/// signal still land inside it.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Gaussian sampled at integer offsets `-r..=r`, normalized to sum 1.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn axis_layout(shape: Shape, axis: Axis) -> (usize, usize, usize) {
    // (outer count, axis length, inner stride)
    match axis {
        Axis::Frames => (1, shape.n, shape.c * shape.h * shape.w),
        Axis::Rows => (shape.n * shape.c, shape.h, shape.w),
        Axis::Cols => (shape.n * shape.c * shape.h, shape.w, 1),
    }
}

/// `out[i] = Σ_k kernel[k] · x[pad(i + k − r)]` along `axis`.
pub fn correlate(x: &[f64], shape: Shape, axis: Axis, kernel: &[f64], pad: Padding) -> Vec<f64> {
    debug_assert_eq!(x.len(), shape.len());
    let (outer, len, inner) = axis_layout(shape, axis);
    let r = (kernel.len() / 2) as isize;
    let taps = tap_table(len, r, kernel.len(), pad);
    let block = len * inner;
    let mut out = vec![0.0; x.len()];
    let run = |(src, dst): (&[f64], &mut [f64])| {
        for j in 0..inner {
            for i in 0..len {
                let mut acc = 0.0;
                for (k, &w) in kernel.iter().enumerate() {
                    acc += w * src[taps[i * kernel.len() + k] * inner + j];
                }
                dst[i * inner + j] = acc;
            }
        }
    };
    if outer > 1 {
        x.par_chunks(block)
            .zip(out.par_chunks_mut(block))
            .for_each(run);
    } else {
        run((x, &mut out[..]));
    }
    out
}

/// Exact transpose of [`correlate`] with the same kernel and padding.
pub fn correlate_adjoint(
    y: &[f64],
    shape: Shape,
    axis: Axis,
    kernel: &[f64],
    pad: Padding,
) -> Vec<f64> {
    debug_assert_eq!(y.len(), shape.len());
    let (outer, len, inner) = axis_layout(shape, axis);
    let r = (kernel.len() / 2) as isize;
    let taps = tap_table(len, r, kernel.len(), pad);
    let block = len * inner;
    let mut out = vec![0.0; y.len()];
    let run = |(src, dst): (&[f64], &mut [f64])| {
        for j in 0..inner {
            for i in 0..len {
                let v = src[i * inner + j];
                for (k, &w) in kernel.iter().enumerate() {
                    dst[taps[i * kernel.len() + k] * inner + j] += w * v;
                }
            }
        }
    };
    if outer > 1 {
        y.par_chunks(block)
            .zip(out.par_chunks_mut(block))
            .for_each(run);
    } else {
        run((y, &mut out[..]));
    }
    out
}

fn tap_table(len: usize, r: isize, size: usize, pad: Padding) -> Vec<usize> {
    let mut taps = Vec::with_capacity(len * size);
    for i in 0..len as isize {
        for k in 0..size as isize {
            taps.push(pad.index(i + k - r, len));
        }
    }
    taps
}
