//! Per-frame PSNR and SSIM.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ops::gaussian_kernel;
use crate::tensor::{PixelRange, VideoTensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub peak: f64,
    /// Infinite PSNR values serialize as the string `"inf"`.
    #[serde(serialize_with = "serialize_values")]
    pub per_frame: Vec<f64>,
    /// Arithmetic mean over the finite per-frame values; infinite when none
    /// are finite.
    #[serde(serialize_with = "serialize_value")]
    pub mean: f64,
    /// Frames excluded from the mean because they matched exactly.
    pub infinite_frames: usize,
}

impl MetricReport {
    fn from_values(metric: &str, peak: f64, per_frame: Vec<f64>) -> Self {
        let finite: Vec<f64> = per_frame
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        let mean = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        MetricReport {
            metric: metric.to_string(),
            peak,
            infinite_frames: per_frame.len() - finite.len(),
            per_frame,
            mean,
        }
    }
}

fn serialize_value<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn serialize_values<S: Serializer>(vs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(vs.len()))?;
    for v in vs {
        if v.is_infinite() && *v > 0.0 {
            seq.serialize_element("inf")?;
        } else {
            seq.serialize_element(v)?;
        }
    }
    seq.end()
}

fn check_pair(a: &VideoTensor, b: &VideoTensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "metric inputs differ in shape: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// PSNR with the peak taken from the shared range tag (1 for UNIT, 2 for
/// SYMMETRIC).
pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<MetricReport> {
    check_pair(a, b)?;
    if a.range() != b.range() {
        return Err(Error::param("PSNR inputs carry different range tags"));
    }
    psnr_with_peak(a, b, a.range().peak())
}

pub fn psnr_with_peak(a: &VideoTensor, b: &VideoTensor, peak: f64) -> Result<MetricReport> {
    check_pair(a, b)?;
    let per_frame = (0..a.shape().n)
        .map(|n| {
            let (fa, fb) = (a.frame_data(n), b.frame_data(n));
            let mse = fa
                .iter()
                .zip(fb)
                .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
                .sum::<f64>()
                / fa.len() as f64;
            if mse == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (peak * peak / mse).log10()
            }
        })
        .collect();
    Ok(MetricReport::from_values("psnr", peak, per_frame))
}

/// Mean SSIM per frame: 11×11 Gaussian window (σ = 1.5) over the valid
/// region, computed per channel on UNIT-range data and averaged.
pub fn ssim(a: &VideoTensor, b: &VideoTensor) -> Result<MetricReport> {
    check_pair(a, b)?;
    let s = a.shape();
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            s.h, s.w
        )));
    }
    let a = a.convert_range(PixelRange::Unit);
    let b = b.convert_range(PixelRange::Unit);
    let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let plane = s.h * s.w;
    let per_frame = (0..s.n)
        .map(|n| {
            let (fa, fb) = (a.frame_data(n), b.frame_data(n));
            let total: f64 = (0..s.c)
                .map(|c| {
                    ssim_plane(
                        &fa[c * plane..(c + 1) * plane],
                        &fb[c * plane..(c + 1) * plane],
                        s.h,
                        s.w,
                        &kernel,
                    )
                })
                .sum();
            total / s.c as f64
        })
        .collect();
    Ok(MetricReport::from_values("ssim", 1.0, per_frame))
}

fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize, kernel: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let win = kernel.len();
    let (oh, ow) = (h - win + 1, w - win + 1);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, &ki) in kernel.iter().enumerate() {
                for (j, &kj) in kernel.iter().enumerate() {
                    let k = ki * kj;
                    let va = f64::from(a[(y + i) * w + x + j]);
                    let vb = f64::from(b[(y + i) * w + x + j]);
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
    }
    total / (oh * ow) as f64
}
