use serde::{Deserialize, Serialize};

use super::{reconstruct, Reconstruction, SolverConfig};
use crate::denoise::{Denoiser, LatentCodec};
use crate::error::{Error, Result};
use crate::ops::{norm, Degradation, GaussianBlur, DEFAULT_BLUR_KERNEL};
use crate::tensor::{Shape, VideoTensor};

pub const DEFAULT_PSF_BRACKET: (f64, f64) = (0.2, 10.0);
/// Golden-section search stops once the bracket is this narrow.
pub const PSF_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsfEstimate {
    pub sigma: f64,
    /// `‖Y − X ∗ h_σ‖` at the returned σ.
    pub residual: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
}

/// Produces a clean-video estimate from a measurement.
pub trait PreRestorer {
    fn restore(&self, y: &VideoTensor) -> Result<VideoTensor>;
}

/// Returns the measurement unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityPreRestorer;

impl PreRestorer for IdentityPreRestorer {
    fn restore(&self, y: &VideoTensor) -> Result<VideoTensor> {
        Ok(y.clone())
    }
}

/// Returns a fixed reference video, typically the ground truth.
#[derive(Clone, Debug)]
pub struct OraclePreRestorer(pub VideoTensor);

impl PreRestorer for OraclePreRestorer {
    fn restore(&self, y: &VideoTensor) -> Result<VideoTensor> {
        if self.0.shape() != y.shape() {
            return Err(Error::shape(format!(
                "oracle video is {}, measurement is {}",
                self.0.shape(),
                y.shape()
            )));
        }
        Ok(self.0.convert_range(y.range()))
    }
}

/// Blur with the fixed 61-tap support used for PSF fitting.
pub fn psf_operator(shape: Shape, sigma: f64) -> Result<Degradation> {
    Ok(Degradation::new(GaussianBlur::new(
        shape,
        DEFAULT_BLUR_KERNEL,
        sigma,
    )?))
}

fn blur_residual(y: &[f64], x: &[f64], shape: Shape, sigma: f64) -> Result<f64> {
    let hx = psf_operator(shape, sigma)?.apply(x)?;
    let diff: Vec<f64> = y.iter().zip(&hx).map(|(a, b)| a - b).collect();
    Ok(norm(&diff))
}

/// Golden-section search for the blur width minimizing `‖Y − X ∗ h_σ‖`.
/// Both bracket ends are also evaluated so a minimum on the boundary is
/// returned exactly.
pub fn estimate_psf_sigma(
    y: &VideoTensor,
    x_ref: &VideoTensor,
    bracket: (f64, f64),
) -> Result<PsfEstimate> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi.is_finite() && hi - lo > PSF_TOLERANCE) {
        return Err(Error::param(format!(
            "PSF bracket must satisfy 0 < lo < hi with width > {PSF_TOLERANCE}, got [{lo}, {hi}]"
        )));
    }
    if y.shape() != x_ref.shape() {
        return Err(Error::shape(format!(
            "measurement is {}, reference is {}",
            y.shape(),
            x_ref.shape()
        )));
    }
    let shape = y.shape();
    let yv = y.to_f64();
    let xv = x_ref.convert_range(y.range()).to_f64();
    let mut evaluations = 0;
    let mut f = |s: f64| {
        evaluations += 1;
        blur_residual(&yv, &xv, shape, s)
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > PSF_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let mid = (a + b) / 2.0;
    let mut best = (mid, f(mid)?);
    for s in [lo, hi] {
        let r = f(s)?;
        if r < best.1 {
            best = (s, r);
        }
    }
    Ok(PsfEstimate {
        sigma: best.0,
        residual: best.1,
        bracket,
        evaluations,
    })
}

#[derive(Clone, Debug)]
pub struct BlindOutcome {
    /// Round-2 reconstruction.
    pub video: VideoTensor,
    pub round1: PsfEstimate,
    pub round2: PsfEstimate,
    /// `‖Y − h_{σ_k} ∗ X_k‖` for each round's output.
    pub round1_residual: f64,
    pub round2_residual: f64,
    pub round1_run: Reconstruction,
    pub round2_report: super::RunReport,
}

/// Two rounds of PSF estimation and reconstruction. Both rounds start from
/// the same measurement-derived initialization.
pub fn blind_reconstruct(
    y: &VideoTensor,
    pre: &dyn PreRestorer,
    cfg: &SolverConfig,
    denoiser: &dyn Denoiser,
    codec: &dyn LatentCodec,
) -> Result<BlindOutcome> {
    cfg.validate()?;
    let x_pre = pre.restore(y)?;
    let round1 = estimate_psf_sigma(y, &x_pre, DEFAULT_PSF_BRACKET)?;
    let a1 = psf_operator(y.shape(), round1.sigma)?;
    let run1 = reconstruct(y, &a1, cfg, denoiser, codec)?;

    let round2 = estimate_psf_sigma(y, &run1.video, DEFAULT_PSF_BRACKET)?;
    let a2 = psf_operator(y.shape(), round2.sigma)?;
    let run2 = reconstruct(y, &a2, cfg, denoiser, codec)?;

    let yv = y.to_f64();
    let round1_residual = blur_residual(&yv, &run1.video.to_f64(), y.shape(), round1.sigma)?;
    let round2_residual = blur_residual(&yv, &run2.video.to_f64(), y.shape(), round2.sigma)?;
    Ok(BlindOutcome {
        video: run2.video,
        round1,
        round2,
        round1_residual,
        round2_residual,
        round1_run: run1,
        round2_report: run2.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::PixelRange;

    fn textured(shape: Shape) -> VideoTensor {
        VideoTensor::from_fn(shape, PixelRange::Unit, |n, _, y, x| {
            let v = ((x as f32 * 0.9 + n as f32).sin() * (y as f32 * 0.7).cos()) * 0.4 + 0.5;
            if (x / 5 + y / 3) % 2 == 0 {
                v
            } else {
                1.0 - v
            }
        })
        .unwrap()
    }

    #[test]
    fn recovers_known_blur() {
        let s = Shape::new(2, 1, 24, 24);
        let x = textured(s);
        let y = psf_operator(s, 3.0).unwrap().apply_video(&x).unwrap();
        let est = estimate_psf_sigma(&y, &x, DEFAULT_PSF_BRACKET).unwrap();
        assert!((est.sigma - 3.0).abs() <= 0.05, "{est:?}");
        assert!(est.residual >= 0.0);
    }

    #[test]
    fn no_blur_hits_lower_bound() {
        let s = Shape::new(1, 1, 16, 16);
        let x = textured(s);
        let est = estimate_psf_sigma(&x, &x, DEFAULT_PSF_BRACKET).unwrap();
        assert!(est.sigma - 0.2 < 2e-3, "{est:?}");
        assert!(est.residual < 1e-3);
    }

    #[test]
    fn degenerate_brackets_rejected() {
        let x = textured(Shape::new(1, 1, 8, 8));
        for b in [
            (1.0, 1.0),
            (2.0, 1.0),
            (0.0, 3.0),
            (-1.0, 3.0),
            (1.0, 1.0005),
        ] {
            assert!(matches!(
                estimate_psf_sigma(&x, &x, b),
                Err(Error::Parameter(_))
            ));
        }
    }
}
