//! Denoiser `ε_θ` and latent codec `(E_θ, D_θ)` interfaces.
//!
//! The built-in models are analytic so the whole solver can be checked
//! against closed forms: [`ZeroDenoiser`], the exact posterior-mean noise
//! predictor for a standard-normal latent prior ([`GaussianPriorDenoiser`]),
//! and two exact codecs ([`IdentityCodec`], [`HaarCodec`]). Real models are
//! reached through the VXDN/1 client in [`remote`].

pub mod remote;

use std::fmt;

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::{Frame, FrameShape};

pub use remote::{RemoteCodec, RemoteDenoiser, RemoteOptions};

/// Per-frame noise predictor, called once per frame and timestep.
pub trait Denoiser: fmt::Debug + Send + Sync {
    /// Predicted noise for latent frame `z` at timestep `t` (`1..=T`).
    fn eps(&self, z: &Frame, t: usize) -> Result<Frame>;

    /// Identical inputs give bit-identical outputs.
    fn is_deterministic(&self) -> bool {
        true
    }

    fn name(&self) -> String;
}

/// Per-frame map between pixel frames and latent frames.
pub trait LatentCodec: fmt::Debug + Send + Sync {
    fn encode(&self, x: &Frame) -> Result<Frame>;
    fn decode(&self, z: &Frame) -> Result<Frame>;
    /// Spatial downsampling between pixels and latents.
    fn spatial_factor(&self) -> usize;
    fn name(&self) -> String;
}

/// `ε̂ ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn eps(&self, z: &Frame, _t: usize) -> Result<Frame> {
        Ok(Frame::zeros(z.shape()))
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

/// `ε̂(z, t) = √(1−ᾱ_t)·z`, the MMSE noise estimate when `x ~ N(0, I)`.
#[derive(Clone, Debug)]
pub struct GaussianPriorDenoiser {
    schedule: NoiseSchedule,
}

impl GaussianPriorDenoiser {
    pub fn new(schedule: NoiseSchedule) -> Self {
        GaussianPriorDenoiser { schedule }
    }
}

/// Shared by the local denoiser and the mock server so both round identically.
pub fn gaussian_prior_eps(z: &Frame, t: usize, schedule: &NoiseSchedule) -> Result<Frame> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::param(format!(
            "timestep {t} outside 1..={}",
            schedule.steps()
        )));
    }
    let k = schedule.sqrt_one_minus(t);
    let data = z
        .data()
        .iter()
        .map(|&v| (k * f64::from(v)) as f32)
        .collect();
    Frame::new(z.shape(), data)
}

impl Denoiser for GaussianPriorDenoiser {
    fn eps(&self, z: &Frame, t: usize) -> Result<Frame> {
        gaussian_prior_eps(z, t, &self.schedule)
    }

    fn name(&self) -> String {
        "gaussian".into()
    }
}

/// Latents are the pixels.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityCodec;

impl LatentCodec for IdentityCodec {
    fn encode(&self, x: &Frame) -> Result<Frame> {
        Ok(x.clone())
    }

    fn decode(&self, z: &Frame) -> Result<Frame> {
        Ok(z.clone())
    }

    fn spatial_factor(&self) -> usize {
        1
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

/// One level of the orthonormal 2×2 Haar transform per channel. A `C×H×W`
/// frame becomes `4C×(H/2)×(W/2)`: channel `4c + k` holds subband `k` of
/// input channel `c`, with subbands ordered LL, LH, HL, HH.
#[derive(Clone, Copy, Debug, Default)]
pub struct HaarCodec;

impl LatentCodec for HaarCodec {
    fn encode(&self, x: &Frame) -> Result<Frame> {
        let s = x.shape();
        if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
            return Err(Error::shape(format!(
                "Haar codec needs even frame dimensions, got {}x{}",
                s.h, s.w
            )));
        }
        let (h2, w2) = (s.h / 2, s.w / 2);
        let out_shape = FrameShape::new(4 * s.c, h2, w2);
        let mut out = vec![0.0f32; out_shape.len()];
        let src = x.data();
        let band = h2 * w2;
        for c in 0..s.c {
            let plane = &src[c * s.h * s.w..(c + 1) * s.h * s.w];
            for i in 0..h2 {
                for j in 0..w2 {
                    let a = f64::from(plane[2 * i * s.w + 2 * j]);
                    let b = f64::from(plane[2 * i * s.w + 2 * j + 1]);
                    let cc = f64::from(plane[(2 * i + 1) * s.w + 2 * j]);
                    let d = f64::from(plane[(2 * i + 1) * s.w + 2 * j + 1]);
                    let base = 4 * c * band + i * w2 + j;
                    out[base] = ((a + b + cc + d) / 2.0) as f32;
                    out[base + band] = ((a - b + cc - d) / 2.0) as f32;
                    out[base + 2 * band] = ((a + b - cc - d) / 2.0) as f32;
                    out[base + 3 * band] = ((a - b - cc + d) / 2.0) as f32;
                }
            }
        }
        Frame::new(out_shape, out)
    }

    fn decode(&self, z: &Frame) -> Result<Frame> {
        let s = z.shape();
        if !s.c.is_multiple_of(4) {
            return Err(Error::shape(format!(
                "Haar latents carry a multiple of 4 channels, got {}",
                s.c
            )));
        }
        let (c_out, h, w) = (s.c / 4, 2 * s.h, 2 * s.w);
        let band = s.h * s.w;
        let src = z.data();
        let mut out = vec![0.0f32; c_out * h * w];
        for c in 0..c_out {
            for i in 0..s.h {
                for j in 0..s.w {
                    let base = 4 * c * band + i * s.w + j;
                    let ll = f64::from(src[base]);
                    let lh = f64::from(src[base + band]);
                    let hl = f64::from(src[base + 2 * band]);
                    let hh = f64::from(src[base + 3 * band]);
                    let plane = &mut out[c * h * w..(c + 1) * h * w];
                    plane[2 * i * w + 2 * j] = ((ll + lh + hl + hh) / 2.0) as f32;
                    plane[2 * i * w + 2 * j + 1] = ((ll - lh + hl - hh) / 2.0) as f32;
                    plane[(2 * i + 1) * w + 2 * j] = ((ll + lh - hl - hh) / 2.0) as f32;
                    plane[(2 * i + 1) * w + 2 * j + 1] = ((ll - lh - hl + hh) / 2.0) as f32;
                }
            }
        }
        Frame::new(FrameShape::new(c_out, h, w), out)
    }

    fn spatial_factor(&self) -> usize {
        2
    }

    fn name(&self) -> String {
        "haar".into()
    }
}
