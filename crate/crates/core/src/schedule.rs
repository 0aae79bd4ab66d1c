//! Noise schedule and the per-frame diffusion algebra: forward noising,
//! Tweedie denoising, DDIM inversion, noise mixing, renoising and the
//! noise-proportional low-pass filter.
//!
//! All arithmetic runs in 64-bit and is rounded once into the 32-bit output.

use serde::{Deserialize, Serialize};

use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::ops::{GaussianBlur, LinearOperator};
use crate::tensor::{Frame, VideoTensor};

/// Number of training steps the discrete beta schedules are defined over.
pub const TRAIN_STEPS: usize = 1000;

/// Floor for the last cosine-schedule value.
pub const COSINE_MIN_ALPHA_BAR: f64 = 1e-5;

/// Below this width the low-pass filter is the identity.
pub const LPF_MIN_SIGMA: f64 = 0.3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Latent-diffusion betas: linear in `√β` from 0.00085 to 0.012.
    #[default]
    ScaledLinear,
    /// Betas linear from 1e-4 to 0.02.
    Linear,
    /// Squared-cosine `ᾱ(s)` with offset 0.008.
    Cosine,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled_linear" => Ok(ScheduleKind::ScaledLinear),
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::param(format!("unknown schedule kind {other:?}"))),
        }
    }
}

/// `ᾱ_0 = 1 > ᾱ_1 > … > ᾱ_T > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(steps: usize, kind: ScheduleKind) -> Result<Self> {
        make_schedule(steps, kind)
    }

    /// Wraps an explicit sequence after checking it is a valid schedule.
    pub fn from_alpha_bar(kind: ScheduleKind, alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 || alpha_bar[0] != 1.0 {
            return Err(Error::param(
                "schedule must start at ᾱ_0 = 1 and have T ≥ 1",
            ));
        }
        if alpha_bar
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less))
            || *alpha_bar.last().unwrap() <= 0.0
        {
            return Err(Error::param("ᾱ must be strictly decreasing and positive"));
        }
        Ok(NoiseSchedule { kind, alpha_bar })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// `T`, the number of sampling steps.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn sqrt_alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t].sqrt()
    }

    pub fn sqrt_one_minus(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar[t]).sqrt()
    }

    fn check(&self, t: usize, allow_zero: bool) -> Result<()> {
        let lo = usize::from(!allow_zero);
        if t < lo || t > self.steps() {
            return Err(Error::param(format!(
                "timestep {t} outside {lo}..={}",
                self.steps()
            )));
        }
        Ok(())
    }
}

fn training_betas(kind: ScheduleKind) -> Vec<f64> {
    let last = (TRAIN_STEPS - 1) as f64;
    (0..TRAIN_STEPS)
        .map(|i| {
            let f = i as f64 / last;
            match kind {
                ScheduleKind::ScaledLinear => {
                    let (lo, hi) = (0.00085f64.sqrt(), 0.012f64.sqrt());
                    let b = lo + (hi - lo) * f;
                    b * b
                }
                _ => 1e-4 + (0.02 - 1e-4) * f,
            }
        })
        .collect()
}

/// Builds a `T`-step schedule. Beta schedules are defined over 1000 training
/// steps; step `k` of `T` reads the cumulative product at training index
/// `⌊1000·k/T⌋ − 1`, so `T = 1000` recovers the full product.
pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::param("schedule needs T ≥ 1"));
    }
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    match kind {
        ScheduleKind::ScaledLinear | ScheduleKind::Linear => {
            if steps > TRAIN_STEPS {
                return Err(Error::param(format!(
                    "T = {steps} exceeds the {TRAIN_STEPS} training steps"
                )));
            }
            let mut cumulative = Vec::with_capacity(TRAIN_STEPS);
            let mut prod = 1.0;
            for beta in training_betas(kind) {
                prod *= 1.0 - beta;
                cumulative.push(prod);
            }
            for k in 1..=steps {
                alpha_bar.push(cumulative[k * TRAIN_STEPS / steps - 1]);
            }
        }
        ScheduleKind::Cosine => {
            let f = |s: f64| {
                ((s + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2)
                    .cos()
                    .powi(2)
            };
            let f0 = f(0.0);
            for k in 1..=steps {
                let raw = f(k as f64 / steps as f64) / f0;
                alpha_bar.push(COSINE_MIN_ALPHA_BAR + (1.0 - COSINE_MIN_ALPHA_BAR) * raw);
            }
        }
    }
    NoiseSchedule::from_alpha_bar(kind, alpha_bar)
}

fn same_shape(a: &Frame, b: &Frame) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "frame shapes differ: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn affine(a: &Frame, wa: f64, b: &Frame, wb: f64) -> Frame {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (wa * f64::from(x) + wb * f64::from(y)) as f32)
        .collect();
    Frame::new(a.shape(), data).expect("shape preserved")
}

/// `z_t = √ᾱ_t·x0 + √(1−ᾱ_t)·eps`, for `0 ≤ t ≤ T`.
pub fn add_noise(x0: &Frame, eps: &Frame, t: usize, schedule: &NoiseSchedule) -> Result<Frame> {
    same_shape(x0, eps)?;
    schedule.check(t, true)?;
    Ok(affine(
        x0,
        schedule.sqrt_alpha_bar(t),
        eps,
        schedule.sqrt_one_minus(t),
    ))
}

/// Posterior-mean estimate `x̂0 = (z_t − √(1−ᾱ_t)·ε̂)/√ᾱ_t`, for `1 ≤ t ≤ T`.
pub fn tweedie_denoise(
    z_t: &Frame,
    eps_hat: &Frame,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Frame> {
    same_shape(z_t, eps_hat)?;
    schedule.check(t, false)?;
    let inv = 1.0 / schedule.sqrt_alpha_bar(t);
    let data = z_t
        .data()
        .iter()
        .zip(eps_hat.data())
        .map(|(&z, &e)| ((f64::from(z) - schedule.sqrt_one_minus(t) * f64::from(e)) * inv) as f32)
        .collect();
    Frame::new(z_t.shape(), data)
}

/// First-order DDIM inversion from `z0` up to timestep `tau`. The noise
/// prediction made at the lower timestep drives each upward step; at
/// `t = 0` the denoiser is queried at timestep 1.
pub fn ddim_invert(
    z0: &Frame,
    denoiser: &dyn Denoiser,
    tau: usize,
    schedule: &NoiseSchedule,
) -> Result<Frame> {
    schedule.check(tau, false)?;
    let mut z: Vec<f64> = z0.data().iter().map(|&v| f64::from(v)).collect();
    for t in 0..tau {
        let query = Frame::new(z0.shape(), z.iter().map(|&v| v as f32).collect())?;
        let eps = denoiser.eps(&query, t.max(1))?;
        same_shape(&query, &eps)?;
        let (sa, so) = (schedule.sqrt_alpha_bar(t), schedule.sqrt_one_minus(t));
        let (sa_next, so_next) = (
            schedule.sqrt_alpha_bar(t + 1),
            schedule.sqrt_one_minus(t + 1),
        );
        for (zi, &e) in z.iter_mut().zip(eps.data()) {
            let e = f64::from(e);
            let x0 = (*zi - so * e) / sa;
            *zi = sa_next * x0 + so_next * e;
        }
    }
    Frame::new(z0.shape(), z.into_iter().map(|v| v as f32).collect())
}

/// Deterministic (η = 0) DDIM sampling from `z_tau` down to timestep 0.
pub fn ddim_sample(
    z_tau: &Frame,
    denoiser: &dyn Denoiser,
    tau: usize,
    schedule: &NoiseSchedule,
) -> Result<Frame> {
    schedule.check(tau, false)?;
    let mut z: Vec<f64> = z_tau.data().iter().map(|&v| f64::from(v)).collect();
    for t in (1..=tau).rev() {
        let query = Frame::new(z_tau.shape(), z.iter().map(|&v| v as f32).collect())?;
        let eps = denoiser.eps(&query, t)?;
        same_shape(&query, &eps)?;
        let (sa, so) = (schedule.sqrt_alpha_bar(t), schedule.sqrt_one_minus(t));
        let (sa_prev, so_prev) = (
            schedule.sqrt_alpha_bar(t - 1),
            schedule.sqrt_one_minus(t - 1),
        );
        for (zi, &e) in z.iter_mut().zip(eps.data()) {
            let e = f64::from(e);
            let x0 = (*zi - so * e) / sa;
            *zi = sa_prev * x0 + so_prev * e;
        }
    }
    Frame::new(z_tau.shape(), z.into_iter().map(|v| v as f32).collect())
}

/// Renoising noise `E_t = √(1−η²)·ε̂[n] + η·g` for every frame `n`, where
/// `g` is one shared Gaussian frame.
pub fn compose_noise(eps_pred: &[Frame], shared: &Frame, eta: f64) -> Result<Vec<Frame>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::param(format!("eta must lie in [0,1], got {eta}")));
    }
    let keep = (1.0 - eta * eta).sqrt();
    eps_pred
        .iter()
        .map(|eps| {
            same_shape(eps, shared)?;
            Ok(affine(eps, keep, shared, eta))
        })
        .collect()
}

/// `Z_{t−1} = √ᾱ_{t−1}·Z̄ + √(1−ᾱ_{t−1})·E_t`.
pub fn renoise(
    z_bar: &Frame,
    t_minus_1: usize,
    noise: &Frame,
    schedule: &NoiseSchedule,
) -> Result<Frame> {
    add_noise(z_bar, noise, t_minus_1, schedule)
}

/// Low-pass filter whose width follows the noise level:
/// `σ_t = λ·√(1−ᾱ_t)` pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpfSchedule {
    pub lambda: f64,
}

impl LpfSchedule {
    pub fn new(lambda: f64) -> Self {
        LpfSchedule { lambda }
    }

    pub fn sigma(&self, t: usize, schedule: &NoiseSchedule) -> f64 {
        lpf_sigma(self.lambda, schedule.alpha_bar(t))
    }
}

pub fn lpf_sigma(lambda: f64, alpha_bar: f64) -> f64 {
    lambda * (1.0 - alpha_bar).sqrt()
}

/// Blurs each frame of `x` with a Gaussian of width `sigma`, radius
/// `⌈3σ⌉`, reflect padding. Narrow filters are skipped.
pub fn lpf_apply_sigma(x: &VideoTensor, sigma: f64) -> Result<VideoTensor> {
    if sigma.is_nan() || sigma < LPF_MIN_SIGMA {
        return Ok(x.clone());
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let blur = GaussianBlur::new(x.shape(), 2 * radius + 1, sigma)?;
    VideoTensor::from_f64(x.shape(), x.range(), &blur.apply(&x.to_f64()))
}

pub fn lpf_apply(
    x: &VideoTensor,
    t: usize,
    lpf: &LpfSchedule,
    schedule: &NoiseSchedule,
) -> Result<VideoTensor> {
    schedule.check(t, true)?;
    lpf_apply_sigma(x, lpf.sigma(t, schedule))
}

/// `τ = round(fraction·T)`, clamped to `1..=T`.
pub fn tau_for(steps: usize, fraction: f64) -> usize {
    ((fraction * steps as f64).round() as usize).clamp(1, steps)
}
