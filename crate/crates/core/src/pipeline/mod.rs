//! The reconstruction loop.
//!
//! 1. Encode the first measurement frame, DDIM-invert it to `τ` and
//!    replicate it over all `N` frames.
//! 2. For `t = τ … 2`: predict noise per frame, Tweedie-denoise, decode.
//! 3. Run `l` CG steps on the whole decoded batch against the measurement.
//! 4. Low-pass filter with `σ_t = λ√(1−ᾱ_t)` and re-encode per frame.
//! 5. Renoise to `t−1` with a mix of the stored noise prediction and one
//!    shared Gaussian frame.
//!
//! A final Tweedie step at `t = 1` and a decode produce the output.

mod blind;
mod degrade;
mod noise;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cg::{cg_data_consistency, CgReport};
use crate::denoise::{Denoiser, LatentCodec};
use crate::error::{Error, Result};
use crate::ops::{norm, Degradation};
use crate::schedule::{
    compose_noise, ddim_invert, lpf_apply, make_schedule, renoise, tau_for, tweedie_denoise,
    LpfSchedule, NoiseSchedule, ScheduleKind,
};
use crate::tensor::{Frame, PixelRange, VideoTensor};

pub use blind::{
    blind_reconstruct, estimate_psf_sigma, psf_operator, BlindOutcome, IdentityPreRestorer,
    OraclePreRestorer, PreRestorer, PsfEstimate, DEFAULT_PSF_BRACKET, PSF_TOLERANCE,
};
pub use degrade::{degrade, Measurement};
pub use noise::shared_noise;

/// Solver parameters. Denoiser and codec names are resolved by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// `T`, number of diffusion steps.
    pub steps: usize,
    /// Inversion depth as a fraction of `T`; `τ = round(tau_frac·T)`.
    pub tau_frac: f64,
    /// `λ` in `σ_t = λ√(1−ᾱ_t)`; 0 disables the low-pass filter.
    pub lambda_lpf: f64,
    /// `l`, CG iterations per step.
    pub cg_steps: usize,
    /// Weight of the shared Gaussian in the renoising mix.
    pub eta: f64,
    pub seed: u64,
    pub schedule: ScheduleKind,
    pub denoiser: String,
    pub codec: String,
    /// Pixel range the codec and CG operate in.
    pub range: PixelRange,
    /// Worker threads for per-frame work; `None` uses every core.
    pub workers: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            steps: 25,
            tau_frac: 0.3,
            lambda_lpf: 2.0,
            cg_steps: 10,
            eta: 0.8,
            seed: 0,
            schedule: ScheduleKind::ScaledLinear,
            denoiser: "gaussian".into(),
            codec: "identity".into(),
            range: PixelRange::Symmetric,
            workers: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::param("steps must be ≥ 1"));
        }
        if !(self.tau_frac > 0.0 && self.tau_frac <= 1.0) {
            return Err(Error::param(format!(
                "tau_frac must lie in (0, 1], got {}",
                self.tau_frac
            )));
        }
        if self.cg_steps == 0 {
            return Err(Error::param("cg_steps must be ≥ 1"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::param(format!(
                "eta must lie in [0, 1], got {}",
                self.eta
            )));
        }
        if !(self.lambda_lpf >= 0.0 && self.lambda_lpf.is_finite()) {
            return Err(Error::param(format!(
                "lambda_lpf must be non-negative, got {}",
                self.lambda_lpf
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::param("workers must be ≥ 1"));
        }
        Ok(())
    }

    pub fn tau(&self) -> usize {
        tau_for(self.steps, self.tau_frac)
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps, self.schedule)
    }
}

/// Latent frames that all live at one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch {
    pub t: usize,
    pub frames: Vec<Frame>,
}

impl LatentBatch {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// True when every frame is bitwise equal to the first.
    pub fn frames_identical(&self) -> bool {
        self.frames.windows(2).all(|w| w[0].bit_eq(&w[1]))
    }
}

/// Per-timestep entry of the run report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// `‖Y − A(X̂_t)‖` before CG.
    pub residual_before: f64,
    /// `‖Y − A(X̄_t)‖` after CG.
    pub residual_after: f64,
    pub cg_iterations: usize,
    pub cg_breakdown: bool,
    pub lpf_sigma: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: SolverConfig,
    pub tau: usize,
    pub steps: Vec<StepRecord>,
    pub denoiser_calls: usize,
    /// `‖Y − A(X_out)‖` in the working range.
    pub final_residual: f64,
    pub init_ms: f64,
    pub total_ms: f64,
}

impl RunReport {
    pub fn breakdowns(&self) -> usize {
        self.steps.iter().filter(|s| s.cg_breakdown).count()
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Output in the measurement's range.
    pub video: VideoTensor,
    pub report: RunReport,
}

/// Snapshot handed to an observer once per loop step and once for the
/// final Tweedie step (where `cg` is `None` and `consistent` is the output).
#[derive(Debug)]
pub struct StepTrace<'a> {
    pub t: usize,
    /// `Z_t` entering the step.
    pub latents: &'a LatentBatch,
    /// `X̂_t`, decoded Tweedie estimate (working range).
    pub denoised: &'a VideoTensor,
    /// `X̄_t` after CG, before the low-pass filter.
    pub consistent: &'a VideoTensor,
    pub cg: Option<&'a CgReport>,
}

/// Converts a measurement of `A` between pixel ranges. For linear `A`,
/// `A(2x − 1) = 2A(x) − A(1)`, which differs from converting `Y` itself
/// whenever `A` does not preserve constants (masks).
pub fn measurement_to_range(
    y: &VideoTensor,
    a: &Degradation,
    target: PixelRange,
) -> Result<VideoTensor> {
    if y.range() == target {
        return Ok(y.clone());
    }
    let ones = a.apply(&vec![1.0; a.input_shape().len()])?;
    let data: Vec<f64> = y
        .data()
        .iter()
        .zip(&ones)
        .map(|(&v, &o)| match target {
            PixelRange::Symmetric => 2.0 * f64::from(v) - o,
            PixelRange::Unit => (f64::from(v) + o) / 2.0,
        })
        .collect();
    VideoTensor::from_f64(y.shape(), target, &data)
}

/// Pixel-space frame used to seed the latents: the first measurement frame
/// when `A` preserves shape, otherwise the first frame of the normalized
/// back-projection `Aᵀy ⊘ Aᵀ1`.
pub fn initial_frame(y: &VideoTensor, a: &Degradation) -> Result<Frame> {
    if a.output_shape() == a.input_shape() {
        return Ok(y.frame(0));
    }
    let back = a.adjoint(&y.to_f64())?;
    let weight = a.adjoint(&vec![1.0; a.output_shape().len()])?;
    let data: Vec<f64> = back
        .iter()
        .zip(&weight)
        .map(|(&b, &w)| if w.abs() > 1e-12 { b / w } else { 0.0 })
        .collect();
    Ok(VideoTensor::from_f64(a.input_shape(), y.range(), &data)?.frame(0))
}

/// Counts calls so the report can state how many network evaluations a run
/// needed.
struct CountingDenoiser<'a> {
    inner: &'a dyn Denoiser,
    calls: std::sync::atomic::AtomicUsize,
}

impl std::fmt::Debug for CountingDenoiser<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CountingDenoiser").finish_non_exhaustive()
    }
}

impl Denoiser for CountingDenoiser<'_> {
    fn eps(&self, z: &Frame, t: usize) -> Result<Frame> {
        self.calls
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.inner.eps(z, t)
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

/// Step 1: encode `Y[1]` (in the working range), invert to `τ`, replicate.
pub fn initialize_latents(
    y: &VideoTensor,
    a: &Degradation,
    cfg: &SolverConfig,
    denoiser: &dyn Denoiser,
    codec: &dyn LatentCodec,
) -> Result<LatentBatch> {
    cfg.validate()?;
    let schedule = cfg.noise_schedule()?;
    let y_work = measurement_to_range(y, a, cfg.range)?;
    let first = initial_frame(&y_work, a)?;
    init_from_frame(
        &first,
        a.input_shape().n,
        cfg.tau(),
        &schedule,
        denoiser,
        codec,
    )
}

fn init_from_frame(
    first: &Frame,
    n: usize,
    tau: usize,
    schedule: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    codec: &dyn LatentCodec,
) -> Result<LatentBatch> {
    let z_y = codec.encode(first)?;
    let z_tau = ddim_invert(&z_y, denoiser, tau, schedule)?;
    Ok(LatentBatch {
        t: tau,
        frames: vec![z_tau; n],
    })
}

pub fn reconstruct(
    y: &VideoTensor,
    a: &Degradation,
    cfg: &SolverConfig,
    denoiser: &dyn Denoiser,
    codec: &dyn LatentCodec,
) -> Result<Reconstruction> {
    reconstruct_observed(y, a, cfg, denoiser, codec, &mut |_| {})
}

/// [`reconstruct`] with a callback invoked at every timestep.
pub fn reconstruct_observed(
    y: &VideoTensor,
    a: &Degradation,
    cfg: &SolverConfig,
    denoiser: &dyn Denoiser,
    codec: &dyn LatentCodec,
    observer: &mut (dyn FnMut(&StepTrace<'_>) + Send),
) -> Result<Reconstruction> {
    cfg.validate()?;
    if y.shape() != a.output_shape() {
        return Err(Error::shape(format!(
            "measurement is {}, operator produces {}",
            y.shape(),
            a.output_shape()
        )));
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = cfg.workers {
            b = b.num_threads(w);
        }
        b.build()
            .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?
    };
    pool.install(|| run(y, a, cfg, denoiser, codec, observer))
}

fn run(
    y: &VideoTensor,
    a: &Degradation,
    cfg: &SolverConfig,
    denoiser: &dyn Denoiser,
    codec: &dyn LatentCodec,
    observer: &mut (dyn FnMut(&StepTrace<'_>) + Send),
) -> Result<Reconstruction> {
    let started = Instant::now();
    let schedule = cfg.noise_schedule()?;
    let lpf = LpfSchedule::new(cfg.lambda_lpf);
    let tau = cfg.tau();
    let pixel_shape = a.input_shape();
    let counting = CountingDenoiser {
        inner: denoiser,
        calls: Default::default(),
    };
    let denoiser: &dyn Denoiser = &counting;

    let y_work = measurement_to_range(y, a, cfg.range)?;
    let first = initial_frame(&y_work, a)?;
    let mut latents = init_from_frame(&first, pixel_shape.n, tau, &schedule, denoiser, codec)?;
    let init_ms = ms_since(started);

    let decode_batch = |z_hat: &[Frame]| -> Result<VideoTensor> {
        let frames: Vec<Frame> = z_hat
            .par_iter()
            .map(|z| codec.decode(z))
            .collect::<Result<_>>()?;
        if frames[0].shape() != pixel_shape.frame() {
            return Err(Error::shape(format!(
                "codec decodes to {}, operator expects frames of {}",
                frames[0].shape(),
                pixel_shape.frame()
            )));
        }
        VideoTensor::from_frames(cfg.range, &frames)
    };

    let mut steps = Vec::with_capacity(tau.saturating_sub(1));
    for t in (2..=tau).rev() {
        let step_start = Instant::now();
        // Step 2
        let (eps, z_hat): (Vec<Frame>, Vec<Frame>) = latents
            .frames
            .par_iter()
            .map(|z| {
                let e = denoiser.eps(z, t)?;
                let zh = tweedie_denoise(z, &e, t, &schedule)?;
                Ok((e, zh))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let x_hat = decode_batch(&z_hat)?;

        // Step 3
        let (x_bar, cg) = cg_data_consistency(&x_hat, &y_work, a, cfg.cg_steps)?;
        observer(&StepTrace {
            t,
            latents: &latents,
            denoised: &x_hat,
            consistent: &x_bar,
            cg: Some(&cg),
        });

        // Step 4
        let sigma = lpf.sigma(t, &schedule);
        let x_lpf = lpf_apply(&x_bar, t, &lpf, &schedule)?;
        let z_bar: Vec<Frame> = (0..pixel_shape.n)
            .into_par_iter()
            .map(|n| codec.encode(&x_lpf.frame(n)))
            .collect::<Result<_>>()?;

        // Step 5
        let shared = shared_noise(cfg.seed, t, z_bar[0].shape());
        let mix = compose_noise(&eps, &shared, cfg.eta)?;
        let next: Vec<Frame> = z_bar
            .par_iter()
            .zip(&mix)
            .map(|(zb, e)| renoise(zb, t - 1, e, &schedule))
            .collect::<Result<_>>()?;
        latents = LatentBatch {
            t: t - 1,
            frames: next,
        };

        steps.push(StepRecord {
            t,
            residual_before: cg.initial_residual(),
            residual_after: cg.final_residual(),
            cg_iterations: cg.iterations_run,
            cg_breakdown: cg.breakdown,
            lpf_sigma: sigma,
            elapsed_ms: ms_since(step_start),
        });
    }

    let z0: Vec<Frame> = latents
        .frames
        .par_iter()
        .map(|z| {
            let e = denoiser.eps(z, 1)?;
            tweedie_denoise(z, &e, 1, &schedule)
        })
        .collect::<Result<_>>()?;
    let x_out = decode_batch(&z0)?;
    observer(&StepTrace {
        t: 1,
        latents: &latents,
        denoised: &x_out,
        consistent: &x_out,
        cg: None,
    });

    let ax = a.apply(&x_out.to_f64())?;
    let resid: Vec<f64> = y_work
        .data()
        .iter()
        .zip(&ax)
        .map(|(&yv, av)| f64::from(yv) - av)
        .collect();
    let report = RunReport {
        config: cfg.clone(),
        tau,
        steps,
        denoiser_calls: counting.calls.load(std::sync::atomic::Ordering::Relaxed),
        final_residual: norm(&resid),
        init_ms,
        total_ms: ms_since(started),
    };
    Ok(Reconstruction {
        video: x_out.convert_range(y.range()),
        report,
    })
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
