#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vidsolve_core::denoise::Denoiser;
use vidsolve_core::ops::{Degradation, MaskPattern};
use vidsolve_core::pipeline::SolverConfig;
use vidsolve_core::schedule::{LpfSchedule, NoiseSchedule, LPF_MIN_SIGMA};
use vidsolve_core::{Frame, PixelRange, Shape, VideoTensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| r.sample(StandardNormal)).collect()
}

pub fn random_video(shape: Shape, range: PixelRange, seed: u64) -> VideoTensor {
    let mut r = rng(seed);
    let (lo, hi) = match range {
        PixelRange::Unit => (0.0, 1.0),
        PixelRange::Symmetric => (-1.0, 1.0),
    };
    let data = (0..shape.len()).map(|_| r.random_range(lo..hi)).collect();
    VideoTensor::new(shape, range, data).unwrap()
}

/// Low-frequency synthetic video in UNIT range: two drifting sinusoids.
// Frozen golden gains depend on these exact literals.
#[allow(clippy::approx_constant)]
pub fn smooth_video(shape: Shape, seed: u64) -> VideoTensor {
    let ph = seed as f32 * 0.37;
    VideoTensor::from_fn(shape, PixelRange::Unit, |n, c, y, x| {
        let xf = x as f32 / shape.w as f32;
        let yf = y as f32 / shape.h as f32;
        let nf = n as f32 / shape.n as f32;
        0.5 + 0.2 * (6.28 * xf + ph + nf).sin() * (3.14 * yf + c as f32).cos()
            + 0.15 * (6.28 * (xf + yf) * 1.5 + 2.0 * nf).cos()
    })
    .unwrap()
}

pub fn static_video(shape: Shape, seed: u64) -> VideoTensor {
    let first = random_video(shape.with_frames(1), PixelRange::Unit, seed);
    VideoTensor::from_fn(shape, PixelRange::Unit, |_, c, y, x| first.get(0, c, y, x)).unwrap()
}

pub fn dense(op: &Degradation) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        op.output_shape().len(),
        op.input_shape().len(),
        &op.materialize(),
    )
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_err_vec(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Mirror an index into `0..n` by repeated folding (`d c b | a b c d | c b a`).
fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// 1-D Gaussian blur matrix with mirrored boundaries.
pub fn blur_1d(n: usize, size: usize, sigma: f64) -> DMatrix<f64> {
    let r = (size / 2) as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|d| (-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for (k, d) in (-r..=r).enumerate() {
            m[(i, mirror(i as isize + d, n))] += w[k] / total;
        }
    }
    m
}

/// 1-D uniform average over `window` samples with edge clamping.
pub fn average_1d(n: usize, window: usize) -> DMatrix<f64> {
    let r = (window / 2) as isize;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for d in -r..=r {
            let j = (i as isize + d).clamp(0, n as isize - 1) as usize;
            m[(i, j)] += 1.0 / window as f64;
        }
    }
    m
}

pub fn pool_1d(n: usize, factor: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n / factor, n);
    for i in 0..n / factor {
        for j in 0..factor {
            m[(i, i * factor + j)] = 1.0 / factor as f64;
        }
    }
    m
}

pub fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

pub fn blur_matrix(s: Shape, size: usize, sigma: f64) -> DMatrix<f64> {
    kron(
        &eye(s.n * s.c),
        &kron(&blur_1d(s.h, size, sigma), &blur_1d(s.w, size, sigma)),
    )
}

pub fn pool_matrix(s: Shape, factor: usize) -> DMatrix<f64> {
    kron(
        &eye(s.n * s.c),
        &kron(&pool_1d(s.h, factor), &pool_1d(s.w, factor)),
    )
}

pub fn frame_average_matrix(s: Shape, window: usize) -> DMatrix<f64> {
    kron(&average_1d(s.n, window), &eye(s.c * s.h * s.w))
}

pub fn mask_matrix(s: Shape, pattern: &MaskPattern) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(s.len(), s.len());
    let mut i = 0;
    for n in 0..s.n {
        for _c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    if pattern.keeps(n, y, x) {
                        m[(i, i)] = 1.0;
                    }
                    i += 1;
                }
            }
        }
    }
    m
}

/// Wraps a denoiser and counts calls.
#[derive(Debug)]
pub struct Counting<D> {
    pub inner: D,
    pub calls: AtomicUsize,
}

impl<D> Counting<D> {
    pub fn new(inner: D) -> Self {
        Counting {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<D: Denoiser> Denoiser for Counting<D> {
    fn eps(&self, z: &Frame, t: usize) -> vidsolve_core::Result<Frame> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.eps(z, t)
    }

    fn name(&self) -> String {
        format!("counting({})", self.inner.name())
    }
}

/// Per-frame LPF as a dense matrix, mirroring the radius rule `⌈3σ⌉`.
pub fn lpf_matrix(s: Shape, sigma: f64) -> DMatrix<f64> {
    if sigma < LPF_MIN_SIGMA {
        return eye(s.len());
    }
    let size = 2 * (3.0 * sigma).ceil() as usize + 1;
    blur_matrix(s, size, sigma)
}

/// The whole loop in f64 with dense matrices: Gaussian-prior denoiser,
/// identity codec, `η = 0`, exact least-squares data consistency.
pub fn affine_oracle(y: &[f64], a: &DMatrix<f64>, s: Shape, cfg: &SolverConfig) -> Vec<f64> {
    let sched: NoiseSchedule = cfg.noise_schedule().unwrap();
    let d = s.frame_len();
    let tau = cfg.tau();
    let y = DVector::from_column_slice(y);

    let first: DVector<f64> = if a.nrows() == a.ncols() {
        y.rows(0, d).into_owned()
    } else {
        let back = a.transpose() * &y;
        let w = a.transpose() * DVector::from_element(a.nrows(), 1.0);
        DVector::from_fn(d, |i, _| {
            if w[i].abs() > 1e-12 {
                back[i] / w[i]
            } else {
                0.0
            }
        })
    };
    // Inversion: ε̂ = √(1−ᾱ_q)·z with q = max(t, 1).
    let mut z0 = first;
    for t in 0..tau {
        let e = sched.sqrt_one_minus(t.max(1));
        let x0 = (1.0 - sched.sqrt_one_minus(t) * e) / sched.sqrt_alpha_bar(t);
        z0 *= sched.sqrt_alpha_bar(t + 1) * x0 + sched.sqrt_one_minus(t + 1) * e;
    }
    let mut z = DVector::from_fn(s.len(), |i, _| z0[i % d]);

    let pinv = a.clone().pseudo_inverse(1e-10).unwrap();
    let lpf = LpfSchedule::new(cfg.lambda_lpf);
    for t in (2..=tau).rev() {
        let eps = &z * sched.sqrt_one_minus(t);
        let x_hat = (&z - &eps * sched.sqrt_one_minus(t)) / sched.sqrt_alpha_bar(t);
        let x_bar = &x_hat + &pinv * (&y - a * &x_hat);
        let x_lpf = lpf_matrix(s, lpf.sigma(t, &sched)) * x_bar;
        z = x_lpf * sched.sqrt_alpha_bar(t - 1) + eps * sched.sqrt_one_minus(t - 1);
    }
    let eps = &z * sched.sqrt_one_minus(1);
    let out = (&z - eps * sched.sqrt_one_minus(1)) / sched.sqrt_alpha_bar(1);
    out.iter().copied().collect()
}
