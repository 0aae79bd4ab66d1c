//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DVector;
use rand::Rng;

use vidsolve_core::cg::{cg_solve, krylov_membership};
use vidsolve_core::denoise::{GaussianPriorDenoiser, IdentityCodec, ZeroDenoiser};
use vidsolve_core::metrics::psnr;
use vidsolve_core::ops::{
    adjoint_check, AvgPool, Degradation, DenseOperator, FrameAverage, GaussianBlur, RandomMask,
    Task, TaskSpec,
};
use vidsolve_core::pipeline::{
    blind_reconstruct, degrade, psf_operator, reconstruct, reconstruct_observed, OraclePreRestorer,
    SolverConfig,
};
use vidsolve_core::schedule::{
    add_noise, ddim_invert, ddim_sample, lpf_sigma, make_schedule, tweedie_denoise, LpfSchedule,
    ScheduleKind,
};
use vidsolve_core::tensor::vtf_write;
use vidsolve_core::{Frame, FrameShape, PixelRange, Shape};

/// Outcome of one criterion: pass flag plus the measured numbers.
type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn gaussian(cfg: &SolverConfig) -> GaussianPriorDenoiser {
    GaussianPriorDenoiser::new(cfg.noise_schedule().unwrap())
}

fn frame(shape: FrameShape, seed: u64) -> Frame {
    let data = gaussian_vec(shape.len(), seed)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    Frame::new(shape, data).unwrap()
}

fn adjoint_suite() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut r = rng(1);
    let mut ops = Vec::new();
    for (i, task) in Task::ALL.into_iter().enumerate() {
        let n = if task.has_frame_averaging() { 8 } else { 5 };
        ops.push(
            TaskSpec::new(task, i as u64)
                .build(Shape::new(n, 3, 16, 16))
                .unwrap(),
        );
    }
    for k in 0..3u64 {
        let s = Shape::new(r.random_range(7..=8), [1, 3][k as usize % 2], 16, 16);
        let blur = Degradation::new(
            GaussianBlur::new(s, 2 * r.random_range(1..8) + 1, r.random_range(0.5..3.0)).unwrap(),
        );
        let mask =
            Degradation::new(RandomMask::new(s, r.random_range(0.1..0.9), k, k % 2 == 0).unwrap());
        let avg = Degradation::new(FrameAverage::new(s, [3, 5, 7][k as usize]).unwrap());
        let pool = Degradation::new(AvgPool::new(s, 2).unwrap());
        let inner = Degradation::compose(&mask, &avg).unwrap();
        let op = match k {
            0 => Degradation::compose(&blur, &inner).unwrap(),
            1 => Degradation::compose(&pool, &Degradation::compose(&blur, &mask).unwrap()).unwrap(),
            _ => Degradation::compose(&mask, &Degradation::compose(&avg, &blur).unwrap()).unwrap(),
        };
        ops.push(op);
    }
    for (i, op) in ops.iter().enumerate() {
        worst = worst.max(adjoint_check(op, 20, 100 + i as u64).unwrap());
    }
    let elapsed = start.elapsed();
    Verdict::new(
        worst <= 1e-5 && elapsed < Duration::from_secs(10),
        format!(
            "{} operators, worst {worst:.2e}, {:.2}s",
            ops.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn dense_oracles() -> Verdict {
    let mut worst: f64 = 0.0;
    let s = Shape::new(4, 1, 16, 16);
    let blur = Degradation::new(GaussianBlur::new(s, 61, 3.0).unwrap());
    worst = worst.max(rel_err(&dense(&blur), &blur_matrix(s, 61, 3.0)));
    let s = Shape::new(4, 3, 16, 16);
    let pool = Degradation::new(AvgPool::new(s, 4).unwrap());
    worst = worst.max(rel_err(&dense(&pool), &pool_matrix(s, 4)));
    let s = Shape::new(4, 3, 16, 16);
    let m = RandomMask::new(s, 0.5, 7, true).unwrap();
    let oracle = mask_matrix(s, m.pattern());
    worst = worst.max(rel_err(&dense(&Degradation::new(m)), &oracle));
    let s = Shape::new(8, 1, 8, 8);
    let avg = Degradation::new(FrameAverage::new(s, 7).unwrap());
    worst = worst.max(rel_err(&dense(&avg), &frame_average_matrix(s, 7)));
    Verdict::new(worst <= 1e-5, format!("worst relative error {worst:.2e}"))
}

fn embed(a: &nalgebra::DMatrix<f64>) -> Degradation {
    let (m, d) = a.shape();
    let row_major: Vec<f64> = a.transpose().iter().copied().collect();
    Degradation::new(
        DenseOperator::new(Shape::new(1, 1, 1, d), Shape::new(1, 1, 1, m), row_major).unwrap(),
    )
}

fn cg_criteria() -> Verdict {
    let mut finite: f64 = 0.0;
    for (d, m, seed) in [(16, 24, 1), (32, 32, 2), (64, 64, 3), (64, 96, 4)] {
        let g = nalgebra::DMatrix::from_vec(m, d, gaussian_vec(m * d, seed));
        let svd = g.svd(true, true);
        let sv = DVector::from_fn(d, |i, _| 0.5 + 1.5 * i as f64 / (d - 1) as f64);
        let a = svd.u.unwrap() * nalgebra::DMatrix::from_diagonal(&sv) * svd.v_t.unwrap();
        let y = gaussian_vec(m, seed + 10);
        let (x, _) = cg_solve(&gaussian_vec(d, seed + 20), &y, &embed(&a), d).unwrap();
        let lsq = a
            .clone()
            .svd(true, true)
            .solve(&DVector::from_vec(y), 1e-12)
            .unwrap();
        finite = finite.max(rel_err_vec(&x, lsq.as_slice()));
    }

    let mut r = rng(42);
    let mut monotone = true;
    for i in 0..100u64 {
        let task = Task::ALL[i as usize % 6];
        let n = if task.has_frame_averaging() {
            7
        } else {
            r.random_range(1..4)
        };
        let s = Shape::new(
            n,
            r.random_range(1..3),
            4 * r.random_range(1..4),
            4 * r.random_range(1..4),
        );
        let a = TaskSpec::new(task, i).build(s).unwrap();
        let y = gaussian_vec(a.output_shape().len(), 2 * i + 1);
        let (_, report) =
            cg_solve(&gaussian_vec(s.len(), 2 * i), &y, &a, r.random_range(1..30)).unwrap();
        monotone &= report
            .residual_history
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-6));
    }

    let mut krylov: f64 = 0.0;
    for (task, l) in [
        (Task::Deblur, 10),
        (Task::DeblurPlus, 6),
        (Task::SrPlus, 3),
        (Task::Inpaint, 2),
    ] {
        let s = Shape::new(7, 1, 8, 8);
        let a = TaskSpec::new(task, 1).build(s).unwrap();
        let x0 = gaussian_vec(s.len(), 3);
        let y = gaussian_vec(a.output_shape().len(), 4);
        let (x, report) = cg_solve(&x0, &y, &a, l).unwrap();
        krylov =
            krylov.max(krylov_membership(&x0, &x, &y, &a, report.iterations_run.max(1)).unwrap());
    }
    Verdict::new(
        finite <= 1e-6 && monotone && krylov <= 1e-5,
        format!(
            "finite termination {finite:.2e}, monotone on 100: {monotone}, Krylov {krylov:.2e}"
        ),
    )
}

fn schedule_identities() -> Verdict {
    let s = make_schedule(25, ScheduleKind::ScaledLinear).unwrap();
    let shape = FrameShape::new(3, 8, 8);
    let (x0, eps) = (frame(shape, 1), frame(shape, 2));
    let mut tweedie: f64 = 0.0;
    for t in 1..=25 {
        let z = add_noise(&x0, &eps, t, &s).unwrap();
        let back = tweedie_denoise(&z, &eps, t, &s).unwrap();
        for (a, b) in back.data().iter().zip(x0.data()) {
            tweedie = tweedie.max(f64::from((a - b).abs()));
        }
    }
    let mut round_trip: f64 = 0.0;
    for tau in [1, 8, 25] {
        let z = ddim_invert(&x0, &ZeroDenoiser, tau, &s).unwrap();
        let back = ddim_sample(&z, &ZeroDenoiser, tau, &s).unwrap();
        let to64 = |f: &Frame| f.data().iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
        round_trip = round_trip.max(rel_err_vec(&to64(&back), &to64(&x0)));
    }
    let lpf = LpfSchedule::new(2.0);
    let sig: Vec<f64> = (0..=25).map(|t| lpf.sigma(t, &s)).collect();
    let monotone = sig.windows(2).all(|w| w[0] < w[1]);
    let anchor = lpf_sigma(2.0, 0.75);
    Verdict::new(
        tweedie <= 1e-5 && round_trip <= 1e-6 && monotone && anchor == 1.0,
        format!("Tweedie {tweedie:.2e}, DDIM round trip {round_trip:.2e}, σ monotone {monotone}, σ(2, 0.75) = {anchor}"),
    )
}

fn affine_oracle_equivalence() -> Verdict {
    let s = Shape::new(2, 1, 4, 4);
    let ops = [
        Degradation::new(RandomMask::new(s, 0.5, 3, true).unwrap()),
        Degradation::new(AvgPool::new(s, 2).unwrap()),
        Degradation::new(GaussianBlur::new(s, 3, 0.6).unwrap()),
    ];
    let mut worst: f64 = 0.0;
    for a in &ops {
        for tau_frac in [0.3, 1.0] {
            let cfg = SolverConfig {
                eta: 0.0,
                cg_steps: 32,
                tau_frac,
                ..Default::default()
            };
            let x = random_video(s, PixelRange::Symmetric, 7);
            let y = a.apply_video(&x).unwrap();
            let out = reconstruct(&y, a, &cfg, &gaussian(&cfg), &IdentityCodec).unwrap();
            let oracle = affine_oracle(&y.to_f64(), &dense(a), s, &cfg);
            worst = worst.max(rel_err_vec(&out.video.to_f64(), &oracle));
        }
    }
    Verdict::new(
        worst <= 1e-5,
        format!("worst relative error {worst:.2e} over 6 runs"),
    )
}

fn batch_consistency() -> Verdict {
    let s = Shape::new(4, 3, 16, 16);
    let x = static_video(s, 3);
    let ops = [
        Degradation::new(GaussianBlur::new(s, 61, 3.0).unwrap()),
        Degradation::new(AvgPool::new(s, 4).unwrap()),
        Degradation::new(RandomMask::new(s, 0.5, 1, false).unwrap()),
    ];
    let (mut checked, mut broken) = (0, 0);
    for a in &ops {
        let y = a.apply_video(&x).unwrap();
        for eta in [0.0, 1.0] {
            let cfg = SolverConfig {
                eta,
                ..Default::default()
            };
            let out =
                reconstruct_observed(&y, a, &cfg, &gaussian(&cfg), &IdentityCodec, &mut |tr| {
                    checked += 1;
                    let frames = tr.consistent.frames();
                    if !tr.latents.frames_identical()
                        || !frames.windows(2).all(|w| w[0].bit_eq(&w[1]))
                    {
                        broken += 1;
                    }
                })
                .unwrap();
            let frames = out.video.frames();
            if !frames.windows(2).all(|w| w[0].bit_eq(&w[1])) {
                broken += 1;
            }
        }
    }
    Verdict::new(
        broken == 0,
        format!("{checked} intermediate steps checked, {broken} differing"),
    )
}

/// PSNR gains (dB) recorded on the first verified run, per task and video seed.
const GOLDEN_GAINS: [(Task, u64, f64); 6] = [
    (Task::Deblur, 1, 13.011),
    (Task::Deblur, 2, 13.364),
    (Task::Deblur, 3, 13.598),
    (Task::DeblurPlus, 1, 10.808),
    (Task::DeblurPlus, 2, 10.980),
    (Task::DeblurPlus, 3, 11.135),
];

fn desk_scale() -> Verdict {
    let cfg = SolverConfig {
        eta: 0.0,
        ..Default::default()
    };
    let den = gaussian(&cfg);
    let mut pass = true;
    let mut parts = Vec::new();
    for (task, seed, golden) in GOLDEN_GAINS {
        let x = smooth_video(Shape::new(8, 1, 32, 32), seed);
        let m = degrade(&x, &TaskSpec::new(task, 0)).unwrap();
        let a = m.record.operator().unwrap();
        let out = reconstruct(&m.video, &a, &cfg, &den, &IdentityCodec).unwrap();
        let gain = psnr(&out.video, &x).unwrap().mean - psnr(&m.video, &x).unwrap().mean;
        pass &= gain >= 3.0 && (gain - golden).abs() <= 0.1;
        parts.push(format!("{}#{seed} {gain:+.3}", task.name()));
    }
    Verdict::new(pass, format!("gains dB: {}", parts.join(", ")))
}

fn ablations() -> Verdict {
    let s = Shape::new(8, 1, 32, 32);
    let mut cg_ok = true;
    let mut worst_ratio: f64 = 0.0;
    for task in Task::ALL {
        let x = smooth_video(s, 1);
        let m = degrade(&x, &TaskSpec::new(task, 0)).unwrap();
        let a = m.record.operator().unwrap();
        let residual = |cg_steps| {
            let cfg = SolverConfig {
                cg_steps,
                ..Default::default()
            };
            reconstruct(&m.video, &a, &cfg, &gaussian(&cfg), &IdentityCodec)
                .unwrap()
                .report
                .final_residual
        };
        let ratio = residual(10) / residual(1);
        worst_ratio = worst_ratio.max(ratio);
        cg_ok &= ratio <= 1.0;
    }

    let cs = Shape::new(3, 1, 8, 8);
    let y = random_video(cs, PixelRange::Symmetric, 1);
    let mut counts = Vec::new();
    for tau_frac in [0.3, 1.0] {
        let cfg = SolverConfig {
            tau_frac,
            ..Default::default()
        };
        let den = Counting::new(gaussian(&cfg));
        reconstruct(&y, &Degradation::identity(cs), &cfg, &den, &IdentityCodec).unwrap();
        counts.push(den.count());
    }
    let (tau, steps) = (SolverConfig::default().tau(), SolverConfig::default().steps);
    let exact = counts[0] * steps == counts[1] * tau;
    Verdict::new(
        cg_ok && exact,
        format!(
            "worst l=10/l=1 residual ratio {worst_ratio:.4}; calls τ={tau}: {}, τ=T: {} (ratio {tau}/{steps} exact: {exact})",
            counts[0], counts[1]
        ),
    )
}

fn blind() -> Verdict {
    let s = Shape::new(8, 1, 32, 32);
    let x = smooth_video(s, 2);
    let y = psf_operator(s, 3.0).unwrap().apply_video(&x).unwrap();
    let cfg = SolverConfig {
        eta: 0.0,
        ..Default::default()
    };
    let out = blind_reconstruct(
        &y,
        &OraclePreRestorer(x.clone()),
        &cfg,
        &gaussian(&cfg),
        &IdentityCodec,
    )
    .unwrap();
    let sigma_ok = (out.round1.sigma - 3.0).abs() <= 0.05;
    let order_ok = out.round2_residual <= out.round1_residual;
    Verdict::new(
        sigma_ok && order_ok,
        format!(
            "σ̂₁ = {:.4}, σ̂₂ = {:.4}, round-1 residual {:.6}, round-2 residual {:.6}",
            out.round1.sigma, out.round2.sigma, out.round1_residual, out.round2_residual
        ),
    )
}

fn determinism(suite_start: Instant) -> Verdict {
    let s = Shape::new(8, 3, 16, 16);
    let x = smooth_video(s, 4);
    let m = degrade(&x, &TaskSpec::new(Task::InpaintPlus, 9)).unwrap();
    let a = m.record.operator().unwrap();
    let run = |workers| {
        let cfg = SolverConfig {
            seed: 5,
            workers,
            ..Default::default()
        };
        let out = reconstruct(&m.video, &a, &cfg, &gaussian(&cfg), &IdentityCodec).unwrap();
        let mut bytes = Vec::new();
        vtf_write(&out.video, &mut bytes).unwrap();
        bytes
    };
    let first = run(Some(1));
    let identical = [Some(1), Some(4), None]
        .into_iter()
        .all(|w| run(w) == first);
    let elapsed = suite_start.elapsed();
    Verdict::new(
        identical && elapsed < Duration::from_secs(300),
        format!(
            "repeated runs byte-identical: {identical}; suite time {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let criteria: [Criterion; 9] = [
        ("adjoint suite", adjoint_suite),
        ("dense-oracle equivalence", dense_oracles),
        ("conjugate gradients", cg_criteria),
        ("schedule identities", schedule_identities),
        ("end-to-end affine oracle", affine_oracle_equivalence),
        ("batch consistency", batch_consistency),
        ("desk-scale restoration", desk_scale),
        ("ablation directions", ablations),
        ("blind two-round", blind),
    ];
    let mut failed = 0;
    let mut report = |name: &str, v: Verdict| {
        println!(
            "{} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed += 1;
        }
    };
    for (name, f) in criteria {
        report(name, f());
    }
    report("determinism and runtime", determinism(start));
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
