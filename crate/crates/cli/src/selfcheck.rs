//! Numerical self-checks at desk scale.
//!
//! Setting `VIDSOLVE_SELFCHECK_INJECT=broken-adjoint` doubles the adjoint of
//! the first operator under test, which must make the run fail.

use std::process::ExitCode;
use std::time::Instant;

use crate::error::CliResult;
use vidsolve_core::cg::cg_solve;
use vidsolve_core::denoise::{
    Denoiser, GaussianPriorDenoiser, HaarCodec, IdentityCodec, LatentCodec, RemoteDenoiser,
    RemoteOptions, ZeroDenoiser,
};
use vidsolve_core::ops::{
    adjoint_check, norm, Degradation, DenseOperator, ScaledAdjoint, Task, TaskSpec,
};
use vidsolve_core::pipeline::shared_noise;
use vidsolve_core::protocol::{MockModel, MockServer};
use vidsolve_core::schedule::{
    add_noise, ddim_invert, ddim_sample, lpf_sigma, make_schedule, tweedie_denoise, ScheduleKind,
};
use vidsolve_core::{Frame, FrameShape, Shape};

pub const INJECT_ENV: &str = "VIDSOLVE_SELFCHECK_INJECT";

struct Check {
    name: String,
    value: f64,
    limit: f64,
}

fn gaussian(seed: u64, shape: FrameShape) -> Frame {
    shared_noise(seed, 1, shape)
}

fn to64(f: &Frame) -> Vec<f64> {
    f.data().iter().map(|&v| f64::from(v)).collect()
}

fn max_abs_diff(a: &Frame, b: &Frame) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| f64::from((x - y).abs()))
        .fold(0.0, f64::max)
}

fn adjoint_checks(inject: bool, out: &mut Vec<Check>) -> vidsolve_core::Result<()> {
    for (i, task) in Task::ALL.into_iter().enumerate() {
        let mut op = TaskSpec::new(task, i as u64).build(Shape::new(8, 3, 16, 16))?;
        if inject && i == 0 {
            op = Degradation::new(ScaledAdjoint {
                inner: op,
                scale: 2.0,
            });
        }
        out.push(Check {
            name: format!("adjoint {task}"),
            value: adjoint_check(&op, 20, i as u64)?,
            limit: 1e-5,
        });
    }
    Ok(())
}

/// `l = d` CG steps on a well-conditioned 48×32 system reach the normal
/// equations' solution.
fn cg_check() -> vidsolve_core::Result<Check> {
    let (m, d) = (48, 32);
    let g = to64(&gaussian(11, FrameShape::new(1, m, d)));
    let a: Vec<f64> = (0..m * d)
        .map(|k| {
            let (r, c) = (k / d, k % d);
            f64::from(u8::from(r == c)) + 0.1 * g[k]
        })
        .collect();
    let op = Degradation::new(DenseOperator::new(
        Shape::new(1, 1, 1, d),
        Shape::new(1, 1, 1, m),
        a,
    )?);
    let y = to64(&gaussian(12, FrameShape::new(1, 1, m)));
    let (x, _) = cg_solve(&vec![0.0; d], &y, &op, d)?;
    let ax = op.apply(&x)?;
    let r: Vec<f64> = y.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let value = norm(&op.adjoint(&r)?) / norm(&op.adjoint(&y)?);
    Ok(Check {
        name: "cg finite termination".into(),
        value,
        limit: 1e-6,
    })
}

fn schedule_checks(out: &mut Vec<Check>) -> vidsolve_core::Result<()> {
    let s = make_schedule(25, ScheduleKind::ScaledLinear)?;
    let shape = FrameShape::new(3, 8, 8);
    let (x0, eps) = (gaussian(1, shape), gaussian(2, shape));
    let mut worst: f64 = 0.0;
    for t in 1..=25 {
        let z = add_noise(&x0, &eps, t, &s)?;
        worst = worst.max(max_abs_diff(&tweedie_denoise(&z, &eps, t, &s)?, &x0));
    }
    out.push(Check {
        name: "tweedie inverts add_noise".into(),
        value: worst,
        limit: 1e-5,
    });

    let mut worst: f64 = 0.0;
    for tau in [1, 8, 25] {
        let z = ddim_invert(&x0, &ZeroDenoiser, tau, &s)?;
        worst = worst.max(max_abs_diff(&ddim_sample(&z, &ZeroDenoiser, tau, &s)?, &x0));
    }
    out.push(Check {
        name: "ddim round trip".into(),
        value: worst,
        limit: 1e-6,
    });
    out.push(Check {
        name: "lpf width at λ=2, ᾱ=0.75".into(),
        value: (lpf_sigma(2.0, 0.75) - 1.0).abs(),
        limit: 0.0,
    });
    Ok(())
}

fn codec_checks(out: &mut Vec<Check>) -> vidsolve_core::Result<()> {
    let x = gaussian(3, FrameShape::new(3, 16, 16));
    let codecs: [(&str, &dyn LatentCodec); 2] =
        [("identity", &IdentityCodec), ("haar", &HaarCodec)];
    for (name, codec) in codecs {
        let back = codec.decode(&codec.encode(&x)?)?;
        out.push(Check {
            name: format!("codec {name} round trip"),
            value: max_abs_diff(&back, &x),
            limit: 1e-6,
        });
    }
    Ok(())
}

/// Gaussian prior served over a loopback mock server must match the local one bit for bit.
fn remote_check() -> vidsolve_core::Result<Check> {
    let schedule = make_schedule(25, ScheduleKind::ScaledLinear)?;
    let server = MockServer::start(MockModel::GaussianPrior(schedule.clone()))?;
    let remote = RemoteDenoiser::connect(&server.addr().to_string(), RemoteOptions::default())?;
    let local = GaussianPriorDenoiser::new(schedule);
    let mut mismatches = 0;
    for t in 1..=25 {
        let z = gaussian(100 + t as u64, FrameShape::new(4, 8, 8));
        if !remote.eps(&z, t)?.bit_eq(&local.eps(&z, t)?) {
            mismatches += 1;
        }
    }
    Ok(Check {
        name: "remote loopback matches local".into(),
        value: mismatches as f64,
        limit: 0.0,
    })
}

pub fn run() -> CliResult<ExitCode> {
    let start = Instant::now();
    let inject = match std::env::var(INJECT_ENV).ok().as_deref() {
        None | Some("") => false,
        Some("broken-adjoint") => true,
        Some(other) => {
            return Err(crate::error::CliError::config(format!(
                "{INJECT_ENV}={other:?} is not a known fault"
            )))
        }
    };
    let mut checks = Vec::new();
    adjoint_checks(inject, &mut checks)?;
    checks.push(cg_check()?);
    schedule_checks(&mut checks)?;
    codec_checks(&mut checks)?;
    checks.push(remote_check()?);

    let width = checks
        .iter()
        .map(|c| c.name.chars().count())
        .max()
        .unwrap_or(0);
    let mut failed = 0;
    for c in &checks {
        let pass = c.value <= c.limit;
        if !pass {
            failed += 1;
        }
        let pad = width - c.name.chars().count();
        let limit = if c.limit == 0.0 {
            "0".to_string()
        } else {
            format!("{:.0e}", c.limit)
        };
        println!(
            "{}  {}{}  {:.3e}  (limit {limit})",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            " ".repeat(pad),
            c.value,
        );
    }
    println!(
        "{} of {} checks passed in {:.2}s",
        checks.len() - failed,
        checks.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
