//! Denoiser and codec selection from their configured names.

use std::thread;
use std::time::Duration;

use crate::config::RemoteSection;
use crate::error::{CliError, CliResult};
use vidsolve_core::denoise::{
    Denoiser, GaussianPriorDenoiser, HaarCodec, IdentityCodec, LatentCodec, RemoteDenoiser,
    RemoteOptions, ZeroDenoiser,
};
use vidsolve_core::pipeline::SolverConfig;

pub const REMOTE_ENV: &str = "VISION_REMOTE";

pub struct Backend {
    pub denoiser: Box<dyn Denoiser>,
    pub codec: Box<dyn LatentCodec>,
}

/// Address for `remote` / `remote:ADDR`: the explicit one, then `[remote]
/// address`, then `VISION_REMOTE`.
fn remote_address(name: &str, section: &RemoteSection) -> CliResult<String> {
    if let Some(addr) = name.strip_prefix("remote:").filter(|a| !a.is_empty()) {
        return Ok(addr.to_string());
    }
    section
        .address
        .clone()
        .or_else(|| std::env::var(REMOTE_ENV).ok().filter(|a| !a.is_empty()))
        .ok_or_else(|| {
            CliError::config(format!(
                "--denoiser remote needs an address: remote:HOST:PORT, [remote] address, or {REMOTE_ENV}"
            ))
        })
}

pub fn build(cfg: &SolverConfig, section: &RemoteSection) -> CliResult<Backend> {
    let mut remote = None;
    let denoiser: Box<dyn Denoiser> = match cfg.denoiser.as_str() {
        "zero" => Box::new(ZeroDenoiser),
        "gaussian" => Box::new(GaussianPriorDenoiser::new(cfg.noise_schedule()?)),
        name if name == "remote" || name.starts_with("remote:") => {
            let workers = cfg
                .workers
                .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()));
            let options = RemoteOptions {
                timeout: Duration::from_millis(section.timeout_ms),
                pool_size: section.pool_size.unwrap_or(workers),
                schedule: Some((cfg.steps, cfg.schedule)),
                spatial_factor: 1,
            };
            let den = RemoteDenoiser::connect(&remote_address(name, section)?, options)?;
            remote = Some(den.clone());
            Box::new(den)
        }
        other => {
            return Err(CliError::config(format!(
                "unknown denoiser {other:?}, expected zero, gaussian or remote:ADDR"
            )))
        }
    };
    let codec: Box<dyn LatentCodec> = match cfg.codec.as_str() {
        "identity" => Box::new(IdentityCodec),
        "haar" => Box::new(HaarCodec),
        "remote" => match &remote {
            Some(den) => Box::new(den.codec()),
            None => {
                return Err(CliError::config(
                    "--codec remote requires a remote denoiser",
                ))
            }
        },
        other => {
            return Err(CliError::config(format!(
                "unknown codec {other:?}, expected identity, haar or remote"
            )))
        }
    };
    Ok(Backend { denoiser, codec })
}
