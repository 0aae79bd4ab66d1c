//! Solver engine for spatio-temporal video inverse problems with latent
//! diffusion priors.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`frames`]: video tensors, the VTF file format and PNG
//!   frame directories.
//! * [`ops`]: linear degradation operators with exact adjoints.
//! * [`cg`]: matrix-free conjugate gradient for data consistency.
//! * [`schedule`]: noise schedule, Tweedie denoising, DDIM inversion,
//!   renoising and the scheduled low-pass filter.
//! * [`denoise`]: denoiser and latent-codec interfaces, analytic built-ins
//!   and the VXDN/1 remote client.
//! * [`pipeline`]: the full reconstruction loop and its blind variant.
//! * [`metrics`]: PSNR and SSIM.

pub mod cg;
pub mod denoise;
pub mod error;
pub mod frames;
pub mod metrics;
pub mod ops;
pub mod pipeline;
pub mod protocol;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Frame, FrameShape, PixelRange, Shape, VideoTensor};
