//! Seamless 360-degree panorama generation toolkit.
//!
//! Equirectangular panoramas wrap horizontally: the last pixel column is
//! physically adjacent to the first. A plain diffusion pipeline knows nothing
//! about this and leaves a visible crack at the wrap. This crate maintains
//! wrap continuity by circular blending: the latent strips on either side of
//! the wrap are merged with position-dependent weights on an extended canvas,
//! once per denoising step and again inside the tiled decoder.
//!
//! The crate is organised around pluggable contracts so the learned parts of
//! a real system can be slotted in later:
//!
//! - [`grid`]: latent and image value types plus their on-disk formats.
//! - [`blend`]: the circular blending primitive (ramps, extended canvas).
//! - [`sampler`]: a deterministic DDIM-style loop over a [`sampler::Denoiser`].
//! - [`codec`]: latent/pixel conversion and wrap-aware tiled decoding over a
//!   [`codec::Codec`].
//! - [`projection`]: equirectangular/cubemap conversion and the outpainting
//!   condition pair for single-image workflows.
//! - [`metrics`]: seam continuity measurement (the verification instrument).
//! - [`resample`]: wrap-aware separable image upscaling.
//! - [`pipeline`]: multi-stage orchestration (base, refine, upscale).
//!
//! Analytic reference implementations ([`sampler::ConstantTargetDenoiser`],
//! [`codec::ToyCodec`]) stand in for the learned denoiser and VAE so every
//! behaviour is testable at desk scale.

pub mod blend;
pub mod codec;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod resample;
pub mod sampler;

pub use error::{Error, ErrorKind, Result};
pub use grid::{LatentGrid, PixelImage};
