//! Invertible flow-based latent steganography.
//!
//! A message is mapped into a Gaussian-distributed starting latent, transported
//! to an output latent by integrating a velocity field, and recovered by
//! integrating the same field backwards and reading the signs back out.
//!
//! Module map:
//! - [`latent`], [`keyed`], [`io`]: domain types, keyed randomness, binary formats
//! - [`mapping`]: message to latent and back
//! - [`flows`]: velocity fields, noise predictors and the diffusion schedule
//! - [`nn`]: the velocity network and its training loops
//! - [`samplers`]: Euler and DDIM/DDPM integration plus error diagnostics
//! - [`channel`]: lossy post-processing applied to output latents
//! - [`metrics`]: accuracy, inversion error, straightness, detectability, distances

pub mod channel;
pub mod error;
pub mod flows;
pub mod io;
pub mod keyed;
pub mod latent;
pub mod mapping;
pub mod metrics;
pub mod nn;
pub mod samplers;

pub use error::{Error, Result};
pub use keyed::StegoKey;
pub use latent::{Direction, LatentVector, Message, TimeGrid, TrajectoryRecord};
