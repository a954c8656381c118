//! Task-adaptive tone mapping for radiometric thermal-infrared images.
//!
//! The pipeline converts raw sensor counts to absolute temperature
//! ([`radiometry`]), projects temperature into a multichannel sinusoidal
//! embedding ([`embedding`]) and collapses the embedding into a 3-channel
//! image with a small trainable network ([`compression`]) whose weights
//! depend on the training objective ([`training`]). Classical operators in
//! [`baselines`] and the histogram statistics in [`metrics`] support
//! comparisons between tone-mapped outputs.

mod codec;

pub mod baselines;
pub mod compression;
pub mod diffmath;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod radiometry;
pub mod training;

pub use error::{Error, Result};
