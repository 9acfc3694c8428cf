//! Detection of meme periods of stocks from daily price, traded volume, and
//! social post counts.
//!
//! The pipeline estimates a bivariate error correction model with a hidden
//! Markov cointegration rank and smoothly drifting factor loadings on two
//! pairs — (log price, log posts) and (log volume, log posts) — by Gibbs
//! sampling, reduces the posterior to per-day rank regimes, and flags a meme
//! period wherever both pairs enter persistent, near-simultaneous
//! cointegration episodes.

pub mod detector;
pub mod error;
pub mod ingest;
pub mod regimes;
pub mod sampler;
pub mod synth;
pub mod vecm;

pub use error::{Error, Result};
