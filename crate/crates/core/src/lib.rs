//! Harmonic enhancement of full-band speech with pitch-driven comb filters.
//!
//! The pipeline frames a 48 kHz signal, picks one candidate F0 per frame from
//! a discrete period grid, comb-filters each frame with the matching filter,
//! and blends filtered and unfiltered spectra under a per-bin strength `R`
//! and gain `G`:
//!
//! ```text
//! Y_out = (R^γ ∘ Y_cf + (1 − R^γ) ∘ Y) ∘ G
//! ```
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which the verification tooling uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod comb;
pub mod enhance;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod matrix;
pub mod metrics;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type AudioBuffer = audio::AudioBuffer<f64>;
pub type FramedSignal = audio::FramedSignal<f64>;
pub type ChunkedSignal = audio::ChunkedSignal<f64>;
pub type Spectrogram = audio::Spectrogram<f64>;
pub type MelFilterbank = audio::MelFilterbank<f64>;
pub type F0Grid = grid::F0Grid<f64>;
pub type F0Track = grid::F0Track<f64>;
pub type CombFilterBank = comb::CombFilterBank<f64>;
pub type Matrix = matrix::Matrix<f64>;

pub type AudioBuffer32 = audio::AudioBuffer<f32>;
pub type F0Grid32 = grid::F0Grid<f32>;
pub type F0Track32 = grid::F0Track<f32>;
pub type CombFilterBank32 = comb::CombFilterBank<f32>;
