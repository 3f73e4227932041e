//! Core engine for season/trend forecasting with sparse dual-flow mixing.
//!
//! Everything in this crate is pure computation over `f64` buffers: spectral
//! decomposition, the mixer model, a reverse-mode tape, Adam, and the training
//! loop. There is no IO here; the companion CLI crate owns files, CSV and
//! checkpoint persistence. The crate builds without `std` (the `alloc` crate
//! is required); enable the default `std` feature to get `std::error::Error`
//! on [`Error`].

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(feature = "std")]
extern crate std;

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod decompose;
pub mod fft;
pub mod gradcheck;
mod math;
pub mod model;
pub mod ops;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use tensor::{ComplexTensor, Error, Result, Tensor};
