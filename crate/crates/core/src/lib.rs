//! Simulation and analysis of twin-beam entanglement from an above-threshold
//! non-degenerate optical parametric oscillator.
//!
//! - [`model`]: closed-form spectra, corrections and the Duan criterion.
//! - [`synth`]: seeded photocurrent synthesis and the detection chain.
//! - [`dsp`]: spectrum-analyzer emulation.
//! - [`fit`]: least-squares recovery of (ηξ, B, σ) from spectra.
//! - [`io`], [`config`], [`pipeline`]: file formats and the command-line workflow.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;
pub mod synth;
pub mod dsp;
pub mod fit;
pub mod io;
pub mod config;
pub mod pipeline;
pub mod cli;

pub use error::{Error, Result};
