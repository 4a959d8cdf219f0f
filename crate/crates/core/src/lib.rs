//! OFDM channel-estimation workbench.
//!
//! Builds 72x14 DM-RS slots over Rayleigh multipath channels, estimates the
//! channel with LS and MMSE, and provides the tools for designing a training
//! channel whose power-delay profile covers a family of test channels:
//! envelope dominance checks, frequency-correlation eigen-spectra, dataset
//! generation and Monte Carlo evaluation.

pub mod dataset;
pub mod design;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod fading;
pub mod ofdm;
pub mod profiles;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
