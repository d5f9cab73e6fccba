//! Simulation and statistical analysis of single-atom quantum-jump
//! photodetection.
//!
//! The crate is organized bottom-up:
//!
//! - [`distributions`]: count laws of the bright-state scatter cascade, the
//!   exponential integral they need, and samplers.
//! - [`detector`]: state-conditional readout models.
//! - [`sequence`]: the prepare / expose / readout / presence-check cycle and
//!   the three measurement campaigns.
//! - [`inference`]: threshold decisions, jump-probability estimators, and the
//!   mixture, saturation, and rate fits.
//! - [`pipeline`], [`config`], [`io`]: end-to-end analyses, configuration,
//!   and file formats used by the command-line tool.
//! - [`validation`]: brute-force references for the closed forms.

pub mod config;
pub mod detector;
pub mod distributions;
pub mod error;
pub mod histogram;
pub mod inference;
pub mod io;
pub mod pipeline;
pub mod registry;
pub mod rng;
pub mod sequence;
pub mod validation;

pub use error::{Error, Result};
