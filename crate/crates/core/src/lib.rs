//! Channel characterization toolkit for mmWave links in indoor dense spaces
//! (aircraft cabins, train wagons, hyperloop pods).
//!
//! The pipeline is:
//!
//! - [`tracer`] synthesizes multipath data with an image-method ray tracer in
//!   a rectangular cabin, or [`pathdata`] ingests externally produced paths;
//! - [`extract`] computes path-loss / shadow-fading fits, Rician K-factor,
//!   RMS delay spread and the four RMS angular spreads per condition;
//! - [`genchan`] draws stochastic tapped-delay realizations from a parameter
//!   set (built-in presets or extracted ones);
//! - [`linksim`] evaluates RSSI/SNR maps and Monte-Carlo uncoded BPSK BER.
//!
//! [`cli`] wires all of it into the `ids-chan` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod extract;
pub mod genchan;
pub mod linksim;
pub mod pathdata;
pub mod stats;
pub mod tracer;

pub use extract::{ChannelParamSet, ConditionParams, MeanStd, PathLossFit, Summary};
pub use genchan::{ChannelRealization, Tap};
pub use linksim::{BerPoint, LinkBudget};
pub use pathdata::{
    Condition, Interaction, MultipathComponent, Provenance, RxRecord, ScenarioDataset,
};
pub use tracer::{Material, ScenarioPreset, Scene};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
