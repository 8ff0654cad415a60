//! Jamming detection for an authenticated UAV over an urban 5G air-to-ground
//! link.
//!
//! The crate covers the whole pipeline:
//!
//! * [`scenario`] builds the urban world and moves its nodes,
//! * [`channel`] turns geometry into per-slot RSSI and SINR at the UAV,
//! * [`dataset`] synthesizes labelled traces, stores them and windows them,
//! * [`nnet`] is a small from-scratch network engine with the two-headed
//!   convolution + attention (or LSTM) classifier,
//! * [`training`] runs Adam, k-fold cross-validation, a PSO/GA/GD hybrid and
//!   grid search,
//! * [`evaluation`] holds the two-stage classifier, metrics, grouped sweeps
//!   and the detection-latency harness,
//! * [`cli`] wires everything into the `uavjam` command.

pub mod channel;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod nnet;
pub mod scenario;
pub mod training;

pub use error::{Error, Result};
