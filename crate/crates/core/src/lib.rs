//! Simulation workbench for radar-aided blockage prediction and proactive
//! handover (PHO) in mmWave networks.
//!
//! The pipeline: synthetic vehicular scenes ([`scene`]) → FMCW radar sensing
//! ([`radar`]) → geometric blockage labeling ([`geometry`]) → federated
//! training of a dual-output predictor ([`nn`], [`fed`]) → handover decision
//! making and latency/throughput evaluation ([`pho`]). The [`channel`] module
//! carries the beamforming codebook and OFDM channel used for RSS traces, and
//! [`dataset`] turns scenes into training samples via either the full radar
//! path or the scene oracle.

pub mod channel;
pub(crate) mod trace;
pub mod dataset;
pub mod dist;
pub mod error;
pub mod fed;
pub mod geometry;
pub mod nn;
pub mod pho;
pub mod radar;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};

/// Speed of light in m/s. The round 3e8 value keeps the radar bin
/// calibration at its nominal Δr = 0.1951 m / Δv = 0.2341 m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;
