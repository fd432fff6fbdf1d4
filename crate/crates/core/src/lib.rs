//! Accident-impact prediction pipeline.
//!
//! The crate is organized around the batch pipeline stages:
//!
//! - [`ingest`] — CSV parsing, cleaning, and delay extraction from free text
//! - [`grid`] — space/time discretization, feature assembly, tensor packs
//! - [`gamma`] — the delay-transfer impact label and its median split
//! - [`durfit`] — duration histogram binning and distribution ranking
//! - [`cascade`] — the two-stage LSTM→CNN classifier and baselines
//! - [`eval`] — confusion metrics, ablation, window sweep, embedding clusters
//! - [`synth`] — seeded generator of the four datasets with known structure
//!
//! Every stage is a pure function of its inputs plus named seed streams, so
//! reruns with equal inputs are byte-identical.

pub mod cascade;
pub mod durfit;
pub mod dist;
pub mod eval;
pub mod gamma;
pub mod geo;
pub mod grid;
pub mod ingest;
pub mod kmeans;
pub mod logging;
pub mod manifest;
pub mod pipeline;
pub mod stats;
pub mod synth;
