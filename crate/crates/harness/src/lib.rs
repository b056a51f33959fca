//! Experiment orchestration for the SSDG lab.
//!
//! The core crate owns the numerics; this crate owns protocol: holding one
//! domain out, pooling the others into train/val splits, repeating runs
//! over trial seeds, sweeping hyperparameters, and writing reports. The
//! `ssdg` binary is a thin CLI over these functions.

pub mod ablation;
pub mod config;
pub mod experiment;
pub mod reference;
pub mod reports;
