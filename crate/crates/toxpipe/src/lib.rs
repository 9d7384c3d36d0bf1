//! Tox21 pipeline: data handling, model training and reporting on top of the
//! chemistry, network and ensemble crates.

pub mod assays;
pub mod baselines;
pub mod bundle;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod split;
pub mod synthetic;
