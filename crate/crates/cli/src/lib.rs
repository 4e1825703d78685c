//! Pipeline orchestration: simulate -> train-surrogate -> eval ->
//! train-agent -> generate -> optimize -> report, all driven by one strict
//! run-config file with seeded reproducibility.

pub mod commands;
pub mod config;
pub mod fsio;
pub mod report;
pub mod seeds;

pub use config::RunConfig;
