pub mod analysis;
pub mod benchmarks;
pub mod config;
pub mod engine;
pub mod harness;
pub mod metrics;
pub mod sampling;
pub mod selection;
pub mod targets;
