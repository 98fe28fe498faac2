//! Configuration-driven experiment runner for `lorenz-measures`.

pub mod cli;
pub mod config;
pub mod pipeline;

pub use config::{Config, SchemaError, SCHEMA};
pub use pipeline::{run, Artifacts};
