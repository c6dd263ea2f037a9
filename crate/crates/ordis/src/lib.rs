//! Files, configuration, experiment drivers and the `ordis` command line on
//! top of `ordis-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod grid;
pub mod run;

pub use error::{Error, Result};
