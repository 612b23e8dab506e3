//! File formats, parallel benchmarking and the command line of the `mimic`
//! tool. The algorithms live in `mimic-core`.

pub mod bench;
pub mod cli;
mod error;
pub mod io;
pub mod model_file;

pub use error::{CliError, CliResult};
pub use mimic_core as core;
