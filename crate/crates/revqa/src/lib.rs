//! Std companion to `revqa-core`: file formats, dataset loaders, the HTTP
//! backend, a threaded executor, the benchmark runner and the CLI.

pub mod bench;
pub mod cli;
pub mod executor;
pub mod files;
pub mod http;

pub use bench::{run_benchmark, BenchOptions};
pub use executor::{par_map, Threaded};
pub use http::{HttpBackend, API_KEY_ENV};
