//! Filesystem formats, configuration, the `leafgraph` command line and the
//! HTTP inference service on top of [`leafgraph_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod service;

pub use error::{AppError, Result};
