//! File formats, run configuration, manifests and the pipeline stages of the
//! `mpjet` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
