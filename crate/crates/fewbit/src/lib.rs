//! File formats, configs and the `fewbit` command-line front-end over
//! [`fewbit_core`].

pub use fewbit_core as core;

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod numfmt;
