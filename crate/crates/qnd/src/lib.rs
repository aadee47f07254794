//! Command-line driver for `qnd-core`: JSON configuration files, parallel ensembles and
//! CSV/JSON output.

#![allow(clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod ensemble;
pub mod export;
pub mod output;
