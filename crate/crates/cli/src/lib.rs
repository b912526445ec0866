//! Command line front end: one TOML config per run, one command per
//! invocation, JSON reports with CSV and SVG side files.
//!
//! ```text
//! amz <command> --config <file> [--out <dir>] [--seed <u64>]
//! ```
//!
//! Exit status 0 means every requested experiment passed, 1 that one
//! failed, 2 that the config did not parse or did not validate.

pub mod config;
pub mod dispatch;
pub mod plot;
