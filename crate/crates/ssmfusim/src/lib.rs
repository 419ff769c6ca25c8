//! File formats, report emitters, parallel sweep drivers and the CLI built on `ssmfusim-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod parallel;
pub mod report;
pub mod workload;
