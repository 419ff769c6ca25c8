#![no_std]
extern crate alloc;

pub mod builders;
pub mod deps;
pub mod dse;
pub mod error;
pub mod fusion;
pub mod graph;
pub mod hw;
pub mod roofline;
pub mod sim;

pub use error::{Error, Result};
