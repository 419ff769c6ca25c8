use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::graph::OpId;

/// Errors raised across the modeling pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    InvalidConfig(String),
    /// An operator's inputs and output do not satisfy its shape rule.
    Shape {
        op: OpId,
        msg: String,
    },
    /// The operator graph contains a cycle through the listed ops.
    Cycle(Vec<OpId>),
    UnknownScheme(String),
    /// A tiling names a dimension the tensor does not have, or is otherwise malformed.
    Tiling(String),
    /// Dependency propagation would materialize more cells than allowed.
    TooLarge(String),
    /// The hardware point cannot run the workload.
    Infeasible(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(m) => write!(f, "invalid configuration: {m}"),
            Error::Shape { op, msg } => write!(f, "shape error at op {}: {msg}", op.0),
            Error::Cycle(ops) => {
                write!(f, "cycle detected among ops [")?;
                for (i, op) in ops.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", op.0)?;
                }
                write!(f, "]")
            }
            Error::UnknownScheme(s) => write!(f, "unknown fusion scheme `{s}`"),
            Error::Tiling(m) => write!(f, "tiling error: {m}"),
            Error::TooLarge(m) => write!(f, "dependency map too large: {m}"),
            Error::Infeasible(m) => write!(f, "infeasible: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
