//! Dense tensors, reverse-mode autodiff and a finite-difference oracle.

pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, NodeId};
pub use tensor::{Scalar, Tensor};

/// Numeric precision for a run: `f32` for training, `f64` for gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "32" => Ok(Self::F32),
            "f64" | "64" => Ok(Self::F64),
            other => Err(crate::error::Error::Config(format!("unknown precision {other:?}"))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        })
    }
}
