//! Differential-privacy building blocks: samplers, the binary-tree
//! continual-release mechanism with its shadow bridge, canonical interval
//! decomposition, interval estimation and a Toeplitz alternative.

mod decompose;
mod estimate;
mod noise;
mod toeplitz;
mod tree;

pub use decompose::{canonical_decompose, canonical_size_bound, TreeNode};
pub use estimate::{estimate_interval, write_release_log, Estimate, ReleaseLog};
pub use noise::{laplace_variance, sample_noise, NoiseKind, NoiseSampler, NoiseSpec};
pub use toeplitz::{lower_toeplitz_apply, toeplitz_coefficients, ToeplitzCalibration, ToeplitzState};
pub use tree::{BinaryTree, NodeRef, ReleaseRecord};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpError {
    #[error("noise scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("tree size N={0} is not a power of two >= 2")]
    InvalidTreeSize(u64),
    #[error("container already holds all {0} leaves; call container_end first")]
    ContainerFull(u64),
    #[error("container_end called after {filled} of {n} leaves")]
    PrematureContainerEnd { filled: u64, n: u64 },
    #[error("interval [{i}, {j}] is not within 1..={n}")]
    BadInterval { i: u64, j: u64, n: u64 },
    #[error("no release for container {container} node {node}")]
    MissingRelease { container: u64, node: NodeRef },
    #[error("stream horizon {0} exhausted")]
    HorizonExceeded(usize),
    #[error("invalid calibration: {0}")]
    BadCalibration(String),
    #[error("cannot write release log: {0}")]
    Io(String),
}
