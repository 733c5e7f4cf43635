//! Simulation library for privacy-preserving urban sensing.
//!
//! - [`model`]: tracking contexts, aggregation windows, detection records.
//! - [`runtime`]: ephemeral container rotation and localized output release.
//! - [`dp`]: noise samplers, binary-tree continual release, Toeplitz release.
//! - [`query`]: node-side query registration, evaluation and broadcast.
//! - [`ledger`]: device-side privacy accounting.
//! - [`od`]: cross-locality origin-destination measurement.
//! - [`attack`]: output-buffer sniffing simulation.
//! - [`experiments`]: seeded experiment runners producing CSV tables.

pub mod attack;
pub mod dp;
pub mod experiments;
pub mod ledger;
pub mod model;
pub mod od;
pub mod query;
pub mod rng;
pub mod runtime;

pub use dp::{BinaryTree, DpError, NodeRef, NoiseKind, NoiseSpec, ReleaseLog, ReleaseRecord};
pub use model::{
    AggregationWindowSpec, ContextDatabase, Detection, DetectionRecord, Locality, LocalityId,
    ModelError, ObjectType, TcId, TrackId, TrackingContext,
};
pub use rng::{derive_seed, rng_from_seed, SimRng};
pub use runtime::{ContainerConfig, OutputBuffer, OutputRecord, Role, RuntimeError, Slot};
