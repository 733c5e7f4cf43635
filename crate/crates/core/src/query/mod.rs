//! Node-side query service: registration, sensitivity, per-AW evaluation,
//! continual release and the per-TC privacy broadcast.

mod engine;
mod parse;
mod spec;
mod stream;

pub use engine::{
    compute_node_filter, write_cloud_releases, BroadcastMessage, CloudRelease, NodeConfig, NodeEngine, QueryCost,
    QueryHandle, TcOutcome,
};
pub use parse::parse_query;
pub use spec::{
    channel_sensitivities, clamp_untrusted, derive_sensitivity, epsilon_for, evaluate_query, Aggregate, Channel,
    CmpOp, FrameScope, Mode, Predicate, QuerySpec, SensitivityModel,
};
pub use stream::{
    multiplicity_pmf, tracked_detection_stream, Individual, Scenario, TrackedStream, TRACK_MULTIPLICITY_PMF,
};

use thiserror::Error;

use crate::dp::DpError;
use crate::model::ModelError;

/// Conservative trusted sensitivity: the worst observed ids per person.
pub const RHO_TRACK_MAX: f64 = 9.0;
/// Trusted sensitivity covering the 95th percentile of people.
pub const RHO_TRACK_P95: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("sum and avg queries need a positive VMAX")]
    MissingValueBound,
    #[error("untrusted queries need a positive declared bound S")]
    MissingDeclaredBound,
    #[error("cumulative scope needs at least one frame")]
    EmptyScope,
    #[error("rho_track must be >= 1, got {0}")]
    InvalidRhoTrack(f64),
    #[error("bad node configuration: {0}")]
    BadNodeConfig(String),
    #[error("unknown query {0}")]
    UnknownQuery(QueryHandle),
    #[error("query {0} cannot be removed inside a container")]
    DeregisterMidContainer(QueryHandle),
    #[error("values supplied do not match the channels of query {0}")]
    ChannelMismatch(QueryHandle),
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cannot write releases: {0}")]
    Io(String),
}
