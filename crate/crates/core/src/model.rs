//! Temporal and data vocabulary shared by the node runtime, the release
//! mechanisms and the accounting layers.
//!
//! Time is integer seconds since the simulation epoch. A locality's
//! timeline is cut into tracking contexts (TCs) of a fixed duration; an
//! aggregation window (AW) is a block of whole TCs, and a system container
//! spans a power-of-two number of AWs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Seconds since the simulation epoch.
pub type Seconds = u64;

/// Default system container lifetime (one day).
pub const DEFAULT_MAX_EC_SYS: Seconds = 86_400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("horizon {horizon}s is not a multiple of the tracking-context length {tau_tc}s")]
    HorizonNotMultiple { horizon: Seconds, tau_tc: Seconds },
    #[error("aggregation window {aw}s is not a multiple of the tracking-context length {tau_tc}s")]
    AwNotTcMultiple { aw: Seconds, tau_tc: Seconds },
    #[error("container length {max_ec_sys}s is not a multiple of the aggregation window {aw}s")]
    AwDoesNotDivide { aw: Seconds, max_ec_sys: Seconds },
    #[error("leaves per container N={n} is not a power of two >= 2")]
    NotDyadic { n: u64 },
    #[error("duplicate record for ({locality}, {context})")]
    DuplicateRecord { locality: LocalityId, context: String },
    #[error("record value {0} is negative or not finite")]
    InvalidValue(f64),
    #[error("value bound must be positive and finite, got {0}")]
    InvalidValueBound(f64),
    #[error("unknown object type `{0}`")]
    UnknownObjectType(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalityId(pub String);

impl fmt::Display for LocalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LocalityId {
    fn from(s: &str) -> Self {
        LocalityId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Locality {
    pub id: LocalityId,
    pub label: String,
}

impl Locality {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Locality {
            id: LocalityId(id.into()),
            label: label.into(),
        }
    }
}

/// Globally unique TC identifier: the locality id plus a per-locality
/// monotone counter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TcId {
    pub locality: LocalityId,
    pub seq: u64,
}

impl fmt::Display for TcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.locality, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackingContext {
    pub id: TcId,
    pub start: Seconds,
    pub end: Seconds,
}

impl TrackingContext {
    pub fn duration(&self) -> Seconds {
        self.end - self.start
    }

    pub fn contains(&self, t: Seconds) -> bool {
        self.start <= t && t < self.end
    }
}

/// Cuts `[0, horizon)` into consecutive TCs of length `tau_tc`.
pub fn partition_timeline(
    tau_tc: Seconds,
    horizon: Seconds,
    locality: &Locality,
) -> Result<Vec<TrackingContext>, ModelError> {
    if tau_tc == 0 || horizon == 0 {
        return Err(ModelError::ZeroDuration);
    }
    if horizon % tau_tc != 0 {
        return Err(ModelError::HorizonNotMultiple { horizon, tau_tc });
    }
    Ok((0..horizon / tau_tc)
        .map(|seq| TrackingContext {
            id: TcId {
                locality: locality.id.clone(),
                seq,
            },
            start: seq * tau_tc,
            end: (seq + 1) * tau_tc,
        })
        .collect())
}

/// A validated (AW, container) pairing: `n * aw_duration == max_ec_sys`
/// with `n` a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregationWindowSpec {
    pub aw_duration: Seconds,
    pub max_ec_sys: Seconds,
    pub tau_tc: Seconds,
    pub n: u64,
}

impl AggregationWindowSpec {
    pub fn height(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// Number of TCs per AW.
    pub fn tcs_per_aw(&self) -> u64 {
        self.aw_duration / self.tau_tc
    }

    /// Absolute AW index of the TC starting at `tc_start`.
    pub fn aw_index(&self, tc_start: Seconds, container_start: Seconds) -> u64 {
        (tc_start - container_start) / self.aw_duration
    }
}

pub fn validate_aw_spec(
    aw_duration: Seconds,
    max_ec_sys: Seconds,
    tau_tc: Seconds,
) -> Result<AggregationWindowSpec, ModelError> {
    if aw_duration == 0 || max_ec_sys == 0 || tau_tc == 0 {
        return Err(ModelError::ZeroDuration);
    }
    if aw_duration % tau_tc != 0 {
        return Err(ModelError::AwNotTcMultiple {
            aw: aw_duration,
            tau_tc,
        });
    }
    if max_ec_sys % aw_duration != 0 {
        return Err(ModelError::AwDoesNotDivide {
            aw: aw_duration,
            max_ec_sys,
        });
    }
    let n = max_ec_sys / aw_duration;
    if n < 2 || !n.is_power_of_two() {
        return Err(ModelError::NotDyadic { n });
    }
    Ok(AggregationWindowSpec {
        aw_duration,
        max_ec_sys,
        tau_tc,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectType {
    Pedestrian,
    Bicycle,
    Car,
    Bus,
    Truck,
}

impl ObjectType {
    pub const ALL: [ObjectType; 5] = [
        ObjectType::Pedestrian,
        ObjectType::Bicycle,
        ObjectType::Car,
        ObjectType::Bus,
        ObjectType::Truck,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectType::Pedestrian => "pedestrian",
            ObjectType::Bicycle => "bicycle",
            ObjectType::Car => "car",
            ObjectType::Bus => "bus",
            ObjectType::Truck => "truck",
        }
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        ObjectType::ALL
            .into_iter()
            .find(|t| t.as_str() == lower)
            .ok_or(ModelError::UnknownObjectType(s.to_owned()))
    }
}

/// Pseudonymous tracker id, scoped to a single TC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub track_id: TrackId,
    pub object_type: ObjectType,
    pub value: f64,
}

/// Entities detected in one sensor frame.
pub type Frame = Vec<Detection>;

/// The frame detection sequence for one AW. Values are clamped into
/// `[0, v_max]` on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub aw: u64,
    pub v_max: f64,
    pub frames: Vec<Frame>,
}

impl DetectionRecord {
    pub fn new(aw: u64, v_max: f64, mut frames: Vec<Frame>) -> Result<Self, ModelError> {
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(ModelError::InvalidValueBound(v_max));
        }
        for det in frames.iter_mut().flatten() {
            det.value = if det.value.is_nan() {
                0.0
            } else {
                det.value.clamp(0.0, v_max)
            };
        }
        Ok(DetectionRecord { aw, v_max, frames })
    }

    /// Concatenates the frames of consecutive TC records into one AW record.
    pub fn merge(aw: u64, parts: impl IntoIterator<Item = DetectionRecord>) -> Option<Self> {
        let mut merged: Option<DetectionRecord> = None;
        for part in parts {
            match merged.as_mut() {
                None => merged = Some(DetectionRecord { aw, ..part }),
                Some(m) => {
                    m.v_max = m.v_max.max(part.v_max);
                    m.frames.extend(part.frames);
                }
            }
        }
        merged
    }
}

/// Identifies one context (TC or AW) within a locality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextId(pub String);

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Set of per-context scalar outputs, at most one per (locality, context).
#[derive(Debug, Clone, Default)]
pub struct ContextDatabase {
    records: BTreeMap<(LocalityId, ContextId), f64>,
}

impl ContextDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        locality: LocalityId,
        context: ContextId,
        y: f64,
    ) -> Result<(), ModelError> {
        if !(y.is_finite() && y >= 0.0) {
            return Err(ModelError::InvalidValue(y));
        }
        let key = (locality, context);
        if self.records.contains_key(&key) {
            return Err(ModelError::DuplicateRecord {
                locality: key.0,
                context: key.1 .0,
            });
        }
        self.records.insert(key, y);
        Ok(())
    }

    pub fn get(&self, locality: &LocalityId, context: &ContextId) -> Option<f64> {
        self.records
            .get(&(locality.clone(), context.clone()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LocalityId, &ContextId, f64)> {
        self.records.iter().map(|((l, c), y)| (l, c, *y))
    }
}
