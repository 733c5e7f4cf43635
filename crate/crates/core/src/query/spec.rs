use std::collections::BTreeSet;
use std::fmt;

use super::QueryError;
use crate::model::{validate_aw_spec, AggregationWindowSpec, DetectionRecord, Frame, ObjectType, Seconds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregate {
    Count,
    Sum,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn holds(&self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }
}

/// `value <op> constant`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predicate {
    pub op: CmpOp,
    pub constant: f64,
}

/// Which frames of an AW record the aggregate reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameScope {
    /// Detections in the final frame.
    LastFrame,
    /// Each distinct track id once, at its last observation.
    AllFrames,
    /// Per-frame aggregates summed over the final `k` frames.
    Cumulative(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Trusted,
    Untrusted,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Trusted => "trusted",
            Mode::Untrusted => "untrusted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub aggregate: Aggregate,
    /// Empty means every object type.
    pub object_types: BTreeSet<ObjectType>,
    pub predicates: Vec<Predicate>,
    pub aw_duration: Seconds,
    pub sigma: f64,
    pub mode: Mode,
    pub declared_s: Option<f64>,
    pub v_max: Option<f64>,
    pub scope: FrameScope,
}

impl QuerySpec {
    /// Trusted last-frame count over `types`.
    pub fn count(types: &[ObjectType], aw_duration: Seconds, sigma: f64) -> Self {
        QuerySpec {
            aggregate: Aggregate::Count,
            object_types: types.iter().copied().collect(),
            predicates: Vec::new(),
            aw_duration,
            sigma,
            mode: Mode::Trusted,
            declared_s: None,
            v_max: None,
            scope: FrameScope::LastFrame,
        }
    }

    pub fn sum(types: &[ObjectType], aw_duration: Seconds, sigma: f64, v_max: f64) -> Self {
        QuerySpec {
            aggregate: Aggregate::Sum,
            v_max: Some(v_max),
            ..Self::count(types, aw_duration, sigma)
        }
    }

    pub fn untrusted(mut self, declared_s: f64) -> Self {
        self.mode = Mode::Untrusted;
        self.declared_s = Some(declared_s);
        self
    }

    pub fn with_scope(mut self, scope: FrameScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn with_predicate(mut self, op: CmpOp, constant: f64) -> Self {
        self.predicates.push(Predicate { op, constant });
        self
    }

    /// Checks field consistency and the dyadic window, returning the AW spec.
    pub fn validate(&self, max_ec_sys: Seconds, tau_tc: Seconds) -> Result<AggregationWindowSpec, QueryError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(QueryError::InvalidSigma(self.sigma));
        }
        if matches!(self.aggregate, Aggregate::Sum | Aggregate::Avg) {
            match self.v_max {
                Some(v) if v.is_finite() && v > 0.0 => {}
                _ => return Err(QueryError::MissingValueBound),
            }
        }
        if self.mode == Mode::Untrusted {
            match self.declared_s {
                Some(s) if s.is_finite() && s > 0.0 => {}
                _ => return Err(QueryError::MissingDeclaredBound),
            }
        }
        if self.scope == FrameScope::Cumulative(0) {
            return Err(QueryError::EmptyScope);
        }
        Ok(validate_aw_spec(self.aw_duration, max_ec_sys, tau_tc)?)
    }

    /// Per-ID sensitivity of the value channel under trusted evaluation.
    pub fn mu_q(&self) -> f64 {
        let per_frame = match self.aggregate {
            Aggregate::Count => 1.0,
            Aggregate::Sum | Aggregate::Avg => self.v_max.unwrap_or(f64::NAN),
        };
        match self.scope {
            FrameScope::Cumulative(k) => k as f64 * per_frame,
            _ => per_frame,
        }
    }

    /// Sensitivity of the count channel that accompanies an average.
    fn count_mu(&self) -> f64 {
        match self.scope {
            FrameScope::Cumulative(k) => k as f64,
            _ => 1.0,
        }
    }

    fn admits(&self, obj: ObjectType, value: f64) -> bool {
        (self.object_types.is_empty() || self.object_types.contains(&obj))
            && self.predicates.iter().all(|p| p.op.holds(value, p.constant))
    }

    /// Attribute value clamped to this query's declared bound.
    fn bounded(&self, v: f64) -> f64 {
        self.v_max.map_or(v, |m| v.clamp(0.0, m))
    }

    fn frame_stats(&self, frame: &Frame) -> (f64, f64) {
        let mut ids = BTreeSet::new();
        let mut sum = 0.0;
        for d in frame {
            if self.admits(d.object_type, d.value) && ids.insert(d.track_id) {
                sum += self.bounded(d.value);
            }
        }
        (ids.len() as f64, sum)
    }

    /// `(count, sum)` over the configured frame scope, before clamping.
    pub fn raw_stats(&self, record: &DetectionRecord) -> (f64, f64) {
        let frames = &record.frames;
        match self.scope {
            FrameScope::LastFrame => frames.last().map_or((0.0, 0.0), |f| self.frame_stats(f)),
            FrameScope::Cumulative(k) => {
                let start = frames.len().saturating_sub(k as usize);
                frames[start..].iter().fold((0.0, 0.0), |(c, s), f| {
                    let (fc, fs) = self.frame_stats(f);
                    (c + fc, s + fs)
                })
            }
            FrameScope::AllFrames => {
                let mut last = std::collections::BTreeMap::new();
                for d in frames.iter().flatten() {
                    if self.admits(d.object_type, d.value) {
                        last.insert(d.track_id, self.bounded(d.value));
                    }
                }
                (last.len() as f64, last.values().sum())
            }
        }
    }
}

/// Sensitivity of one query under the node's tracking assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityModel {
    pub mode: Mode,
    pub mu_q: f64,
    pub rho_track: f64,
    pub declared_s: Option<f64>,
    pub effective_delta: f64,
}

/// Which released series a channel carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Value,
    /// The denominator series of an average.
    Count,
}

impl Channel {
    pub fn name(&self) -> &'static str {
        match self {
            Channel::Value => "value",
            Channel::Count => "count",
        }
    }
}

/// Channels a query releases, with their effective sensitivity.
pub fn channel_sensitivities(spec: &QuerySpec, rho_track: f64) -> Result<Vec<(Channel, f64)>, QueryError> {
    let main = derive_sensitivity(spec, rho_track)?.effective_delta;
    let mut out = vec![(Channel::Value, main)];
    if spec.aggregate == Aggregate::Avg {
        let count = match spec.mode {
            Mode::Trusted => rho_track * spec.count_mu(),
            Mode::Untrusted => main,
        };
        out.push((Channel::Count, count));
    }
    Ok(out)
}

pub fn derive_sensitivity(spec: &QuerySpec, rho_track: f64) -> Result<SensitivityModel, QueryError> {
    if !(rho_track.is_finite() && rho_track >= 1.0) {
        return Err(QueryError::InvalidRhoTrack(rho_track));
    }
    let mu_q = spec.mu_q();
    let effective_delta = match spec.mode {
        Mode::Trusted => rho_track * mu_q,
        Mode::Untrusted => spec.declared_s.ok_or(QueryError::MissingDeclaredBound)?,
    };
    Ok(SensitivityModel {
        mode: spec.mode,
        mu_q,
        rho_track,
        declared_s: spec.declared_s,
        effective_delta,
    })
}

/// Per-node-release privacy parameter `eps_q = delta * sqrt(2) / sigma`.
pub fn epsilon_for(delta: f64, sigma: f64) -> f64 {
    delta * std::f64::consts::SQRT_2 / sigma
}

/// Value entering the mechanism for each channel of `spec` on `record`.
///
/// Trusted queries aggregate the record directly. Untrusted queries treat
/// the same aggregate as the application's raw output and clamp it to
/// `[0, S]`.
pub fn evaluate_query(spec: &QuerySpec, record: &DetectionRecord) -> Vec<(Channel, f64)> {
    let (count, sum) = spec.raw_stats(record);
    let raw = match spec.aggregate {
        Aggregate::Count => vec![(Channel::Value, count)],
        Aggregate::Sum => vec![(Channel::Value, sum)],
        Aggregate::Avg => vec![(Channel::Value, sum), (Channel::Count, count)],
    };
    match spec.mode {
        Mode::Trusted => raw,
        Mode::Untrusted => raw
            .into_iter()
            .map(|(c, y)| (c, clamp_untrusted(spec, y)))
            .collect(),
    }
}

/// Clamps an application-supplied output to `[0, S]`.
pub fn clamp_untrusted(spec: &QuerySpec, raw: f64) -> f64 {
    let s = spec.declared_s.unwrap_or(0.0);
    if raw.is_nan() {
        0.0
    } else {
        raw.clamp(0.0, s)
    }
}
