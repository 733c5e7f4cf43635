use std::fmt;
use std::io::Write;

use super::spec::{channel_sensitivities, epsilon_for, evaluate_query, Channel, QuerySpec};
use super::QueryError;
use crate::dp::{estimate_interval, BinaryTree, Estimate, NoiseKind, NoiseSpec, ReleaseLog, ReleaseRecord};
use crate::model::{AggregationWindowSpec, DetectionRecord, Frame, LocalityId, Seconds, TcId, TrackingContext};
use crate::rng::derive_seed;

/// Node-wide settings fixed before any data flows.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub locality: LocalityId,
    pub tau_tc: Seconds,
    pub max_ec_sys: Seconds,
    /// Tracking error factor used for trusted sensitivity.
    pub rho_track: f64,
    /// Noise family for tree releases; `None` gives exact sums for testing.
    pub noise: NoiseKind,
    pub seed: u64,
}

impl NodeConfig {
    pub fn new(locality: impl Into<String>, tau_tc: Seconds, max_ec_sys: Seconds) -> Self {
        NodeConfig {
            locality: LocalityId(locality.into()),
            tau_tc,
            max_ec_sys,
            rho_track: 9.0,
            noise: NoiseKind::Laplace,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryHandle(pub u32);

impl fmt::Display for QueryHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

/// `(locality, TC, rho_node)` as broadcast to nearby devices.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastMessage {
    pub locality: LocalityId,
    pub tc_id: TcId,
    pub rho_node: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudRelease {
    pub locality: LocalityId,
    pub query: QueryHandle,
    pub channel: Channel,
    pub record: ReleaseRecord,
}

/// Per-query cost inputs to the node filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryCost {
    pub n: u64,
    pub epsilon: f64,
}

/// `rho_node = sum_q (log2 N_q + 2) eps_q`.
pub fn compute_node_filter(costs: impl IntoIterator<Item = QueryCost>) -> f64 {
    costs
        .into_iter()
        .map(|c| (c.n.trailing_zeros() as f64 + 2.0) * c.epsilon)
        .sum()
}

#[derive(Debug, Clone)]
struct ChannelState {
    channel: Channel,
    delta: f64,
    epsilon: f64,
    tree: BinaryTree,
    log: ReleaseLog,
}

#[derive(Debug, Clone)]
struct Registered {
    handle: QueryHandle,
    spec: QuerySpec,
    aw: AggregationWindowSpec,
    channels: Vec<ChannelState>,
    active_from: Seconds,
    pending: Vec<Frame>,
    tcs_in_aw: u64,
    aws_done: u64,
}

impl Registered {
    fn costs(&self) -> impl Iterator<Item = QueryCost> + '_ {
        self.channels.iter().map(|c| QueryCost {
            n: self.aw.n,
            epsilon: c.epsilon,
        })
    }
}

/// What one tracking context produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TcOutcome {
    pub tc: TrackingContext,
    pub releases: Vec<CloudRelease>,
    pub broadcast: Option<BroadcastMessage>,
}

/// One node's query service.
#[derive(Debug, Clone)]
pub struct NodeEngine {
    config: NodeConfig,
    queries: Vec<Registered>,
    next_handle: u32,
    next_tc: u64,
}

impl NodeEngine {
    pub fn new(config: NodeConfig) -> Result<Self, QueryError> {
        if config.tau_tc == 0 || config.max_ec_sys == 0 || config.max_ec_sys % config.tau_tc != 0 {
            return Err(QueryError::BadNodeConfig(format!(
                "tau_tc={} max_ec_sys={}",
                config.tau_tc, config.max_ec_sys
            )));
        }
        if !(config.rho_track.is_finite() && config.rho_track >= 1.0) {
            return Err(QueryError::InvalidRhoTrack(config.rho_track));
        }
        Ok(NodeEngine {
            config,
            queries: Vec::new(),
            next_handle: 0,
            next_tc: 0,
        })
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    /// Start of the next TC to be processed.
    pub fn now(&self) -> Seconds {
        self.next_tc * self.config.tau_tc
    }

    fn next_boundary(&self) -> Seconds {
        let m = self.config.max_ec_sys;
        self.now().div_ceil(m) * m
    }

    /// Registers a query. It takes effect at the next container boundary
    /// (immediately if the node is on one).
    pub fn register_query(&mut self, spec: QuerySpec) -> Result<QueryHandle, QueryError> {
        let aw = spec.validate(self.config.max_ec_sys, self.config.tau_tc)?;
        let handle = QueryHandle(self.next_handle);
        let mut channels = Vec::new();
        for (k, (channel, delta)) in channel_sensitivities(&spec, self.config.rho_track)?
            .into_iter()
            .enumerate()
        {
            let seed = derive_seed(derive_seed(self.config.seed, u64::from(handle.0)), k as u64);
            let noise = match self.config.noise {
                NoiseKind::Laplace => NoiseSpec::laplace(spec.sigma / std::f64::consts::SQRT_2, seed),
                NoiseKind::Gaussian => NoiseSpec::gaussian(spec.sigma, seed),
                NoiseKind::None => NoiseSpec::none(),
            };
            channels.push(ChannelState {
                channel,
                delta,
                epsilon: epsilon_for(delta, spec.sigma),
                tree: BinaryTree::new(aw.n, noise.sampler()?)?,
                log: ReleaseLog::new(aw.n),
            });
        }
        self.next_handle += 1;
        self.queries.push(Registered {
            handle,
            spec,
            aw,
            channels,
            active_from: self.next_boundary(),
            pending: Vec::new(),
            tcs_in_aw: 0,
            aws_done: 0,
        });
        Ok(handle)
    }

    /// Parses and registers the text form.
    pub fn register_text(&mut self, text: &str) -> Result<QueryHandle, QueryError> {
        self.register_query(super::parse_query(text)?)
    }

    /// Removes a query. Only allowed on a container boundary, or before the
    /// query has become active.
    pub fn deregister(&mut self, handle: QueryHandle) -> Result<(), QueryError> {
        let idx = self.index(handle)?;
        let q = &self.queries[idx];
        let on_boundary = self.now() % self.config.max_ec_sys == 0;
        if q.active_from <= self.now() && !on_boundary {
            return Err(QueryError::DeregisterMidContainer(handle));
        }
        self.queries.remove(idx);
        Ok(())
    }

    fn index(&self, handle: QueryHandle) -> Result<usize, QueryError> {
        self.queries
            .iter()
            .position(|q| q.handle == handle)
            .ok_or(QueryError::UnknownQuery(handle))
    }

    pub fn is_active(&self, handle: QueryHandle) -> Result<bool, QueryError> {
        Ok(self.queries[self.index(handle)?].active_from <= self.now())
    }

    /// Effective sensitivity and per-release epsilon of each channel.
    pub fn channel_params(&self, handle: QueryHandle) -> Result<Vec<(Channel, f64, f64)>, QueryError> {
        let q = &self.queries[self.index(handle)?];
        Ok(q.channels.iter().map(|c| (c.channel, c.delta, c.epsilon)).collect())
    }

    pub fn aw_spec(&self, handle: QueryHandle) -> Result<AggregationWindowSpec, QueryError> {
        Ok(self.queries[self.index(handle)?].aw)
    }

    /// Node filter over the queries active in the current TC.
    pub fn rho_node(&self) -> f64 {
        let now = self.now();
        compute_node_filter(
            self.queries
                .iter()
                .filter(|q| q.active_from <= now)
                .flat_map(Registered::costs),
        )
    }

    fn broadcast(&self) -> Option<BroadcastMessage> {
        let now = self.now();
        if !self.queries.iter().any(|q| q.active_from <= now) {
            return None;
        }
        Some(BroadcastMessage {
            locality: self.config.locality.clone(),
            tc_id: TcId {
                locality: self.config.locality.clone(),
                seq: self.next_tc,
            },
            rho_node: self.rho_node(),
        })
    }

    fn feed(&mut self, idx: usize, ys: &[(Channel, f64)]) -> Result<Vec<CloudRelease>, QueryError> {
        let locality = self.config.locality.clone();
        let q = &mut self.queries[idx];
        let mut out = Vec::new();
        for ch in q.channels.iter_mut() {
            let y = ys
                .iter()
                .find(|(c, _)| *c == ch.channel)
                .map(|(_, y)| *y)
                .ok_or(QueryError::ChannelMismatch(q.handle))?;
            let recs = ch.tree.push(y)?;
            ch.log.extend(recs.iter().copied());
            out.extend(recs.into_iter().map(|record| CloudRelease {
                locality: locality.clone(),
                query: q.handle,
                channel: ch.channel,
                record,
            }));
        }
        q.aws_done += 1;
        Ok(out)
    }

    /// Feeds a completed AW's per-channel values to a query's mechanism and
    /// returns its releases together with the current TC's broadcast.
    pub fn on_aw_release(
        &mut self,
        handle: QueryHandle,
        ys: &[(Channel, f64)],
    ) -> Result<(Vec<CloudRelease>, Option<BroadcastMessage>), QueryError> {
        let idx = self.index(handle)?;
        let releases = self.feed(idx, ys)?;
        Ok((releases, self.broadcast()))
    }

    /// Processes the detections of the next TC.
    pub fn process_tc(&mut self, frames: Vec<Frame>) -> Result<TcOutcome, QueryError> {
        let now = self.now();
        let tc = TrackingContext {
            id: TcId {
                locality: self.config.locality.clone(),
                seq: self.next_tc,
            },
            start: now,
            end: now + self.config.tau_tc,
        };
        let broadcast = self.broadcast();
        let mut releases = Vec::new();
        for idx in 0..self.queries.len() {
            let q = &mut self.queries[idx];
            if q.active_from > now {
                continue;
            }
            q.pending.extend(frames.iter().cloned());
            q.tcs_in_aw += 1;
            if q.tcs_in_aw < q.aw.tcs_per_aw() {
                continue;
            }
            let v_max = q.spec.v_max.unwrap_or(f64::MAX);
            let record = DetectionRecord::new(q.aws_done, v_max, std::mem::take(&mut q.pending))?;
            q.tcs_in_aw = 0;
            let ys = evaluate_query(&q.spec, &record);
            releases.extend(self.feed(idx, &ys)?);
        }
        self.next_tc += 1;
        Ok(TcOutcome {
            tc,
            releases,
            broadcast,
        })
    }

    /// Interval estimate over AWs `first..=last`, counted from the query's
    /// activation.
    pub fn estimate(
        &self,
        handle: QueryHandle,
        channel: Channel,
        first: u64,
        last: u64,
    ) -> Result<Estimate, QueryError> {
        let q = &self.queries[self.index(handle)?];
        let ch = q
            .channels
            .iter()
            .find(|c| c.channel == channel)
            .ok_or(QueryError::ChannelMismatch(handle))?;
        Ok(estimate_interval(&ch.log, first, last)?)
    }
}

/// Writes `locality,query,container_idx,node,value,sigma` rows. Average
/// queries label their denominator series `q<k>:count`.
pub fn write_cloud_releases<W: Write>(releases: &[CloudRelease], out: W) -> Result<(), QueryError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| QueryError::Io(e.to_string());
    w.write_record(["locality", "query", "container_idx", "node", "value", "sigma"])
        .map_err(io)?;
    for r in releases {
        let query = match r.channel {
            Channel::Value => r.query.to_string(),
            Channel::Count => format!("{}:count", r.query),
        };
        w.write_record([
            r.locality.to_string(),
            query,
            r.record.container_index.to_string(),
            r.record.node.to_string(),
            r.record.noisy_value.to_string(),
            r.record.sigma.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| QueryError::Io(e.to_string()))
}
