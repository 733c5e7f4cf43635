//! Output-buffer sniffing on a grid city.
//!
//! Every intersection runs a node whose output buffer holds the activity of
//! the current EC window; windows rotate on a global schedule with period
//! `maxEC`. An attacker moving through the city reads each buffer it passes.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("intensity must be non-negative and finite, got {0}")]
    Intensity(f64),
    #[error("maxEC must be positive, got {0}")]
    MaxEc(f64),
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
    #[error("intersection {0} out of range")]
    NodeOutOfRange(usize),
    #[error("cannot write sweep: {0}")]
    Io(String),
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct CityGrid {
    pub rows: usize,
    pub cols: usize,
    /// Distance between adjacent rows (avenue blocks), meters.
    pub row_spacing: f64,
    /// Distance between adjacent columns (street blocks), meters.
    pub col_spacing: f64,
    pub hub: NodeId,
}

impl Default for CityGrid {
    /// 18 x 30 = 540 intersections over roughly 3.3 x 3.4 km, hub in the
    /// middle.
    fn default() -> Self {
        CityGrid::new(18, 30, 195.0, 117.0).expect("default grid is valid")
    }
}

impl CityGrid {
    pub fn new(rows: usize, cols: usize, row_spacing: f64, col_spacing: f64) -> Result<Self, AttackError> {
        if rows == 0 || cols == 0 {
            return Err(AttackError::Grid(format!("{rows}x{cols}")));
        }
        if !(row_spacing > 0.0 && col_spacing > 0.0 && row_spacing.is_finite() && col_spacing.is_finite()) {
            return Err(AttackError::Grid("block lengths must be positive".into()));
        }
        Ok(CityGrid {
            rows,
            cols,
            row_spacing,
            col_spacing,
            hub: (rows / 2) * cols + cols / 2,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, v: NodeId) -> (usize, usize) {
        (v / self.cols, v % self.cols)
    }

    /// Position in meters, `(x, y)`.
    pub fn position(&self, v: NodeId) -> (f64, f64) {
        let (r, c) = self.coords(v);
        (c as f64 * self.col_spacing, r as f64 * self.row_spacing)
    }

    pub fn neighbors(&self, v: NodeId) -> Vec<NodeId> {
        let (r, c) = self.coords(v);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(v - self.cols);
        }
        if c > 0 {
            out.push(v - 1);
        }
        if c + 1 < self.cols {
            out.push(v + 1);
        }
        if r + 1 < self.rows {
            out.push(v + self.cols);
        }
        out
    }

    pub fn edge_length(&self, a: NodeId, b: NodeId) -> f64 {
        let ((ra, _), (rb, _)) = (self.coords(a), self.coords(b));
        if ra == rb {
            self.col_spacing
        } else {
            self.row_spacing
        }
    }

    /// Shortest street distance (Manhattan on the grid).
    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let ((ra, ca), (rb, cb)) = (self.coords(a), self.coords(b));
        ra.abs_diff(rb) as f64 * self.row_spacing + ca.abs_diff(cb) as f64 * self.col_spacing
    }

    /// Radial weighting: `1 + peak * exp(-d^2 / (2 radius^2))` with `d` the
    /// straight-line distance to the hub.
    pub fn hub_weights(&self, peak: f64, radius: f64) -> Vec<f64> {
        let (hx, hy) = self.position(self.hub);
        (0..self.len())
            .map(|v| {
                let (x, y) = self.position(v);
                let d2 = (x - hx).powi(2) + (y - hy).powi(2);
                1.0 + peak * (-d2 / (2.0 * radius * radius)).exp()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    /// Mean people present at an intersection of weight 1.
    pub intensity: f64,
    pub hub_peak: f64,
    pub hub_radius: f64,
    /// Per-minute random modulation is uniform on `[1 - f, 1 + f]`.
    pub fluctuation: f64,
    pub duration: u64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            intensity: 1.0,
            hub_peak: 4.0,
            hub_radius: 800.0,
            fluctuation: 0.5,
            duration: 3600,
        }
    }
}

/// Presence per intersection at 1 s resolution, stored as prefix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Traffic {
    pub duration: u64,
    prefix: Vec<Vec<f64>>,
}

impl Traffic {
    /// Person-seconds at `v` over `(a, b]`, linear within a second.
    pub fn activity(&self, v: NodeId, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.cumulative(v, b) - self.cumulative(v, a)
    }

    fn cumulative(&self, v: NodeId, t: f64) -> f64 {
        let p = &self.prefix[v];
        let t = t.clamp(0.0, self.duration as f64);
        let s = (t.floor() as usize).min(p.len() - 2);
        p[s] + (t - s as f64) * (p[s + 1] - p[s])
    }

    pub fn node_total(&self, v: NodeId) -> f64 {
        *self.prefix[v].last().expect("prefix is non-empty")
    }

    pub fn total(&self) -> f64 {
        (0..self.prefix.len()).map(|v| self.node_total(v)).sum()
    }
}

pub fn generate_traffic(grid: &CityGrid, cfg: &TrafficConfig, seed: u64) -> Result<Traffic, AttackError> {
    if !(cfg.intensity.is_finite() && cfg.intensity >= 0.0) {
        return Err(AttackError::Intensity(cfg.intensity));
    }
    if cfg.duration == 0 || !(0.0..=1.0).contains(&cfg.fluctuation) {
        return Err(AttackError::Grid("duration must be positive and fluctuation in [0,1]".into()));
    }
    let weights = grid.hub_weights(cfg.hub_peak, cfg.hub_radius);
    let minutes = cfg.duration.div_ceil(60) as usize;
    let prefix = weights
        .iter()
        .enumerate()
        .map(|(v, &w)| {
            let mut rng = rng_from_seed(derive_seed(seed, v as u64));
            let factors: Vec<f64> = (0..minutes)
                .map(|_| 1.0 + cfg.fluctuation * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            let mut p = Vec::with_capacity(cfg.duration as usize + 1);
            let mut acc = 0.0;
            p.push(acc);
            for s in 0..cfg.duration as usize {
                acc += cfg.intensity * w * factors[s / 60];
                p.push(acc);
            }
            p
        })
        .collect();
    Ok(Traffic {
        duration: cfg.duration,
        prefix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProfileKind {
    Pedestrian,
    Cyclist,
    Car,
    Static,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 4] = [
        ProfileKind::Pedestrian,
        ProfileKind::Cyclist,
        ProfileKind::Car,
        ProfileKind::Static,
    ];

    pub fn default_speed(self) -> f64 {
        match self {
            ProfileKind::Pedestrian => 1.3,
            ProfileKind::Cyclist => 5.4,
            ProfileKind::Car => 13.4,
            ProfileKind::Static => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileKind::Pedestrian => "pedestrian",
            ProfileKind::Cyclist => "cyclist",
            ProfileKind::Car => "car",
            ProfileKind::Static => "static",
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProfileKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AttackError::UnknownProfile(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackerProfile {
    pub kind: ProfileKind,
    pub speed: f64,
    pub start: NodeId,
}

impl AttackerProfile {
    pub fn new(kind: ProfileKind, start: NodeId) -> Self {
        AttackerProfile {
            kind,
            speed: kind.default_speed(),
            start,
        }
    }

    pub fn is_static(&self) -> bool {
        self.kind == ProfileKind::Static || self.speed <= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visit {
    pub node: NodeId,
    pub time: f64,
}

/// Greedy tour: from each intersection, head for the closest one not yet
/// visited in the current EC window (ties: least recently visited, then
/// lowest id), one edge at a time. A static profile stays at its start.
pub fn greedy_route(grid: &CityGrid, profile: &AttackerProfile, duration: f64, max_ec: f64) -> Result<Vec<Visit>, AttackError> {
    if !(max_ec > 0.0) {
        return Err(AttackError::MaxEc(max_ec));
    }
    if profile.start >= grid.len() {
        return Err(AttackError::NodeOutOfRange(profile.start));
    }
    let mut route = vec![Visit {
        node: profile.start,
        time: 0.0,
    }];
    if profile.is_static() || grid.len() == 1 {
        return Ok(route);
    }
    let n = grid.len();
    let mut last_visit = vec![f64::NEG_INFINITY; n];
    let mut window_seen = vec![false; n];
    let mut window = 0u64;
    let (mut at, mut t) = (profile.start, 0.0);
    last_visit[at] = 0.0;
    window_seen[at] = true;
    loop {
        let target = (0..n)
            .filter(|&v| !window_seen[v])
            .min_by(|&a, &b| {
                let key = |v: usize| (grid.distance(at, v), last_visit[v]);
                key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b))
            });
        // Everything seen this window: revisit the stalest neighbor.
        let target = target.unwrap_or_else(|| {
            *grid
                .neighbors(at)
                .iter()
                .min_by(|&&a, &&b| last_visit[a].partial_cmp(&last_visit[b]).unwrap().then(a.cmp(&b)))
                .expect("grid has more than one node")
        });
        let d = grid.distance(at, target);
        let next = grid
            .neighbors(at)
            .into_iter()
            .filter(|&w| (grid.distance(w, target) + grid.edge_length(at, w) - d).abs() < 1e-6)
            .min_by(|&a, &b| {
                let key = |v: usize| (window_seen[v], last_visit[v]);
                key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b))
            })
            .expect("a shortest-path neighbor exists");
        let arrival = t + grid.edge_length(at, next) / profile.speed;
        if arrival > duration {
            return Ok(route);
        }
        let w = (arrival / max_ec).floor() as u64;
        if w != window {
            window = w;
            window_seen.iter_mut().for_each(|s| *s = false);
        }
        at = next;
        t = arrival;
        window_seen[at] = true;
        last_visit[at] = t;
        route.push(Visit { node: at, time: t });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureLog {
    pub captured: f64,
    pub total: f64,
    pub visited: BTreeSet<NodeId>,
}

impl CaptureLog {
    pub fn fraction(&self) -> f64 {
        if self.total > 0.0 {
            self.captured / self.total
        } else {
            0.0
        }
    }
}

/// Replays the attacker's route over the traffic. On arrival at `t` it reads
/// the buffer's activity over `(max(window start, last read there), t]`. A
/// static attacker reads its node continuously.
pub fn run_attack(
    grid: &CityGrid,
    traffic: &Traffic,
    profile: &AttackerProfile,
    max_ec: f64,
) -> Result<CaptureLog, AttackError> {
    let duration = traffic.duration as f64;
    let route = greedy_route(grid, profile, duration, max_ec)?;
    let total = traffic.total();
    if profile.is_static() {
        return Ok(CaptureLog {
            captured: traffic.node_total(profile.start),
            total,
            visited: BTreeSet::from([profile.start]),
        });
    }
    let mut last_read = vec![0.0f64; grid.len()];
    let mut captured = 0.0;
    let mut visited = BTreeSet::new();
    for v in &route {
        let window_start = (v.time / max_ec).floor() * max_ec;
        let from = window_start.max(last_read[v.node]);
        captured += traffic.activity(v.node, from, v.time);
        last_read[v.node] = v.time;
        visited.insert(v.node);
    }
    Ok(CaptureLog {
        captured,
        total,
        visited,
    })
}

pub const DEFAULT_MAX_EC_SWEEP: [u64; 6] = [30, 60, 120, 180, 240, 300];

#[derive(Debug, Clone, PartialEq)]
pub struct SniffRow {
    pub profile: ProfileKind,
    pub max_ec_seconds: u64,
    pub capture_fraction: f64,
    pub intersections_visited: usize,
}

/// Every profile (starting at the hub) against every `maxEC`.
pub fn sniff_sweep(
    grid: &CityGrid,
    traffic: &Traffic,
    profiles: &[AttackerProfile],
    max_ecs: &[u64],
) -> Result<Vec<SniffRow>, AttackError> {
    use rayon::prelude::*;
    let cells: Vec<(AttackerProfile, u64)> = profiles
        .iter()
        .flat_map(|p| max_ecs.iter().map(move |&m| (*p, m)))
        .collect();
    cells
        .par_iter()
        .map(|(p, m)| {
            let log = run_attack(grid, traffic, p, *m as f64)?;
            Ok(SniffRow {
                profile: p.kind,
                max_ec_seconds: *m,
                capture_fraction: log.fraction(),
                intersections_visited: log.visited.len(),
            })
        })
        .collect()
}

pub fn write_sniff_csv<W: Write>(rows: &[SniffRow], out: W) -> Result<(), AttackError> {
    let err = |e: csv::Error| AttackError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["profile", "max_ec_seconds", "capture_fraction", "intersections_visited"])
        .map_err(err)?;
    for r in rows {
        w.write_record([
            r.profile.to_string(),
            r.max_ec_seconds.to_string(),
            r.capture_fraction.to_string(),
            r.intersections_visited.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| AttackError::Io(e.to_string()))
}
