use std::collections::BTreeMap;
use std::io::Write;

use super::{canonical_decompose, DpError, NodeRef, ReleaseRecord, TreeNode};

/// Every release of one tree mechanism, indexed by (container, node).
#[derive(Debug, Clone)]
pub struct ReleaseLog {
    n: u64,
    records: BTreeMap<(u64, NodeRef), ReleaseRecord>,
}

impl ReleaseLog {
    pub fn new(n: u64) -> Self {
        ReleaseLog {
            n,
            records: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, r: ReleaseRecord) {
        self.records.insert((r.container_index, r.node), r);
    }

    pub fn extend(&mut self, rs: impl IntoIterator<Item = ReleaseRecord>) {
        for r in rs {
            self.push(r);
        }
    }

    pub fn get(&self, container: u64, node: NodeRef) -> Option<&ReleaseRecord> {
        self.records.get(&(container, node))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReleaseRecord> {
        self.records.values()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Sum of the noise variances of the releases used.
    pub variance_bound: f64,
    pub nodes: Vec<(u64, NodeRef)>,
}

/// Estimates the sum over AWs `first..=last` (0-based, counted from the
/// first container) from released values only.
///
/// Each container touched contributes its canonical decomposition; the
/// second-half node is replaced by the shadow bridge when one was released.
pub fn estimate_interval(log: &ReleaseLog, first: u64, last: u64) -> Result<Estimate, DpError> {
    let n = log.n;
    if first > last {
        return Err(DpError::BadInterval {
            i: first + 1,
            j: last + 1,
            n,
        });
    }
    let second_half = TreeNode {
        depth: 1,
        position: 1,
    };
    let mut est = Estimate {
        value: 0.0,
        variance_bound: 0.0,
        nodes: Vec::new(),
    };
    for c in first / n..=last / n {
        let lo = first.max(c * n) - c * n;
        let hi = last.min(c * n + n - 1) - c * n;
        for node in canonical_decompose(lo + 1, hi + 1, n)? {
            let mut key = NodeRef::Tree(node);
            if node == second_half && log.get(c, NodeRef::Shadow).is_some() {
                key = NodeRef::Shadow;
            }
            let r = log.get(c, key).ok_or(DpError::MissingRelease {
                container: c,
                node: key,
            })?;
            est.value += r.noisy_value;
            est.variance_bound += r.sigma * r.sigma;
            est.nodes.push((c, key));
        }
    }
    Ok(est)
}

/// Writes `container_index,node_depth,node_position,noisy_value,sigma` rows;
/// shadow bridges have an empty depth and position `shadow`.
pub fn write_release_log<W: Write>(log: &ReleaseLog, out: W) -> Result<(), DpError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DpError::Io(e.to_string());
    w.write_record(["container_index", "node_depth", "node_position", "noisy_value", "sigma"])
        .map_err(io)?;
    for r in log.iter() {
        let (depth, pos) = match r.node {
            NodeRef::Tree(t) => (t.depth.to_string(), t.position.to_string()),
            NodeRef::Shadow => (String::new(), "shadow".to_owned()),
        };
        w.write_record([
            r.container_index.to_string(),
            depth,
            pos,
            r.noisy_value.to_string(),
            r.sigma.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| DpError::Io(e.to_string()))
}
