use std::fmt;

use super::{DpError, NoiseSampler, TreeNode};

/// A released node: a dyadic tree node, or the container's shadow bridge
/// over its second half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Tree(TreeNode),
    Shadow,
}

impl NodeRef {
    /// 0-based half-open leaf range covered in a container of `n` leaves.
    pub fn leaf_range(&self, n: u64) -> (u64, u64) {
        match self {
            NodeRef::Tree(t) => t.leaf_range(n),
            NodeRef::Shadow => (n / 2, n),
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Tree(t) => write!(f, "{}:{}", t.depth, t.position),
            NodeRef::Shadow => f.write_str("shadow"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReleaseRecord {
    pub container_index: u64,
    pub node: NodeRef,
    pub noisy_value: f64,
    /// Standard deviation of the noise added to this value.
    pub sigma: f64,
}

/// Running state of the binary-tree mechanism over one container of `n`
/// leaves, reused across containers.
///
/// `path_sums[l]` accumulates the incomplete level-`l` node on the current
/// root-to-leaf path (level 0 = leaves, level `h` = root).
#[derive(Debug, Clone)]
pub struct BinaryTree {
    n: u64,
    height: u32,
    leaf_idx: u64,
    path_sums: Vec<f64>,
    shadow_sum: f64,
    container_index: u64,
    noise: NoiseSampler,
}

impl BinaryTree {
    pub fn new(n: u64, noise: NoiseSampler) -> Result<Self, DpError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(DpError::InvalidTreeSize(n));
        }
        let height = n.trailing_zeros();
        Ok(BinaryTree {
            n,
            height,
            leaf_idx: 0,
            path_sums: vec![0.0; height as usize + 1],
            shadow_sum: 0.0,
            container_index: 0,
            noise,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn leaf_idx(&self) -> u64 {
        self.leaf_idx
    }

    pub fn container_index(&self) -> u64 {
        self.container_index
    }

    pub fn shadow_sum(&self) -> f64 {
        self.shadow_sum
    }

    /// Running partial sums currently holding data.
    pub fn path_sums(&self) -> &[f64] {
        &self.path_sums
    }

    /// Number of partial-sum counters with at least one leaf accumulated.
    pub fn open_counters(&self) -> usize {
        (0..=self.height)
            .filter(|&l| self.leaf_idx % (1u64 << l) != 0)
            .count()
    }

    pub fn sigma(&self) -> f64 {
        self.noise.std_dev()
    }

    fn release(&mut self, node: NodeRef, value: f64) -> ReleaseRecord {
        ReleaseRecord {
            container_index: self.container_index,
            node,
            noisy_value: value + self.noise.sample(),
            sigma: self.noise.std_dev(),
        }
    }

    /// Adds the next leaf and releases every node whose subtree it completes,
    /// leaf first.
    pub fn add_leaf(&mut self, y: f64) -> Result<Vec<ReleaseRecord>, DpError> {
        if self.leaf_idx >= self.n {
            return Err(DpError::ContainerFull(self.n));
        }
        let t = self.leaf_idx;
        for s in &mut self.path_sums {
            *s += y;
        }
        if t >= self.n / 2 {
            self.shadow_sum += y;
        }
        let mut out = Vec::new();
        for level in 0..=self.height {
            if (t + 1) % (1u64 << level) != 0 {
                break;
            }
            let node = TreeNode {
                depth: self.height - level,
                position: t >> level,
            };
            let value = std::mem::take(&mut self.path_sums[level as usize]);
            out.push(self.release(NodeRef::Tree(node), value));
        }
        self.leaf_idx += 1;
        Ok(out)
    }

    /// Releases the shadow bridge, destroys all raw state and moves to the
    /// next container.
    pub fn container_end(&mut self) -> Result<ReleaseRecord, DpError> {
        if self.leaf_idx != self.n {
            return Err(DpError::PrematureContainerEnd {
                filled: self.leaf_idx,
                n: self.n,
            });
        }
        let shadow = self.shadow_sum;
        let rec = self.release(NodeRef::Shadow, shadow);
        self.path_sums.iter_mut().for_each(|s| *s = 0.0);
        self.shadow_sum = 0.0;
        self.leaf_idx = 0;
        self.container_index += 1;
        Ok(rec)
    }

    /// Adds a leaf and, if it was the last one, also closes the container.
    pub fn push(&mut self, y: f64) -> Result<Vec<ReleaseRecord>, DpError> {
        let mut out = self.add_leaf(y)?;
        if self.leaf_idx == self.n {
            out.push(self.container_end()?);
        }
        Ok(out)
    }
}
