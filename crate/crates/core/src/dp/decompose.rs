use super::DpError;

/// A node of the complete binary tree over `N` leaves; depth 0 is the root
/// and `position` counts nodes left to right within a depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeNode {
    pub depth: u32,
    pub position: u64,
}

impl TreeNode {
    pub const ROOT: TreeNode = TreeNode {
        depth: 0,
        position: 0,
    };

    /// 0-based half-open leaf range.
    pub fn leaf_range(&self, n: u64) -> (u64, u64) {
        let width = n >> self.depth;
        (self.position * width, (self.position + 1) * width)
    }

    pub fn children(&self) -> [TreeNode; 2] {
        let d = self.depth + 1;
        [
            TreeNode {
                depth: d,
                position: 2 * self.position,
            },
            TreeNode {
                depth: d,
                position: 2 * self.position + 1,
            },
        ]
    }
}

/// Worst-case canonical decomposition size `V(N)`.
pub fn canonical_size_bound(n: u64) -> usize {
    let h = n.trailing_zeros() as usize;
    if h <= 1 {
        1
    } else {
        2 * (h - 1)
    }
}

/// Minimal set of tree nodes whose leaves partition `[i, j]` (1-based,
/// inclusive), ordered left to right.
pub fn canonical_decompose(i: u64, j: u64, n: u64) -> Result<Vec<TreeNode>, DpError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(DpError::InvalidTreeSize(n));
    }
    if i < 1 || i > j || j > n {
        return Err(DpError::BadInterval { i, j, n });
    }
    let mut out = Vec::new();
    cover(TreeNode::ROOT, i - 1, j, n, &mut out);
    Ok(out)
}

fn cover(node: TreeNode, lo: u64, hi: u64, n: u64, out: &mut Vec<TreeNode>) {
    let (a, b) = node.leaf_range(n);
    if b <= lo || a >= hi {
        return;
    }
    if lo <= a && b <= hi {
        out.push(node);
        return;
    }
    for c in node.children() {
        cover(c, lo, hi, n, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_nodes(n: u64) -> Vec<TreeNode> {
        let h = n.trailing_zeros();
        (0..=h)
            .flat_map(|d| (0..1u64 << d).map(move |p| TreeNode { depth: d, position: p }))
            .collect()
    }

    /// Smallest subset of nodes whose leaf sets partition `[i, j]`, by
    /// enumerating every subset.
    fn exhaustive_min_cover(i: u64, j: u64, n: u64) -> usize {
        let nodes = all_nodes(n);
        let target: u64 = ((i - 1)..j).map(|l| 1u64 << l).sum();
        let masks: Vec<u64> = nodes
            .iter()
            .map(|t| {
                let (a, b) = t.leaf_range(n);
                (a..b).map(|l| 1u64 << l).sum()
            })
            .collect();
        let mut best = usize::MAX;
        for subset in 1u64..(1 << nodes.len()) {
            let mut acc = 0u64;
            let mut ok = true;
            for (k, m) in masks.iter().enumerate() {
                if subset >> k & 1 == 1 {
                    if acc & m != 0 {
                        ok = false;
                        break;
                    }
                    acc |= m;
                }
            }
            if ok && acc == target {
                best = best.min(subset.count_ones() as usize);
            }
        }
        best
    }

    #[test]
    fn whole_container_is_root() {
        for n in [2, 4, 8, 64] {
            assert_eq!(canonical_decompose(1, n, n).unwrap(), vec![TreeNode::ROOT]);
        }
    }

    #[test]
    fn prefix_one_to_five() {
        let got = canonical_decompose(1, 5, 8).unwrap();
        assert_eq!(
            got,
            vec![
                TreeNode { depth: 1, position: 0 },
                TreeNode { depth: 3, position: 4 },
            ]
        );
    }

    #[test]
    fn two_to_five() {
        let got = canonical_decompose(2, 5, 8).unwrap();
        assert_eq!(
            got,
            vec![
                TreeNode { depth: 3, position: 1 },
                TreeNode { depth: 2, position: 1 },
                TreeNode { depth: 3, position: 4 },
            ]
        );
        assert!(got.len() <= canonical_size_bound(8));
    }

    #[test]
    fn matches_exhaustive_search() {
        for n in [2u64, 4, 8] {
            for i in 1..=n {
                for j in i..=n {
                    let got = canonical_decompose(i, j, n).unwrap().len();
                    assert_eq!(got, exhaustive_min_cover(i, j, n), "N={n} [{i},{j}]");
                }
            }
        }
    }

    #[test]
    fn bounds() {
        assert_eq!(canonical_size_bound(2), 1);
        assert_eq!(canonical_size_bound(4), 2);
        assert_eq!(canonical_size_bound(8), 4);
        assert_eq!(canonical_size_bound(256), 14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(canonical_decompose(0, 3, 8).is_err());
        assert!(canonical_decompose(4, 3, 8).is_err());
        assert!(canonical_decompose(1, 9, 8).is_err());
        assert!(canonical_decompose(1, 3, 6).is_err());
    }
}
