//! Regular tree networks rooted at the fusion center, attack configurations
//! and concrete Byzantine placements.
//!
//! Levels are 1-based throughout the public API: level 1 holds the children
//! of the fusion center. Nodes inside a level are indexed `0..N_k` so that the
//! parent of node `i` at level `k + 1` is node `i / a_{k+1}` at level `k`.

use num_rational::Rational64;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Level structure of a regular tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeTopology {
    degrees: Vec<u64>,
    node_counts: Vec<u64>,
}

impl TreeTopology {
    /// Builds the tree from per-level degrees `a_1..a_K`, where `a_1` is the
    /// number of children of the fusion center.
    pub fn new(degrees: &[u64]) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::EmptyTopology);
        }
        let mut node_counts = Vec::with_capacity(degrees.len());
        let mut n = 1u64;
        for (i, &a) in degrees.iter().enumerate() {
            if a < 2 {
                return Err(Error::DegreeTooSmall {
                    level: i + 1,
                    degree: a,
                });
            }
            n = n.checked_mul(a).expect("node count overflows u64");
            node_counts.push(n);
        }
        Ok(Self {
            degrees: degrees.to_vec(),
            node_counts,
        })
    }

    /// Depth `K`.
    pub fn depth(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    /// `N_1..N_K`.
    pub fn node_counts(&self) -> &[u64] {
        &self.node_counts
    }

    /// `N_k` for a 1-based level.
    pub fn nodes_at(&self, level: usize) -> Result<u64> {
        self.check_level(level)?;
        Ok(self.node_counts[level - 1])
    }

    /// `N = Σ N_k`.
    pub fn total_nodes(&self) -> u64 {
        self.node_counts.iter().sum()
    }

    /// Smallest `N_{k+1} / N_k` over consecutive levels, `None` for `K = 1`.
    pub fn min_level_ratio(&self) -> Option<u64> {
        self.degrees.iter().skip(1).copied().min()
    }

    /// Number of level-`to` nodes in the subtree of one level-`from` node.
    pub fn subtree_width(&self, from: usize, to: usize) -> u64 {
        debug_assert!(from >= 1 && from <= to && to <= self.depth());
        self.node_counts[to - 1] / self.node_counts[from - 1]
    }

    /// Index of the level-`ancestor_level` ancestor of `node` at `level`.
    pub fn ancestor(&self, level: usize, node: u64, ancestor_level: usize) -> u64 {
        node / self.subtree_width(ancestor_level, level)
    }

    /// Replicates the tree `copies` times under the fusion center.
    pub fn replicate(&self, copies: u64) -> Result<Self> {
        let mut degrees = self.degrees.clone();
        degrees[0] *= copies.max(1);
        Self::new(&degrees)
    }

    pub(crate) fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.depth() {
            Err(Error::LevelOutOfRange {
                level,
                depth: self.depth(),
            })
        } else {
            Ok(())
        }
    }
}

/// Per-level Byzantine counts `B_1..B_K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttackConfig {
    counts: Vec<u64>,
}

impl AttackConfig {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    /// The attack-free configuration for a tree of depth `depth`.
    pub fn honest(depth: usize) -> Self {
        Self {
            counts: vec![0; depth],
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn depth(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Checks shape and per-level caps, not overlap.
    pub fn check_shape(&self, topology: &TreeTopology) -> Result<()> {
        if self.counts.len() != topology.depth() {
            return Err(Error::ShapeMismatch {
                what: "attack configuration",
                expected: topology.depth(),
                found: self.counts.len(),
            });
        }
        for (i, (&b, &n)) in self.counts.iter().zip(topology.node_counts()).enumerate() {
            if b > n {
                return Err(Error::CountExceedsLevel {
                    level: i + 1,
                    count: b,
                    nodes: n,
                });
            }
        }
        Ok(())
    }

    /// Full validity: shape, caps, and placeability without overlap
    /// (cumulative coverage never exceeds one).
    pub fn validate(&self, topology: &TreeTopology) -> Result<()> {
        self.check_shape(topology)?;
        let coverage = self.coverage::<Rational64>(topology)?;
        let one = Rational64::from_integer(1);
        for (i, t) in coverage.iter().enumerate() {
            if *t > one {
                let n = topology.node_counts()[i];
                let before = if i == 0 {
                    Rational64::from_integer(0)
                } else {
                    coverage[i - 1]
                };
                let available = (one - before) * Rational64::from_integer(n as i64);
                return Err(Error::InfeasiblePlacement {
                    level: i + 1,
                    requested: self.counts[i],
                    available: available.to_integer().max(0) as u64,
                });
            }
        }
        Ok(())
    }

    /// `α_k = B_k / N_k` for every level.
    pub fn fractions<T: Scalar>(&self, topology: &TreeTopology) -> Result<Vec<T>> {
        self.check_shape(topology)?;
        Ok(self
            .counts
            .iter()
            .zip(topology.node_counts())
            .map(|(&b, &n)| T::from_ratio(b, n))
            .collect())
    }

    /// Cumulative coverage `t_k = Σ_{j ≤ k} α_j` for every level.
    pub fn coverage<T: Scalar>(&self, topology: &TreeTopology) -> Result<Vec<T>> {
        let alphas = self.fractions::<T>(topology)?;
        Ok(cumulative(&alphas))
    }
}

pub(crate) fn cumulative<T: Scalar>(alphas: &[T]) -> Vec<T> {
    let mut acc = T::zero();
    alphas
        .iter()
        .map(|a| {
            acc = acc.clone() + a.clone();
            acc.clone()
        })
        .collect()
}

/// Fraction of decisions from `level` whose path to the fusion center
/// crosses a Byzantine: `t_k = Σ_{j ≤ k} B_j / N_j`, held exactly.
pub fn coverage_fraction(
    topology: &TreeTopology,
    config: &AttackConfig,
    level: usize,
) -> Result<Rational64> {
    topology.check_level(level)?;
    let coverage = config.coverage::<Rational64>(topology)?;
    Ok(coverage[level - 1])
}

/// Number of corrupted paths from `level` to the fusion center:
/// `Σ_{i ≤ k} B_i · N_k / N_i`.
pub fn corrupted_path_count(
    topology: &TreeTopology,
    config: &AttackConfig,
    level: usize,
) -> Result<u64> {
    topology.check_level(level)?;
    config.check_shape(topology)?;
    Ok(config.counts()[..level]
        .iter()
        .enumerate()
        .map(|(i, &b)| b * topology.subtree_width(i + 1, level))
        .sum())
}

/// Concrete Byzantine node indices per level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackPlacement {
    levels: Vec<Vec<u64>>,
}

impl AttackPlacement {
    /// Builds a placement from explicit per-level node lists and checks it
    /// against the tree: indices in range, no duplicates, no overlap.
    pub fn from_levels(topology: &TreeTopology, mut levels: Vec<Vec<u64>>) -> Result<Self> {
        if levels.len() != topology.depth() {
            return Err(Error::ShapeMismatch {
                what: "placement",
                expected: topology.depth(),
                found: levels.len(),
            });
        }
        for (i, nodes) in levels.iter_mut().enumerate() {
            nodes.sort_unstable();
            nodes.dedup();
            let n = topology.node_counts()[i];
            if let Some(&bad) = nodes.iter().find(|&&x| x >= n) {
                return Err(Error::CountExceedsLevel {
                    level: i + 1,
                    count: bad + 1,
                    nodes: n,
                });
            }
        }
        let placement = Self { levels };
        placement.check_non_overlap(topology)?;
        Ok(placement)
    }

    /// The placement with no Byzantines.
    pub fn honest(topology: &TreeTopology) -> Self {
        Self {
            levels: vec![Vec::new(); topology.depth()],
        }
    }

    /// Sorted Byzantine indices at a 1-based level.
    pub fn byzantines_at(&self, level: usize) -> &[u64] {
        &self.levels[level - 1]
    }

    pub fn levels(&self) -> &[Vec<u64>] {
        &self.levels
    }

    pub fn is_byzantine(&self, level: usize, node: u64) -> bool {
        self.levels[level - 1].binary_search(&node).is_ok()
    }

    pub fn config(&self) -> AttackConfig {
        AttackConfig::new(self.levels.iter().map(|l| l.len() as u64).collect())
    }

    /// Level of the Byzantine on the path from `node` at `level` to the fusion
    /// center (the node itself included), if any.
    pub fn byzantine_on_path(&self, topology: &TreeTopology, level: usize, node: u64) -> Option<usize> {
        (1..=level).find(|&j| self.is_byzantine(j, topology.ancestor(level, node, j)))
    }

    /// For every node, the level of the Byzantine on its path, if any.
    /// Indexed `[level - 1][node]`.
    pub fn path_map(&self, topology: &TreeTopology) -> Vec<Vec<Option<u8>>> {
        let mut out: Vec<Vec<Option<u8>>> = Vec::with_capacity(topology.depth());
        for (k, &n) in topology.node_counts().iter().enumerate() {
            let a = topology.degrees()[k];
            let row: Vec<Option<u8>> = (0..n)
                .map(|i| {
                    let inherited = if k == 0 { None } else { out[k - 1][(i / a) as usize] };
                    inherited.or_else(|| {
                        self.levels[k]
                            .binary_search(&i)
                            .ok()
                            .map(|_| (k + 1) as u8)
                    })
                })
                .collect();
            out.push(row);
        }
        out
    }

    fn check_non_overlap(&self, topology: &TreeTopology) -> Result<()> {
        for level in 2..=topology.depth() {
            for &node in &self.levels[level - 1] {
                let covered = (1..level).any(|j| self.is_byzantine(j, topology.ancestor(level, node, j)));
                if covered {
                    return Err(Error::OverlappingPlacement { level, node });
                }
            }
        }
        Ok(())
    }
}

/// Draws a non-overlapping placement realizing `config`, filling levels
/// top-down and choosing uniformly among nodes outside covered subtrees.
pub fn sample_placement(
    topology: &TreeTopology,
    config: &AttackConfig,
    seed: u64,
) -> Result<AttackPlacement> {
    config.check_shape(topology)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = Vec::with_capacity(topology.depth());
    // covered[i]: node i at the current level has a Byzantine ancestor.
    let mut covered: Vec<bool> = vec![false; topology.node_counts()[0] as usize];
    let mut marked_prev: Vec<bool> = Vec::new();
    for (k, &n) in topology.node_counts().iter().enumerate() {
        if k > 0 {
            let a = topology.degrees()[k];
            covered = (0..n)
                .map(|i| {
                    let p = (i / a) as usize;
                    covered[p] || marked_prev[p]
                })
                .collect();
        }
        let free: Vec<u64> = (0..n).filter(|&i| !covered[i as usize]).collect();
        let want = config.counts()[k];
        if want > free.len() as u64 {
            return Err(Error::InfeasiblePlacement {
                level: k + 1,
                requested: want,
                available: free.len() as u64,
            });
        }
        let mut chosen: Vec<u64> = index::sample(&mut rng, free.len(), want as usize)
            .into_iter()
            .map(|j| free[j])
            .collect();
        chosen.sort_unstable();
        marked_prev = vec![false; n as usize];
        for &c in &chosen {
            marked_prev[c as usize] = true;
        }
        levels.push(chosen);
    }
    Ok(AttackPlacement { levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(d: &[u64]) -> TreeTopology {
        TreeTopology::new(d).unwrap()
    }

    #[test]
    fn node_counts_multiply() {
        let t = tree(&[2, 3, 2]);
        assert_eq!(t.node_counts(), &[2, 6, 12]);
        assert_eq!(t.total_nodes(), 20);
        assert_eq!(tree(&[2]).node_counts(), &[2]);
        assert_eq!(tree(&[2]).total_nodes(), 2);
        let t = tree(&[3, 3]);
        assert_eq!(t.node_counts(), &[3, 9]);
        assert_eq!(t.total_nodes(), 12);
    }

    #[test]
    fn rejects_bad_degrees() {
        assert_eq!(TreeTopology::new(&[]), Err(Error::EmptyTopology));
        assert_eq!(
            TreeTopology::new(&[2, 1, 3]),
            Err(Error::DegreeTooSmall { level: 2, degree: 1 })
        );
    }

    #[test]
    fn coverage_examples() {
        let t = tree(&[2, 3, 2]);
        let c = AttackConfig::new(vec![1, 0, 0]);
        assert_eq!(coverage_fraction(&t, &c, 3).unwrap(), Rational64::new(1, 2));
        let z = AttackConfig::honest(3);
        for k in 1..=3 {
            assert_eq!(coverage_fraction(&t, &z, k).unwrap(), Rational64::from_integer(0));
        }
        let t = tree(&[6, 2]);
        let c = AttackConfig::new(vec![2, 1]);
        assert_eq!(coverage_fraction(&t, &c, 2).unwrap(), Rational64::new(5, 12));
    }

    #[test]
    fn coverage_errors() {
        let t = tree(&[2, 3, 2]);
        let c = AttackConfig::new(vec![1, 0, 0]);
        assert!(matches!(coverage_fraction(&t, &c, 0), Err(Error::LevelOutOfRange { .. })));
        assert!(matches!(coverage_fraction(&t, &c, 4), Err(Error::LevelOutOfRange { .. })));
        let short = AttackConfig::new(vec![1, 0]);
        assert!(matches!(coverage_fraction(&t, &short, 1), Err(Error::ShapeMismatch { .. })));
        let over = AttackConfig::new(vec![3, 0, 0]);
        assert!(matches!(coverage_fraction(&t, &over, 1), Err(Error::CountExceedsLevel { .. })));
    }

    #[test]
    fn corrupted_paths() {
        let t = tree(&[2, 3, 2]);
        assert_eq!(corrupted_path_count(&t, &AttackConfig::new(vec![1, 0, 0]), 3).unwrap(), 6);
        assert_eq!(corrupted_path_count(&t, &AttackConfig::honest(3), 3).unwrap(), 0);
        assert_eq!(corrupted_path_count(&t, &AttackConfig::new(vec![0, 2, 0]), 2).unwrap(), 2);
    }

    #[test]
    fn forced_placements() {
        let t = tree(&[2, 3, 2]);
        for seed in 0..5 {
            let p = sample_placement(&t, &AttackConfig::new(vec![2, 0, 0]), seed).unwrap();
            assert_eq!(p.byzantines_at(1), &[0, 1]);
            let p = sample_placement(&t, &AttackConfig::new(vec![1, 3, 0]), seed).unwrap();
            let parent = 1 - p.byzantines_at(1)[0];
            assert_eq!(p.byzantines_at(2).len(), 3);
            assert!(p.byzantines_at(2).iter().all(|&i| i / 3 == parent));
        }
        let err = sample_placement(&t, &AttackConfig::new(vec![2, 1, 0]), 0).unwrap_err();
        assert_eq!(
            err,
            Error::InfeasiblePlacement {
                level: 2,
                requested: 1,
                available: 0
            }
        );
        assert!(AttackConfig::new(vec![2, 1, 0]).validate(&t).is_err());
    }

    #[test]
    fn placement_is_deterministic() {
        let t = tree(&[4, 3, 2]);
        let c = AttackConfig::new(vec![1, 2, 3]);
        assert_eq!(sample_placement(&t, &c, 9).unwrap(), sample_placement(&t, &c, 9).unwrap());
    }

    #[test]
    fn from_levels_rejects_overlap() {
        let t = tree(&[2, 3]);
        let err = AttackPlacement::from_levels(&t, vec![vec![0], vec![1]]).unwrap_err();
        assert_eq!(err, Error::OverlappingPlacement { level: 2, node: 1 });
        assert!(AttackPlacement::from_levels(&t, vec![vec![0], vec![3, 5]]).is_ok());
    }

    #[test]
    fn path_map_matches_walk() {
        let t = tree(&[3, 2, 2]);
        let p = sample_placement(&t, &AttackConfig::new(vec![1, 1, 2]), 4).unwrap();
        let map = p.path_map(&t);
        for level in 1..=3 {
            for node in 0..t.node_counts()[level - 1] {
                assert_eq!(
                    map[level - 1][node as usize].map(usize::from),
                    p.byzantine_on_path(&t, level, node)
                );
            }
        }
    }

    #[test]
    fn replicate_scales_first_level() {
        let t = tree(&[5, 2]).replicate(3).unwrap();
        assert_eq!(t.node_counts(), &[15, 30]);
    }
}
