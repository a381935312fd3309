use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, FitError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Fraction of features drawn at each node, rounded up, at least one.
    pub features_per_split: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            features_per_split: 1.0,
        }
    }
}

impl TreeParams {
    pub(crate) fn validate(&self) -> Result<(), FitError> {
        if !(self.features_per_split > 0.0 && self.features_per_split <= 1.0) {
            return Err(FitError::Param(format!(
                "features_per_split {} not in (0, 1]",
                self.features_per_split
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(FitError::Param("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }

    fn features_drawn(&self, n_features: usize) -> usize {
        ((self.features_per_split * n_features as f64).ceil() as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// `nodes[0]` is the root.
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
    pub params: TreeParams,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], idx: usize) -> usize {
            match &nodes[idx] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Candidate {
    cost: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.cost < o.cost
                    || (self.cost == o.cost
                        && (self.feature, self.threshold).partial_cmp(&(o.feature, o.threshold))
                            == Some(std::cmp::Ordering::Less))
            }
        }
    }
}

/// Best variance-reduction split on one feature. `cost` is the summed squared error of
/// the two children.
fn best_split_on(
    x: &[Vec<f64>],
    y: &[f64],
    samples: &[usize],
    feature: usize,
    shift: f64,
    min_leaf: usize,
    pairs: &mut Vec<(f64, f64)>,
) -> Option<Candidate> {
    pairs.clear();
    pairs.extend(samples.iter().map(|&i| (x[i][feature], y[i] - shift)));
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let (total, total_sq) = pairs.iter().fold((0.0, 0.0), |(s, q), &(_, v)| (s + v, q + v * v));

    let mut best: Option<Candidate> = None;
    let (mut left_sum, mut left_sq) = (0.0, 0.0);
    for i in 1..n {
        let v = pairs[i - 1].1;
        left_sum += v;
        left_sq += v * v;
        let (lo, hi) = (pairs[i - 1].0, pairs[i].0);
        if lo == hi || i < min_leaf || n - i < min_leaf {
            continue;
        }
        let nl = i as f64;
        let nr = (n - i) as f64;
        let right_sum = total - left_sum;
        let right_sq = total_sq - left_sq;
        let cost = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
        let mut threshold = lo + (hi - lo) / 2.0;
        if threshold >= hi {
            threshold = lo;
        }
        let cand = Candidate {
            cost,
            feature,
            threshold,
        };
        if cand.beats(&best) {
            best = Some(cand);
        }
    }
    best
}

/// Fits a CART regression tree by greedy variance reduction.
///
/// At each node a random subset of features is searched; thresholds are midpoints between
/// consecutive distinct values. Ties go to the lowest feature index, then the lowest
/// threshold. If no drawn feature admits a split, the remaining features are tried before
/// the node becomes a leaf.
pub fn fit_tree<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[f64],
    params: &TreeParams,
    rng: &mut R,
) -> Result<RegressionTree, FitError> {
    let n_features = check_xy(x, y)?;
    params.validate()?;
    let all: Vec<usize> = (0..x.len()).collect();
    Ok(fit_tree_on(x, y, &all, n_features, params, rng))
}

/// Fits on the multiset of row indices `samples` (used for bootstrap resamples).
pub(crate) fn fit_tree_on<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[f64],
    samples: &[usize],
    n_features: usize,
    params: &TreeParams,
    rng: &mut R,
) -> RegressionTree {
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, samples.to_vec(), 0)];
    let mut pairs = Vec::with_capacity(samples.len());
    let k = params.features_drawn(n_features);

    while let Some((node, idx, depth)) = stack.pop() {
        let first = y[idx[0]];
        let pure = idx.iter().all(|&i| y[i] == first);
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        let leaf_value = if pure { first } else { mean };
        let stop = pure
            || idx.len() < params.min_samples_split
            || params.max_depth.is_some_and(|d| depth >= d)
            || n_features == 0;
        if stop {
            nodes[node] = TreeNode::Leaf { value: leaf_value };
            continue;
        }

        let order: Vec<usize> = sample(rng, n_features, n_features).into_vec();
        let (drawn, rest) = order.split_at(k);
        let mut best: Option<Candidate> = None;
        for group in [drawn, rest] {
            let mut features = group.to_vec();
            features.sort_unstable();
            for f in features {
                if let Some(c) = best_split_on(x, y, &idx, f, mean, params.min_samples_leaf, &mut pairs) {
                    if c.beats(&best) {
                        best = Some(c);
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }

        let Some(split) = best else {
            nodes[node] = TreeNode::Leaf { value: leaf_value };
            continue;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes[node] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        // Right pushed first so the left subtree is expanded first.
        stack.push((right, right_idx, depth + 1));
        stack.push((left, left_idx, depth + 1));
    }

    RegressionTree {
        nodes,
        n_features,
        params: params.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_target_is_single_leaf() {
        let x = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let y = vec![5.0, 5.0, 5.0];
        let tree = fit_tree(&x, &y, &TreeParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(tree.nodes, vec![TreeNode::Leaf { value: 5.0 }]);
        assert_eq!(tree.predict(&[100.0, -3.0]), 5.0);
    }

    #[test]
    fn separable_pair() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![0.0, 10.0];
        let tree = fit_tree(&x, &y, &TreeParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        match &tree.nodes[0] {
            TreeNode::Split { threshold, .. } => assert!(*threshold > 0.0 && *threshold < 1.0),
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.predict(&[0.0]), 0.0);
        assert_eq!(tree.predict(&[1.0]), 10.0);
    }

    #[test]
    fn dimension_mismatch() {
        let x = vec![vec![0.0], vec![1.0]];
        let err = fit_tree(&x, &[1.0], &TreeParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, FitError::DimensionMismatch { rows: 2, targets: 1 });
        assert_eq!(
            fit_tree(&[], &[], &TreeParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err(),
            FitError::Empty
        );
    }

    #[test]
    fn depth_limit_respected() {
        let x: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..32).map(|i| (i * i) as f64).collect();
        let params = TreeParams {
            max_depth: Some(2),
            ..TreeParams::default()
        };
        let tree = fit_tree(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(tree.depth() <= 2);
        assert!(tree.n_leaves() <= 4);
    }

    #[test]
    fn equal_gain_prefers_lowest_feature() {
        // Both features separate the targets identically.
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let y = vec![1.0, 2.0];
        let tree = fit_tree(&x, &y, &TreeParams::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(matches!(tree.nodes[0], TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn min_samples_leaf_bounds_leaf_size() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| (i % 7) as f64).collect();
        let params = TreeParams {
            min_samples_leaf: 5,
            ..TreeParams::default()
        };
        let tree = fit_tree(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for row in &x {
            let mut idx = 0;
            while let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } = &tree.nodes[idx]
            {
                idx = if row[*feature] <= *threshold { *left } else { *right };
            }
            *counts.entry(idx).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 5));
    }
}
