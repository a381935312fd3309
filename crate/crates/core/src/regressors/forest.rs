use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_on, RegressionTree, TreeParams};
use super::{check_xy, FitError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub features_per_split: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            features_per_split: 1.0 / 3.0,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            min_samples_split: self.min_samples_split,
            features_per_split: self.features_per_split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
}

impl Forest {
    /// Random stream of tree `tree_index`: ChaCha8 seeded with `seed`, stream `tree_index`.
    pub fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(tree_index as u64);
        rng
    }

    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams) -> Result<Self, FitError> {
        let n_features = check_xy(x, y)?;
        if params.n_trees == 0 {
            return Err(FitError::Param("n_trees must be >= 1".into()));
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite);
        }
        let tree_params = params.tree_params();
        tree_params.validate()?;
        let n = x.len();
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = Self::tree_rng(params.seed, t);
                let samples: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                fit_tree_on(x, y, &samples, n_features, &tree_params, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            params: params.clone(),
        })
    }

    /// Mean of the tree predictions.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
