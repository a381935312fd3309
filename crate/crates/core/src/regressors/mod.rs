//! Regression learners used as n-OMPR models: a CART regression tree, a bagged random
//! forest of such trees, and a closed-form ridge regressor.

mod forest;
mod ridge;
mod tree;

pub use forest::{Forest, ForestParams};
pub use ridge::{fit_ridge, RidgeModel, RidgeParams};
pub use tree::{fit_tree, RegressionTree, TreeNode, TreeParams};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("empty training set")]
    Empty,
    #[error("{rows} feature rows but {targets} targets")]
    DimensionMismatch { rows: usize, targets: usize },
    #[error("row {row} has {found} features, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// Checks shape and returns the feature count.
pub(crate) fn check_xy(x: &[Vec<f64>], y: &[f64]) -> Result<usize, FitError> {
    if x.len() != y.len() {
        return Err(FitError::DimensionMismatch {
            rows: x.len(),
            targets: y.len(),
        });
    }
    let Some(first) = x.first() else {
        return Err(FitError::Empty);
    };
    let width = first.len();
    for (row, r) in x.iter().enumerate() {
        if r.len() != width {
            return Err(FitError::RaggedRow {
                row,
                found: r.len(),
                expected: width,
            });
        }
    }
    Ok(width)
}
