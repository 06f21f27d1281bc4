use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{DecisionTree, TreeParams};
use super::{LearnerSpec, Matrix, Predictions, Target};

/// Bagged CART trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_features: usize,
    n_classes: Option<usize>,
}

/// Features tried per split for a subsample fraction over `p` features.
fn features_per_split(fraction: Option<f64>, p: usize) -> usize {
    if p == 0 {
        return 0;
    }
    let m = match fraction {
        Some(f) => (f * p as f64).round() as usize,
        None => (p as f64).sqrt().round() as usize,
    };
    m.clamp(1, p)
}

impl RandomForest {
    /// Each tree gets its own generator seeded from `spec.seed` and the
    /// tree index, so results do not depend on thread scheduling.
    pub(crate) fn fit(x: &Matrix, y: &Target, spec: &LearnerSpec) -> Self {
        let params = TreeParams {
            max_depth: spec.max_depth,
            features_per_split: Some(features_per_split(spec.feature_subsample, x.n_cols())),
        };
        let n = x.n_rows();
        let trees = (0..spec.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(t as u64);
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                DecisionTree::fit_rows(x, y, &rows, &params, Some(&mut rng))
            })
            .collect();
        let n_classes = match y {
            Target::Classes { n_classes, .. } => Some(*n_classes),
            Target::Values(_) => None,
        };
        Self {
            trees,
            n_features: x.n_cols(),
            n_classes,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Majority vote for classes (ties to the lowest index), mean for values.
    pub fn predict(&self, x: &Matrix) -> Predictions {
        match self.n_classes {
            Some(k) => Predictions::Classes(
                (0..x.n_rows())
                    .map(|r| {
                        let mut votes = vec![0usize; k];
                        for t in &self.trees {
                            votes[t.predict_class(x.row(r))] += 1;
                        }
                        let mut best = 0;
                        for (c, &v) in votes.iter().enumerate() {
                            if v > votes[best] {
                                best = c;
                            }
                        }
                        best
                    })
                    .collect(),
            ),
            None => Predictions::Values(
                (0..x.n_rows())
                    .map(|r| {
                        self.trees.iter().map(|t| t.predict_value(x.row(r))).sum::<f64>() / self.trees.len() as f64
                    })
                    .collect(),
            ),
        }
    }

    /// Impurity decrease per feature summed over trees and normalized to 1.
    /// Uniform when no split decreased impurity at all.
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for t in &self.trees {
            for (a, b) in imp.iter_mut().zip(t.raw_importance()) {
                *a += b;
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        } else if self.n_features > 0 {
            imp.iter_mut().for_each(|v| *v = 1.0 / self.n_features as f64);
        }
        imp
    }
}
