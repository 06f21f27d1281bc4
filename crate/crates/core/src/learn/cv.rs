use rayon::prelude::*;

use super::{f1_score, one_minus_rae, train, LearnError, LearnerSpec, Matrix, Predictions, Target};
use crate::data::{split_kfold, Dataset, Fold, Task};

/// Column-major numeric features with possibly missing cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub columns: Vec<Vec<Option<f64>>>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<Vec<Option<f64>>>) -> Self {
        Self { columns }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

/// Per-column median over `rows`, ignoring missing cells; 0 for a column
/// with nothing observed.
pub fn impute_medians(features: &FeatureMatrix, rows: &[usize]) -> Vec<f64> {
    features
        .columns
        .iter()
        .map(|col| {
            let mut seen: Vec<f64> = rows.iter().filter_map(|&r| col[r]).collect();
            if seen.is_empty() {
                return 0.0;
            }
            seen.sort_by(f64::total_cmp);
            let m = seen.len() / 2;
            if seen.len() % 2 == 1 {
                seen[m]
            } else {
                (seen[m - 1] + seen[m]) / 2.0
            }
        })
        .collect()
}

fn dense(features: &FeatureMatrix, rows: &[usize], fill: &[f64]) -> Matrix {
    let cols: Vec<Vec<f64>> = features
        .columns
        .iter()
        .zip(fill)
        .map(|(col, &f)| rows.iter().map(|&r| col[r].unwrap_or(f)).collect())
        .collect();
    Matrix::from_columns(rows.len(), &cols)
}

fn score_fold(
    spec: &LearnerSpec,
    features: &FeatureMatrix,
    target: &Target,
    fold: &Fold,
) -> Result<f64, LearnError> {
    let fill = impute_medians(features, &fold.train);
    let x_train = dense(features, &fold.train, &fill);
    let x_valid = dense(features, &fold.valid, &fill);
    let model = match train(spec, &x_train, &target.select(&fold.train)) {
        Ok(m) => m,
        Err(LearnError::DegenerateTarget) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let score = match (model.predict(&x_valid)?, target.select(&fold.valid)) {
        (Predictions::Classes(p), Target::Classes { labels, n_classes }) => f1_score(&labels, &p, n_classes),
        (Predictions::Values(p), Target::Values(v)) => one_minus_rae(&v, &p),
        _ => unreachable!("model and target agree on the task"),
    };
    Ok(score.unwrap_or(0.0))
}

/// Validation score of every fold, in fold order.
pub fn fold_scores(
    spec: &LearnerSpec,
    d: &Dataset,
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
) -> Result<Vec<f64>, LearnError> {
    let folds = split_kfold(d, k, seed, d.task() == Task::Classification)?;
    let target = Target::from_dataset(d);
    folds
        .par_iter()
        .map(|fold| score_fold(spec, features, &target, fold))
        .collect()
}

/// Mean k-fold validation score with the task metric: F1 for
/// classification, one minus relative absolute error for regression.
/// Missing cells are filled with training-fold medians.
pub fn evaluate_cv(
    spec: &LearnerSpec,
    d: &Dataset,
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
) -> Result<f64, LearnError> {
    let scores = fold_scores(spec, d, features, k, seed)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
