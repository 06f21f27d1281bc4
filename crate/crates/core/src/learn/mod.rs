//! Built-in learners, metrics and cross-validated evaluation.

mod cv;
mod forest;
mod linear;
mod logistic;
mod metrics;
mod tree;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};

pub use cv::{evaluate_cv, fold_scores, impute_medians, FeatureMatrix};
pub use forest::RandomForest;
pub use linear::LinearModel;
pub use logistic::LogisticModel;
pub use metrics::{f1_score, one_minus_rae, MetricError};
pub use tree::DecisionTree;

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("training set is empty")]
    Empty,
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("model expects {expected} features, got {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("only one class present in the training targets")]
    DegenerateTarget,
    #[error("{kind:?} cannot be used for {task:?}")]
    IncompatibleTask { kind: LearnerKind, task: Task },
    #[error("feature importance needs a random forest")]
    NotAForest,
    #[error("linear system could not be solved")]
    Singular,
    #[error("bad hyperparameter: {0}")]
    BadHyperparameter(&'static str),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "matrix data has wrong length");
        Self { n_rows, n_cols, data }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::new(n_rows, n_cols, vec![0.0; n_rows * n_cols])
    }

    /// Builds a matrix from equally long columns; `n_rows` is needed when
    /// there are no columns.
    pub fn from_columns(n_rows: usize, columns: &[Vec<f64>]) -> Self {
        let n_cols = columns.len();
        let mut data = vec![0.0; n_rows * n_cols];
        for (c, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n_rows, "ragged columns");
            for (r, v) in col.iter().enumerate() {
                data[r * n_cols + c] = *v;
            }
        }
        Self { n_rows, n_cols, data }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix::new(rows.len(), self.n_cols, data)
    }
}

/// Training targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Class indices in `0..n_classes`.
    Classes { labels: Vec<usize>, n_classes: usize },
    Values(Vec<f64>),
}

impl Target {
    pub fn from_dataset(d: &Dataset) -> Self {
        match d.task() {
            Task::Classification => Target::Classes {
                labels: d.class_indices().expect("classification target"),
                n_classes: d.class_labels().len(),
            },
            Task::Regression => Target::Values(d.target_values()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Target::Classes { labels, .. } => labels.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Target::Classes { .. } => Task::Classification,
            Target::Values(_) => Task::Regression,
        }
    }

    pub fn select(&self, rows: &[usize]) -> Target {
        match self {
            Target::Classes { labels, n_classes } => Target::Classes {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                n_classes: *n_classes,
            },
            Target::Values(v) => Target::Values(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    DecisionTree,
    RandomForest,
    Linear,
    Logistic,
}

impl LearnerKind {
    pub fn supports(self, task: Task) -> bool {
        match self {
            LearnerKind::DecisionTree | LearnerKind::RandomForest => true,
            LearnerKind::Linear => task == Task::Regression,
            LearnerKind::Logistic => task == Task::Classification,
        }
    }

    /// The linear-family learner for a task.
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Classification => LearnerKind::Logistic,
            Task::Regression => LearnerKind::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub max_depth: usize,
    pub n_trees: usize,
    /// Fraction of features tried per split; `None` means sqrt(p)/p.
    pub feature_subsample: Option<f64>,
    pub ridge_lambda: f64,
    pub logistic_iterations: usize,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            max_depth: 6,
            n_trees: 50,
            feature_subsample: None,
            ridge_lambda: 1e-6,
            logistic_iterations: 200,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self, task: Task) -> Result<(), LearnError> {
        if !self.kind.supports(task) {
            return Err(LearnError::IncompatibleTask { kind: self.kind, task });
        }
        if self.max_depth == 0 {
            return Err(LearnError::BadHyperparameter("max_depth must be positive"));
        }
        if self.n_trees == 0 {
            return Err(LearnError::BadHyperparameter("n_trees must be positive"));
        }
        if let Some(f) = self.feature_subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(LearnError::BadHyperparameter("feature_subsample must be in (0, 1]"));
            }
        }
        if !(self.ridge_lambda > 0.0) {
            return Err(LearnError::BadHyperparameter("ridge_lambda must be positive"));
        }
        if self.logistic_iterations == 0 {
            return Err(LearnError::BadHyperparameter("logistic_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tree(DecisionTree),
    Forest(RandomForest),
    Linear(LinearModel),
    Logistic(LogisticModel),
}

/// Fits a model of `spec.kind` to `(x, y)`.
pub fn train(spec: &LearnerSpec, x: &Matrix, y: &Target) -> Result<Model, LearnError> {
    spec.validate(y.task())?;
    if x.n_rows() == 0 {
        return Err(LearnError::Empty);
    }
    if x.n_rows() != y.len() {
        return Err(LearnError::LengthMismatch {
            rows: x.n_rows(),
            targets: y.len(),
        });
    }
    Ok(match spec.kind {
        LearnerKind::DecisionTree => {
            let params = tree::TreeParams {
                max_depth: spec.max_depth,
                features_per_split: None,
            };
            Model::Tree(DecisionTree::fit::<rand_chacha::ChaCha8Rng>(x, y, &params, None))
        }
        LearnerKind::RandomForest => Model::Forest(RandomForest::fit(x, y, spec)),
        LearnerKind::Linear => match y {
            Target::Values(v) => Model::Linear(LinearModel::fit(x, v, spec.ridge_lambda)?),
            Target::Classes { .. } => unreachable!("validated task"),
        },
        LearnerKind::Logistic => match y {
            Target::Classes { labels, n_classes } => Model::Logistic(LogisticModel::fit(
                x,
                labels,
                *n_classes,
                spec.ridge_lambda,
                spec.logistic_iterations,
            )?),
            Target::Values(_) => unreachable!("validated task"),
        },
    })
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Tree(m) => m.n_features(),
            Model::Forest(m) => m.n_features(),
            Model::Linear(m) => m.n_features(),
            Model::Logistic(m) => m.n_features(),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Predictions, LearnError> {
        if x.n_cols() != self.n_features() {
            return Err(LearnError::SchemaMismatch {
                expected: self.n_features(),
                found: x.n_cols(),
            });
        }
        Ok(match self {
            Model::Tree(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
            Model::Linear(m) => Predictions::Values(m.predict(x)),
            Model::Logistic(m) => Predictions::Classes(m.predict(x)),
        })
    }
}

/// Mean-decrease-in-impurity importances of a forest, normalized to sum to 1.
pub fn feature_importance(model: &Model) -> Result<Vec<f64>, LearnError> {
    match model {
        Model::Forest(f) => Ok(f.feature_importance()),
        _ => Err(LearnError::NotAForest),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::zeros(0, 1);
        let y = Target::Values(vec![]);
        assert!(matches!(train(&LearnerSpec::new(LearnerKind::Linear), &x, &y), Err(LearnError::Empty)));
        let x = Matrix::zeros(2, 1);
        let y = Target::Values(vec![1.0]);
        assert!(matches!(
            train(&LearnerSpec::new(LearnerKind::DecisionTree), &x, &y),
            Err(LearnError::LengthMismatch { .. })
        ));
        let y = Target::Values(vec![1.0, 2.0]);
        assert!(matches!(
            train(&LearnerSpec::new(LearnerKind::Logistic), &x, &y),
            Err(LearnError::IncompatibleTask { .. })
        ));
        let model = train(&LearnerSpec::new(LearnerKind::Linear), &x, &y).unwrap();
        assert!(matches!(
            model.predict(&Matrix::zeros(1, 3)),
            Err(LearnError::SchemaMismatch { .. })
        ));
        assert!(matches!(feature_importance(&model), Err(LearnError::NotAForest)));
    }
}
