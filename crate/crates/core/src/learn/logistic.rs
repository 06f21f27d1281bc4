use super::linear::Standardizer;
use super::{LearnError, Matrix};

const LEARNING_RATE: f64 = 0.5;

/// Multinomial logistic regression trained by full-batch gradient ascent on
/// the L2-penalized log-likelihood over standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    standardizer: Standardizer,
    /// `n_classes` rows of `p + 1` weights, intercept last.
    weights: Vec<Vec<f64>>,
}

fn softmax_into(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    scores.iter_mut().for_each(|s| *s /= total);
}

impl LogisticModel {
    pub(crate) fn fit(
        x: &Matrix,
        labels: &[usize],
        n_classes: usize,
        lambda: f64,
        iterations: usize,
    ) -> Result<Self, LearnError> {
        let first = labels[0];
        if labels.iter().all(|&l| l == first) {
            return Err(LearnError::DegenerateTarget);
        }
        let n = x.n_rows();
        let p = x.n_cols();
        let standardizer = Standardizer::fit(x);
        let z: Vec<Vec<f64>> = (0..n)
            .map(|r| (0..p).map(|c| standardizer.z(c, x.get(r, c))).collect())
            .collect();
        let mut weights = vec![vec![0.0; p + 1]; n_classes];
        let mut grad = vec![vec![0.0; p + 1]; n_classes];
        let mut probs = vec![0.0; n_classes];
        for _ in 0..iterations {
            grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            for (row, &label) in z.iter().zip(labels) {
                for (k, w) in weights.iter().enumerate() {
                    probs[k] = w[p] + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                }
                softmax_into(&mut probs);
                for (k, g) in grad.iter_mut().enumerate() {
                    let err = f64::from(u8::from(k == label)) - probs[k];
                    for (gc, v) in g.iter_mut().zip(row) {
                        *gc += err * v;
                    }
                    g[p] += err;
                }
            }
            for (w, g) in weights.iter_mut().zip(&grad) {
                for c in 0..=p {
                    let penalty = if c < p { lambda * w[c] } else { 0.0 };
                    w[c] += LEARNING_RATE * (g[c] / n as f64 - penalty);
                }
            }
        }
        Ok(Self { standardizer, weights })
    }

    pub fn n_features(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    /// Class probabilities for one row.
    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let p = self.n_features();
        let mut scores: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                w[p] + row
                    .iter()
                    .enumerate()
                    .map(|(c, v)| self.standardizer.z(c, *v) * w[c])
                    .sum::<f64>()
            })
            .collect();
        softmax_into(&mut scores);
        scores
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        (0..x.n_rows())
            .map(|r| {
                let probs = self.predict_proba_row(x.row(r));
                let mut best = 0;
                for (k, &pk) in probs.iter().enumerate() {
                    if pk > probs[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}
