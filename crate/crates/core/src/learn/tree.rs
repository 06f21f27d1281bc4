use rand::seq::index::sample;
use rand::Rng;

use super::{Matrix, Predictions, Target};

/// Minimum impurity decrease a split must achieve.
const MIN_DECREASE: f64 = 1e-12;

pub(crate) struct TreeParams {
    pub max_depth: usize,
    /// Features tried at each split; all of them when `None`.
    pub features_per_split: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Leaf {
    Class(usize),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(Leaf),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART tree: Gini impurity for classes, variance for values.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
    /// Unnormalized impurity decrease credited to each feature, weighted by
    /// the number of samples reaching the split.
    importance: Vec<f64>,
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Weighted child impurity times node size.
    child_cost: f64,
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a Target,
    params: &'a TreeParams,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Sum of squared deviations from the mean.
fn sse(sum: f64, sum_sq: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (sum_sq - sum * sum / n as f64).max(0.0)
    }
}

impl<R: Rng> Builder<'_, R> {
    /// Impurity times node size, so that costs add across children.
    fn cost(&self, rows: &[usize]) -> f64 {
        match self.y {
            Target::Classes { labels, n_classes } => {
                let mut counts = vec![0; *n_classes];
                for &r in rows {
                    counts[labels[r]] += 1;
                }
                gini(&counts, rows.len()) * rows.len() as f64
            }
            Target::Values(v) => {
                let (s, s2) = rows.iter().fold((0.0, 0.0), |(s, s2), &r| (s + v[r], s2 + v[r] * v[r]));
                sse(s, s2, rows.len())
            }
        }
    }

    fn leaf(&self, rows: &[usize]) -> Leaf {
        match self.y {
            Target::Classes { labels, n_classes } => {
                let mut counts = vec![0usize; *n_classes];
                for &r in rows {
                    counts[labels[r]] += 1;
                }
                let mut best = 0;
                for (c, &n) in counts.iter().enumerate() {
                    if n > counts[best] {
                        best = c;
                    }
                }
                Leaf::Class(best)
            }
            Target::Values(v) => Leaf::Value(rows.iter().map(|&r| v[r]).sum::<f64>() / rows.len() as f64),
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x.n_cols();
        match (self.params.features_per_split, self.rng.as_mut()) {
            (Some(m), Some(rng)) if m < p => {
                let mut f = sample(&mut **rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<Split> {
        let features = self.candidate_features();
        let n = rows.len();
        let mut best: Option<Split> = None;
        let mut order = rows.to_vec();
        for f in features {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            match self.y {
                Target::Classes { labels, n_classes } => {
                    let mut left = vec![0usize; *n_classes];
                    let mut right = vec![0usize; *n_classes];
                    for &r in &order {
                        right[labels[r]] += 1;
                    }
                    for i in 0..n - 1 {
                        let r = order[i];
                        left[labels[r]] += 1;
                        right[labels[r]] -= 1;
                        let (a, b) = (self.x.get(r, f), self.x.get(order[i + 1], f));
                        if a == b {
                            continue;
                        }
                        let nl = i + 1;
                        let cost = gini(&left, nl) * nl as f64 + gini(&right, n - nl) * (n - nl) as f64;
                        if best.as_ref().is_none_or(|s| cost < s.child_cost) {
                            best = Some(Split {
                                feature: f,
                                threshold: a + (b - a) / 2.0,
                                child_cost: cost,
                            });
                        }
                    }
                }
                Target::Values(v) => {
                    let (mut rs, mut rs2) = order.iter().fold((0.0, 0.0), |(s, s2), &r| (s + v[r], s2 + v[r] * v[r]));
                    let (mut ls, mut ls2) = (0.0, 0.0);
                    for i in 0..n - 1 {
                        let r = order[i];
                        ls += v[r];
                        ls2 += v[r] * v[r];
                        rs -= v[r];
                        rs2 -= v[r] * v[r];
                        let (a, b) = (self.x.get(r, f), self.x.get(order[i + 1], f));
                        if a == b {
                            continue;
                        }
                        let nl = i + 1;
                        let cost = sse(ls, ls2, nl) + sse(rs, rs2, n - nl);
                        if best.as_ref().is_none_or(|s| cost < s.child_cost) {
                            best = Some(Split {
                                feature: f,
                                threshold: a + (b - a) / 2.0,
                                child_cost: cost,
                            });
                        }
                    }
                }
            }
        }
        best
    }

    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf(rows)));
        let cost = self.cost(rows);
        if depth >= self.params.max_depth || rows.len() < 2 || cost <= MIN_DECREASE {
            return id;
        }
        let Some(split) = self.best_split(rows) else {
            return id;
        };
        let decrease = cost - split.child_cost;
        if decrease <= MIN_DECREASE * rows.len() as f64 {
            return id;
        }
        self.importance[split.feature] += decrease;
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&row| self.x.get(row, split.feature) <= split.threshold);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    /// Grows a tree on all rows of `x`. `rng` drives per-split feature
    /// subsampling and is only consulted when `features_per_split` is set.
    pub(crate) fn fit<R: Rng>(x: &Matrix, y: &Target, params: &TreeParams, rng: Option<&mut R>) -> Self {
        let rows: Vec<usize> = (0..x.n_rows()).collect();
        Self::fit_rows(x, y, &rows, params, rng)
    }

    /// Grows a tree on the given rows, which may repeat.
    pub(crate) fn fit_rows<R: Rng>(
        x: &Matrix,
        y: &Target,
        rows: &[usize],
        params: &TreeParams,
        rng: Option<&mut R>,
    ) -> Self {
        let mut b = Builder {
            x,
            y,
            params,
            rng,
            nodes: Vec::new(),
            importance: vec![0.0; x.n_cols()],
        };
        b.build(rows, 0);
        Self {
            nodes: b.nodes,
            n_features: x.n_cols(),
            importance: b.importance,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn raw_importance(&self) -> &[f64] {
        &self.importance
    }

    fn leaf_for(&self, row: &[f64]) -> Leaf {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(l) => return l,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub(crate) fn predict_class(&self, row: &[f64]) -> usize {
        match self.leaf_for(row) {
            Leaf::Class(c) => c,
            Leaf::Value(_) => panic!("regression tree asked for a class"),
        }
    }

    pub(crate) fn predict_value(&self, row: &[f64]) -> f64 {
        match self.leaf_for(row) {
            Leaf::Value(v) => v,
            Leaf::Class(_) => panic!("classification tree asked for a value"),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Predictions {
        if self.is_classifier() {
            Predictions::Classes((0..x.n_rows()).map(|r| self.predict_class(x.row(r))).collect())
        } else {
            Predictions::Values((0..x.n_rows()).map(|r| self.predict_value(x.row(r))).collect())
        }
    }

    pub(crate) fn is_classifier(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n, Node::Leaf(Leaf::Class(_))))
    }
}

#[cfg(test)]
mod tests {
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn params(max_depth: usize) -> TreeParams {
        TreeParams {
            max_depth,
            features_per_split: None,
        }
    }

    fn fit(x: &Matrix, y: &Target, depth: usize) -> DecisionTree {
        DecisionTree::fit::<ChaCha8Rng>(x, y, &params(depth), None)
    }

    #[test]
    fn gini_matches_hand_values() {
        assert_eq!(gini(&[5, 5], 10), 0.5);
        assert_eq!(gini(&[10, 0], 10), 0.0);
        assert!((gini(&[1, 1, 1], 3) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn separable_classes_fit_exactly() {
        let x = Matrix::from_columns(6, &[vec![1.0, 2.0, 3.0, 10.0, 11.0, 12.0]]);
        let y = Target::Classes {
            labels: vec![0, 0, 0, 1, 1, 1],
            n_classes: 2,
        };
        let t = fit(&x, &y, 6);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict(&x), Predictions::Classes(vec![0, 0, 0, 1, 1, 1]));
        assert_eq!(t.predict_class(&[6.5]), 0);
        assert_eq!(t.predict_class(&[6.6]), 1);
        // root Gini 0.5 over 6 rows, children pure
        assert!((t.raw_importance()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn regression_uses_leaf_means() {
        let x = Matrix::from_columns(4, &[vec![0.0, 1.0, 2.0, 3.0]]);
        let y = Target::Values(vec![1.0, 1.0, 5.0, 7.0]);
        let stump = fit(&x, &y, 1);
        assert_eq!(stump.predict(&x), Predictions::Values(vec![1.0, 1.0, 6.0, 6.0]));
        let full = fit(&x, &y, 6);
        assert_eq!(full.predict(&x), Predictions::Values(vec![1.0, 1.0, 5.0, 7.0]));
    }

    #[test]
    fn constant_target_and_ties_yield_a_leaf() {
        let x = Matrix::from_columns(3, &[vec![1.0, 2.0, 3.0]]);
        let t = fit(&x, &Target::Values(vec![4.0; 3]), 6);
        assert_eq!(t.depth(), 0);
        let x = Matrix::from_columns(4, &[vec![1.0; 4]]);
        let y = Target::Classes {
            labels: vec![1, 0, 0, 1],
            n_classes: 2,
        };
        let t = fit(&x, &y, 6);
        assert_eq!(t.depth(), 0);
        // majority tie goes to the lower class
        assert_eq!(t.predict_class(&[1.0]), 0);
    }

    #[test]
    fn picks_informative_feature() {
        let noise = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let signal = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let x = Matrix::from_columns(8, &[noise, signal.clone()]);
        let y = Target::Values(signal.iter().map(|s| s * 10.0).collect());
        let t = fit(&x, &y, 1);
        assert_eq!(t.raw_importance()[0], 0.0);
        assert!(t.raw_importance()[1] > 0.0);
    }
}
