use std::collections::HashSet;

use super::eval::{combine, evaluate, one_hot_levels};
use super::{Arity, CandidateFeature, FeatureExpr, TransformError, TransformOp};
use crate::data::{ColumnData, ColumnKind, Dataset};

/// Candidates with a larger share of missing cells are dropped.
pub const MAX_MISSING_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpandOptions {
    /// Maximum number of candidates returned.
    pub cap: usize,
    /// Candidates deeper than this are not generated.
    pub max_order: usize,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        Self { cap: 8, max_order: 5 }
    }
}

/// Absolute Pearson correlation over rows where `values` is present.
/// Degenerate inputs (fewer than two rows, zero variance) score 0.
pub fn pearson_abs(values: &[Option<f64>], target: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(target)
        .filter_map(|(v, t)| v.map(|v| (v, *t)))
        .collect();
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return 0.0;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).abs();
    if r.is_finite() {
        r.min(1.0)
    } else {
        0.0
    }
}

struct Operand<'a> {
    expr: &'a FeatureExpr,
    kind: ColumnKind,
    data: ColumnData,
}

/// Applies `op` to every applicable operand tuple drawn from `pool`.
///
/// Tuples whose result would exceed `max_order`, duplicate a pool member or
/// leave more than half the cells missing are skipped. Commutative ops use
/// one orientation per pair. Survivors are ranked by absolute correlation
/// with `target` (ties by display name) and the best `cap` are returned.
pub fn expand_action(
    op: TransformOp,
    pool: &[FeatureExpr],
    d: &Dataset,
    target: &[f64],
    opts: ExpandOptions,
) -> Result<Vec<CandidateFeature>, TransformError> {
    let operands = pool
        .iter()
        .map(|expr| {
            Ok(Operand {
                expr,
                kind: expr.kind(d)?,
                data: evaluate(expr, d)?,
            })
        })
        .collect::<Result<Vec<_>, TransformError>>()?;
    let existing: HashSet<&FeatureExpr> = pool.iter().collect();
    let mut seen: HashSet<FeatureExpr> = HashSet::new();
    let mut out: Vec<CandidateFeature> = Vec::new();

    let mut consider = |expr: FeatureExpr, level: Option<&str>, inputs: &[&Operand]| {
        if expr.order() > opts.max_order || existing.contains(&expr) || seen.contains(&expr) {
            return;
        }
        let data: Vec<&ColumnData> = inputs.iter().map(|o| &o.data).collect();
        let values = combine(op, level, &data).encoded();
        let candidate = CandidateFeature {
            display_name: expr.render_name(),
            score: pearson_abs(&values, target),
            values,
            expr: expr.clone(),
        };
        seen.insert(expr);
        if candidate.missing_fraction() <= MAX_MISSING_FRACTION {
            out.push(candidate);
        }
    };

    let applicable = |kinds: &[ColumnKind]| op.output_kind(kinds).is_some();
    match op.arity() {
        Arity::Unary | Arity::DateOp => {
            for o in &operands {
                if !applicable(&[o.kind]) {
                    continue;
                }
                match op {
                    TransformOp::OneHot => {
                        for level in one_hot_levels(&o.data) {
                            let expr = FeatureExpr::one_hot(o.expr.clone(), level.clone());
                            consider(expr, Some(&level), &[o]);
                        }
                    }
                    _ if op.arity() == Arity::DateOp => {
                        consider(FeatureExpr::date(op, o.expr.clone()), None, &[o])
                    }
                    _ => consider(FeatureExpr::unary(op, o.expr.clone()), None, &[o]),
                }
            }
        }
        Arity::Binary | Arity::Aggregation => {
            for (i, a) in operands.iter().enumerate() {
                for (j, b) in operands.iter().enumerate() {
                    if i == j || (op.is_commutative() && j < i) || !applicable(&[a.kind, b.kind]) {
                        continue;
                    }
                    let expr = if op.arity() == Arity::Binary {
                        FeatureExpr::binary(op, a.expr.clone(), b.expr.clone())
                    } else {
                        FeatureExpr::aggregation(op, a.expr.clone(), b.expr.clone())
                    };
                    // `binary` may swap commutative operands; evaluate in stored order.
                    let swapped = matches!(&expr, FeatureExpr::Binary { left, .. } if **left != *a.expr);
                    let inputs: [&Operand; 2] = if swapped { [b, a] } else { [a, b] };
                    consider(expr, None, &inputs);
                }
            }
        }
    }

    out.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then_with(|| x.display_name.cmp(&y.display_name))
    });
    out.truncate(opts.cap);
    Ok(out)
}
