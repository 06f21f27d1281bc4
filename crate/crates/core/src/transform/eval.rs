use std::collections::{BTreeMap, HashMap};

use super::{FeatureExpr, TransformError, TransformOp};
use crate::data::{ColumnData, Dataset};

/// Levels beyond this many (by frequency) fold into [`OTHER_LEVEL`].
pub const ONE_HOT_MAX_LEVELS: usize = 20;
pub const OTHER_LEVEL: &str = "⟂other";

/// A concrete derived (or raw) feature evaluated on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFeature {
    pub expr: FeatureExpr,
    /// Numeric encoding of the feature, `None` for missing cells.
    pub values: Vec<Option<f64>>,
    pub display_name: String,
    /// |Pearson correlation| with the target; zero unless produced by
    /// expansion.
    pub score: f64,
}

impl CandidateFeature {
    pub fn missing_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|v| v.is_none()).count() as f64 / self.values.len() as f64
    }
}

/// Evaluates `expr` row-wise on `d` and returns the numeric encoding.
pub fn apply(expr: &FeatureExpr, d: &Dataset) -> Result<CandidateFeature, TransformError> {
    let data = evaluate(expr, d)?;
    Ok(CandidateFeature {
        expr: expr.clone(),
        values: data.encoded(),
        display_name: expr.render_name(),
        score: 0.0,
    })
}

/// Evaluates `expr` on `d`, keeping the typed cells.
pub fn evaluate(expr: &FeatureExpr, d: &Dataset) -> Result<ColumnData, TransformError> {
    expr.kind(d)?;
    Ok(eval_unchecked(expr, d))
}

fn eval_unchecked(expr: &FeatureExpr, d: &Dataset) -> ColumnData {
    match expr {
        FeatureExpr::Raw { column } => d.column(column).expect("validated").data.clone(),
        _ => {
            let inputs: Vec<ColumnData> = expr
                .children()
                .into_iter()
                .map(|c| eval_unchecked(c, d))
                .collect();
            let refs: Vec<&ColumnData> = inputs.iter().collect();
            let level = match expr {
                FeatureExpr::Unary { level, .. } => level.as_deref(),
                _ => None,
            };
            combine(expr.op().expect("non-leaf"), level, &refs)
        }
    }
}

/// One-hot levels kept for a categorical column: the most frequent
/// [`ONE_HOT_MAX_LEVELS`] (ties lexicographic), plus [`OTHER_LEVEL`] when
/// anything was folded.
pub(crate) fn one_hot_levels(data: &ColumnData) -> Vec<String> {
    let ColumnData::Categorical(cells) = data else {
        return Vec::new();
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in cells.iter().flatten() {
        *counts.entry(c).or_insert(0) += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let folded = ranked.len() > ONE_HOT_MAX_LEVELS;
    let mut levels: Vec<String> = ranked
        .into_iter()
        .take(ONE_HOT_MAX_LEVELS)
        .map(|(l, _)| l.to_string())
        .collect();
    if folded {
        levels.push(OTHER_LEVEL.to_string());
    }
    levels
}

fn numeric(data: &ColumnData) -> &[Option<f64>] {
    match data {
        ColumnData::Numeric(v) => v,
        _ => unreachable!("validated numeric operand"),
    }
}

fn boolean(data: &ColumnData) -> &[Option<bool>] {
    match data {
        ColumnData::Boolean(v) => v,
        _ => unreachable!("validated boolean operand"),
    }
}

fn unary_numeric(v: &[Option<f64>], f: impl Fn(f64) -> Option<f64>) -> ColumnData {
    ColumnData::Numeric(v.iter().map(|c| c.and_then(&f)).collect())
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Group key as text; missing keys yield `None`.
fn group_keys(data: &ColumnData) -> Vec<Option<String>> {
    match data {
        ColumnData::Categorical(v) => v.clone(),
        ColumnData::Boolean(v) => v.iter().map(|c| c.map(|b| b.to_string())).collect(),
        _ => unreachable!("validated group key"),
    }
}

/// Applies one transformation node to already-evaluated operands.
pub(crate) fn combine(op: TransformOp, level: Option<&str>, inputs: &[&ColumnData]) -> ColumnData {
    use TransformOp::*;
    match op {
        Log => unary_numeric(numeric(inputs[0]), |x| (x > 0.0).then(|| x.ln())),
        Sqrt => unary_numeric(numeric(inputs[0]), |x| (x > 0.0).then(|| x.sqrt())),
        Square => unary_numeric(numeric(inputs[0]), |x| finite(x * x)),
        Reciprocal => unary_numeric(numeric(inputs[0]), |x| {
            (x != 0.0).then(|| 1.0 / x).and_then(finite)
        }),
        OneHot => {
            let ColumnData::Categorical(cells) = inputs[0] else {
                unreachable!("validated categorical operand")
            };
            let level = level.expect("one_hot carries a level");
            let kept = one_hot_levels(inputs[0]);
            let is_other = level == OTHER_LEVEL;
            ColumnData::Boolean(
                cells
                    .iter()
                    .map(|c| {
                        c.as_ref().map(|v| {
                            if is_other {
                                !kept.iter().any(|k| k == v)
                            } else {
                                v == level
                            }
                        })
                    })
                    .collect(),
            )
        }
        Add | Sub | Mul | Div => {
            let (l, r) = (numeric(inputs[0]), numeric(inputs[1]));
            ColumnData::Numeric(
                l.iter()
                    .zip(r)
                    .map(|(a, b)| {
                        let (a, b) = ((*a)?, (*b)?);
                        let out = match op {
                            Add => a + b,
                            Sub => a - b,
                            Mul => a * b,
                            _ if b == 0.0 => return None,
                            _ => a / b,
                        };
                        finite(out)
                    })
                    .collect(),
            )
        }
        And | Or => {
            let (l, r) = (boolean(inputs[0]), boolean(inputs[1]));
            ColumnData::Boolean(
                l.iter()
                    .zip(r)
                    .map(|(a, b)| {
                        let (a, b) = ((*a)?, (*b)?);
                        Some(if op == And { a && b } else { a || b })
                    })
                    .collect(),
            )
        }
        GroupMin | GroupMax | GroupMean | GroupSum => {
            let keys = group_keys(inputs[0]);
            let values = numeric(inputs[1]);
            let mut groups: HashMap<&str, (f64, f64, f64, usize)> = HashMap::new();
            for (k, v) in keys.iter().zip(values) {
                if let (Some(k), Some(v)) = (k, v) {
                    let g = groups
                        .entry(k.as_str())
                        .or_insert((f64::INFINITY, f64::NEG_INFINITY, 0.0, 0));
                    g.0 = g.0.min(*v);
                    g.1 = g.1.max(*v);
                    g.2 += v;
                    g.3 += 1;
                }
            }
            ColumnData::Numeric(
                keys.iter()
                    .map(|k| {
                        let (min, max, sum, n) = *groups.get(k.as_deref()?)?;
                        let out = match op {
                            GroupMin => min,
                            GroupMax => max,
                            GroupSum => sum,
                            _ => sum / n as f64,
                        };
                        finite(out)
                    })
                    .collect(),
            )
        }
        Day | Month | Year | IsWeekend => {
            let ColumnData::Date(cells) = inputs[0] else {
                unreachable!("validated date operand")
            };
            if op == IsWeekend {
                ColumnData::Boolean(cells.iter().map(|c| c.as_ref().map(|d| d.is_weekend())).collect())
            } else {
                ColumnData::Numeric(
                    cells
                        .iter()
                        .map(|c| {
                            c.as_ref().map(|d| match op {
                                Day => d.day() as f64,
                                Month => d.month() as f64,
                                _ => d.year() as f64,
                            })
                        })
                        .collect(),
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_csv, SchemaConfig, Task};
    use crate::data::ColumnKind;

    fn people() -> Dataset {
        let text = "weight,height,city,income,d,flag,y\n\
                    70,1.75,paris,10,2021-01-02,yes,1\n\
                    80,2.0,lyon,20,2021-01-04,no,2\n\
                    0,0,paris,30,,yes,3\n";
        parse_csv(text, &SchemaConfig::new("y", Task::Regression)).unwrap()
    }

    fn raw(c: &str) -> FeatureExpr {
        FeatureExpr::raw(c)
    }

    #[test]
    fn bmi_value() {
        let bmi = FeatureExpr::binary(
            TransformOp::Div,
            raw("weight"),
            FeatureExpr::unary(TransformOp::Square, raw("height")),
        );
        let f = apply(&bmi, &people()).unwrap();
        assert!((f.values[0].unwrap() - 70.0 / (1.75 * 1.75)).abs() < 1e-12);
        assert!((f.values[0].unwrap() - 22.857142857142858).abs() < 1e-9);
        assert_eq!(f.values[1], Some(20.0));
        // 0 / 0^2: zero denominator
        assert_eq!(f.values[2], None);
        assert_eq!(f.display_name, "(WEIGHT / SQUARE(HEIGHT))");
    }

    #[test]
    fn domain_edges_are_missing() {
        let d = people();
        let log = apply(&FeatureExpr::unary(TransformOp::Log, raw("weight")), &d).unwrap();
        assert_eq!(log.values[2], None);
        let sqrt = apply(&FeatureExpr::unary(TransformOp::Sqrt, raw("weight")), &d).unwrap();
        assert_eq!(sqrt.values[2], None);
        let rec = apply(&FeatureExpr::unary(TransformOp::Reciprocal, raw("height")), &d).unwrap();
        assert_eq!(rec.values[1], Some(0.5));
        assert_eq!(rec.values[2], None);
    }

    #[test]
    fn date_ops() {
        let d = people();
        let wk = apply(&FeatureExpr::date(TransformOp::IsWeekend, raw("d")), &d).unwrap();
        assert_eq!(wk.values, vec![Some(1.0), Some(0.0), None]);
        let month = apply(&FeatureExpr::date(TransformOp::Month, raw("d")), &d).unwrap();
        assert_eq!(month.values[0], Some(1.0));
        let year = apply(&FeatureExpr::date(TransformOp::Year, raw("d")), &d).unwrap();
        assert_eq!(year.values[1], Some(2021.0));
        let day = apply(&FeatureExpr::date(TransformOp::Day, raw("d")), &d).unwrap();
        assert_eq!(day.values[1], Some(4.0));
    }

    #[test]
    fn group_aggregates_broadcast() {
        let d = people();
        let agg = |op| {
            apply(&FeatureExpr::aggregation(op, raw("city"), raw("income")), &d)
                .unwrap()
                .values
        };
        assert_eq!(agg(TransformOp::GroupMean), vec![Some(20.0), Some(20.0), Some(20.0)]);
        assert_eq!(agg(TransformOp::GroupSum), vec![Some(40.0), Some(20.0), Some(40.0)]);
        assert_eq!(agg(TransformOp::GroupMin), vec![Some(10.0), Some(20.0), Some(10.0)]);
        assert_eq!(agg(TransformOp::GroupMax), vec![Some(30.0), Some(20.0), Some(30.0)]);
    }

    #[test]
    fn one_hot_and_logic() {
        let d = people();
        let hot = FeatureExpr::one_hot(raw("city"), "paris");
        assert_eq!(apply(&hot, &d).unwrap().values, vec![Some(1.0), Some(0.0), Some(1.0)]);
        let both = FeatureExpr::binary(TransformOp::And, hot, raw("flag"));
        assert_eq!(both.kind(&d).unwrap(), ColumnKind::Boolean);
        assert_eq!(apply(&both, &d).unwrap().values, vec![Some(1.0), Some(0.0), Some(1.0)]);
    }

    #[test]
    fn applicability_errors() {
        let d = people();
        assert!(matches!(
            apply(&FeatureExpr::unary(TransformOp::Log, raw("city")), &d),
            Err(TransformError::NotApplicable { .. })
        ));
        assert_eq!(
            apply(&raw("nope"), &d).unwrap_err(),
            TransformError::UnknownColumn("nope".into())
        );
        assert!(matches!(
            apply(&FeatureExpr::binary(TransformOp::Or, raw("flag"), raw("weight")), &d),
            Err(TransformError::NotApplicable { .. })
        ));
    }

    #[test]
    fn one_hot_folds_rare_levels() {
        let mut text = String::from("c,y\n");
        for i in 0..25 {
            for _ in 0..(30 - i) {
                text.push_str(&format!("l{i:02},1\n"));
            }
        }
        let d = parse_csv(&text, &SchemaConfig::new("y", Task::Regression)).unwrap();
        let levels = one_hot_levels(&d.column("c").unwrap().data);
        assert_eq!(levels.len(), ONE_HOT_MAX_LEVELS + 1);
        assert_eq!(levels.last().unwrap(), OTHER_LEVEL);
        let other = apply(&FeatureExpr::one_hot(raw("c"), OTHER_LEVEL), &d).unwrap();
        let hits = other.values.iter().filter(|v| **v == Some(1.0)).count();
        // levels l20..l24 hold 10+9+8+7+6 rows
        assert_eq!(hits, 40);
    }
}
