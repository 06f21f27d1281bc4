use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Arity, TransformError, TransformOp};
use crate::data::{ColumnKind, Dataset};

/// Expression tree of transformations over raw columns.
///
/// Serializes as a tagged JSON tree, e.g.
/// `{"node":"binary","op":"div","left":{"node":"raw","column":"weight"},...}`.
/// Operands of commutative binary ops are kept in canonical order, so two
/// orientations of the same sum compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum FeatureExpr {
    Raw {
        column: String,
    },
    Unary {
        op: TransformOp,
        child: Box<FeatureExpr>,
        /// Category selected by a one_hot node.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        level: Option<String>,
    },
    Binary {
        op: TransformOp,
        left: Box<FeatureExpr>,
        right: Box<FeatureExpr>,
    },
    Aggregation {
        op: TransformOp,
        key: Box<FeatureExpr>,
        value: Box<FeatureExpr>,
    },
    Date {
        op: TransformOp,
        child: Box<FeatureExpr>,
    },
}

impl FeatureExpr {
    pub fn raw(column: impl Into<String>) -> Self {
        FeatureExpr::Raw {
            column: column.into(),
        }
    }

    pub fn unary(op: TransformOp, child: FeatureExpr) -> Self {
        debug_assert_eq!(op.arity(), Arity::Unary);
        FeatureExpr::Unary {
            op,
            child: Box::new(child),
            level: None,
        }
    }

    pub fn one_hot(child: FeatureExpr, level: impl Into<String>) -> Self {
        FeatureExpr::Unary {
            op: TransformOp::OneHot,
            child: Box::new(child),
            level: Some(level.into()),
        }
    }

    pub fn binary(op: TransformOp, left: FeatureExpr, right: FeatureExpr) -> Self {
        debug_assert_eq!(op.arity(), Arity::Binary);
        let (left, right) = if op.is_commutative() && right < left {
            (right, left)
        } else {
            (left, right)
        };
        FeatureExpr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn aggregation(op: TransformOp, key: FeatureExpr, value: FeatureExpr) -> Self {
        debug_assert_eq!(op.arity(), Arity::Aggregation);
        FeatureExpr::Aggregation {
            op,
            key: Box::new(key),
            value: Box::new(value),
        }
    }

    pub fn date(op: TransformOp, child: FeatureExpr) -> Self {
        debug_assert_eq!(op.arity(), Arity::DateOp);
        FeatureExpr::Date {
            op,
            child: Box::new(child),
        }
    }

    pub fn op(&self) -> Option<TransformOp> {
        match self {
            FeatureExpr::Raw { .. } => None,
            FeatureExpr::Unary { op, .. }
            | FeatureExpr::Binary { op, .. }
            | FeatureExpr::Aggregation { op, .. }
            | FeatureExpr::Date { op, .. } => Some(*op),
        }
    }

    /// Direct operands, aggregation key first.
    pub fn children(&self) -> Vec<&FeatureExpr> {
        match self {
            FeatureExpr::Raw { .. } => Vec::new(),
            FeatureExpr::Unary { child, .. } | FeatureExpr::Date { child, .. } => vec![child],
            FeatureExpr::Binary { left, right, .. } => vec![left, right],
            FeatureExpr::Aggregation { key, value, .. } => vec![key, value],
        }
    }

    pub fn is_raw(&self) -> bool {
        matches!(self, FeatureExpr::Raw { .. })
    }

    /// Number of transformation nodes on the deepest root-to-leaf path.
    pub fn order(&self) -> usize {
        match self {
            FeatureExpr::Raw { .. } => 0,
            _ => 1 + self.children().iter().map(|c| c.order()).max().unwrap_or(0),
        }
    }

    /// Raw column names referenced by the leaves, left to right.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            FeatureExpr::Raw { column } => out.push(column),
            _ => {
                for c in self.children() {
                    c.collect_leaves(out);
                }
            }
        }
    }

    /// Post-order list of all sub-expressions, root last.
    pub fn subexpressions(&self) -> Vec<&FeatureExpr> {
        let mut out = Vec::new();
        self.collect_post_order(&mut out);
        out
    }

    fn collect_post_order<'a>(&'a self, out: &mut Vec<&'a FeatureExpr>) {
        for c in self.children() {
            c.collect_post_order(out);
        }
        out.push(self);
    }

    /// Kind of the values this expression produces on `d`, validating leaves
    /// and operand applicability along the way.
    pub fn kind(&self, d: &Dataset) -> Result<ColumnKind, TransformError> {
        match self {
            FeatureExpr::Raw { column } => d
                .column(column)
                .map(|c| c.kind())
                .ok_or_else(|| TransformError::UnknownColumn(column.clone())),
            FeatureExpr::Unary {
                op: TransformOp::OneHot,
                level: None,
                ..
            } => Err(TransformError::MissingLevel),
            _ => {
                let op = self.op().expect("non-leaf");
                let kinds = self
                    .children()
                    .into_iter()
                    .map(|c| c.kind(d))
                    .collect::<Result<Vec<_>, _>>()?;
                op.output_kind(&kinds)
                    .ok_or(TransformError::NotApplicable { op, kinds })
            }
        }
    }

    /// Human-readable name: upper-case, infix and fully parenthesized for
    /// binary operators, e.g. `(WEIGHT / SQUARE(HEIGHT))`.
    pub fn render_name(&self) -> String {
        self.to_string()
    }
}

fn infix_symbol(op: TransformOp) -> &'static str {
    match op {
        TransformOp::Add => "+",
        TransformOp::Sub => "-",
        TransformOp::Mul => "*",
        TransformOp::Div => "/",
        TransformOp::And => "AND",
        TransformOp::Or => "OR",
        _ => unreachable!("not a binary op"),
    }
}

impl fmt::Display for FeatureExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureExpr::Raw { column } => write!(f, "{}", column.to_uppercase()),
            FeatureExpr::Unary {
                op,
                child,
                level: Some(level),
            } => write!(f, "{}({} = {:?})", op.name().to_uppercase(), child, level),
            FeatureExpr::Unary { op, child, .. } | FeatureExpr::Date { op, child } => {
                write!(f, "{}({})", op.name().to_uppercase(), child)
            }
            FeatureExpr::Binary { op, left, right } => {
                write!(f, "({} {} {})", left, infix_symbol(*op), right)
            }
            FeatureExpr::Aggregation { op, key, value } => {
                write!(f, "{}({} BY {})", op.name().to_uppercase(), value, key)
            }
        }
    }
}
