//! Transformation catalog and the feature-expression algebra.

mod eval;
mod expand;
mod expr;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::ColumnKind;

pub use eval::{apply, evaluate, CandidateFeature, ONE_HOT_MAX_LEVELS, OTHER_LEVEL};
pub use expand::{expand_action, pearson_abs, ExpandOptions, MAX_MISSING_FRACTION};
pub use expr::FeatureExpr;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TransformError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("{op} cannot be applied to {kinds:?}")]
    NotApplicable { op: TransformOp, kinds: Vec<ColumnKind> },
    #[error("one_hot node without a level")]
    MissingLevel,
    #[error("search space size overflows 64 bits")]
    Overflow,
    #[error("unknown transformation `{0}`")]
    UnknownOp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arity {
    Unary,
    Binary,
    Aggregation,
    DateOp,
}

impl Arity {
    /// Number of operand features the transformation consumes.
    pub fn operands(self) -> usize {
        match self {
            Arity::Unary | Arity::DateOp => 1,
            Arity::Binary | Arity::Aggregation => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformOp {
    Log,
    Sqrt,
    Square,
    Reciprocal,
    OneHot,
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
    GroupMin,
    GroupMax,
    GroupMean,
    GroupSum,
    Day,
    Month,
    Year,
    IsWeekend,
}

const CATALOG: [TransformOp; 19] = [
    TransformOp::Log,
    TransformOp::Sqrt,
    TransformOp::Square,
    TransformOp::Reciprocal,
    TransformOp::OneHot,
    TransformOp::Add,
    TransformOp::Sub,
    TransformOp::Mul,
    TransformOp::Div,
    TransformOp::And,
    TransformOp::Or,
    TransformOp::GroupMin,
    TransformOp::GroupMax,
    TransformOp::GroupMean,
    TransformOp::GroupSum,
    TransformOp::Day,
    TransformOp::Month,
    TransformOp::Year,
    TransformOp::IsWeekend,
];

/// The fixed action set. An op's position here is its action index.
pub fn catalog() -> &'static [TransformOp] {
    &CATALOG
}

impl TransformOp {
    pub fn name(self) -> &'static str {
        match self {
            TransformOp::Log => "log",
            TransformOp::Sqrt => "sqrt",
            TransformOp::Square => "square",
            TransformOp::Reciprocal => "reciprocal",
            TransformOp::OneHot => "one_hot",
            TransformOp::Add => "add",
            TransformOp::Sub => "sub",
            TransformOp::Mul => "mul",
            TransformOp::Div => "div",
            TransformOp::And => "and",
            TransformOp::Or => "or",
            TransformOp::GroupMin => "group_min",
            TransformOp::GroupMax => "group_max",
            TransformOp::GroupMean => "group_mean",
            TransformOp::GroupSum => "group_sum",
            TransformOp::Day => "day",
            TransformOp::Month => "month",
            TransformOp::Year => "year",
            TransformOp::IsWeekend => "is_weekend",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, TransformError> {
        CATALOG
            .iter()
            .copied()
            .find(|op| op.name() == name)
            .ok_or_else(|| TransformError::UnknownOp(name.to_string()))
    }

    pub fn index(self) -> usize {
        CATALOG.iter().position(|&op| op == self).expect("op in catalog")
    }

    pub fn from_index(index: usize) -> Option<Self> {
        CATALOG.get(index).copied()
    }

    pub fn arity(self) -> Arity {
        use TransformOp::*;
        match self {
            Log | Sqrt | Square | Reciprocal | OneHot => Arity::Unary,
            Add | Sub | Mul | Div | And | Or => Arity::Binary,
            GroupMin | GroupMax | GroupMean | GroupSum => Arity::Aggregation,
            Day | Month | Year | IsWeekend => Arity::DateOp,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            TransformOp::Add | TransformOp::Mul | TransformOp::And | TransformOp::Or
        )
    }

    /// Kind of the result when applied to operands of the given kinds, or
    /// `None` when the operands are not applicable. Aggregations take
    /// `[group key, value]`.
    pub fn output_kind(self, inputs: &[ColumnKind]) -> Option<ColumnKind> {
        use ColumnKind::*;
        use TransformOp::*;
        match (self, inputs) {
            (Log | Sqrt | Square | Reciprocal, [Numeric]) => Some(Numeric),
            (OneHot, [Categorical]) => Some(Boolean),
            (Add | Sub | Mul | Div, [Numeric, Numeric]) => Some(Numeric),
            (And | Or, [Boolean, Boolean]) => Some(Boolean),
            (GroupMin | GroupMax | GroupMean | GroupSum, [Categorical | Boolean, Numeric]) => {
                Some(Numeric)
            }
            (Day | Month | Year, [Date]) => Some(Numeric),
            (IsWeekend, [Date]) => Some(Boolean),
            _ => None,
        }
    }
}

impl TransformOp {
    /// Whether some ordered tuple of distinct features with these kinds is
    /// a valid operand list.
    pub fn applicable_to(self, kinds: &[ColumnKind]) -> bool {
        match self.arity().operands() {
            1 => kinds.iter().any(|&k| self.output_kind(&[k]).is_some()),
            _ => kinds.iter().enumerate().any(|(i, &a)| {
                kinds
                    .iter()
                    .enumerate()
                    .any(|(j, &b)| i != j && self.output_kind(&[a, b]).is_some())
            }),
        }
    }
}

impl fmt::Display for TransformOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Size of the initial search space for `p` features:
/// `sum_{i=1..p} p!/(p-i)! * |T_i|`, where `arities` maps an operand count
/// `i` to the number of `i`-ary transformations (absent means zero).
pub fn search_space_size(p: usize, arities: &BTreeMap<usize, u64>) -> Result<u64, TransformError> {
    let mut total: u64 = 0;
    // Running falling factorial p * (p-1) * ... * (p-i+1).
    let mut perms: u64 = 1;
    let last = arities.keys().copied().max().unwrap_or(0).min(p);
    for i in 1..=last {
        perms = perms
            .checked_mul((p - i + 1) as u64)
            .ok_or(TransformError::Overflow)?;
        let ops = arities.get(&i).copied().unwrap_or(0);
        if ops == 0 {
            continue;
        }
        let term = perms.checked_mul(ops).ok_or(TransformError::Overflow)?;
        total = total.checked_add(term).ok_or(TransformError::Overflow)?;
    }
    Ok(total)
}

/// Operand-count histogram of a set of transformations, suitable for
/// [`search_space_size`].
pub fn arity_histogram(ops: &[TransformOp]) -> BTreeMap<usize, u64> {
    let mut hist = BTreeMap::new();
    for op in ops {
        *hist.entry(op.arity().operands()).or_insert(0) += 1;
    }
    hist
}
