use serde::{Deserialize, Serialize};

use super::rules::{Atom, FactBase, HAS_INPUT, HAS_OUTPUT, HAS_UNIT, NON_INTERPRETABLE};
use super::units::{propagate_unit, Dims};
use super::{KnowledgeGraph, FEATURE_CLASS};
use crate::transform::FeatureExpr;

pub const UNKNOWN_UNIT_REASON: &str = "unknown unit";

/// Interpretability judgement of one feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Interpretable,
    NonInterpretable { reason: String },
    /// No leaf of the feature is known to the graph; such features are kept.
    Uncovered,
}

impl Verdict {
    pub fn is_non_interpretable(&self) -> bool {
        matches!(self, Verdict::NonInterpretable { .. })
    }
}

/// One node of a judged expression, for explanations.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub display_name: String,
    pub depth: usize,
    pub unit: Option<Dims>,
    /// Mapped class, for leaves only.
    pub class: Option<String>,
    /// Unit named by the mapping, for leaves only.
    pub mapped_unit: Option<String>,
}

struct Materializer<'k> {
    kg: &'k KnowledgeGraph,
    facts: FactBase,
    next: usize,
}

impl Materializer<'_> {
    fn unit_individual(&mut self, dims: Dims, mapped: Option<&str>) -> String {
        if let Some(name) = mapped {
            return name.to_string();
        }
        match self.kg.unit_for_dims(&dims) {
            Some(u) => u.name.clone(),
            None => {
                let id = format!("[{dims}]");
                self.facts.declare_unit(id.clone(), dims);
                id
            }
        }
    }

    /// Emits facts for `expr`; returns the feature individual and its unit.
    fn visit(&mut self, expr: &FeatureExpr) -> (String, Option<Dims>) {
        let id = self.next;
        self.next += 1;
        let feature = format!("f{id}");
        self.facts.insert(Atom::new(FEATURE_CLASS, &[&feature]));
        let (unit, mapped_unit) = match expr {
            FeatureExpr::Raw { column } => match self.kg.concept_of(column) {
                Some(concept) => {
                    self.facts.insert(Atom::new(concept.class.clone(), &[&feature]));
                    let unit = concept.unit.as_deref().and_then(|u| self.kg.unit(u));
                    (unit.map(|u| u.dims), unit.map(|u| u.name.clone()))
                }
                None => (None, None),
            },
            _ => {
                let op = expr.op().expect("non-leaf");
                let transform = format!("t{id}");
                if let Some(class) = self.kg.transform_class(op) {
                    self.facts.insert(Atom::new(class, &[&transform]));
                }
                let mut units = Vec::new();
                for child in expr.children() {
                    let (child_id, child_unit) = self.visit(child);
                    self.facts.insert(Atom::new(HAS_INPUT, &[&transform, &child_id]));
                    units.push(child_unit);
                }
                self.facts.insert(Atom::new(HAS_OUTPUT, &[&transform, &feature]));
                (propagate_unit(op, &units), None)
            }
        };
        if let Some(dims) = unit {
            let u = self.unit_individual(dims, mapped_unit.as_deref());
            self.facts.insert(Atom::new(HAS_UNIT, &[&feature, &u]));
        }
        (feature, unit)
    }
}

impl KnowledgeGraph {
    /// Propagated unit of `expr`; `None` when unknown.
    pub fn unit_of(&self, expr: &FeatureExpr) -> Option<Dims> {
        match expr {
            FeatureExpr::Raw { column } => self
                .concept_of(column)
                .and_then(|c| c.unit.as_deref())
                .and_then(|u| self.unit(u))
                .map(|u| u.dims),
            _ => {
                let inputs: Vec<Option<Dims>> =
                    expr.children().into_iter().map(|c| self.unit_of(c)).collect();
                propagate_unit(expr.op().expect("non-leaf"), &inputs)
            }
        }
    }

    /// Ground facts describing `expr`: one feature individual per node with
    /// its class and unit, and one transformation individual per inner node
    /// linked by `hasInput`/`hasOutput`. Returns the facts and the root
    /// feature individual.
    pub fn materialize(&self, expr: &FeatureExpr) -> (FactBase, String) {
        let mut m = Materializer {
            kg: self,
            facts: FactBase::new(),
            next: 0,
        };
        let (root, _) = m.visit(expr);
        (m.facts, root)
    }

    fn is_covered(&self, expr: &FeatureExpr) -> bool {
        expr.leaves().iter().any(|l| self.concept_of(l).is_some())
    }

    /// The interpretability verdict for `expr`.
    ///
    /// Uncovered when no leaf is mapped. Otherwise the rules run over the
    /// materialized facts; a derived `nonInterpretable` on the root rejects
    /// the feature with the rule's name. A covered feature whose unit is
    /// unknown, or is not dimensionless and matches no registered unit, is
    /// rejected as well.
    pub fn judge(&self, expr: &FeatureExpr) -> Verdict {
        if !self.is_covered(expr) {
            return Verdict::Uncovered;
        }
        if expr.is_raw() {
            return Verdict::Interpretable;
        }
        let (facts, root) = self.materialize(expr);
        let closed = self.forward_chain(facts);
        let flag = Atom::new(NON_INTERPRETABLE, &[&root]);
        if closed.contains(&flag) {
            let reason = closed.derived_by(&flag).unwrap_or("asserted").to_string();
            return Verdict::NonInterpretable { reason };
        }
        match self.unit_of(expr) {
            Some(dims) if self.is_known_unit(&dims) => Verdict::Interpretable,
            _ => Verdict::NonInterpretable {
                reason: UNKNOWN_UNIT_REASON.to_string(),
            },
        }
    }

    /// Pre-order listing of `expr`'s nodes with their propagated units.
    pub fn explain(&self, expr: &FeatureExpr) -> Vec<NodeReport> {
        fn walk(kg: &KnowledgeGraph, e: &FeatureExpr, depth: usize, out: &mut Vec<NodeReport>) {
            let concept = match e {
                FeatureExpr::Raw { column } => kg.concept_of(column),
                _ => None,
            };
            out.push(NodeReport {
                display_name: e.render_name(),
                depth,
                unit: kg.unit_of(e),
                class: concept.map(|c| c.class.clone()),
                mapped_unit: concept.and_then(|c| c.unit.clone()),
            });
            for c in e.children() {
                walk(kg, c, depth + 1, out);
            }
        }
        let mut out = Vec::new();
        walk(self, expr, 0, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{ColumnMapping, ConceptRef};
    use crate::transform::TransformOp;

    fn mapped(pairs: &[(&str, &str, Option<&str>)]) -> KnowledgeGraph {
        let mapping: ColumnMapping = pairs
            .iter()
            .map(|(col, class, unit)| {
                (
                    col.to_string(),
                    ConceptRef {
                        class: class.to_string(),
                        unit: unit.map(str::to_string),
                    },
                )
            })
            .collect();
        KnowledgeGraph::bundled().with_mapping(mapping).unwrap()
    }

    fn raw(c: &str) -> FeatureExpr {
        FeatureExpr::raw(c)
    }

    fn non_interpretable(v: &Verdict) -> &str {
        match v {
            Verdict::NonInterpretable { reason } => reason,
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn bmi_is_interpretable() {
        let kg = mapped(&[("weight", "Weight", Some("kg")), ("height", "Height", Some("m"))]);
        let bmi = FeatureExpr::binary(
            TransformOp::Div,
            raw("weight"),
            FeatureExpr::unary(TransformOp::Square, raw("height")),
        );
        assert_eq!(kg.judge(&bmi), Verdict::Interpretable);
        assert_eq!(kg.describe_unit(kg.unit_of(&bmi).as_ref()), "kg/m²");
    }

    #[test]
    fn mixed_unit_addition_fires_first_rule() {
        let kg = mapped(&[("t", "Temperature", Some("°C")), ("p", "Price", Some("USD"))]);
        let sum = FeatureExpr::binary(TransformOp::Add, raw("t"), raw("p"));
        assert_eq!(non_interpretable(&kg.judge(&sum)), "different-units-addition");
    }

    #[test]
    fn summing_stock_fires_second_rule() {
        let kg = mapped(&[("inv", "Stock", Some("count")), ("store", "Store", None)]);
        let total = FeatureExpr::aggregation(TransformOp::GroupSum, raw("store"), raw("inv"));
        assert_eq!(non_interpretable(&kg.judge(&total)), "stock-not-summable");
        let mean = FeatureExpr::aggregation(TransformOp::GroupMean, raw("store"), raw("inv"));
        assert_eq!(kg.judge(&mean), Verdict::Interpretable);
    }

    #[test]
    fn adding_temperatures_fires_third_rule() {
        let kg = mapped(&[("lo", "Temperature", Some("°C")), ("hi", "Temperature", Some("°C"))]);
        let sum = FeatureExpr::binary(TransformOp::Add, raw("lo"), raw("hi"));
        assert_eq!(non_interpretable(&kg.judge(&sum)), "temperature-addition");
        let diff = FeatureExpr::binary(TransformOp::Sub, raw("hi"), raw("lo"));
        assert_eq!(kg.judge(&diff), Verdict::Interpretable);
    }

    #[test]
    fn unknown_units_are_rejected() {
        let kg = mapped(&[("weight", "Weight", Some("kg")), ("height", "Height", Some("m")), ("x", "Weight", None)]);
        let odd = FeatureExpr::binary(TransformOp::Div, raw("weight"), raw("height"));
        assert_eq!(non_interpretable(&kg.judge(&odd)), UNKNOWN_UNIT_REASON);
        let partly = FeatureExpr::binary(TransformOp::Mul, raw("weight"), raw("unmapped"));
        assert_eq!(non_interpretable(&kg.judge(&partly)), UNKNOWN_UNIT_REASON);
        // mapped with no unit: raw stays interpretable
        assert_eq!(kg.judge(&raw("x")), Verdict::Interpretable);
    }

    #[test]
    fn uncovered_features_and_empty_graph() {
        let kg = mapped(&[("weight", "Weight", Some("kg"))]);
        let e = FeatureExpr::binary(TransformOp::Add, raw("a"), raw("b"));
        assert_eq!(kg.judge(&e), Verdict::Uncovered);
        let empty = KnowledgeGraph::empty();
        let bmi = FeatureExpr::binary(TransformOp::Div, raw("weight"), raw("height"));
        assert_eq!(empty.judge(&bmi), Verdict::Uncovered);
        assert_eq!(empty.judge(&raw("weight")), Verdict::Uncovered);
    }

    #[test]
    fn explain_lists_node_units() {
        let kg = mapped(&[("weight", "Weight", Some("kg")), ("height", "Height", Some("m"))]);
        let bmi = FeatureExpr::binary(
            TransformOp::Div,
            raw("weight"),
            FeatureExpr::unary(TransformOp::Square, raw("height")),
        );
        let units: Vec<String> = kg
            .explain(&bmi)
            .iter()
            .map(|n| kg.describe_unit(n.unit.as_ref()))
            .collect();
        assert_eq!(units, vec!["kg/m²", "kg", "m²", "m"]);
    }
}
