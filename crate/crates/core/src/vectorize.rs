//! Semantic vectors: one dimension per KG concept.

use std::ops::Add;

use crate::kg::KnowledgeGraph;
use crate::transform::FeatureExpr;

/// Non-negative counts over the graph's concept order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector(pub Vec<u32>);

impl FeatureVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }
}

impl Add for &FeatureVector {
    type Output = FeatureVector;
    fn add(self, rhs: &FeatureVector) -> FeatureVector {
        assert_eq!(self.len(), rhs.len(), "vectors from different graphs");
        FeatureVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

/// Indicator vector of one feature.
///
/// Each mapped leaf lights up its class, every superclass of it and its
/// unit. A derived feature additionally lights up the registered unit its
/// propagated dimensions resolve to. Unmapped leaves contribute nothing.
pub fn phi_feature(kg: &KnowledgeGraph, expr: &FeatureExpr) -> FeatureVector {
    let mut v = FeatureVector::zeros(kg.concept_count());
    for leaf in expr.leaves() {
        let Some(concept) = kg.concept_of(leaf) else {
            continue;
        };
        for &id in kg.ancestor_ids(&concept.class).unwrap_or_default() {
            v.0[id] = 1;
        }
        if let Some(i) = concept.unit.as_deref().and_then(|u| kg.unit_concept_index(u)) {
            v.0[i] = 1;
        }
    }
    if !expr.is_raw() {
        let root = kg
            .unit_of(expr)
            .and_then(|dims| kg.unit_for_dims(&dims))
            .and_then(|u| kg.unit_concept_index(&u.name));
        if let Some(i) = root {
            v.0[i] = 1;
        }
    }
    v
}

/// State vector of a feature set: the element-wise sum of its features'
/// vectors.
pub fn phi_state<'a>(kg: &KnowledgeGraph, features: impl IntoIterator<Item = &'a FeatureExpr>) -> FeatureVector {
    features
        .into_iter()
        .fold(FeatureVector::zeros(kg.concept_count()), |acc, f| {
            &acc + &phi_feature(kg, f)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{ColumnMapping, ConceptRef};
    use crate::transform::TransformOp;

    fn kg() -> KnowledgeGraph {
        let mut m = ColumnMapping::new();
        m.insert("weight".into(), ConceptRef { class: "Weight".into(), unit: Some("kg".into()) });
        m.insert("height".into(), ConceptRef { class: "Height".into(), unit: Some("m".into()) });
        KnowledgeGraph::bundled().with_mapping(m).unwrap()
    }

    fn ones(kg: &KnowledgeGraph, v: &FeatureVector) -> Vec<String> {
        let order = kg.concept_order();
        v.0.iter()
            .enumerate()
            .filter(|(_, &x)| x > 0)
            .map(|(i, _)| order[i].to_string())
            .collect()
    }

    #[test]
    fn raw_feature_vector() {
        let kg = kg();
        let v = phi_feature(&kg, &FeatureExpr::raw("weight"));
        assert_eq!(ones(&kg, &v), vec!["PhysicalQuantity", "Weight", "kg"]);
        assert!(phi_feature(&kg, &FeatureExpr::raw("zip")).0.iter().all(|&x| x == 0));
    }

    #[test]
    fn derived_feature_vector() {
        let kg = kg();
        let bmi = FeatureExpr::binary(
            TransformOp::Div,
            FeatureExpr::raw("weight"),
            FeatureExpr::unary(TransformOp::Square, FeatureExpr::raw("height")),
        );
        let w = phi_feature(&kg, &FeatureExpr::raw("weight"));
        let h = phi_feature(&kg, &FeatureExpr::raw("height"));
        let mut expected: Vec<u32> = w.0.iter().zip(&h.0).map(|(a, b)| (*a).max(*b)).collect();
        expected[kg.unit_concept_index("kg/m²").unwrap()] = 1;
        assert_eq!(phi_feature(&kg, &bmi).0, expected);
    }

    #[test]
    fn state_sums() {
        let kg = kg();
        let pq = kg.class_concept_index("PhysicalQuantity").unwrap();
        let empty: Vec<FeatureExpr> = Vec::new();
        assert!(phi_state(&kg, &empty).0.iter().all(|&x| x == 0));
        let both = [FeatureExpr::raw("weight"), FeatureExpr::raw("height")];
        let s = phi_state(&kg, &both);
        assert_eq!(s.0[pq], 2);
        let rev = [FeatureExpr::raw("height"), FeatureExpr::raw("weight")];
        assert_eq!(s, phi_state(&kg, &rev));
        assert_eq!(s.len(), kg.concept_count());
    }
}
