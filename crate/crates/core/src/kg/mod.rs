//! Domain knowledge and the interpretability discriminator.
//!
//! A [`KnowledgeGraph`] holds a class DAG, a registry of unit individuals,
//! quantity classes, the mapping from dataset columns to concepts, and a
//! list of Horn rules. [`KnowledgeGraph::judge`] turns a feature expression
//! into facts, runs the rules to a fixpoint and checks the resulting unit.

mod judge;
mod rules;
mod units;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::transform::TransformOp;

pub use judge::{NodeReport, Verdict, UNKNOWN_UNIT_REASON};
pub use rules::{Atom, FactBase, Pattern, Rule, Term, NON_INTERPRETABLE};
pub use units::{propagate_unit, BaseDim, Dims, Unit};

/// Class that every unit individual belongs to.
pub const UNITS_CLASS: &str = "Units";
/// Class asserted for every materialized feature.
pub const FEATURE_CLASS: &str = "Feature";

const DEFAULT_KG: &str = include_str!("../../data/kg/default.json");

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed document {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("subclass edges form a cycle through `{0}`")]
    Cycle(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("duplicate unit `{0}`")]
    DuplicateUnit(String),
    #[error("malformed atom `{0}`")]
    BadAtom(String),
    #[error("rule `{rule}`: variable ?{var} is not bound by the body")]
    UnsafeRule { rule: String, var: String },
    #[error("rule `{rule}`: predicate `{pred}` with {arity} argument(s) is not known")]
    UnknownPredicate {
        rule: String,
        pred: String,
        arity: usize,
    },
    #[error("bad exponent `{0}`")]
    BadExponent(String),
}

/// Exponent as written in a document: an integer or a `"p/q"` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Exponent {
    Int(i64),
    Text(String),
}

impl Exponent {
    fn to_rational(&self) -> Result<Rational64, KgError> {
        match self {
            Exponent::Int(n) => Ok(Rational64::from_integer(*n)),
            Exponent::Text(t) => t
                .trim()
                .parse::<Rational64>()
                .map_err(|_| KgError::BadExponent(t.clone())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct UnitDoc {
    name: String,
    #[serde(default)]
    dims: BTreeMap<BaseDim, Exponent>,
    class: String,
}

#[derive(Debug, Clone, Deserialize)]
struct QuantityDoc {
    unit: String,
    quantity: String,
}

#[derive(Debug, Clone, Deserialize)]
struct RuleDoc {
    name: String,
    body: Vec<String>,
    head: String,
}

/// On-disk KG document.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct KgDocument {
    #[serde(default)]
    classes: Vec<String>,
    #[serde(default)]
    subclass_of: Vec<(String, String)>,
    #[serde(default)]
    units: Vec<UnitDoc>,
    #[serde(default)]
    quantities: Vec<QuantityDoc>,
    #[serde(default)]
    transform_classes: BTreeMap<TransformOp, String>,
    #[serde(default)]
    rules: Vec<RuleDoc>,
}

/// The concept a dataset column is mapped to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptRef {
    pub class: String,
    #[serde(default)]
    pub unit: Option<String>,
}

/// Column name to concept mapping, stored as `{column: {class, unit}}`.
pub type ColumnMapping = BTreeMap<String, ConceptRef>;

pub fn load_mapping(path: &Path) -> Result<ColumnMapping, KgError> {
    let text = std::fs::read_to_string(path).map_err(|source| KgError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| KgError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    classes: Vec<String>,
    class_index: HashMap<String, usize>,
    subclass_edges: Vec<(usize, usize)>,
    /// Reflexive-transitive superclasses per class, sorted by class index.
    ancestors: Vec<Vec<usize>>,
    units: Vec<Unit>,
    unit_index: HashMap<String, usize>,
    quantity_of_unit: BTreeMap<String, String>,
    transform_classes: BTreeMap<TransformOp, String>,
    rules: Vec<Rule>,
    column_concepts: ColumnMapping,
}

impl KnowledgeGraph {
    /// A graph with no knowledge at all. Every judgement is `Uncovered`.
    pub fn empty() -> Self {
        Self::default()
    }

    /// The bundled graph: units, quantities, transformation classes and
    /// the three non-interpretability rules.
    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_KG).expect("bundled knowledge graph is valid")
    }

    pub fn load(path: &Path) -> Result<Self, KgError> {
        let text = std::fs::read_to_string(path).map_err(|source| KgError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let doc: KgDocument = serde_json::from_str(&text).map_err(|source| KgError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_document(doc)
    }

    pub fn from_json(text: &str) -> Result<Self, KgError> {
        let doc: KgDocument = serde_json::from_str(text).map_err(|source| KgError::Json {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        Self::from_document(doc)
    }

    fn from_document(doc: KgDocument) -> Result<Self, KgError> {
        let mut kg = KnowledgeGraph::default();
        for c in doc.classes {
            if kg.class_index.contains_key(&c) {
                return Err(KgError::DuplicateClass(c));
            }
            kg.class_index.insert(c.clone(), kg.classes.len());
            kg.classes.push(c);
        }
        for (child, parent) in &doc.subclass_of {
            let edge = (kg.class_id(child)?, kg.class_id(parent)?);
            kg.subclass_edges.push(edge);
        }
        kg.ancestors = kg.compute_ancestors()?;

        for u in doc.units {
            if kg.unit_index.contains_key(&u.name) {
                return Err(KgError::DuplicateUnit(u.name));
            }
            kg.class_id(&u.class)?;
            let mut dims = Dims::dimensionless();
            for (base, e) in &u.dims {
                dims = dims.with(*base, e.to_rational()?);
            }
            kg.unit_index.insert(u.name.clone(), kg.units.len());
            kg.units.push(Unit {
                name: u.name,
                dims,
                class: u.class,
            });
        }
        for q in doc.quantities {
            if !kg.unit_index.contains_key(&q.unit) {
                return Err(KgError::UnknownUnit(q.unit));
            }
            kg.class_id(&q.quantity)?;
            kg.quantity_of_unit.insert(q.unit, q.quantity);
        }
        for class in doc.transform_classes.values() {
            kg.class_id(class)?;
        }
        kg.transform_classes = doc.transform_classes;
        for r in doc.rules {
            let rule = Rule::parse(&r.name, &r.body, &r.head)?;
            kg.check_predicates(&rule)?;
            kg.rules.push(rule);
        }
        Ok(kg)
    }

    fn check_predicates(&self, rule: &Rule) -> Result<(), KgError> {
        for p in rule.body.iter().chain(std::iter::once(&rule.head)) {
            let arity = p.args.len();
            let known = match arity {
                1 => p.pred == NON_INTERPRETABLE || self.class_index.contains_key(&p.pred),
                2 => matches!(
                    p.pred.as_str(),
                    rules::HAS_UNIT | rules::HAS_INPUT | rules::HAS_OUTPUT | rules::DIFFERENT
                ),
                _ => false,
            };
            if !known {
                if arity == 1 {
                    return Err(KgError::UnknownClass(p.pred.clone()));
                }
                return Err(KgError::UnknownPredicate {
                    rule: rule.name.clone(),
                    pred: p.pred.clone(),
                    arity,
                });
            }
        }
        if rule.head.pred == rules::DIFFERENT {
            return Err(KgError::UnknownPredicate {
                rule: rule.name.clone(),
                pred: rule.head.pred.clone(),
                arity: 2,
            });
        }
        Ok(())
    }

    fn class_id(&self, name: &str) -> Result<usize, KgError> {
        self.class_index
            .get(name)
            .copied()
            .ok_or_else(|| KgError::UnknownClass(name.to_string()))
    }

    /// Validates acyclicity (Kahn) and returns reflexive ancestor sets.
    fn compute_ancestors(&self) -> Result<Vec<Vec<usize>>, KgError> {
        let n = self.classes.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for &(c, p) in &self.subclass_edges {
            parents[c].push(p);
            children[p].push(c);
            indegree[c] += 1;
        }
        // Process roots first so every parent's ancestor set is ready.
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut done = 0;
        while let Some(i) = queue.pop_front() {
            done += 1;
            let mut set: BTreeSet<usize> = BTreeSet::from([i]);
            for &p in &parents[i] {
                set.extend(sets[p].iter().copied());
            }
            sets[i] = set;
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if done < n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).expect("cycle member");
            return Err(KgError::Cycle(self.classes[stuck].clone()));
        }
        Ok(sets.into_iter().map(|s| s.into_iter().collect()).collect())
    }

    /// Attaches a column mapping, validating its classes and units.
    pub fn with_mapping(mut self, mapping: ColumnMapping) -> Result<Self, KgError> {
        for concept in mapping.values() {
            self.class_id(&concept.class)?;
            if let Some(u) = &concept.unit {
                if !self.unit_index.contains_key(u) {
                    return Err(KgError::UnknownUnit(u.clone()));
                }
            }
        }
        self.column_concepts = mapping;
        Ok(self)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn has_class(&self, name: &str) -> bool {
        self.class_index.contains_key(name)
    }

    pub fn subclass_edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.subclass_edges
            .iter()
            .map(|&(c, p)| (self.classes[c].as_str(), self.classes[p].as_str()))
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn unit(&self, name: &str) -> Option<&Unit> {
        self.unit_index.get(name).map(|&i| &self.units[i])
    }

    pub fn quantity_of_unit(&self, unit: &str) -> Option<&str> {
        self.quantity_of_unit.get(unit).map(String::as_str)
    }

    pub fn transform_class(&self, op: TransformOp) -> Option<&str> {
        self.transform_classes.get(&op).map(String::as_str)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn column_concepts(&self) -> &ColumnMapping {
        &self.column_concepts
    }

    pub fn concept_of(&self, column: &str) -> Option<&ConceptRef> {
        self.column_concepts.get(column)
    }

    /// Reflexive-transitive superclasses of `class`, in document order.
    pub fn ancestors(&self, class: &str) -> Result<Vec<&str>, KgError> {
        let id = self.class_id(class)?;
        Ok(self.ancestors[id]
            .iter()
            .map(|&i| self.classes[i].as_str())
            .collect())
    }

    /// `sub ⊑ sup`: `sup` is reachable from `sub` over subclass edges
    /// (reflexively).
    pub fn subsumes(&self, sub: &str, sup: &str) -> Result<bool, KgError> {
        let (a, b) = (self.class_id(sub)?, self.class_id(sup)?);
        Ok(self.ancestors[a].binary_search(&b).is_ok())
    }

    /// Whether the registered unit `unit_name` is an instance of `class`.
    pub fn is_instance(&self, unit_name: &str, class: &str) -> Result<bool, KgError> {
        self.class_id(class)?;
        match self.unit(unit_name) {
            Some(u) => self.subsumes(&u.class, class),
            None => Ok(false),
        }
    }

    /// First registered unit (document order) with exactly these dimensions.
    pub fn unit_for_dims(&self, dims: &Dims) -> Option<&Unit> {
        self.units.iter().find(|u| u.dims == *dims)
    }

    /// Whether `dims` denote a known unit: dimensionless, or matching a
    /// registered unit individual of class `Units`.
    pub fn is_known_unit(&self, dims: &Dims) -> bool {
        if dims.is_dimensionless() {
            return true;
        }
        match self.unit_for_dims(dims) {
            Some(u) if self.has_class(UNITS_CLASS) => {
                self.is_instance(&u.name, UNITS_CLASS).unwrap_or(false)
            }
            Some(_) => true,
            None => false,
        }
    }

    /// Human-readable unit: the registered name when one matches, the raw
    /// dimensions otherwise, `?` when unknown.
    pub fn describe_unit(&self, unit: Option<&Dims>) -> String {
        match unit {
            None => "?".to_string(),
            Some(d) => match self.unit_for_dims(d) {
                Some(u) => u.name.clone(),
                None => format!("[{d}]"),
            },
        }
    }

    /// Fixed concept indexing for semantic vectors: classes in document
    /// order, then unit names in document order.
    pub fn concept_order(&self) -> Vec<&str> {
        self.classes
            .iter()
            .chain(self.units.iter().map(|u| &u.name))
            .map(String::as_str)
            .collect()
    }

    pub fn concept_count(&self) -> usize {
        self.classes.len() + self.units.len()
    }

    pub fn class_concept_index(&self, class: &str) -> Option<usize> {
        self.class_index.get(class).copied()
    }

    pub fn unit_concept_index(&self, unit: &str) -> Option<usize> {
        self.unit_index.get(unit).map(|i| self.classes.len() + i)
    }

    pub(crate) fn ancestor_ids(&self, class: &str) -> Option<&[usize]> {
        self.class_index.get(class).map(|&i| self.ancestors[i].as_slice())
    }

    /// Runs the rules over `facts` to a fixpoint.
    pub fn forward_chain(&self, facts: FactBase) -> FactBase {
        rules::forward_chain(self, &self.rules, facts)
    }

    /// Fraction of non-target columns with a concept mapping.
    pub fn coverage(&self, d: &Dataset) -> f64 {
        let (mapped, total) = d.feature_columns().fold((0usize, 0usize), |(m, t), c| {
            (m + usize::from(self.column_concepts.contains_key(&c.name)), t + 1)
        });
        if total == 0 {
            0.0
        } else {
            mapped as f64 / total as f64
        }
    }

    /// Non-target columns without a mapping, in file order.
    pub fn unmapped_columns<'d>(&self, d: &'d Dataset) -> Vec<&'d str> {
        d.feature_columns()
            .filter(|c| !self.column_concepts.contains_key(&c.name))
            .map(|c| c.name.as_str())
            .collect()
    }
}

impl rules::Ontology for KnowledgeGraph {
    fn ancestors_of(&self, class: &str) -> Option<Vec<&str>> {
        self.ancestors(class).ok()
    }

    fn registered_dims(&self, unit: &str) -> Option<Dims> {
        self.unit(unit).map(|u| u.dims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(classes: &[&str], edges: &[(&str, &str)]) -> String {
        serde_json::json!({
            "classes": classes,
            "subclass_of": edges,
        })
        .to_string()
    }

    #[test]
    fn bundled_graph_loads() {
        let kg = KnowledgeGraph::bundled();
        assert!(kg.subclass_edges().any(|e| e == ("Weight", "PhysicalQuantity")));
        assert_eq!(kg.rules().len(), 3);
        assert!(kg.unit("kg/m²").is_some());
        assert_eq!(kg.quantity_of_unit("kg"), Some("Weight"));
        assert_eq!(kg.concept_order().len(), kg.concept_count());
    }

    #[test]
    fn rejects_cycles() {
        let err = KnowledgeGraph::from_json(&doc(&["A", "B"], &[("A", "B"), ("B", "A")])).unwrap_err();
        assert!(matches!(err, KgError::Cycle(_)));
    }

    #[test]
    fn rejects_unknown_references() {
        let err = KnowledgeGraph::from_json(&doc(&["A"], &[("A", "Z")])).unwrap_err();
        assert!(matches!(err, KgError::UnknownClass(c) if c == "Z"));
        let dup = r#"{"classes":["Units"],"units":[
            {"name":"kg","dims":{"mass":1},"class":"Units"},
            {"name":"kg","dims":{"mass":1},"class":"Units"}]}"#;
        assert!(matches!(KnowledgeGraph::from_json(dup), Err(KgError::DuplicateUnit(_))));
        let bad_rule = r#"{"classes":["Feature"],"rules":[
            {"name":"r","body":["Feature(?x)","Zorble(?x)"],"head":"nonInterpretable(?x)"}]}"#;
        assert!(matches!(KnowledgeGraph::from_json(bad_rule), Err(KgError::UnknownClass(_))));
    }

    #[test]
    fn empty_rules_section() {
        let kg = KnowledgeGraph::from_json(r#"{"classes":["A"],"rules":[]}"#).unwrap();
        assert!(kg.rules().is_empty());
    }

    #[test]
    fn subsumption() {
        let kg = KnowledgeGraph::from_json(&doc(
            &["A", "B", "C", "D", "E"],
            &[("A", "B"), ("B", "C"), ("C", "D")],
        ))
        .unwrap();
        assert!(kg.subsumes("A", "A").unwrap());
        assert!(kg.subsumes("A", "B").unwrap());
        assert!(kg.subsumes("A", "D").unwrap());
        assert!(!kg.subsumes("D", "A").unwrap());
        assert!(!kg.subsumes("A", "E").unwrap());
        assert!(kg.subsumes("A", "Q").is_err());

        let bundled = KnowledgeGraph::bundled();
        assert!(bundled.subsumes("Weight", "PhysicalQuantity").unwrap());
        assert!(bundled.subsumes("Weight", "Weight").unwrap());
    }

    #[test]
    fn instance_checking() {
        let kg = KnowledgeGraph::bundled();
        assert!(kg.is_instance("kg", UNITS_CLASS).unwrap());
        assert!(kg.is_instance("kg", "MassUnit").unwrap());
        assert!(!kg.is_instance("zorble", UNITS_CLASS).unwrap());
        assert!(!kg.is_instance("kg", "LengthUnit").unwrap());
        assert!(kg.is_instance("kg", "NoSuchClass").is_err());
    }

    #[test]
    fn fractional_exponents() {
        let text = r#"{"classes":["Units"],"units":[{"name":"rt","dims":{"length":"1/2"},"class":"Units"}]}"#;
        let kg = KnowledgeGraph::from_json(text).unwrap();
        assert_eq!(kg.unit("rt").unwrap().dims.get(BaseDim::Length), Rational64::new(1, 2));
    }

    #[test]
    fn mapping_validation() {
        let kg = KnowledgeGraph::bundled();
        let mut m = ColumnMapping::new();
        m.insert("w".into(), ConceptRef { class: "Weight".into(), unit: Some("kg".into()) });
        assert!(kg.clone().with_mapping(m.clone()).is_ok());
        m.insert("z".into(), ConceptRef { class: "Weight".into(), unit: Some("furlong".into()) });
        assert!(matches!(kg.clone().with_mapping(m), Err(KgError::UnknownUnit(_))));
    }
}
