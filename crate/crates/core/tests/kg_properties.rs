use std::collections::{BTreeSet, VecDeque};

use kraft::kg::{Atom, ColumnMapping, ConceptRef, FactBase, KnowledgeGraph};
use kraft::transform::{FeatureExpr, TransformOp};
use proptest::prelude::*;

fn atoms(f: &FactBase) -> BTreeSet<Atom> {
    f.atoms().cloned().collect()
}

fn retail_kg() -> KnowledgeGraph {
    let mut m = ColumnMapping::new();
    for (col, class, unit) in [
        ("lo", "Temperature", Some("°C")),
        ("hi", "Temperature", Some("°C")),
        ("inv", "Stock", Some("count")),
        ("price", "Price", Some("USD")),
        ("store", "Store", None),
    ] {
        m.insert(
            col.into(),
            ConceptRef {
                class: class.into(),
                unit: unit.map(Into::into),
            },
        );
    }
    KnowledgeGraph::bundled().with_mapping(m).unwrap()
}

fn raw(c: &str) -> FeatureExpr {
    FeatureExpr::raw(c)
}

fn sample_exprs() -> Vec<FeatureExpr> {
    vec![
        FeatureExpr::binary(TransformOp::Add, raw("lo"), raw("hi")),
        FeatureExpr::binary(TransformOp::Add, raw("lo"), raw("price")),
        FeatureExpr::binary(TransformOp::Sub, raw("hi"), raw("lo")),
        FeatureExpr::aggregation(TransformOp::GroupSum, raw("store"), raw("inv")),
        FeatureExpr::aggregation(TransformOp::GroupMean, raw("store"), raw("inv")),
        FeatureExpr::unary(TransformOp::Log, raw("price")),
    ]
}

#[test]
fn no_rules_derive_nothing_new() {
    let kg = retail_kg();
    let no_rules = KnowledgeGraph::from_json(r#"{"classes": ["Feature", "Thing"], "subclass_of": [["Feature", "Thing"]]}"#)
        .unwrap();
    for e in sample_exprs() {
        let (facts, _) = kg.materialize(&e);
        let before = atoms(&facts);
        let after = atoms(&no_rules.forward_chain(facts));
        assert!(
            after.iter().all(|a| before.contains(a) || a.pred == "Thing"),
            "an empty rule set may only add class closure atoms"
        );
        assert!(!after.iter().any(|a| a.pred == kraft::kg::NON_INTERPRETABLE));
    }
}

#[test]
fn chaining_is_monotone_and_idempotent() {
    let kg = retail_kg();
    for e in sample_exprs() {
        let (facts, _) = kg.materialize(&e);
        let before = atoms(&facts);
        let once = kg.forward_chain(facts);
        let once_atoms = atoms(&once);
        assert!(before.is_subset(&once_atoms));
        let twice = kg.forward_chain(once);
        assert_eq!(atoms(&twice), once_atoms, "fixpoint reached in one call");
    }
}

#[test]
fn class_membership_is_closed_upward() {
    let kg = retail_kg();
    let mut facts = FactBase::new();
    facts.insert(Atom::new("Temperature", &["t"]));
    facts.insert(Atom::new("AggregationSum", &["f"]));
    let out = kg.forward_chain(facts);
    for (class, ind) in [("Temperature", "t"), ("AggregationSum", "f")] {
        for sup in kg.ancestors(class).unwrap() {
            assert!(out.contains(&Atom::new(sup, &[ind])), "{sup}({ind}) missing");
        }
    }
}

#[test]
fn rule_firing_is_recorded() {
    let kg = retail_kg();
    let e = FeatureExpr::binary(TransformOp::Add, raw("lo"), raw("hi"));
    let (facts, id) = kg.materialize(&e);
    let out = kg.forward_chain(facts);
    let head = Atom::new(kraft::kg::NON_INTERPRETABLE, &[&id]);
    assert!(out.contains(&head));
    assert_eq!(out.derived_by(&head), Some("temperature-addition"));
}

/// Random acyclic hierarchy: edges only from a lower to a higher index.
fn dag() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..=50).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n, 0..n), 0..(2 * n)).prop_map(|pairs| {
            let mut e: Vec<(usize, usize)> = pairs
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            e.sort_unstable();
            e.dedup();
            e
        });
        (Just(n), edges)
    })
}

fn reachable(n: usize, edges: &[(usize, usize)], from: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(c) = queue.pop_front() {
        for &(a, b) in edges {
            if a == c && !seen[b] {
                seen[b] = true;
                queue.push_back(b);
            }
        }
    }
    seen
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subsumption_matches_breadth_first_search((n, edges) in dag()) {
        let name = |i: usize| format!("C{i}");
        let doc = serde_json::json!({
            "classes": (0..n).map(name).collect::<Vec<_>>(),
            "subclass_of": edges.iter().map(|&(a, b)| [name(a), name(b)]).collect::<Vec<_>>(),
        });
        let kg = KnowledgeGraph::from_json(&doc.to_string()).unwrap();
        for a in 0..n {
            let oracle = reachable(n, &edges, a);
            for b in 0..n {
                prop_assert_eq!(kg.subsumes(&name(a), &name(b)).unwrap(), oracle[b], "C{} ⊑ C{}", a, b);
            }
        }
    }

    #[test]
    fn shuffled_edge_order_gives_the_same_answers((n, edges) in dag(), rot in 0usize..100) {
        let name = |i: usize| format!("C{i}");
        let build = |es: &[(usize, usize)]| {
            let doc = serde_json::json!({
                "classes": (0..n).map(name).collect::<Vec<_>>(),
                "subclass_of": es.iter().map(|&(a, b)| [name(a), name(b)]).collect::<Vec<_>>(),
            });
            KnowledgeGraph::from_json(&doc.to_string()).unwrap()
        };
        let mut rotated = edges.clone();
        if !rotated.is_empty() {
            let k = rot % rotated.len();
            rotated.rotate_left(k);
        }
        let (x, y) = (build(&edges), build(&rotated));
        for a in 0..n {
            for b in 0..n {
                prop_assert_eq!(x.subsumes(&name(a), &name(b)).unwrap(), y.subsumes(&name(a), &name(b)).unwrap());
            }
        }
    }
}
