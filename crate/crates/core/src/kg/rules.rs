//! Horn rules over ground atoms and a semi-naive forward chainer.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use super::units::Dims;
use super::KgError;

pub const HAS_UNIT: &str = "hasUnit";
pub const HAS_INPUT: &str = "hasInput";
pub const HAS_OUTPUT: &str = "hasOutput";
pub const DIFFERENT: &str = "Different";
pub const NON_INTERPRETABLE: &str = "nonInterpretable";

/// A ground fact such as `hasUnit(f0, kg)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(pred: impl Into<String>, args: &[&str]) -> Self {
        Self {
            pred: pred.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.pred, self.args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => f.write_str(c),
        }
    }
}

/// A possibly non-ground atom appearing in a rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub pred: String,
    pub args: Vec<Term>,
}

impl Pattern {
    /// Parses `pred(?x, const, ...)`; variables start with `?`.
    pub fn parse(text: &str) -> Result<Self, KgError> {
        let bad = || KgError::BadAtom(text.to_string());
        let text = text.trim();
        let open = text.find('(').ok_or_else(bad)?;
        if !text.ends_with(')') {
            return Err(bad());
        }
        let pred = text[..open].trim();
        if pred.is_empty() || !pred.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(bad());
        }
        let inner = &text[open + 1..text.len() - 1];
        let args = inner
            .split(',')
            .map(|a| {
                let a = a.trim();
                match a.strip_prefix('?') {
                    Some("") => Err(bad()),
                    Some(v) => Ok(Term::Var(v.to_string())),
                    None if a.is_empty() => Err(bad()),
                    None => Ok(Term::Const(a.to_string())),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            pred: pred.to_string(),
            args,
        })
    }

    fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }

    fn is_builtin(&self) -> bool {
        self.pred == DIFFERENT
    }

    fn ground(&self, subst: &HashMap<&str, &str>) -> Option<Atom> {
        let args = self
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => subst.get(v.as_str()).map(|s| s.to_string()),
                Term::Const(c) => Some(c.clone()),
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Atom {
            pred: self.pred.clone(),
            args,
        })
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(Term::to_string).collect();
        write!(f, "{}({})", self.pred, args.join(", "))
    }
}

/// A range-restricted Horn rule `body -> head`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub body: Vec<Pattern>,
    pub head: Pattern,
}

impl Rule {
    pub fn parse(name: &str, body: &[String], head: &str) -> Result<Self, KgError> {
        let rule = Self {
            name: name.to_string(),
            body: body.iter().map(|b| Pattern::parse(b)).collect::<Result<_, _>>()?,
            head: Pattern::parse(head)?,
        };
        rule.check_range_restricted()?;
        Ok(rule)
    }

    fn check_range_restricted(&self) -> Result<(), KgError> {
        let bound: BTreeSet<&str> = self
            .body
            .iter()
            .filter(|p| !p.is_builtin())
            .flat_map(Pattern::vars)
            .collect();
        let free = self
            .head
            .vars()
            .chain(self.body.iter().filter(|p| p.is_builtin()).flat_map(Pattern::vars))
            .find(|v| !bound.contains(v));
        match free {
            Some(v) => Err(KgError::UnsafeRule {
                rule: self.name.clone(),
                var: v.to_string(),
            }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self.body.iter().map(Pattern::to_string).collect();
        write!(f, "{}: {} -> {}", self.name, body.join(" ∧ "), self.head)
    }
}

/// A set of ground atoms plus the dimensions of ad-hoc unit individuals
/// (derived units with no registered name).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactBase {
    atoms: BTreeSet<Atom>,
    derived_by: BTreeMap<Atom, String>,
    unit_dims: BTreeMap<String, Dims>,
}

impl FactBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, atom: Atom) -> bool {
        self.atoms.insert(atom)
    }

    pub fn declare_unit(&mut self, individual: impl Into<String>, dims: Dims) {
        self.unit_dims.insert(individual.into(), dims);
    }

    pub fn unit_dims(&self, individual: &str) -> Option<Dims> {
        self.unit_dims.get(individual).copied()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    /// Name of the rule that first derived `atom`, if it was derived.
    pub fn derived_by(&self, atom: &Atom) -> Option<&str> {
        self.derived_by.get(atom).map(String::as_str)
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// What the chainer needs from the knowledge graph.
pub(crate) trait Ontology {
    /// Strict and reflexive ancestors of a class, or `None` if `pred` is not
    /// a class.
    fn ancestors_of(&self, class: &str) -> Option<Vec<&str>>;
    fn registered_dims(&self, unit: &str) -> Option<Dims>;
}

type Index<'a> = HashMap<&'a str, Vec<&'a Atom>>;

fn index<'a>(atoms: impl Iterator<Item = &'a Atom>) -> Index<'a> {
    let mut idx: Index<'a> = HashMap::new();
    for a in atoms {
        idx.entry(a.pred.as_str()).or_default().push(a);
    }
    idx
}

fn unify<'a>(pattern: &'a Pattern, atom: &'a Atom, subst: &mut HashMap<&'a str, &'a str>) -> bool {
    if pattern.args.len() != atom.args.len() {
        return false;
    }
    let mut added = Vec::new();
    for (term, value) in pattern.args.iter().zip(&atom.args) {
        let ok = match term {
            Term::Const(c) => c == value,
            Term::Var(v) => match subst.get(v.as_str()) {
                Some(bound) => *bound == value,
                None => {
                    subst.insert(v, value);
                    added.push(v.as_str());
                    true
                }
            },
        };
        if !ok {
            for v in added {
                subst.remove(v);
            }
            return false;
        }
    }
    true
}

struct Join<'a, 'o> {
    positives: Vec<&'a Pattern>,
    builtins: Vec<&'a Pattern>,
    delta_pos: usize,
    all: &'a Index<'a>,
    delta: &'a Index<'a>,
    facts: &'a FactBase,
    onto: &'o dyn Ontology,
}

impl<'a> Join<'a, '_> {
    fn run(&self, pos: usize, subst: &mut HashMap<&'a str, &'a str>, out: &mut Vec<HashMap<&'a str, &'a str>>) {
        if pos == self.positives.len() {
            if self.builtins.iter().all(|b| self.builtin_holds(b, subst)) {
                out.push(subst.clone());
            }
            return;
        }
        let pattern = self.positives[pos];
        let source = if pos == self.delta_pos { self.delta } else { self.all };
        let Some(candidates) = source.get(pattern.pred.as_str()) else {
            return;
        };
        for atom in candidates {
            let before = subst.clone();
            if unify(pattern, atom, subst) {
                self.run(pos + 1, subst, out);
            }
            *subst = before;
        }
    }

    fn dims(&self, unit: &str) -> Option<Dims> {
        self.onto
            .registered_dims(unit)
            .or_else(|| self.facts.unit_dims(unit))
    }

    fn builtin_holds(&self, pattern: &Pattern, subst: &HashMap<&str, &str>) -> bool {
        let Some(ground) = pattern.ground(subst) else {
            return false;
        };
        match (pattern.pred.as_str(), ground.args.as_slice()) {
            // Units whose dimensions are unknown are never provably different.
            (DIFFERENT, [u, v]) => match (self.dims(u), self.dims(v)) {
                (Some(a), Some(b)) => a != b,
                _ => false,
            },
            _ => false,
        }
    }
}

/// Adds every ancestor class fact implied by `atom`; returns the new atoms.
fn upward_closure(onto: &dyn Ontology, atom: &Atom) -> Vec<Atom> {
    if atom.args.len() != 1 {
        return Vec::new();
    }
    onto.ancestors_of(&atom.pred)
        .unwrap_or_default()
        .into_iter()
        .filter(|c| *c != atom.pred)
        .map(|c| Atom {
            pred: c.to_string(),
            args: atom.args.clone(),
        })
        .collect()
}

/// Computes the fixpoint of `rules` over `facts` by semi-naive iteration.
/// Class facts are closed upward under subsumption before and during
/// chaining.
pub(crate) fn forward_chain(onto: &dyn Ontology, rules: &[Rule], mut facts: FactBase) -> FactBase {
    let mut delta: BTreeSet<Atom> = BTreeSet::new();
    let initial: Vec<Atom> = facts.atoms.iter().cloned().collect();
    for atom in initial {
        for sup in upward_closure(onto, &atom) {
            facts.atoms.insert(sup);
        }
    }
    delta.extend(facts.atoms.iter().cloned());

    while !delta.is_empty() {
        let mut fresh: BTreeMap<Atom, String> = BTreeMap::new();
        {
            let all = index(facts.atoms.iter());
            let delta_idx = index(delta.iter());
            for rule in rules {
                let positives: Vec<&Pattern> = rule.body.iter().filter(|p| !p.is_builtin()).collect();
                let builtins: Vec<&Pattern> = rule.body.iter().filter(|p| p.is_builtin()).collect();
                for delta_pos in 0..positives.len() {
                    let join = Join {
                        positives: positives.clone(),
                        builtins: builtins.clone(),
                        delta_pos,
                        all: &all,
                        delta: &delta_idx,
                        facts: &facts,
                        onto,
                    };
                    let mut matches = Vec::new();
                    join.run(0, &mut HashMap::new(), &mut matches);
                    for subst in matches {
                        let head = rule.head.ground(&subst).expect("range-restricted rule");
                        if !facts.atoms.contains(&head) {
                            fresh.entry(head).or_insert_with(|| rule.name.clone());
                        }
                    }
                }
            }
        }
        delta.clear();
        for (atom, rule) in fresh {
            for sup in upward_closure(onto, &atom) {
                if facts.atoms.insert(sup.clone()) {
                    facts.derived_by.entry(sup.clone()).or_insert_with(|| rule.clone());
                    delta.insert(sup);
                }
            }
            if facts.atoms.insert(atom.clone()) {
                facts.derived_by.insert(atom.clone(), rule);
                delta.insert(atom);
            }
        }
    }
    facts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_atoms() {
        let p = Pattern::parse("hasInput(?f, ?x)").unwrap();
        assert_eq!(p.pred, "hasInput");
        assert_eq!(p.args, vec![Term::Var("f".into()), Term::Var("x".into())]);
        assert_eq!(p.to_string(), "hasInput(?f, ?x)");
        let c = Pattern::parse(" Weight(kg) ").unwrap();
        assert_eq!(c.args, vec![Term::Const("kg".into())]);
        for bad in ["noparen", "p(?x", "(x)", "p(?)", "p(a,,b)", "p q(x)"] {
            assert!(Pattern::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rejects_unsafe_rules() {
        let body = vec!["Feature(?x)".to_string()];
        assert!(matches!(
            Rule::parse("r", &body, "nonInterpretable(?z)"),
            Err(KgError::UnsafeRule { .. })
        ));
        let body = vec!["Feature(?x)".to_string(), "Different(?x, ?y)".to_string()];
        assert!(Rule::parse("r", &body, "nonInterpretable(?x)").is_err());
    }
}
