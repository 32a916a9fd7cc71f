//! A bounded restricted chase for the positive part of a TBox, used as a
//! semantic ground truth for certain answers and consistency.
//!
//! Saturation alternates two phases: non-generating inclusions are
//! applied to a fixpoint, then every element that needs an existential
//! witness and has none gets a fresh labelled null, up to a depth cap.
//! Certain answers are homomorphisms into the saturation whose answer
//! variables land on real constants.

use std::collections::{BTreeMap, BTreeSet};

use dkb_core::{
    ABox, ABoxAssertion, BasicConcept, Binding, ConjunctiveQuery, Individual, Name, QueryAtom,
    RoleExpr, TBoxAssertion, Term,
};

/// An element of the chased model: a named constant or a labelled null.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Element {
    Const(Individual),
    Null(u32),
}

impl Element {
    pub fn as_const(&self) -> Option<&Individual> {
        match self {
            Element::Const(ind) => Some(ind),
            Element::Null(_) => None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ChaseModel {
    pub concepts: BTreeMap<Name, BTreeSet<Element>>,
    pub roles: BTreeMap<Name, BTreeSet<(Element, Element)>>,
    null_depths: BTreeMap<u32, usize>,
    next_null: u32,
}

impl ChaseModel {
    fn depth(&self, element: &Element) -> usize {
        match element {
            Element::Const(_) => 0,
            Element::Null(id) => self.null_depths[id],
        }
    }

    fn fresh_null(&mut self, depth: usize) -> Element {
        let id = self.next_null;
        self.next_null += 1;
        self.null_depths.insert(id, depth);
        Element::Null(id)
    }

    fn add_concept(&mut self, name: &Name, element: Element) -> bool {
        self.concepts.entry(name.clone()).or_default().insert(element)
    }

    fn add_role(&mut self, name: &Name, pair: (Element, Element)) -> bool {
        self.roles.entry(name.clone()).or_default().insert(pair)
    }

    /// Pairs of a role expression in its own direction.
    pub fn pairs(&self, role: &RoleExpr) -> Vec<(Element, Element)> {
        let Some(set) = self.roles.get(&role.name) else { return Vec::new() };
        set.iter()
            .map(|(a, b)| {
                if role.inverted {
                    (b.clone(), a.clone())
                } else {
                    (a.clone(), b.clone())
                }
            })
            .collect()
    }

    pub fn extension(&self, concept: &BasicConcept) -> BTreeSet<Element> {
        match concept {
            BasicConcept::Atomic(name) => {
                self.concepts.get(name).cloned().unwrap_or_default()
            }
            BasicConcept::Exists(role) => {
                self.pairs(role).into_iter().map(|(a, _)| a).collect()
            }
        }
    }

    fn has_witness(&self, role: &RoleExpr, element: &Element) -> bool {
        self.pairs(role).iter().any(|(a, _)| a == element)
    }

    pub fn elements(&self) -> BTreeSet<Element> {
        let mut out = BTreeSet::new();
        for set in self.concepts.values() {
            out.extend(set.iter().cloned());
        }
        for set in self.roles.values() {
            for (a, b) in set {
                out.insert(a.clone());
                out.insert(b.clone());
            }
        }
        out
    }
}

/// Saturates the ABox under the TBox's positive inclusions. Nulls deeper
/// than `max_depth` are never created.
pub fn chase(tbox: &[TBoxAssertion], abox: &ABox, max_depth: usize) -> ChaseModel {
    let mut model = ChaseModel::default();
    for fact in abox {
        match fact {
            ABoxAssertion::Concept(name, ind) => {
                model.add_concept(name, Element::Const(ind.clone()));
            }
            ABoxAssertion::Role(name, a, b) => {
                model.add_role(name, (Element::Const(a.clone()), Element::Const(b.clone())));
            }
        }
    }

    loop {
        // Non-generating saturation to a fixpoint.
        loop {
            let mut changed = false;
            for axiom in tbox {
                match axiom {
                    TBoxAssertion::ConceptInclusion {
                        lhs,
                        rhs: BasicConcept::Atomic(target),
                        negated_rhs: false,
                    } => {
                        for element in model.extension(lhs) {
                            changed |= model.add_concept(target, element);
                        }
                    }
                    TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: false } => {
                        for (a, b) in model.pairs(lhs) {
                            let pair = if rhs.inverted { (b, a) } else { (a, b) };
                            changed |= model.add_role(&rhs.name, pair);
                        }
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }

        // Generating sweep: one witness per unmet existential.
        let mut generated = false;
        for axiom in tbox {
            let TBoxAssertion::ConceptInclusion {
                lhs,
                rhs: BasicConcept::Exists(role),
                negated_rhs: false,
            } = axiom
            else {
                continue;
            };
            for element in model.extension(lhs) {
                if model.has_witness(role, &element) || model.depth(&element) >= max_depth {
                    continue;
                }
                let depth = model.depth(&element) + 1;
                let null = model.fresh_null(depth);
                let pair = if role.inverted {
                    (null, element.clone())
                } else {
                    (element.clone(), null)
                };
                model.add_role(&role.name, pair);
                generated = true;
            }
        }
        if !generated {
            return model;
        }
    }
}

/// Consistency by inspection of the saturation: the TBox's own negative
/// inclusions and functionality assertions are checked directly on the
/// chased facts. Functionality only flags two distinct constants; a null
/// witness can always coincide with another successor in some model.
pub fn consistent_by_chase(tbox: &[TBoxAssertion], abox: &ABox, max_depth: usize) -> bool {
    let model = chase(tbox, abox, max_depth);
    for axiom in tbox {
        match axiom {
            TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: true } => {
                let left = model.extension(lhs);
                let right = model.extension(rhs);
                if left.intersection(&right).next().is_some() {
                    return false;
                }
            }
            TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: true } => {
                let left: BTreeSet<_> = model.pairs(lhs).into_iter().collect();
                let right: BTreeSet<_> = model.pairs(rhs).into_iter().collect();
                if left.intersection(&right).next().is_some() {
                    return false;
                }
            }
            TBoxAssertion::Functionality(role) => {
                let mut seen: BTreeMap<Element, Individual> = BTreeMap::new();
                for (a, b) in model.pairs(role) {
                    let Element::Const(target) = b else { continue };
                    if let Some(previous) = seen.get(&a) {
                        if previous != &target {
                            return false;
                        }
                    }
                    seen.insert(a, target);
                }
            }
            _ => {}
        }
    }
    true
}

/// Certain answers of a positive conjunctive query over the bounded
/// chase: homomorphisms of the atoms into the saturation, with answer
/// variables restricted to constants.
pub fn certain_answers_by_chase(
    query: &ConjunctiveQuery,
    tbox: &[TBoxAssertion],
    abox: &ABox,
    max_depth: usize,
) -> BTreeSet<Binding> {
    assert!(
        query.atoms.iter().all(|a| a.is_relational()),
        "the chase oracle handles positive queries only"
    );
    let model = chase(tbox, abox, max_depth);
    let mut answers = BTreeSet::new();
    let mut assignment: BTreeMap<Name, Element> = BTreeMap::new();
    homomorphisms(query, 0, &model, &mut assignment, &mut |assignment| {
        let mut binding = Binding::new();
        for var in &query.free_vars {
            match assignment.get(var) {
                Some(Element::Const(ind)) => binding.bind(var.clone(), ind.clone()),
                _ => return,
            }
        }
        answers.insert(binding);
    });
    answers
}

fn homomorphisms(
    query: &ConjunctiveQuery,
    index: usize,
    model: &ChaseModel,
    assignment: &mut BTreeMap<Name, Element>,
    found: &mut impl FnMut(&BTreeMap<Name, Element>),
) {
    if index == query.atoms.len() {
        found(assignment);
        return;
    }
    let extend = |term: &Term,
                  element: &Element,
                  assignment: &mut BTreeMap<Name, Element>|
     -> Option<Option<Name>> {
        match term {
            Term::Const(c) => (&Element::Const(c.clone()) == element).then_some(None),
            Term::Wildcard => Some(None),
            Term::Var(v) => match assignment.get(v) {
                Some(bound) if bound == element => Some(None),
                Some(_) => None,
                None => {
                    assignment.insert(v.clone(), element.clone());
                    Some(Some(v.clone()))
                }
            },
        }
    };
    match &query.atoms[index] {
        QueryAtom::Concept { name, term } => {
            let Some(extension) = model.concepts.get(name) else { return };
            for element in extension.clone() {
                if let Some(added) = extend(term, &element, assignment) {
                    homomorphisms(query, index + 1, model, assignment, found);
                    if let Some(name) = added {
                        assignment.remove(&name);
                    }
                }
            }
        }
        QueryAtom::Role { name, first, second } => {
            let Some(pairs) = model.roles.get(name) else { return };
            for (a, b) in pairs.clone() {
                let first_added = extend(first, &a, assignment);
                let Some(first_added) = first_added else { continue };
                if let Some(second_added) = extend(second, &b, assignment) {
                    homomorphisms(query, index + 1, model, assignment, found);
                    if let Some(name) = second_added {
                        assignment.remove(&name);
                    }
                }
                if let Some(name) = first_added {
                    assignment.remove(&name);
                }
            }
        }
        other => unreachable!("positive queries only, got {}", other),
    }
}
