//! TBox-free consistency checking.
//!
//! The TBox's negative inclusions and functionality assertions are closed
//! under a fixed rule set (the NI-closure), every closure member is
//! translated into a boolean conjunctive query with inequalities, and the
//! knowledge base is consistent exactly when the resulting union query is
//! false on the ABox read as its minimal model.

use std::collections::BTreeSet;

use crate::model::{ABox, BasicConcept, Name, RoleExpr, TBoxAssertion};
use crate::query::{eval_cq, ConjunctiveQuery, QueryAtom, Term, UnionQuery};

/// The NI-closure of a TBox: only negative inclusions and functionality
/// assertions, each stored in a canonical orientation so that the two ways
/// of writing a disjointness compare equal.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct NiClosure {
    assertions: BTreeSet<TBoxAssertion>,
}

impl NiClosure {
    pub fn iter(&self) -> impl Iterator<Item = &TBoxAssertion> {
        self.assertions.iter()
    }

    pub fn len(&self) -> usize {
        self.assertions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assertions.is_empty()
    }

    pub fn contains_concept_disjointness(&self, a: &BasicConcept, b: &BasicConcept) -> bool {
        self.assertions.contains(&canonical_concept_ni(a.clone(), b.clone()))
    }

    pub fn contains_role_disjointness(&self, a: &RoleExpr, b: &RoleExpr) -> bool {
        self.assertions.contains(&canonical_role_ni(a.clone(), b.clone()))
    }

    pub fn contains_functionality(&self, role: &RoleExpr) -> bool {
        self.assertions.contains(&TBoxAssertion::Functionality(role.clone()))
    }

    fn insert(&mut self, assertion: TBoxAssertion) -> bool {
        self.assertions.insert(assertion)
    }
}

/// Canonical orientation for `B1 <= not B2`: the lexicographically smaller
/// side goes left. Both orientations denote the same disjointness.
pub fn canonical_concept_ni(a: BasicConcept, b: BasicConcept) -> TBoxAssertion {
    let (lhs, rhs) = if a <= b { (a, b) } else { (b, a) };
    TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: true }
}

/// Canonical orientation for `Q1 <= not Q2`: among the four equivalent
/// writings (swap sides, invert both sides) the lexicographically smallest
/// pair is stored.
pub fn canonical_role_ni(a: RoleExpr, b: RoleExpr) -> TBoxAssertion {
    let inv = (a.inverse(), b.inverse());
    let mut candidates = [
        (a.clone(), b.clone()),
        (b, a),
        (inv.0.clone(), inv.1.clone()),
        (inv.1, inv.0),
    ];
    candidates.sort();
    let (lhs, rhs) = candidates[0].clone();
    TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: true }
}

/// Unfolds a canonical role disjointness back into its four orientations.
fn role_ni_orientations(lhs: &RoleExpr, rhs: &RoleExpr) -> [(RoleExpr, RoleExpr); 4] {
    [
        (lhs.clone(), rhs.clone()),
        (rhs.clone(), lhs.clone()),
        (lhs.inverse(), rhs.inverse()),
        (rhs.inverse(), lhs.inverse()),
    ]
}

/// Least fixpoint of the closure rules over the TBox's negative part.
pub fn ni_closure(tbox: &[TBoxAssertion]) -> NiClosure {
    let mut closure = NiClosure::default();

    // Rules 1-2: functionality and negative inclusions carry over.
    for axiom in tbox {
        match axiom {
            TBoxAssertion::Functionality(role) => {
                closure.insert(TBoxAssertion::Functionality(role.clone()));
            }
            TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: true } => {
                closure.insert(canonical_concept_ni(lhs.clone(), rhs.clone()));
            }
            TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: true } => {
                closure.insert(canonical_role_ni(lhs.clone(), rhs.clone()));
            }
            _ => {}
        }
    }

    let concept_incls: Vec<(&BasicConcept, &BasicConcept)> = tbox
        .iter()
        .filter_map(|a| match a {
            TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: false } => Some((lhs, rhs)),
            _ => None,
        })
        .collect();
    let role_incls: Vec<(&RoleExpr, &RoleExpr)> = tbox
        .iter()
        .filter_map(|a| match a {
            TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: false } => Some((lhs, rhs)),
            _ => None,
        })
        .collect();

    // The vocabulary is finite, so iterating the rules to a fixpoint
    // terminates; the closure is at most quadratic in it.
    loop {
        let mut pending: Vec<TBoxAssertion> = Vec::new();
        let concept_nis: Vec<(BasicConcept, BasicConcept)> = closure
            .assertions
            .iter()
            .filter_map(|a| match a {
                TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: true } => {
                    Some((lhs.clone(), rhs.clone()))
                }
                _ => None,
            })
            .collect();
        let role_nis: Vec<(RoleExpr, RoleExpr)> = closure
            .assertions
            .iter()
            .filter_map(|a| match a {
                TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: true } => {
                    Some((lhs.clone(), rhs.clone()))
                }
                _ => None,
            })
            .collect();

        // Rule 3: B1 <= B2 and B2 disjoint from B3 gives B1 disjoint B3.
        for (b1, b2) in &concept_incls {
            for (c, d) in &concept_nis {
                if c == *b2 {
                    pending.push(canonical_concept_ni((*b1).clone(), d.clone()));
                }
                if d == *b2 {
                    pending.push(canonical_concept_ni((*b1).clone(), c.clone()));
                }
            }
        }

        // Rules 4-5: Q1 <= Q2 propagates disjointness of exists Q2 and of
        // exists Q2- down to Q1.
        for (q1, q2) in &role_incls {
            for (c, d) in &concept_nis {
                for (sub, sup) in [
                    ((*q1).clone(), (*q2).clone()),
                    (q1.inverse(), q2.inverse()),
                ] {
                    let sup_concept = BasicConcept::Exists(sup);
                    if *c == sup_concept {
                        pending.push(canonical_concept_ni(
                            BasicConcept::Exists(sub.clone()),
                            d.clone(),
                        ));
                    }
                    if *d == sup_concept {
                        pending.push(canonical_concept_ni(
                            BasicConcept::Exists(sub.clone()),
                            c.clone(),
                        ));
                    }
                }
            }

            // Rule 6: Q1 <= Q2 and Q2 disjoint from Q3 gives Q1 disjoint Q3.
            for (r, s) in &role_nis {
                for (lhs, rhs) in role_ni_orientations(r, s) {
                    if lhs == **q2 {
                        pending.push(canonical_role_ni((*q1).clone(), rhs));
                    } else if lhs == q2.inverse() {
                        pending.push(canonical_role_ni(q1.inverse(), rhs));
                    }
                }
            }
        }

        // Rule 7: self-disjointness of exists Q, exists Q- and Q imply one
        // another.
        let mut self_disjoint_roles: Vec<RoleExpr> = Vec::new();
        for (c, d) in &concept_nis {
            if c == d {
                if let BasicConcept::Exists(role) = c {
                    self_disjoint_roles.push(role.clone());
                }
            }
        }
        for (r, s) in &role_nis {
            if r == s {
                self_disjoint_roles.push(r.clone());
            }
        }
        for role in self_disjoint_roles {
            pending.push(canonical_concept_ni(
                BasicConcept::Exists(role.clone()),
                BasicConcept::Exists(role.clone()),
            ));
            pending.push(canonical_concept_ni(
                BasicConcept::Exists(role.inverse()),
                BasicConcept::Exists(role.inverse()),
            ));
            pending.push(canonical_role_ni(role.clone(), role.clone()));
        }

        let mut changed = false;
        for assertion in pending {
            changed |= closure.insert(assertion);
        }
        if !changed {
            return closure;
        }
    }
}

fn evar(name: &str) -> Name {
    Name::from(name)
}

/// γ from the δ translation: how a basic concept is observed at a point.
fn concept_probe(concept: &BasicConcept, point: &Name, witness: &Name) -> QueryAtom {
    match concept {
        BasicConcept::Atomic(name) => QueryAtom::concept(name.clone(), Term::Var(point.clone())),
        BasicConcept::Exists(role) => {
            if role.inverted {
                QueryAtom::role(
                    role.name.clone(),
                    Term::Var(witness.clone()),
                    Term::Var(point.clone()),
                )
            } else {
                QueryAtom::role(
                    role.name.clone(),
                    Term::Var(point.clone()),
                    Term::Var(witness.clone()),
                )
            }
        }
    }
}

/// ρ from the δ translation: a role expression as a direct atom.
fn role_probe(role: &RoleExpr, x: &Name, y: &Name) -> QueryAtom {
    if role.inverted {
        QueryAtom::role(role.name.clone(), Term::Var(y.clone()), Term::Var(x.clone()))
    } else {
        QueryAtom::role(role.name.clone(), Term::Var(x.clone()), Term::Var(y.clone()))
    }
}

/// δ: translates one closure member into a boolean conjunctive query that
/// is true exactly on the ABoxes violating it.
pub fn delta(assertion: &TBoxAssertion) -> ConjunctiveQuery {
    let mut atoms = Vec::new();
    let mut exist_vars = BTreeSet::new();
    match assertion {
        TBoxAssertion::Functionality(role) => {
            let (x, y1, y2) = (evar("_x"), evar("_y1"), evar("_y2"));
            atoms.push(role_probe(role, &x, &y1));
            atoms.push(role_probe(role, &x, &y2));
            atoms.push(QueryAtom::Neq(Term::Var(y1.clone()), Term::Var(y2.clone())));
            exist_vars.extend([x, y1, y2]);
        }
        TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: true } => {
            let x = evar("_x");
            let (w1, w2) = (evar("_w1"), evar("_w2"));
            let first = concept_probe(lhs, &x, &w1);
            let second = concept_probe(rhs, &x, &w2);
            exist_vars.insert(x);
            if matches!(lhs, BasicConcept::Exists(_)) {
                exist_vars.insert(w1);
            }
            if matches!(rhs, BasicConcept::Exists(_)) {
                exist_vars.insert(w2);
            }
            atoms.push(first);
            atoms.push(second);
        }
        TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: true } => {
            let (x, y) = (evar("_x"), evar("_y"));
            atoms.push(role_probe(lhs, &x, &y));
            atoms.push(role_probe(rhs, &x, &y));
            exist_vars.extend([x, y]);
        }
        _ => unreachable!("the NI-closure only holds negative inclusions and functionality"),
    }
    ConjunctiveQuery { atoms, free_vars: Vec::new(), exist_vars }
}

/// The boolean union query that is true on an ABox exactly when the pair
/// (TBox, ABox) is inconsistent. One disjunct per closure member, in
/// canonical order; the empty closure yields the always-false query.
pub fn unsat_query(tbox: &[TBoxAssertion]) -> UnionQuery {
    unsat_query_of_closure(&ni_closure(tbox))
}

pub fn unsat_query_of_closure(closure: &NiClosure) -> UnionQuery {
    UnionQuery::Union(closure.iter().map(delta).collect())
}

/// Decides consistency of the knowledge base by evaluating the unsat
/// query over the ABox alone.
pub fn is_consistent(tbox: &[TBoxAssertion], abox: &ABox) -> bool {
    ConsistencyChecker::new(tbox).is_consistent(abox)
}

/// A per-TBox handle caching the closure and its translated query, for
/// callers that test many states against one TBox.
#[derive(Clone, Debug)]
pub struct ConsistencyChecker {
    closure: NiClosure,
    query: UnionQuery,
}

impl ConsistencyChecker {
    pub fn new(tbox: &[TBoxAssertion]) -> Self {
        let closure = ni_closure(tbox);
        let query = unsat_query_of_closure(&closure);
        ConsistencyChecker { closure, query }
    }

    pub fn closure(&self) -> &NiClosure {
        &self.closure
    }

    pub fn query(&self) -> &UnionQuery {
        &self.query
    }

    pub fn is_consistent(&self, abox: &ABox) -> bool {
        self.witness(abox).is_none()
    }

    /// On inconsistency, returns one violated disjunct together with an
    /// assignment of its variables that realizes the violation.
    pub fn witness(&self, abox: &ABox) -> Option<(ConjunctiveQuery, crate::query::Binding)> {
        for disjunct in self.query.disjuncts() {
            // Promote the existentials to answer variables so the witness
            // names the offending individuals.
            let probe = ConjunctiveQuery {
                atoms: disjunct.atoms.clone(),
                free_vars: disjunct.exist_vars.iter().cloned().collect(),
                exist_vars: BTreeSet::new(),
            };
            let answers = eval_cq(&probe, abox).expect("unsat query disjuncts are safe");
            if let Some(binding) = answers.into_iter().next() {
                return Some((disjunct.clone(), binding));
            }
        }
        None
    }
}
