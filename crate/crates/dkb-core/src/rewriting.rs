//! TBox compilation: query reformulation over positive inclusions and the
//! negative-effect entailment set.
//!
//! `perfect_ref` turns a conjunctive query into a union query whose
//! TBox-free answers coincide with the certain answers of the original
//! query on every consistent ABox. The algorithm alternates two moves
//! until no new query appears: rewriting a single atom backwards through
//! an applicable positive inclusion, and reducing a pair of unifiable
//! atoms so that further inclusions become applicable. Non-distinguished
//! variables occurring in a single position are kept anonymous (the `_`
//! placeholder) while rewriting and only materialized as fresh
//! existentials in the final result.
//!
//! `ent_neg_effects` reuses the same engine on one-atom queries whose
//! variables are all distinguished: the rewriting of a negative effect is
//! then a set of single atoms, each entailing the effect, with at most one
//! anonymous role position kept as a wildcard.

use std::collections::{BTreeSet, VecDeque};

use crate::model::{ABox, BasicConcept, Name, RoleExpr, TBoxAssertion};
use crate::query::{atom_matches_fact, Binding, ConjunctiveQuery, QueryAtom, Term, UnionQuery};

/// The positive-inclusion subset of a TBox: the only axioms the
/// reformulation algorithm consults.
pub fn positive_inclusions(tbox: &[TBoxAssertion]) -> Vec<TBoxAssertion> {
    tbox.iter().filter(|a| a.is_positive_inclusion()).cloned().collect()
}

/// One rewriting of a negative effect: `atom` entails `source` under the
/// TBox. Role atoms may carry one wildcard position.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct EntEntry {
    pub atom: QueryAtom,
    pub source: QueryAtom,
}

/// All single atoms whose presence in an ABox entails some negative
/// effect. Computed once per action; constant across states.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct EntSet {
    pub entries: Vec<EntEntry>,
}

impl EntSet {
    pub fn atoms(&self) -> impl Iterator<Item = &QueryAtom> {
        self.entries.iter().map(|e| &e.atom)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A query during reformulation. Free variables and constants are rigid;
/// named existentials are shared variables; `Term::Wildcard` stands for a
/// non-distinguished non-shared position.
#[derive(Clone, PartialEq, Eq, Debug)]
struct RewriteState {
    relational: Vec<QueryAtom>,
    constraints: Vec<QueryAtom>,
}

/// Replaces existential variables that occur in exactly one position by
/// the anonymous placeholder, and drops duplicate atoms. Dropping a
/// duplicate can orphan a previously shared variable, so the two moves
/// alternate until stable.
fn anonymize(state: &mut RewriteState, free: &BTreeSet<Name>) {
    loop {
        let mut counts: std::collections::BTreeMap<Name, usize> = Default::default();
        for atom in state.relational.iter().chain(state.constraints.iter()) {
            for var in atom.variables() {
                *counts.entry(var.clone()).or_default() += 1;
            }
        }
        let replace = |t: &Term| match t {
            Term::Var(name) if !free.contains(name) && counts.get(name) == Some(&1) => {
                Term::Wildcard
            }
            other => other.clone(),
        };
        let mut changed = false;
        for atom in &mut state.relational {
            let next = match &*atom {
                QueryAtom::Concept { name, term } => {
                    QueryAtom::Concept { name: name.clone(), term: replace(term) }
                }
                QueryAtom::Role { name, first, second } => QueryAtom::Role {
                    name: name.clone(),
                    first: replace(first),
                    second: replace(second),
                },
                other => other.clone(),
            };
            if next != *atom {
                changed = true;
                *atom = next;
            }
        }
        let before = state.relational.len();
        let mut seen = BTreeSet::new();
        state.relational.retain(|a| seen.insert(a.clone()));
        changed |= state.relational.len() != before;
        if !changed {
            return;
        }
    }
}

/// Atom rewritings licensed by one positive inclusion. A concept atom
/// rewrites through inclusions into its concept; a role atom with an
/// anonymous second (first) position rewrites through inclusions into
/// `exists P` (`exists P-`); role inclusions apply positionally.
fn rewrite_atom(atom: &QueryAtom, pi: &TBoxAssertion) -> Option<QueryAtom> {
    match (atom, pi) {
        (
            QueryAtom::Concept { name, term },
            TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: false },
        ) => match rhs {
            BasicConcept::Atomic(rhs_name) if rhs_name == name => Some(concept_to_atom(lhs, term)),
            _ => None,
        },
        (
            QueryAtom::Role { name, first, second },
            TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: false },
        ) => {
            let BasicConcept::Exists(target) = rhs else { return None };
            if target.name != *name {
                return None;
            }
            // The kept position is the one the existential restriction
            // talks about; the other must be anonymous.
            let kept = if !target.inverted && second.is_wildcard() {
                first
            } else if target.inverted && first.is_wildcard() {
                second
            } else {
                return None;
            };
            Some(concept_to_atom(lhs, kept))
        }
        (
            QueryAtom::Role { name, first, second },
            TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: false },
        ) => {
            if rhs.name != *name {
                return None;
            }
            let (a, b) = if rhs.inverted {
                (second.clone(), first.clone())
            } else {
                (first.clone(), second.clone())
            };
            Some(place_role(lhs, a, b))
        }
        _ => None,
    }
}

fn concept_to_atom(concept: &BasicConcept, term: &Term) -> QueryAtom {
    match concept {
        BasicConcept::Atomic(name) => QueryAtom::concept(name.clone(), term.clone()),
        BasicConcept::Exists(role) => {
            if role.inverted {
                QueryAtom::role(role.name.clone(), Term::Wildcard, term.clone())
            } else {
                QueryAtom::role(role.name.clone(), term.clone(), Term::Wildcard)
            }
        }
    }
}

fn place_role(role: &RoleExpr, first: Term, second: Term) -> QueryAtom {
    if role.inverted {
        QueryAtom::role(role.name.clone(), second, first)
    } else {
        QueryAtom::role(role.name.clone(), first, second)
    }
}

/// Pairwise term unification for the reduce step. Free variables and
/// constants are rigid; named existentials substitute; wildcards absorb
/// whatever faces them.
fn unify_terms(
    a: &Term,
    b: &Term,
    free: &BTreeSet<Name>,
    subst: &mut Vec<(Name, Term)>,
) -> Option<Term> {
    let a = apply_subst_term(a, subst);
    let b = apply_subst_term(b, subst);
    match (&a, &b) {
        (Term::Wildcard, other) | (other, Term::Wildcard) => Some(other.clone()),
        (Term::Const(x), Term::Const(y)) => (x == y).then(|| a.clone()),
        (Term::Var(x), Term::Var(y)) if x == y => Some(a.clone()),
        (Term::Var(x), Term::Var(y)) => match (free.contains(x), free.contains(y)) {
            (true, true) => None,
            (false, _) => {
                subst.push((x.clone(), b.clone()));
                Some(b)
            }
            (true, false) => {
                subst.push((y.clone(), a.clone()));
                Some(a)
            }
        },
        (Term::Var(x), t) | (t, Term::Var(x)) => {
            if free.contains(x) {
                None
            } else {
                subst.push((x.clone(), t.clone()));
                Some(t.clone())
            }
        }
    }
}

fn unify_atoms(
    a: &QueryAtom,
    b: &QueryAtom,
    free: &BTreeSet<Name>,
) -> Option<(QueryAtom, Vec<(Name, Term)>)> {
    let mut subst = Vec::new();
    let unified = match (a, b) {
        (QueryAtom::Concept { name: n1, term: t1 }, QueryAtom::Concept { name: n2, term: t2 })
            if n1 == n2 =>
        {
            let t = unify_terms(t1, t2, free, &mut subst)?;
            QueryAtom::Concept { name: n1.clone(), term: t }
        }
        (
            QueryAtom::Role { name: n1, first: f1, second: s1 },
            QueryAtom::Role { name: n2, first: f2, second: s2 },
        ) if n1 == n2 => {
            let f = unify_terms(f1, f2, free, &mut subst)?;
            let s = unify_terms(s1, s2, free, &mut subst)?;
            // The first position may have been substituted away by the
            // second unification.
            let f = apply_subst_term(&f, &subst);
            QueryAtom::Role { name: n1.clone(), first: f, second: s }
        }
        _ => return None,
    };
    Some((unified, subst))
}

fn apply_subst_term(t: &Term, subst: &[(Name, Term)]) -> Term {
    let mut current = t.clone();
    let mut steps = 0;
    loop {
        match &current {
            Term::Var(name) => match subst.iter().find(|(from, _)| from == name) {
                Some((_, to)) => {
                    current = to.clone();
                    steps += 1;
                    assert!(steps <= subst.len(), "substitution chains are acyclic");
                }
                None => return current,
            },
            _ => return current,
        }
    }
}

fn apply_subst_atom(atom: &QueryAtom, subst: &[(Name, Term)]) -> QueryAtom {
    match atom {
        QueryAtom::Concept { name, term } => {
            QueryAtom::Concept { name: name.clone(), term: apply_subst_term(term, subst) }
        }
        QueryAtom::Role { name, first, second } => QueryAtom::Role {
            name: name.clone(),
            first: apply_subst_term(first, subst),
            second: apply_subst_term(second, subst),
        },
        QueryAtom::Eq(a, b) => {
            QueryAtom::Eq(apply_subst_term(a, subst), apply_subst_term(b, subst))
        }
        QueryAtom::Neq(a, b) => {
            QueryAtom::Neq(apply_subst_term(a, subst), apply_subst_term(b, subst))
        }
    }
}

/// Canonical rendering of a state up to injective renaming of named
/// existentials: the minimum over atom orderings of the renamed render.
/// Falls back to a single sorted pass for unusually wide queries.
fn canonical_key(state: &RewriteState, free: &BTreeSet<Name>) -> String {
    let n = state.relational.len();
    let render = |order: &[usize]| -> String {
        let mut renaming: Vec<(Name, usize)> = Vec::new();
        let mut parts: Vec<String> = Vec::new();
        for &i in order {
            let mut piece = String::new();
            render_atom(&state.relational[i], free, &mut renaming, &mut piece);
            parts.push(piece);
        }
        for c in &state.constraints {
            let mut piece = String::new();
            render_atom(c, free, &mut renaming, &mut piece);
            parts.push(piece);
        }
        parts.join("&")
    };
    if n <= 6 {
        permutations(n).map(|order| render(&order)).min().unwrap_or_else(|| render(&[]))
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| format!("{}", state.relational[i]));
        render(&order)
    }
}

fn render_atom(
    atom: &QueryAtom,
    free: &BTreeSet<Name>,
    renaming: &mut Vec<(Name, usize)>,
    out: &mut String,
) {
    use std::fmt::Write;
    let mut term = |t: &Term, out: &mut String| match t {
        Term::Wildcard => out.push('_'),
        Term::Const(c) => {
            let _ = write!(out, "c:{}", c);
        }
        Term::Var(v) if free.contains(v) => {
            let _ = write!(out, "f:{}", v);
        }
        Term::Var(v) => {
            let idx = match renaming.iter().find(|(name, _)| name == v) {
                Some((_, idx)) => *idx,
                None => {
                    let idx = renaming.len();
                    renaming.push((v.clone(), idx));
                    idx
                }
            };
            let _ = write!(out, "e{}", idx);
        }
    };
    match atom {
        QueryAtom::Concept { name, term: t } => {
            let _ = write!(out, "{}(", name);
            term(t, out);
            out.push(')');
        }
        QueryAtom::Role { name, first, second } => {
            let _ = write!(out, "{}(", name);
            term(first, out);
            out.push(',');
            term(second, out);
            out.push(')');
        }
        QueryAtom::Eq(a, b) => {
            term(a, out);
            out.push('=');
            term(b, out);
        }
        QueryAtom::Neq(a, b) => {
            term(a, out);
            out.push('!');
            term(b, out);
        }
    }
}

fn permutations(n: usize) -> impl Iterator<Item = Vec<usize>> {
    fn go(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(items.clone());
            return;
        }
        for i in 0..k {
            go(items, k - 1, out);
            if k.is_multiple_of(2) {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
        }
    }
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
    } else {
        go(&mut items, n, &mut out);
    }
    out.into_iter()
}

/// Saturates a seed query under atom rewriting and reduction. Results
/// keep wildcards; callers decide how to materialize them.
fn saturate(seed: &ConjunctiveQuery, pis: &[TBoxAssertion]) -> Vec<RewriteState> {
    let free: BTreeSet<Name> = seed.free_vars.iter().cloned().collect();
    let mut initial = RewriteState {
        relational: seed.atoms.iter().filter(|a| a.is_relational()).cloned().collect(),
        constraints: seed.atoms.iter().filter(|a| !a.is_relational()).cloned().collect(),
    };
    anonymize(&mut initial, &free);

    let mut results: Vec<RewriteState> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<RewriteState> = VecDeque::new();
    seen.insert(canonical_key(&initial, &free));
    queue.push_back(initial);

    while let Some(state) = queue.pop_front() {
        // Rewriting step: one atom through one positive inclusion.
        for (i, atom) in state.relational.iter().enumerate() {
            for pi in pis {
                if let Some(new_atom) = rewrite_atom(atom, pi) {
                    let mut next = state.clone();
                    next.relational[i] = new_atom;
                    anonymize(&mut next, &free);
                    let key = canonical_key(&next, &free);
                    if seen.insert(key) {
                        queue.push_back(next);
                    }
                }
            }
        }
        // Reduce step: merge two unifiable atoms.
        for i in 0..state.relational.len() {
            for j in (i + 1)..state.relational.len() {
                if let Some((unified, subst)) =
                    unify_atoms(&state.relational[i], &state.relational[j], &free)
                {
                    let mut relational: Vec<QueryAtom> = Vec::new();
                    for (k, atom) in state.relational.iter().enumerate() {
                        if k == j {
                            continue;
                        }
                        let mapped = if k == i {
                            apply_subst_atom(&unified, &subst)
                        } else {
                            apply_subst_atom(atom, &subst)
                        };
                        relational.push(mapped);
                    }
                    let constraints =
                        state.constraints.iter().map(|c| apply_subst_atom(c, &subst)).collect();
                    let mut next = RewriteState { relational, constraints };
                    anonymize(&mut next, &free);
                    let key = canonical_key(&next, &free);
                    if seen.insert(key) {
                        queue.push_back(next);
                    }
                }
            }
        }
        results.push(state);
    }
    results
}

/// Materializes the wildcards of a saturated state as fresh existential
/// variables and rebuilds a well-formed conjunctive query.
fn state_to_query(state: &RewriteState, template: &ConjunctiveQuery) -> ConjunctiveQuery {
    let mut used: BTreeSet<Name> = BTreeSet::new();
    for atom in state.relational.iter().chain(state.constraints.iter()) {
        used.extend(atom.variables().cloned());
    }
    used.extend(template.free_vars.iter().cloned());
    let mut counter = 0usize;
    let mut exist_vars: BTreeSet<Name> = BTreeSet::new();
    let mut atoms: Vec<QueryAtom> = Vec::new();
    for atom in state.relational.iter().chain(state.constraints.iter()) {
        let mut replace = |t: &Term| match t {
            Term::Wildcard => loop {
                counter += 1;
                let candidate = Name::from(format!("_e{}", counter));
                if !used.contains(&candidate) {
                    used.insert(candidate.clone());
                    exist_vars.insert(candidate.clone());
                    break Term::Var(candidate);
                }
            },
            Term::Var(v) if !template.free_vars.contains(v) => {
                exist_vars.insert(v.clone());
                t.clone()
            }
            other => other.clone(),
        };
        atoms.push(match atom {
            QueryAtom::Concept { name, term } => {
                QueryAtom::Concept { name: name.clone(), term: replace(term) }
            }
            QueryAtom::Role { name, first, second } => QueryAtom::Role {
                name: name.clone(),
                first: replace(first),
                second: replace(second),
            },
            QueryAtom::Eq(a, b) => QueryAtom::Eq(replace(a), replace(b)),
            QueryAtom::Neq(a, b) => QueryAtom::Neq(replace(a), replace(b)),
        });
    }
    ConjunctiveQuery { atoms, free_vars: template.free_vars.clone(), exist_vars }
}

/// Reformulates `q` against the TBox: a union query with the same certain
/// answers, evaluable with no TBox at all. Duplicate disjuncts are removed
/// up to injective renaming of existential variables.
pub fn perfect_ref(q: &ConjunctiveQuery, tbox: &[TBoxAssertion]) -> UnionQuery {
    assert!(!q.has_wildcard(), "reformulation input must be wildcard-free");
    let pis = positive_inclusions(tbox);
    let disjuncts = saturate(q, &pis).iter().map(|s| state_to_query(s, q)).collect();
    UnionQuery::Union(disjuncts)
}

/// Rewrites each single negative effect into the set of atoms entailing
/// it. Effects must be single wildcard-free atoms; the rewriting output
/// may place one wildcard in a role position.
pub fn ent_neg_effects(e_minus: &[QueryAtom], tbox: &[TBoxAssertion]) -> EntSet {
    let pis = positive_inclusions(tbox);
    let mut entries: Vec<EntEntry> = Vec::new();
    for effect in e_minus {
        assert!(effect.is_relational() && !effect.has_wildcard(), "malformed negative effect");
        let vars: Vec<Name> = effect.variables().cloned().collect();
        let seed = ConjunctiveQuery {
            atoms: vec![effect.clone()],
            free_vars: vars.clone(),
            exist_vars: BTreeSet::new(),
        };
        for state in saturate(&seed, &pis) {
            assert_eq!(state.relational.len(), 1, "single-atom rewriting must stay single-atom");
            let atom = state.relational[0].clone();
            debug_assert!(
                atom.variables().all(|v| vars.contains(v)),
                "entailment atoms only use the effect's variables"
            );
            entries.push(EntEntry { atom, source: effect.clone() });
        }
    }
    entries.sort();
    entries.dedup();
    EntSet { entries }
}

/// The assertions of the ABox matched by some grounded entailment atom:
/// exactly the set a transition with this binding removes.
pub fn compute_e_minus_sub(ent: &EntSet, binding: &Binding, abox: &ABox) -> ABox {
    abox.iter()
        .filter(|fact| ent.entries.iter().any(|e| atom_matches_fact(&e.atom, binding, fact)))
        .cloned()
        .collect()
}
