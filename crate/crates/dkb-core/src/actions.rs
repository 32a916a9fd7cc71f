//! Actions, action rewriting, and the blocking-query builder.
//!
//! An action carries a conjunctive guard, a set of variables fed to the
//! instance-creation function, and add/delete effect atoms. Rewriting an
//! action compiles the guard into TBox-free disjuncts and attaches two
//! precomputed artifacts shared by all disjuncts: the entailment set of
//! the negative effects and the blocking query `B`.
//!
//! `B` is a union query over the action's variables. For every positive
//! effect and every negative-inclusion or functionality member of the
//! TBox closure it could violate, `B` collects the conditions under which
//! the violation materializes in the successor state, looking at three
//! sources: other positive effects (pure (in)equality conditions),
//! threats surviving the negative effects (a state atom plus inequality
//! escapes), and threats already present in the state when no negative
//! effect can remove them. Evaluating `B` under the chosen binding on the
//! current state therefore decides, before stepping, whether the
//! successor would be inconsistent.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::consistency::{ni_closure, NiClosure};
use crate::model::{ABox, ABoxAssertion, BasicConcept, Individual, Name, TBoxAssertion};
use crate::query::{Binding, ConjunctiveQuery, QueryAtom, Term, UnionQuery};
use crate::rewriting::{compute_e_minus_sub, ent_neg_effects, perfect_ref, EntSet};

/// A guarded action: `name: guard, N -> E+ / E-`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Action {
    pub name: Name,
    pub guard: ConjunctiveQuery,
    pub fresh_vars: Vec<Name>,
    pub add_effects: Vec<QueryAtom>,
    pub del_effects: Vec<QueryAtom>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ActionError {
    #[error("action {action}: guard atoms must be relational and wildcard-free")]
    MalformedGuard { action: Name },
    #[error("action {action}: effect {atom} is not a plain atom over variables")]
    MalformedEffect { action: Name, atom: String },
    #[error("action {action}: fresh variable {var} already occurs in the guard")]
    FreshVarInGuard { action: Name, var: Name },
    #[error("action {action}: delete effect uses {var}, which is not a free guard variable")]
    DeleteVarNotFree { action: Name, var: Name },
    #[error("action {action}: add effect uses {var}, which is neither a free guard variable nor fresh")]
    AddVarUnknown { action: Name, var: Name },
}

impl Action {
    /// Well-formedness: fresh variables are disjoint from the guard,
    /// delete effects use free guard variables only, add effects use free
    /// guard variables or fresh ones.
    pub fn validate(&self) -> Result<(), ActionError> {
        for atom in &self.guard.atoms {
            if !atom.is_relational() || atom.has_wildcard() {
                return Err(ActionError::MalformedGuard { action: self.name.clone() });
            }
        }
        let free: BTreeSet<&Name> = self.guard.free_vars.iter().collect();
        let guard_vars = self.guard.variables();
        for var in &self.fresh_vars {
            if guard_vars.contains(var) {
                return Err(ActionError::FreshVarInGuard {
                    action: self.name.clone(),
                    var: var.clone(),
                });
            }
        }
        for atom in self.add_effects.iter().chain(self.del_effects.iter()) {
            let plain = atom.is_relational()
                && !atom.has_wildcard()
                && atom.terms().all(|t| matches!(t, Term::Var(_)));
            if !plain {
                return Err(ActionError::MalformedEffect {
                    action: self.name.clone(),
                    atom: atom.to_string(),
                });
            }
        }
        for atom in &self.del_effects {
            for var in atom.variables() {
                if !free.contains(var) {
                    return Err(ActionError::DeleteVarNotFree {
                        action: self.name.clone(),
                        var: var.clone(),
                    });
                }
            }
        }
        for atom in &self.add_effects {
            for var in atom.variables() {
                if !free.contains(var) && !self.fresh_vars.contains(var) {
                    return Err(ActionError::AddVarUnknown {
                        action: self.name.clone(),
                        var: var.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// One TBox-free disjunct of a rewritten action. All disjuncts of the same
/// base action share `N`, the effects, the entailment set and the
/// blocking query; only the guard differs.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RewrittenAction {
    pub base: Name,
    pub index: usize,
    pub guard: ConjunctiveQuery,
    pub fresh_vars: Vec<Name>,
    pub add_effects: Vec<QueryAtom>,
    pub del_effects: Vec<QueryAtom>,
    pub blocking: UnionQuery,
    pub ent_set: EntSet,
}

impl RewrittenAction {
    /// The variables a transition binding must cover: the guard's answer
    /// variables plus the fresh ones.
    pub fn required_vars(&self) -> impl Iterator<Item = &Name> {
        self.guard.free_vars.iter().chain(self.fresh_vars.iter())
    }
}

impl fmt::Display for RewrittenAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^rew{}", self.base, self.index)
    }
}

/// Action rewriting: one rewritten action per guard disjunct,
/// with the blocking query and entailment set computed once and shared.
pub fn rewrite_action(action: &Action, tbox: &[TBoxAssertion]) -> Vec<RewrittenAction> {
    let closure = ni_closure(tbox);
    rewrite_action_with(action, tbox, &closure)
}

pub fn rewrite_action_with(
    action: &Action,
    tbox: &[TBoxAssertion],
    closure: &NiClosure,
) -> Vec<RewrittenAction> {
    let guard_ucq = perfect_ref(&action.guard, tbox);
    let ent_set = ent_neg_effects(&action.del_effects, tbox);
    let blocking = build_blocking_query_with(&action.add_effects, &ent_set, closure);
    guard_ucq
        .disjuncts()
        .iter()
        .enumerate()
        .map(|(i, guard)| RewrittenAction {
            base: action.name.clone(),
            index: i + 1,
            guard: guard.clone(),
            fresh_vars: action.fresh_vars.clone(),
            add_effects: action.add_effects.clone(),
            del_effects: action.del_effects.clone(),
            blocking: blocking.clone(),
            ent_set: ent_set.clone(),
        })
        .collect()
}

/// Rewrites a whole action set in declaration order.
pub fn rewrite_actions(actions: &[Action], tbox: &[TBoxAssertion]) -> Vec<RewrittenAction> {
    let closure = ni_closure(tbox);
    actions.iter().flat_map(|a| rewrite_action_with(a, tbox, &closure)).collect()
}

/// A threat pattern: the state atom that together with an instantiated
/// positive effect would violate one closure member. Functionality
/// members additionally constrain the witness position.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
struct Threat {
    atom: QueryAtom,
    ineq: Option<QueryAtom>,
}

/// Builds the blocking query for the given effects. Starts from the
/// always-false union and or-connects one conjunctive condition per
/// discovered violation scenario.
pub fn build_blocking_query(
    add_effects: &[QueryAtom],
    del_effects: &[QueryAtom],
    tbox: &[TBoxAssertion],
) -> UnionQuery {
    let ent = ent_neg_effects(del_effects, tbox);
    build_blocking_query_with(add_effects, &ent, &ni_closure(tbox))
}

pub fn build_blocking_query_with(
    add_effects: &[QueryAtom],
    ent: &EntSet,
    closure: &NiClosure,
) -> UnionQuery {
    let witness = pick_witness_var(add_effects, ent);
    let mut disjuncts: Vec<ConjunctiveQuery> = Vec::new();
    for effect in add_effects {
        let mut threats: BTreeSet<Threat> = BTreeSet::new();
        for member in closure.iter() {
            threats.extend(threats_for(effect, member, &witness));
        }
        for threat in threats {
            process_threat(&threat, add_effects, ent, &witness, &mut disjuncts);
        }
    }
    let mut seen: BTreeSet<ConjunctiveQuery> = BTreeSet::new();
    disjuncts.retain(|cq| seen.insert(cq.clone()));
    UnionQuery::Union(disjuncts)
}

/// The newly introduced witness variable must not collide with any action
/// variable.
fn pick_witness_var(add_effects: &[QueryAtom], ent: &EntSet) -> Name {
    let used: BTreeSet<&Name> = add_effects
        .iter()
        .flat_map(|a| a.variables())
        .chain(ent.entries.iter().flat_map(|e| e.atom.variables()))
        .collect();
    let mut candidate = Name::from("_z");
    let mut counter = 0;
    while used.contains(&candidate) {
        counter += 1;
        candidate = Name::from(format!("_z{}", counter));
    }
    candidate
}

/// Enumerates the threat patterns a positive effect and one closure
/// member give rise to.
fn threats_for(effect: &QueryAtom, member: &TBoxAssertion, witness: &Name) -> Vec<Threat> {
    let z = || Term::Var(witness.clone());
    let mut threats = Vec::new();
    match effect {
        QueryAtom::Concept { name, term } => {
            if let TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: true } = member {
                for (side, other) in [(lhs, rhs), (rhs, lhs)] {
                    if *side != BasicConcept::Atomic(name.clone()) {
                        continue;
                    }
                    let atom = match other {
                        BasicConcept::Atomic(a) => QueryAtom::concept(a.clone(), term.clone()),
                        BasicConcept::Exists(role) => {
                            if role.inverted {
                                QueryAtom::role(role.name.clone(), z(), term.clone())
                            } else {
                                QueryAtom::role(role.name.clone(), term.clone(), z())
                            }
                        }
                    };
                    threats.push(Threat { atom, ineq: None });
                }
            }
        }
        QueryAtom::Role { name, first, second } => match member {
            TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: true } => {
                for (side, other) in [(lhs, rhs), (rhs, lhs)] {
                    let BasicConcept::Exists(role) = side else { continue };
                    if role.name != *name {
                        continue;
                    }
                    // The anchor is the endpoint of the new edge that the
                    // violated restriction talks about.
                    let anchor = if role.inverted { second } else { first };
                    let atom = match other {
                        BasicConcept::Atomic(a) => QueryAtom::concept(a.clone(), anchor.clone()),
                        BasicConcept::Exists(threat_role) => {
                            if threat_role.inverted {
                                QueryAtom::role(threat_role.name.clone(), z(), anchor.clone())
                            } else {
                                QueryAtom::role(threat_role.name.clone(), anchor.clone(), z())
                            }
                        }
                    };
                    threats.push(Threat { atom, ineq: None });
                }
            }
            TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: true } => {
                for (side, other) in [(lhs, rhs), (rhs, lhs)] {
                    if side.name != *name {
                        continue;
                    }
                    // Same inversion parity keeps the argument order of
                    // the new edge; crossed parity swaps it.
                    let atom = if side.inverted == other.inverted {
                        QueryAtom::role(other.name.clone(), first.clone(), second.clone())
                    } else {
                        QueryAtom::role(other.name.clone(), second.clone(), first.clone())
                    };
                    threats.push(Threat { atom, ineq: None });
                }
            }
            TBoxAssertion::Functionality(role) => {
                if role.name != *name {
                    return threats;
                }
                if role.inverted {
                    threats.push(Threat {
                        atom: QueryAtom::role(name.clone(), z(), second.clone()),
                        ineq: Some(QueryAtom::Neq(first.clone(), z())),
                    });
                } else {
                    threats.push(Threat {
                        atom: QueryAtom::role(name.clone(), first.clone(), z()),
                        ineq: Some(QueryAtom::Neq(second.clone(), z())),
                    });
                }
            }
            _ => {}
        },
        _ => {}
    }
    threats
}

/// Matches a threat pattern against a set of non-ground atoms, mapping
/// the pattern's variables to the atoms' terms. The same pattern variable
/// must map consistently; a wildcard on the atom side absorbs anything.
fn match_pattern(pattern: &QueryAtom, against: &QueryAtom) -> Option<Vec<(Name, Term)>> {
    let pairs: Vec<(&Term, &Term)> = match (pattern, against) {
        (QueryAtom::Concept { name: n1, term: t1 }, QueryAtom::Concept { name: n2, term: t2 })
            if n1 == n2 =>
        {
            vec![(t1, t2)]
        }
        (
            QueryAtom::Role { name: n1, first: f1, second: s1 },
            QueryAtom::Role { name: n2, first: f2, second: s2 },
        ) if n1 == n2 => vec![(f1, f2), (s1, s2)],
        _ => return None,
    };
    let mut mapping: Vec<(Name, Term)> = Vec::new();
    for (pat, target) in pairs {
        match pat {
            Term::Var(v) => {
                match mapping.iter().find(|(name, _)| name == v) {
                    Some((_, bound)) => {
                        // Consistency across repeated pattern variables;
                        // a wildcard is compatible with anything.
                        let compatible = bound == target
                            || matches!(bound, Term::Wildcard)
                            || matches!(target, Term::Wildcard);
                        if !compatible {
                            return None;
                        }
                        if matches!(bound, Term::Wildcard) && !matches!(target, Term::Wildcard) {
                            let slot = mapping.iter_mut().find(|(name, _)| name == v).unwrap();
                            slot.1 = target.clone();
                        }
                    }
                    None => mapping.push((v.clone(), target.clone())),
                }
            }
            Term::Const(c) => match target {
                Term::Const(d) if c == d => {}
                Term::Wildcard => {}
                _ => return None,
            },
            Term::Wildcard => {}
        }
    }
    Some(mapping)
}

/// Runs the three construction steps for one threat pattern.
fn process_threat(
    threat: &Threat,
    add_effects: &[QueryAtom],
    ent: &EntSet,
    witness: &Name,
    disjuncts: &mut Vec<ConjunctiveQuery>,
) {
    // Step 1: conflicts among the positive effects themselves. Each match
    // yields a pure (in)equality condition relating action variables.
    for other in add_effects {
        let Some(mapping) = match_pattern(&threat.atom, other) else { continue };
        let mut atoms: Vec<QueryAtom> = Vec::new();
        let mut witness_image: Option<Term> = None;
        let mut dead = false;
        for (var, image) in &mapping {
            if var == witness {
                witness_image = Some(image.clone());
            } else {
                match simplify_constraint(QueryAtom::Eq(Term::Var(var.clone()), image.clone())) {
                    Simplified::Keep(atom) => atoms.push(atom),
                    Simplified::True => {}
                    Simplified::False => dead = true,
                }
            }
        }
        if let Some(ineq) = &threat.ineq {
            let grounded = substitute_witness(ineq, witness, witness_image.as_ref());
            match simplify_constraint(grounded) {
                Simplified::Keep(atom) => atoms.push(atom),
                Simplified::True => {}
                Simplified::False => dead = true,
            }
        }
        if dead {
            continue;
        }
        let free_vars = ordered_vars(&atoms);
        disjuncts.push(ConjunctiveQuery { atoms, free_vars, exist_vars: BTreeSet::new() });
    }

    // Step 2: threats in the current state that survive the removals. One
    // disjunct per way of escaping each matched removal pattern.
    let mut matched_removal = false;
    for entry in &ent.entries {
        let Some(mapping) = match_pattern(&threat.atom, &entry.atom) else { continue };
        matched_removal = true;
        for (var, image) in &mapping {
            if matches!(image, Term::Wildcard) {
                // Escaping through this position would require v != _,
                // which never holds.
                continue;
            }
            let escape = QueryAtom::Neq(Term::Var(var.clone()), image.clone());
            if let Simplified::False = simplify_constraint(escape.clone()) {
                continue;
            }
            if let Simplified::True = simplify_constraint(escape.clone()) {
                // Cannot happen for a Neq over named terms, but keep the
                // match exhaustive.
                continue;
            }
            let mut atoms = vec![threat.atom.clone()];
            if let Some(ineq) = &threat.ineq {
                atoms.push(ineq.clone());
            }
            atoms.push(escape);
            disjuncts.push(threat_query(threat, atoms, witness));
        }
    }

    // Step 3: no removal can touch this threat; block exactly when it is
    // already present in the state.
    if !matched_removal {
        let mut atoms = vec![threat.atom.clone()];
        if let Some(ineq) = &threat.ineq {
            atoms.push(ineq.clone());
        }
        disjuncts.push(threat_query(threat, atoms, witness));
    }
}

fn threat_query(threat: &Threat, atoms: Vec<QueryAtom>, witness: &Name) -> ConjunctiveQuery {
    let uses_witness = threat
        .atom
        .variables()
        .chain(threat.ineq.iter().flat_map(|i| i.variables()))
        .any(|v| v == witness);
    let mut exist_vars = BTreeSet::new();
    if uses_witness {
        exist_vars.insert(witness.clone());
    }
    let free_vars = ordered_vars(&atoms).into_iter().filter(|v| v != witness).collect();
    ConjunctiveQuery { atoms, free_vars, exist_vars }
}

fn ordered_vars(atoms: &[QueryAtom]) -> Vec<Name> {
    let mut out: Vec<Name> = Vec::new();
    for atom in atoms {
        for var in atom.variables() {
            if !out.contains(var) {
                out.push(var.clone());
            }
        }
    }
    out
}

enum Simplified {
    Keep(QueryAtom),
    True,
    False,
}

/// Decides (in)equalities between syntactically equal terms; everything
/// else is kept for evaluation under a concrete binding.
fn simplify_constraint(atom: QueryAtom) -> Simplified {
    match &atom {
        QueryAtom::Eq(a, b) => {
            if a == b {
                Simplified::True
            } else if let (Term::Const(x), Term::Const(y)) = (a, b) {
                if x == y {
                    Simplified::True
                } else {
                    Simplified::False
                }
            } else {
                Simplified::Keep(atom)
            }
        }
        QueryAtom::Neq(a, b) => {
            if a == b || matches!(a, Term::Wildcard) || matches!(b, Term::Wildcard) {
                Simplified::False
            } else if let (Term::Const(x), Term::Const(y)) = (a, b) {
                if x == y {
                    Simplified::False
                } else {
                    Simplified::True
                }
            } else {
                Simplified::Keep(atom)
            }
        }
        _ => Simplified::Keep(atom),
    }
}

fn substitute_witness(ineq: &QueryAtom, witness: &Name, image: Option<&Term>) -> QueryAtom {
    let sub = |t: &Term| match t {
        Term::Var(v) if v == witness => image.cloned().unwrap_or(Term::Wildcard),
        other => other.clone(),
    };
    match ineq {
        QueryAtom::Eq(a, b) => QueryAtom::Eq(sub(a), sub(b)),
        QueryAtom::Neq(a, b) => QueryAtom::Neq(sub(a), sub(b)),
        other => other.clone(),
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("binding does not cover required variable {0}")]
    MissingVariable(Name),
    #[error("binding assigns {0}, which is not a variable of the action")]
    UnknownVariable(Name),
    #[error("fresh-constant violation: {var} is bound to {ind}, which already occurs in the state")]
    FreshConstantViolation { var: Name, ind: Individual },
}

/// Instantiates the effects of a rewritten action under a binding:
/// the assertions to remove (every state assertion matching a grounded
/// entailment atom) and the assertions to add (the grounded positive
/// effects).
pub fn instantiate_effects(
    action: &RewrittenAction,
    binding: &Binding,
    abox: &ABox,
) -> Result<(ABox, ABox), StepError> {
    check_binding(action, binding, abox)?;
    let removed = compute_e_minus_sub(&action.ent_set, binding, abox);
    let mut added = ABox::new();
    for effect in &action.add_effects {
        added.insert(ground_effect(effect, binding)?);
    }
    Ok((removed, added))
}

pub(crate) fn check_binding(
    action: &RewrittenAction,
    binding: &Binding,
    abox: &ABox,
) -> Result<(), StepError> {
    let required: BTreeSet<&Name> = action.required_vars().collect();
    for var in &required {
        if binding.get(var).is_none() {
            return Err(StepError::MissingVariable((*var).clone()));
        }
    }
    for (var, _) in binding.iter() {
        if !required.contains(var) {
            return Err(StepError::UnknownVariable(var.clone()));
        }
    }
    let dom = crate::model::adom(abox);
    for var in &action.fresh_vars {
        let ind = binding.get(var).expect("checked above");
        if dom.contains(ind) {
            return Err(StepError::FreshConstantViolation {
                var: var.clone(),
                ind: ind.clone(),
            });
        }
    }
    Ok(())
}

fn ground_effect(effect: &QueryAtom, binding: &Binding) -> Result<ABoxAssertion, StepError> {
    let resolve = |t: &Term| -> Result<Individual, StepError> {
        match t {
            Term::Const(c) => Ok(c.clone()),
            Term::Var(v) => binding
                .get(v)
                .cloned()
                .ok_or_else(|| StepError::MissingVariable(v.clone())),
            Term::Wildcard => unreachable!("effects are wildcard-free"),
        }
    };
    match effect {
        QueryAtom::Concept { name, term } => {
            Ok(ABoxAssertion::Concept(name.clone(), resolve(term)?))
        }
        QueryAtom::Role { name, first, second } => {
            Ok(ABoxAssertion::Role(name.clone(), resolve(first)?, resolve(second)?))
        }
        _ => unreachable!("effects are relational"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::holds;

    fn var(s: &str) -> Term {
        Term::var(s)
    }

    fn guard(atoms: Vec<QueryAtom>, free: &[&str]) -> ConjunctiveQuery {
        ConjunctiveQuery {
            atoms,
            free_vars: free.iter().map(|s| Name::from(*s)).collect(),
            exist_vars: BTreeSet::new(),
        }
    }

    fn example1_tbox() -> Vec<TBoxAssertion> {
        vec![
            TBoxAssertion::concept_sub(
                BasicConcept::atomic("Technician"),
                BasicConcept::atomic("Employee"),
            ),
            TBoxAssertion::concept_disjoint(
                BasicConcept::atomic("Employee"),
                BasicConcept::atomic("Product"),
            ),
        ]
    }

    fn create_action() -> Action {
        Action {
            name: Name::from("create"),
            guard: guard(vec![QueryAtom::concept("Employee", var("x"))], &["x"]),
            fresh_vars: vec![Name::from("y")],
            add_effects: vec![QueryAtom::concept("Product", var("y"))],
            del_effects: vec![],
        }
    }

    fn fire_action() -> Action {
        Action {
            name: Name::from("fire"),
            guard: guard(vec![QueryAtom::concept("Employee", var("x"))], &["x"]),
            fresh_vars: vec![],
            add_effects: vec![],
            del_effects: vec![QueryAtom::concept("Employee", var("x"))],
        }
    }

    #[test]
    fn create_rewrites_into_two_actions_with_shared_blocking_query() {
        let rewritten = rewrite_action(&create_action(), &example1_tbox());
        assert_eq!(rewritten.len(), 2);
        assert_eq!(rewritten[0].guard.to_string(), "Employee(x)");
        assert_eq!(rewritten[1].guard.to_string(), "Technician(x)");
        for ra in &rewritten {
            assert_eq!(ra.blocking.to_string(), "Employee(y) | Technician(y)");
        }
    }

    #[test]
    fn empty_tbox_yields_single_action_with_bottom_blocking() {
        let rewritten = rewrite_action(&create_action(), &[]);
        assert_eq!(rewritten.len(), 1);
        assert!(rewritten[0].blocking.is_bottom());
    }

    #[test]
    fn ship_action_blocking_query_is_stored() {
        let tbox = vec![TBoxAssertion::concept_disjoint(
            BasicConcept::atomic("Stored"),
            BasicConcept::atomic("Shipped"),
        )];
        let ship = Action {
            name: Name::from("ship"),
            guard: guard(vec![QueryAtom::concept("Packed", var("x"))], &["x"]),
            fresh_vars: vec![],
            add_effects: vec![QueryAtom::concept("Shipped", var("x"))],
            del_effects: vec![],
        };
        let rewritten = rewrite_action(&ship, &tbox);
        assert_eq!(rewritten.len(), 1);
        assert_eq!(rewritten[0].blocking.to_string(), "Stored(x)");

        let pack = Action {
            name: Name::from("pack"),
            guard: guard(vec![QueryAtom::concept("Product", var("x"))], &["x"]),
            fresh_vars: vec![],
            add_effects: vec![QueryAtom::concept("Packed", var("x"))],
            del_effects: vec![],
        };
        let rewritten = rewrite_action(&pack, &tbox);
        assert!(rewritten[0].blocking.is_bottom());
    }

    #[test]
    fn no_positive_effects_means_bottom() {
        let b = build_blocking_query(&[], &[QueryAtom::concept("A", var("x"))], &example1_tbox());
        assert!(b.is_bottom());
    }

    #[test]
    fn functionality_row_produces_witness_inequality() {
        let tbox = vec![TBoxAssertion::Functionality(crate::model::RoleExpr::direct("P"))];
        let b = build_blocking_query(&[QueryAtom::role("P", var("x1"), var("x2"))], &[], &tbox);
        assert_eq!(b.to_string(), "P(x1, _z) & x2 != _z");

        // Blocked exactly on states holding another P-edge from x1.
        let state: ABox = [ABoxAssertion::role("P", "a", "b")].into_iter().collect();
        let mut theta = Binding::singleton("x1", "a");
        theta.bind(Name::from("x2"), Individual::from("c"));
        assert!(holds(&b.substitute(&theta), &state).unwrap());
        let mut same = Binding::singleton("x1", "a");
        same.bind(Name::from("x2"), Individual::from("b"));
        assert!(!holds(&b.substitute(&same), &state).unwrap());
    }

    #[test]
    fn inverse_functionality_row_constrains_first_position() {
        let tbox = vec![TBoxAssertion::Functionality(crate::model::RoleExpr::inverse_of("P"))];
        let b = build_blocking_query(&[QueryAtom::role("P", var("x1"), var("x2"))], &[], &tbox);
        assert_eq!(b.to_string(), "P(_z, x2) & x1 != _z");
    }

    #[test]
    fn self_disjoint_concept_blocks_unconditionally() {
        // A <= B, B <= not A closes to A <= not A: adding A(y) can never
        // be consistent, so the blocking query must hold on every state.
        let tbox = vec![
            TBoxAssertion::concept_sub(BasicConcept::atomic("A"), BasicConcept::atomic("B")),
            TBoxAssertion::concept_disjoint(BasicConcept::atomic("B"), BasicConcept::atomic("A")),
        ];
        let b = build_blocking_query(&[QueryAtom::concept("A", var("y"))], &[], &tbox);
        let grounded = b.substitute(&Binding::singleton("y", "c"));
        assert!(holds(&grounded, &ABox::new()).unwrap());
    }

    #[test]
    fn surviving_threats_escape_through_each_position() {
        // Guard P(v,w); deleting P(v,w) while adding A(v) under
        // A <= not exists P: removal only strips the exact pair, so any
        // other P-successor of v must still block.
        let tbox = vec![TBoxAssertion::concept_disjoint(
            BasicConcept::atomic("A"),
            BasicConcept::Exists(crate::model::RoleExpr::direct("P")),
        )];
        let b = build_blocking_query(
            &[QueryAtom::concept("A", var("v"))],
            &[QueryAtom::role("P", var("v"), var("w"))],
            &tbox,
        );
        assert_eq!(b.to_string(), "P(v, _z) & _z != w");

        let state: ABox = [
            ABoxAssertion::role("P", "c", "d"),
            ABoxAssertion::role("P", "c", "e"),
        ]
        .into_iter()
        .collect();
        let mut theta = Binding::singleton("v", "c");
        theta.bind(Name::from("w"), Individual::from("d"));
        // P(c,e) survives the removal of P(c,d): must block.
        assert!(holds(&b.substitute(&theta), &state).unwrap());

        let single: ABox = [ABoxAssertion::role("P", "c", "d")].into_iter().collect();
        assert!(!holds(&b.substitute(&theta), &single).unwrap());
    }

    #[test]
    fn wildcard_removal_cannot_be_escaped() {
        // Deleting A(v) under exists P <= A removes every P(v, *): the
        // only escape inequality would compare against the wildcard and
        // is dropped, leaving escape through the first position only.
        let tbox = vec![
            TBoxAssertion::concept_sub(
                BasicConcept::Exists(crate::model::RoleExpr::direct("P")),
                BasicConcept::atomic("A"),
            ),
            TBoxAssertion::concept_disjoint(
                BasicConcept::atomic("B"),
                BasicConcept::Exists(crate::model::RoleExpr::direct("P")),
            ),
        ];
        let b = build_blocking_query(
            &[QueryAtom::concept("B", var("v"))],
            &[QueryAtom::concept("A", var("v"))],
            &tbox,
        );
        // ent(E-) = {A(v), P(v,_)}; the threat P(v,z) matches P(v,_) and
        // the z-escape dies, so only v != v remains, which dies too: the
        // threat is fully erased and B is bottom.
        assert!(b.is_bottom(), "got {}", b);
    }

    #[test]
    fn effect_conflicts_between_two_positive_effects() {
        // Two role effects under funct P conflict when sources coincide
        // and targets differ.
        let tbox = vec![TBoxAssertion::Functionality(crate::model::RoleExpr::direct("P"))];
        let b = build_blocking_query(
            &[
                QueryAtom::role("P", var("x1"), var("x2")),
                QueryAtom::role("P", var("y1"), var("y2")),
            ],
            &[],
            &tbox,
        );
        let rendered = b.to_string();
        assert!(
            rendered.contains("x1 == y1 & x2 != y2"),
            "missing effect-pair condition in {rendered}"
        );

        // Bound so both effects write the same source with different
        // targets: blocked on any state, even the empty one.
        let theta: Binding = [
            (Name::from("x1"), Individual::from("a")),
            (Name::from("x2"), Individual::from("b")),
            (Name::from("y1"), Individual::from("a")),
            (Name::from("y2"), Individual::from("c")),
        ]
        .into_iter()
        .collect();
        assert!(holds(&b.substitute(&theta), &ABox::new()).unwrap());

        // Same target: nothing to block.
        let theta_same: Binding = [
            (Name::from("x1"), Individual::from("a")),
            (Name::from("x2"), Individual::from("b")),
            (Name::from("y1"), Individual::from("a")),
            (Name::from("y2"), Individual::from("b")),
        ]
        .into_iter()
        .collect();
        assert!(!holds(&b.substitute(&theta_same), &ABox::new()).unwrap());
    }

    #[test]
    fn instantiate_fire_removes_entailing_assertion() {
        let rewritten = rewrite_action(&fire_action(), &example1_tbox());
        let a0: ABox = [
            ABoxAssertion::concept("Technician", "t1"),
            ABoxAssertion::concept("Product", "p1"),
        ]
        .into_iter()
        .collect();
        let theta = Binding::singleton("x", "t1");
        let (removed, added) = instantiate_effects(&rewritten[0], &theta, &a0).unwrap();
        let expected: ABox =
            [ABoxAssertion::concept("Technician", "t1")].into_iter().collect();
        assert_eq!(removed, expected);
        assert!(added.is_empty());
    }

    #[test]
    fn instantiate_create_adds_new_product() {
        let rewritten = rewrite_action(&create_action(), &example1_tbox());
        let a0: ABox = [
            ABoxAssertion::concept("Technician", "t1"),
            ABoxAssertion::concept("Product", "p1"),
        ]
        .into_iter()
        .collect();
        let mut theta = Binding::singleton("x", "t1");
        theta.bind(Name::from("y"), Individual::from("p2"));
        let (removed, added) = instantiate_effects(&rewritten[0], &theta, &a0).unwrap();
        assert!(removed.is_empty());
        let expected: ABox = [ABoxAssertion::concept("Product", "p2")].into_iter().collect();
        assert_eq!(added, expected);
    }

    #[test]
    fn fresh_constant_violation_is_reported() {
        let rewritten = rewrite_action(&create_action(), &example1_tbox());
        let a0: ABox = [ABoxAssertion::concept("Technician", "t1")].into_iter().collect();
        let mut theta = Binding::singleton("x", "t1");
        theta.bind(Name::from("y"), Individual::from("t1"));
        let err = instantiate_effects(&rewritten[0], &theta, &a0).unwrap_err();
        assert!(matches!(err, StepError::FreshConstantViolation { .. }));
    }

    #[test]
    fn empty_effects_instantiate_to_nothing() {
        let noop = Action {
            name: Name::from("noop"),
            guard: guard(vec![QueryAtom::concept("A", var("x"))], &["x"]),
            fresh_vars: vec![],
            add_effects: vec![],
            del_effects: vec![],
        };
        let rewritten = rewrite_action(&noop, &[]);
        let a: ABox = [ABoxAssertion::concept("A", "a")].into_iter().collect();
        let (removed, added) =
            instantiate_effects(&rewritten[0], &Binding::singleton("x", "a"), &a).unwrap();
        assert!(removed.is_empty() && added.is_empty());
    }

    #[test]
    fn action_validation_catches_variable_misuse() {
        let mut bad = fire_action();
        bad.del_effects = vec![QueryAtom::concept("Employee", var("zz"))];
        assert!(matches!(bad.validate(), Err(ActionError::DeleteVarNotFree { .. })));

        let mut bad = create_action();
        bad.fresh_vars = vec![Name::from("x")];
        assert!(matches!(bad.validate(), Err(ActionError::FreshVarInGuard { .. })));

        let mut bad = create_action();
        bad.add_effects = vec![QueryAtom::concept("Product", var("nope"))];
        assert!(matches!(bad.validate(), Err(ActionError::AddVarUnknown { .. })));

        assert!(create_action().validate().is_ok());
        assert!(fire_action().validate().is_ok());
    }

    #[test]
    fn concept_effect_against_exists_restrictions() {
        // Adding A(x) under A <= not exists P is threatened by any
        // outgoing P edge from x; the inverse form looks at incoming
        // edges.
        let p = crate::model::RoleExpr::direct("P");
        let outgoing = vec![TBoxAssertion::concept_disjoint(
            BasicConcept::atomic("A"),
            BasicConcept::Exists(p.clone()),
        )];
        let b = build_blocking_query(&[QueryAtom::concept("A", var("x"))], &[], &outgoing);
        assert_eq!(b.to_string(), "P(x, _z)");

        let incoming = vec![TBoxAssertion::concept_disjoint(
            BasicConcept::atomic("A"),
            BasicConcept::Exists(p.inverse()),
        )];
        let b = build_blocking_query(&[QueryAtom::concept("A", var("x"))], &[], &incoming);
        assert_eq!(b.to_string(), "P(_z, x)");
    }

    #[test]
    fn role_effect_against_role_disjointness() {
        // Same-parity disjointness keeps the edge's argument order; the
        // crossed form swaps it.
        let same = vec![TBoxAssertion::role_disjoint(
            crate::model::RoleExpr::direct("P"),
            crate::model::RoleExpr::direct("S"),
        )];
        let b =
            build_blocking_query(&[QueryAtom::role("P", var("x1"), var("x2"))], &[], &same);
        assert_eq!(b.to_string(), "S(x1, x2)");

        let crossed = vec![TBoxAssertion::role_disjoint(
            crate::model::RoleExpr::direct("P"),
            crate::model::RoleExpr::inverse_of("S"),
        )];
        let b =
            build_blocking_query(&[QueryAtom::role("P", var("x1"), var("x2"))], &[], &crossed);
        assert_eq!(b.to_string(), "S(x2, x1)");
    }

    #[test]
    fn role_effect_against_exists_disjointness() {
        let exists = |role: crate::model::RoleExpr| BasicConcept::Exists(role);
        let direct = crate::model::RoleExpr::direct;

        // exists P disjoint exists S: the new edge's source must not
        // have an outgoing S edge.
        let tbox = vec![TBoxAssertion::concept_disjoint(exists(direct("P")), exists(direct("S")))];
        let b = build_blocking_query(&[QueryAtom::role("P", var("x1"), var("x2"))], &[], &tbox);
        assert_eq!(b.to_string(), "S(x1, _z)");

        // exists P disjoint exists S-: the source must not have an
        // incoming S edge.
        let tbox = vec![TBoxAssertion::concept_disjoint(
            exists(direct("P")),
            exists(crate::model::RoleExpr::inverse_of("S")),
        )];
        let b = build_blocking_query(&[QueryAtom::role("P", var("x1"), var("x2"))], &[], &tbox);
        assert_eq!(b.to_string(), "S(_z, x1)");

        // exists P- disjoint exists S: now the target end is anchored.
        let tbox = vec![TBoxAssertion::concept_disjoint(
            exists(crate::model::RoleExpr::inverse_of("P")),
            exists(direct("S")),
        )];
        let b = build_blocking_query(&[QueryAtom::role("P", var("x1"), var("x2"))], &[], &tbox);
        assert_eq!(b.to_string(), "S(x2, _z)");

        // Role effect against a concept: exists P disjoint A anchors the
        // source; exists P- disjoint A anchors the target.
        let tbox = vec![TBoxAssertion::concept_disjoint(
            exists(direct("P")),
            BasicConcept::atomic("A"),
        )];
        let b = build_blocking_query(&[QueryAtom::role("P", var("x1"), var("x2"))], &[], &tbox);
        assert_eq!(b.to_string(), "A(x1)");
        let tbox = vec![TBoxAssertion::concept_disjoint(
            exists(crate::model::RoleExpr::inverse_of("P")),
            BasicConcept::atomic("A"),
        )];
        let b = build_blocking_query(&[QueryAtom::role("P", var("x1"), var("x2"))], &[], &tbox);
        assert_eq!(b.to_string(), "A(x2)");
    }

    #[test]
    fn blocking_query_is_state_free_and_shared() {
        let tbox = example1_tbox();
        let a = create_action();
        let b1 = build_blocking_query(&a.add_effects, &a.del_effects, &tbox);
        let b2 = build_blocking_query(&a.add_effects, &a.del_effects, &tbox);
        assert_eq!(format!("{}", b1), format!("{}", b2));
    }
}
