//! Global blocking queries: certifying that a path found over partial
//! states lifts to the complete system.
//!
//! A finite partial path is processed from its last transition back to
//! its first, maintaining a union query. At each transition the current
//! query is tested against the instantiated positive effects (a hit means
//! an unavoidable conflict between steps: the result degenerates to the
//! always-true query), conjuncts decided by the unique-name assumption
//! are simplified away, conditions erased by the transition's removals
//! are deleted or refined with witness inequalities, and the transition's
//! own instantiated blocking query is added. Evaluating the final query
//! over a complete initial state that contains the partial one certifies,
//! when false, that the very same action instantiations replay there
//! without ever producing an inconsistent state.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::actions::{RewrittenAction, StepError};
use crate::consistency::ConsistencyChecker;
use crate::model::{adom, ABox, ABoxAssertion, Individual, Name};
use crate::query::{
    eval_cq, holds, Binding, ConjunctiveQuery, QueryAtom, QueryError, Term, UnionQuery,
};
use crate::transition::{partial_step, raw_successor, FocusPolicy, StepOutcome};

/// One transition of a partial path: the rewritten action, the binding,
/// and the recorded partial successor.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PathStep {
    pub action: RewrittenAction,
    pub binding: Binding,
    pub result: ABox,
}

/// A finite path over partial states, starting from a partial initial
/// state. Every step's blocking query was false on its source state and
/// consecutive states satisfy the partial-step subset property.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PartialPath {
    pub initial: ABox,
    pub steps: Vec<PathStep>,
}

impl PartialPath {
    /// The partial state a step starts from (0-based step index).
    pub fn source_state(&self, index: usize) -> &ABox {
        if index == 0 {
            &self.initial
        } else {
            &self.steps[index - 1].result
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("step {step}: unknown action `{action}`")]
    UnknownAction { step: usize, action: Name },
    #[error("step {step}: binding is not a guard answer of any disjunct of `{action}`")]
    GuardRejects { step: usize, action: Name },
    #[error("step {step}: blocked by {disjunct}")]
    Blocked { step: usize, disjunct: String },
    #[error("step {step}: {source}")]
    Step { step: usize, source: StepError },
    #[error("step {step}: guard of `{action}` is not evaluable: {source}")]
    Guard { step: usize, action: Name, source: QueryError },
    #[error("the partial initial state is not a subset of the complete one")]
    NotSubset,
}

/// Validates and materializes a partial path from labels: each step must
/// be a real transition of the partial system (guard answer, blocking
/// query false) and the successor is projected through the focus.
pub fn build_partial_path(
    initial: ABox,
    labels: &[(Name, Binding)],
    gamma: &[RewrittenAction],
    focus: &FocusPolicy,
) -> Result<PartialPath, PathError> {
    let mut path = PartialPath { initial, steps: Vec::new() };
    for (idx, (action_name, binding)) in labels.iter().enumerate() {
        let step_no = idx + 1;
        let current = path.source_state(idx).clone();
        let action = resolve_variant(action_name, binding, &current, gamma, step_no)?;
        match partial_step(&current, action, binding, focus, None)
            .map_err(|source| PathError::Step { step: step_no, source })?
        {
            StepOutcome::Next(result) => {
                path.steps.push(PathStep {
                    action: action.clone(),
                    binding: binding.clone(),
                    result,
                });
            }
            StepOutcome::Blocked(disjunct) => {
                return Err(PathError::Blocked { step: step_no, disjunct });
            }
            StepOutcome::Inconsistent(_) => unreachable!("no audit requested"),
        }
    }
    Ok(path)
}

/// Picks the first rewritten variant of the named action whose guard
/// admits the binding on the given state.
fn resolve_variant<'a>(
    action_name: &Name,
    binding: &Binding,
    state: &ABox,
    gamma: &'a [RewrittenAction],
    step_no: usize,
) -> Result<&'a RewrittenAction, PathError> {
    let variants: Vec<&RewrittenAction> =
        gamma.iter().filter(|ra| &ra.base == action_name).collect();
    if variants.is_empty() {
        return Err(PathError::UnknownAction { step: step_no, action: action_name.clone() });
    }
    for variant in &variants {
        let answers = eval_cq(&variant.guard, state).map_err(|source| PathError::Guard {
            step: step_no,
            action: action_name.clone(),
            source,
        })?;
        let projected = binding.restricted_to(&variant.guard.free_vars);
        if projected.iter().count() == variant.guard.free_vars.len()
            && answers.contains(&projected)
        {
            return Ok(variant);
        }
    }
    Err(PathError::GuardRejects { step: step_no, action: action_name.clone() })
}

/// The result of the backwards accumulation: either a union query to
/// evaluate over complete initial states, or the always-true marker when
/// two steps of the path conflict unconditionally.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GlobalBlockingQuery {
    pub query: UnionQuery,
}

impl fmt::Display for GlobalBlockingQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.query)
    }
}

/// Per-transition trace of the accumulation, for inspection and tests.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TraceEntry {
    /// 1-based index of the transition processed by this iteration.
    pub step: usize,
    pub early_exit: bool,
    /// Conditions dropped because a ground (in)equality failed.
    pub dropped: usize,
    /// Conditions erased by the transition's removals.
    pub erased: usize,
    /// Witness inequalities conjoined onto surviving conditions.
    pub refined: usize,
    /// Disjuncts of the step's own blocking query added.
    pub added: usize,
}

pub fn global_blocking_query(path: &PartialPath) -> GlobalBlockingQuery {
    global_blocking_query_traced(path).0
}

/// Runs the accumulation from the last transition down to the first.
pub fn global_blocking_query_traced(
    path: &PartialPath,
) -> (GlobalBlockingQuery, Vec<TraceEntry>) {
    let mut disjuncts: Vec<ConjunctiveQuery> = Vec::new();
    let mut trace = Vec::new();
    for index in (0..path.steps.len()).rev() {
        let step = &path.steps[index];
        let mut entry = TraceEntry {
            step: index + 1,
            early_exit: false,
            dropped: 0,
            erased: 0,
            refined: 0,
            added: 0,
        };
        let added_facts = grounded_add_effects(&step.action, &step.binding);

        // Early exit: the accumulated query already holds on the facts
        // this very transition adds, so the path conflicts with itself.
        for cq in &disjuncts {
            if holds(&UnionQuery::Union(vec![cq.clone()]), &added_facts)
                .expect("accumulated conditions stay safe")
            {
                entry.early_exit = true;
                trace.push(entry);
                return (GlobalBlockingQuery { query: UnionQuery::Top }, trace);
            }
        }

        // Unique-name simplification: drop conditions with a failed
        // ground (in)equality, strip (in)equalities that always hold.
        let before = disjuncts.len();
        disjuncts.retain(|cq| !always_false(cq));
        entry.dropped = before - disjuncts.len();
        for cq in &mut disjuncts {
            strip_true_constraints(cq);
        }

        // Erasure and refinement against what this transition removed
        // from its (partial) source state.
        let removed = crate::rewriting::compute_e_minus_sub(
            &step.action.ent_set,
            &step.binding,
            path.source_state(index),
        );
        let mut surviving = Vec::new();
        for mut cq in disjuncts {
            match erase_or_refine(&mut cq, &removed) {
                EraseOutcome::Erased => entry.erased += 1,
                EraseOutcome::Refined(n) => {
                    entry.refined += n;
                    surviving.push(cq);
                }
            }
        }
        disjuncts = surviving;

        // Accumulate this step's own instantiated blocking query.
        let grounded = step.action.blocking.substitute(&step.binding);
        for disjunct in grounded.disjuncts() {
            if !disjuncts.contains(disjunct) {
                disjuncts.push(disjunct.clone());
                entry.added += 1;
            }
        }
        trace.push(entry);
    }
    (GlobalBlockingQuery { query: UnionQuery::Union(disjuncts) }, trace)
}

fn grounded_add_effects(action: &RewrittenAction, binding: &Binding) -> ABox {
    let mut facts = ABox::new();
    for effect in &action.add_effects {
        let grounded = effect.substitute(binding);
        match grounded {
            QueryAtom::Concept { name, term: Term::Const(ind) } => {
                facts.insert(ABoxAssertion::Concept(name, ind));
            }
            QueryAtom::Role { name, first: Term::Const(a), second: Term::Const(b) } => {
                facts.insert(ABoxAssertion::Role(name, a, b));
            }
            other => unreachable!("effects ground completely, got {}", other),
        }
    }
    facts
}

fn constraint_value(atom: &QueryAtom) -> Option<bool> {
    match atom {
        QueryAtom::Eq(Term::Const(a), Term::Const(b)) => Some(a == b),
        QueryAtom::Neq(Term::Const(a), Term::Const(b)) => Some(a != b),
        QueryAtom::Eq(a, b) if a == b => Some(true),
        QueryAtom::Neq(a, b) if a == b => Some(false),
        QueryAtom::Eq(Term::Wildcard, _)
        | QueryAtom::Eq(_, Term::Wildcard)
        | QueryAtom::Neq(Term::Wildcard, _)
        | QueryAtom::Neq(_, Term::Wildcard) => Some(false),
        _ => None,
    }
}

fn always_false(cq: &ConjunctiveQuery) -> bool {
    cq.atoms.iter().any(|a| constraint_value(a) == Some(false))
}

fn strip_true_constraints(cq: &mut ConjunctiveQuery) {
    cq.atoms.retain(|a| constraint_value(a) != Some(true));
}

enum EraseOutcome {
    Erased,
    Refined(usize),
}

/// The kept atomic condition of a query, with the witness variable freed:
/// the removals either contain it outright (the condition is erased) or
/// pin down which witnesses they covered (inequalities are conjoined).
fn erase_or_refine(cq: &mut ConjunctiveQuery, removed: &ABox) -> EraseOutcome {
    let relational: Vec<&QueryAtom> = cq.atoms.iter().filter(|a| a.is_relational()).collect();
    assert!(
        relational.len() == 1,
        "accumulated conditions keep exactly one atomic assertion, found {}: {}",
        relational.len(),
        cq
    );
    let beta_temp = relational[0].clone();
    let vars: Vec<&Name> = beta_temp.variables().collect();
    assert!(vars.len() <= 1, "conditions have at most one witness variable: {}", cq);

    if vars.is_empty() {
        // Fully ground: erased exactly when the removals contain it.
        let as_fact = match &beta_temp {
            QueryAtom::Concept { name, term: Term::Const(ind) } => {
                ABoxAssertion::Concept(name.clone(), ind.clone())
            }
            QueryAtom::Role { name, first: Term::Const(a), second: Term::Const(b) } => {
                ABoxAssertion::Role(name.clone(), a.clone(), b.clone())
            }
            other => unreachable!("ground conditions are ground atoms, got {}", other),
        };
        if removed.contains(&as_fact) {
            return EraseOutcome::Erased;
        }
        return EraseOutcome::Refined(0);
    }

    // One witness variable: every removal matching the condition blocks
    // the witness it names.
    let witness = vars[0].clone();
    let mut refinements = 0;
    let mut new_atoms: Vec<QueryAtom> = Vec::new();
    for fact in removed {
        if let Some(ind) = match_witness(&beta_temp, &witness, fact) {
            let refinement = QueryAtom::Neq(Term::Var(witness.clone()), Term::Const(ind));
            if !cq.atoms.contains(&refinement) && !new_atoms.contains(&refinement) {
                new_atoms.push(refinement);
                refinements += 1;
            }
        }
    }
    cq.atoms.extend(new_atoms);
    EraseOutcome::Refined(refinements)
}

/// Matches a one-variable atom against a fact, returning the individual
/// the variable would take.
fn match_witness(atom: &QueryAtom, witness: &Name, fact: &ABoxAssertion) -> Option<Individual> {
    let check = |term: &Term, ind: &Individual| -> Option<Option<Individual>> {
        match term {
            Term::Const(c) => (c == ind).then_some(None),
            Term::Var(v) if v == witness => Some(Some(ind.clone())),
            _ => None,
        }
    };
    match (atom, fact) {
        (QueryAtom::Concept { name, term }, ABoxAssertion::Concept(fname, ind))
            if name == fname =>
        {
            check(term, ind).map(|captured| captured.expect("the witness is in the only slot"))
        }
        (QueryAtom::Role { name, first, second }, ABoxAssertion::Role(fname, a, b))
            if name == fname =>
        {
            let first_cap = check(first, a)?;
            let second_cap = check(second, b)?;
            match (first_cap, second_cap) {
                // A doubly-occurring witness must capture one individual.
                (Some(x), Some(y)) if x != y => None,
                (cap, other) => Some(cap.or(other).expect("the witness occupies some slot")),
            }
        }
        _ => None,
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CompletionVerdict {
    /// The global blocking query is false on the complete initial state:
    /// the same instantiations replay there without inconsistency.
    Certified,
    /// A disjunct held; the witness shows which condition fired.
    NotCertified { disjunct: String, witness: Binding },
    /// The accumulation degenerated to the always-true query: two steps
    /// of the path conflict with each other on their own effects.
    Tautology,
}

/// Evaluates the path's global blocking query over a complete initial
/// state containing the partial one.
pub fn check_completion(
    path: &PartialPath,
    full_initial: &ABox,
) -> Result<(GlobalBlockingQuery, CompletionVerdict), PathError> {
    if !path.initial.is_subset(full_initial) {
        return Err(PathError::NotSubset);
    }
    let gbq = global_blocking_query(path);
    let verdict = match &gbq.query {
        UnionQuery::Top => CompletionVerdict::Tautology,
        UnionQuery::Union(disjuncts) => {
            let mut verdict = CompletionVerdict::Certified;
            for disjunct in disjuncts {
                // Promote the witness variable so the verdict names it.
                let probe = ConjunctiveQuery {
                    atoms: disjunct.atoms.clone(),
                    free_vars: disjunct.exist_vars.iter().cloned().collect(),
                    exist_vars: BTreeSet::new(),
                };
                let answers = eval_cq(&probe, full_initial)
                    .expect("accumulated conditions stay safe");
                if let Some(witness) = answers.into_iter().next() {
                    verdict = CompletionVerdict::NotCertified {
                        disjunct: disjunct.to_string(),
                        witness,
                    };
                    break;
                }
            }
            verdict
        }
    };
    Ok((gbq, verdict))
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ReplayOutcome {
    /// All states, initial included, are consistent.
    Completed(Vec<ABox>),
    /// 1-based index of the first step producing an inconsistent state
    /// (0 means the initial state itself); states up to and including the
    /// offending one.
    InconsistentAt { step: usize, states: Vec<ABox> },
    /// The labels do not form transitions of the complete system.
    GuardFailedAt { step: usize, reason: String },
}

/// The brute-force oracle: executes the labels from the complete initial
/// state with full knowledge, auditing every state with the consistency
/// checker. No blocking queries are consulted.
pub fn replay(
    full_initial: &ABox,
    labels: &[(Name, Binding)],
    gamma: &[RewrittenAction],
    checker: &ConsistencyChecker,
) -> ReplayOutcome {
    let mut states = vec![full_initial.clone()];
    if !checker.is_consistent(full_initial) {
        return ReplayOutcome::InconsistentAt { step: 0, states };
    }
    for (idx, (action_name, binding)) in labels.iter().enumerate() {
        let step_no = idx + 1;
        let current = states.last().expect("nonempty").clone();
        let action = match resolve_variant(action_name, binding, &current, gamma, step_no) {
            Ok(action) => action,
            Err(PathError::UnknownAction { .. }) => {
                return ReplayOutcome::GuardFailedAt {
                    step: step_no,
                    reason: format!("unknown action `{}`", action_name),
                }
            }
            Err(err) => {
                return ReplayOutcome::GuardFailedAt { step: step_no, reason: err.to_string() }
            }
        };
        let fresh_clash = action.fresh_vars.iter().any(|v| {
            binding.get(v).is_some_and(|ind| adom(&current).contains(ind))
        });
        if fresh_clash {
            return ReplayOutcome::GuardFailedAt {
                step: step_no,
                reason: "a fresh variable is bound to an individual already in the state"
                    .to_string(),
            };
        }
        let next = match raw_successor(&current, action, binding) {
            Ok(next) => next,
            Err(err) => {
                return ReplayOutcome::GuardFailedAt { step: step_no, reason: err.to_string() }
            }
        };
        states.push(next.clone());
        if !checker.is_consistent(&next) {
            return ReplayOutcome::InconsistentAt { step: step_no, states };
        }
    }
    ReplayOutcome::Completed(states)
}
