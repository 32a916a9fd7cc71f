//! The labelled transition system of a document and its partial variant.
//!
//! States are canonical fact sets; transitions are rewritten-action
//! instantiations. A step first evaluates the action's blocking query on
//! the source state under the chosen binding: when it holds the step is
//! blocked, otherwise the successor is the source minus every assertion
//! matching a grounded entailment atom, plus the grounded positive
//! effects. Partial stepping additionally projects the successor through
//! a focus policy.
//!
//! Exploration is a breadth-first least fixpoint from the initial state,
//! bounded by depth, state count and the fresh-constant pool. All
//! tie-breaking is canonical (declaration order for actions, ordered
//! answer sets for bindings, FIFO frontier), so the result is identical
//! for any worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::actions::{instantiate_effects, Action, RewrittenAction, StepError};
use crate::consistency::ConsistencyChecker;
use crate::model::{adom, ABox, Individual, KnowledgeBase, Name};
use crate::query::{eval_cq, holds, Binding, QueryError};

/// Which part of a full successor a partial state keeps.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum FocusPolicy {
    /// Keep everything: partial stepping coincides with complete stepping.
    KeepAll,
    /// Keep assertions over the given concept/role names.
    Signature(BTreeSet<Name>),
    /// Keep assertions mentioning only the given individuals.
    Individuals(BTreeSet<Individual>),
    /// Intersection of the signature and individual filters.
    Both { signature: BTreeSet<Name>, individuals: BTreeSet<Individual> },
}

impl FocusPolicy {
    pub fn retain(&self, abox: &ABox) -> ABox {
        match self {
            FocusPolicy::KeepAll => abox.clone(),
            FocusPolicy::Signature(names) => abox
                .iter()
                .filter(|fact| names.contains(fact.predicate()))
                .cloned()
                .collect(),
            FocusPolicy::Individuals(inds) => abox
                .iter()
                .filter(|fact| fact.individuals().all(|i| inds.contains(i)))
                .cloned()
                .collect(),
            FocusPolicy::Both { signature, individuals } => abox
                .iter()
                .filter(|fact| {
                    signature.contains(fact.predicate())
                        && fact.individuals().all(|i| individuals.contains(i))
                })
                .cloned()
                .collect(),
        }
    }
}

/// Finiteness bounds for exploration.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Bounds {
    pub max_depth: usize,
    pub max_states: usize,
    pub fresh_pool: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { max_depth: 8, max_states: 10_000, fresh_pool: 8 }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ExploreMode {
    Complete,
    Partial { focus: FocusPolicy, initial: ABox },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ExploreOptions {
    pub bounds: Bounds,
    pub mode: ExploreMode,
    /// Re-check every successor with the consistency oracle; a mismatch
    /// with the blocking query is an internal invariant violation.
    pub audit: bool,
    /// Canonicalize pool-generated names in successor states so that
    /// branches differing only in the chosen fresh name coincide.
    pub quotient_iso: bool,
    /// Record blocked instantiations alongside the edges.
    pub record_blocked: bool,
    pub threads: usize,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            bounds: Bounds::default(),
            mode: ExploreMode::Complete,
            audit: false,
            quotient_iso: false,
            record_blocked: false,
            threads: 1,
        }
    }
}

/// A state: its canonical fact set and the BFS depth of first discovery.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct State {
    pub id: usize,
    pub depth: usize,
    pub abox: ABox,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Edge {
    pub source: usize,
    pub action: Name,
    pub binding: Binding,
    pub target: usize,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlockedEdge {
    pub source: usize,
    pub action: Name,
    pub binding: Binding,
    /// The blocking-query disjunct that fired.
    pub reason: String,
    /// In audit mode: whether the suppressed successor would actually
    /// have been consistent (an over-approximation of the blocking
    /// query), for diagnostics only.
    pub false_block: Option<bool>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TransitionSystem {
    pub states: Vec<State>,
    pub initial: usize,
    pub edges: Vec<Edge>,
    pub blocked: Vec<BlockedEdge>,
    pub truncated: bool,
    pub truncation_reason: Option<String>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ExploreError {
    #[error("the initial state is inconsistent")]
    InconsistentInitial,
    #[error("the partial initial state is not a subset of the document's ABox")]
    PartialInitNotSubset,
    #[error("guard of {action} is not evaluable: {source}")]
    Guard { action: Name, source: QueryError },
    #[error("stepping {action} failed: {source}")]
    Step { action: Name, source: StepError },
    #[error(
        "audit failure: {action} {binding} was not blocked but leads to an inconsistent state"
    )]
    AuditFailure { action: Name, binding: Binding },
}

/// Guard answers extended over the fresh variables: one binding per guard
/// answer, each fresh variable taking the first pool name absent from the
/// state. Returns the bindings and whether the pool ever ran dry.
pub fn applicable(
    abox: &ABox,
    action: &RewrittenAction,
    fresh_pool: usize,
) -> Result<(Vec<Binding>, bool), QueryError> {
    let answers = eval_cq(&action.guard, abox)?;
    let dom = adom(abox);
    let mut bindings = Vec::new();
    let mut exhausted = false;
    for answer in answers {
        match extend_fresh(&answer, &action.fresh_vars, &dom, fresh_pool) {
            Some(binding) => bindings.push(binding),
            None => exhausted = true,
        }
    }
    Ok((bindings, exhausted))
}

/// Deterministic fresh-name choice: the first `n<k>` from the pool that
/// does not occur in the state nor among names already chosen for this
/// binding. Distinct fresh names would only produce renamed twins.
fn extend_fresh(
    answer: &Binding,
    fresh_vars: &[Name],
    dom: &BTreeSet<Individual>,
    pool: usize,
) -> Option<Binding> {
    let mut binding = answer.clone();
    let mut chosen: BTreeSet<Individual> = BTreeSet::new();
    for var in fresh_vars {
        let mut picked = None;
        for k in 1..=pool {
            let candidate = Individual::from(format!("n{}", k).as_str());
            if !dom.contains(&candidate) && !chosen.contains(&candidate) {
                picked = Some(candidate);
                break;
            }
        }
        let ind = picked?;
        chosen.insert(ind.clone());
        binding.bind(var.clone(), ind);
    }
    Some(binding)
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum StepOutcome {
    /// The blocking query held; the step is not taken. Carries the
    /// disjunct that fired.
    Blocked(String),
    /// The successor fact set.
    Next(ABox),
    /// Audit mode only: the blocking query passed yet the successor is
    /// inconsistent. Seeing this means the blocking-query construction is
    /// wrong.
    Inconsistent(ABox),
}

/// One complete-system step.
pub fn step(
    abox: &ABox,
    action: &RewrittenAction,
    binding: &Binding,
    audit: Option<&ConsistencyChecker>,
) -> Result<StepOutcome, StepError> {
    // The blocking query is only meaningful under a total binding; an
    // unbound variable would evaluate as a query variable instead.
    crate::actions::check_binding(action, binding, abox)?;
    let grounded = action.blocking.substitute(binding);
    for disjunct in grounded.disjuncts() {
        if holds(&crate::query::UnionQuery::Union(vec![disjunct.clone()]), abox)
            .expect("grounded blocking disjuncts are safe")
        {
            return Ok(StepOutcome::Blocked(disjunct.to_string()));
        }
    }
    if grounded.is_top() {
        return Ok(StepOutcome::Blocked("true".to_string()));
    }
    let (removed, added) = instantiate_effects(action, binding, abox)?;
    let mut next: ABox = abox.difference(&removed).cloned().collect();
    next.extend(added);
    if let Some(checker) = audit {
        if !checker.is_consistent(&next) {
            return Ok(StepOutcome::Inconsistent(next));
        }
    }
    Ok(StepOutcome::Next(next))
}

/// One partial-system step: the blocking query is still evaluated on the
/// (partial) source; the successor is projected through the focus.
pub fn partial_step(
    abox: &ABox,
    action: &RewrittenAction,
    binding: &Binding,
    focus: &FocusPolicy,
    audit: Option<&ConsistencyChecker>,
) -> Result<StepOutcome, StepError> {
    match step(abox, action, binding, audit)? {
        StepOutcome::Next(next) => Ok(StepOutcome::Next(focus.retain(&next))),
        other => Ok(other),
    }
}

struct Expansion {
    transitions: Vec<(usize, Binding, ABox)>,
    blocked: Vec<(usize, Binding, String, Option<bool>)>,
    pool_exhausted: bool,
}

fn expand_state(
    abox: &ABox,
    gamma: &[RewrittenAction],
    options: &ExploreOptions,
    checker: &ConsistencyChecker,
    generated: &BTreeSet<Individual>,
) -> Result<Expansion, ExploreError> {
    let mut expansion =
        Expansion { transitions: Vec::new(), blocked: Vec::new(), pool_exhausted: false };
    let audit = options.audit.then_some(checker);
    for (idx, action) in gamma.iter().enumerate() {
        let (bindings, exhausted) = applicable(abox, action, options.bounds.fresh_pool)
            .map_err(|source| ExploreError::Guard { action: action.base.clone(), source })?;
        expansion.pool_exhausted |= exhausted;
        for binding in bindings {
            let outcome = match &options.mode {
                ExploreMode::Complete => step(abox, action, &binding, audit),
                ExploreMode::Partial { focus, .. } => {
                    partial_step(abox, action, &binding, focus, audit)
                }
            }
            .map_err(|source| ExploreError::Step { action: action.base.clone(), source })?;
            match outcome {
                StepOutcome::Next(mut next) => {
                    if options.quotient_iso {
                        next = canonicalize_generated(&next, generated);
                    }
                    expansion.transitions.push((idx, binding, next));
                }
                StepOutcome::Blocked(reason) => {
                    if options.record_blocked {
                        let false_block = if options.audit {
                            let (removed, added) = instantiate_effects(action, &binding, abox)
                                .map_err(|source| ExploreError::Step {
                                    action: action.base.clone(),
                                    source,
                                })?;
                            let mut next: ABox = abox.difference(&removed).cloned().collect();
                            next.extend(added);
                            Some(checker.is_consistent(&next))
                        } else {
                            None
                        };
                        expansion.blocked.push((idx, binding, reason, false_block));
                    }
                }
                StepOutcome::Inconsistent(_) => {
                    return Err(ExploreError::AuditFailure {
                        action: action.base.clone(),
                        binding,
                    });
                }
            }
        }
    }
    Ok(expansion)
}

/// Renames pool-generated individuals by first occurrence in the sorted
/// fact set, collapsing states that differ only in fresh-name choice.
fn canonicalize_generated(abox: &ABox, generated: &BTreeSet<Individual>) -> ABox {
    let mut mapping: BTreeMap<Individual, Individual> = BTreeMap::new();
    for fact in abox {
        for ind in fact.individuals() {
            if generated.contains(ind) && !mapping.contains_key(ind) {
                let canonical = Individual::from(format!("n{}", mapping.len() + 1).as_str());
                mapping.insert(ind.clone(), canonical);
            }
        }
    }
    abox.iter()
        .map(|fact| {
            let map = |i: &Individual| mapping.get(i).cloned().unwrap_or_else(|| i.clone());
            match fact {
                crate::model::ABoxAssertion::Concept(n, i) => {
                    crate::model::ABoxAssertion::Concept(n.clone(), map(i))
                }
                crate::model::ABoxAssertion::Role(n, a, b) => {
                    crate::model::ABoxAssertion::Role(n.clone(), map(a), map(b))
                }
            }
        })
        .collect()
}

/// Breadth-first least-fixpoint construction of the (partial) transition
/// system under the given bounds.
pub fn explore(
    kb: &KnowledgeBase,
    actions: &[Action],
    options: &ExploreOptions,
) -> Result<TransitionSystem, ExploreError> {
    let gamma = crate::actions::rewrite_actions(actions, &kb.tbox);
    explore_rewritten(kb, &gamma, options)
}

pub fn explore_rewritten(
    kb: &KnowledgeBase,
    gamma: &[RewrittenAction],
    options: &ExploreOptions,
) -> Result<TransitionSystem, ExploreError> {
    let checker = ConsistencyChecker::new(&kb.tbox);
    let initial_abox = match &options.mode {
        ExploreMode::Complete => kb.abox.clone(),
        ExploreMode::Partial { initial, .. } => {
            if !initial.is_subset(&kb.abox) {
                return Err(ExploreError::PartialInitNotSubset);
            }
            initial.clone()
        }
    };
    if !checker.is_consistent(&initial_abox) {
        return Err(ExploreError::InconsistentInitial);
    }
    // Names the generator may have created: pool names that were not part
    // of the document's own domain.
    let document_dom = adom(&kb.abox);
    let generated: BTreeSet<Individual> = (1..=options.bounds.fresh_pool)
        .map(|k| Individual::from(format!("n{}", k).as_str()))
        .filter(|i| !document_dom.contains(i))
        .collect();

    let max_states = options.bounds.max_states.max(1);
    let mut ts = TransitionSystem {
        states: vec![State { id: 0, depth: 0, abox: initial_abox.clone() }],
        initial: 0,
        edges: Vec::new(),
        blocked: Vec::new(),
        truncated: false,
        truncation_reason: None,
    };
    let mut index: BTreeMap<ABox, usize> = BTreeMap::new();
    index.insert(initial_abox, 0);

    let mut frontier: Vec<usize> = vec![0];
    let mut depth = 0;
    'outer: while !frontier.is_empty() && depth < options.bounds.max_depth {
        let expansions = expand_frontier(&ts, &frontier, gamma, options, &checker, &generated)?;
        let mut next_frontier: Vec<usize> = Vec::new();
        for (&source, expansion) in frontier.iter().zip(expansions) {
            if expansion.pool_exhausted {
                ts.truncated = true;
                ts.truncation_reason
                    .get_or_insert_with(|| "fresh-pool exhausted".to_string());
            }
            for (action_idx, binding, reason, false_block) in expansion.blocked {
                ts.blocked.push(BlockedEdge {
                    source,
                    action: Name::from(gamma[action_idx].to_string()),
                    binding,
                    reason,
                    false_block,
                });
            }
            for (action_idx, binding, target_abox) in expansion.transitions {
                let target = match index.get(&target_abox) {
                    Some(&id) => id,
                    None => {
                        if ts.states.len() >= max_states {
                            ts.truncated = true;
                            ts.truncation_reason
                                .get_or_insert_with(|| "state bound reached".to_string());
                            break 'outer;
                        }
                        let id = ts.states.len();
                        ts.states.push(State { id, depth: depth + 1, abox: target_abox.clone() });
                        index.insert(target_abox, id);
                        next_frontier.push(id);
                        id
                    }
                };
                ts.edges.push(Edge {
                    source,
                    action: Name::from(gamma[action_idx].to_string()),
                    binding,
                    target,
                });
            }
        }
        frontier = next_frontier;
        depth += 1;
    }
    if !frontier.is_empty() && depth >= options.bounds.max_depth {
        ts.truncated = true;
        ts.truncation_reason.get_or_insert_with(|| "depth bound reached".to_string());
    }
    Ok(ts)
}

/// Expands a whole BFS level. With more than one worker the frontier is
/// chunked; results are merged in frontier order, so the outcome does not
/// depend on scheduling.
fn expand_frontier(
    ts: &TransitionSystem,
    frontier: &[usize],
    gamma: &[RewrittenAction],
    options: &ExploreOptions,
    checker: &ConsistencyChecker,
    generated: &BTreeSet<Individual>,
) -> Result<Vec<Expansion>, ExploreError> {
    let workers = options.threads.max(1).min(frontier.len().max(1));
    if workers <= 1 {
        return frontier
            .iter()
            .map(|&id| expand_state(&ts.states[id].abox, gamma, options, checker, generated))
            .collect();
    }
    let chunk_size = frontier.len().div_ceil(workers);
    let chunks: Vec<&[usize]> = frontier.chunks(chunk_size).collect();
    let mut merged: Vec<Vec<Result<Expansion, ExploreError>>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in &chunks {
            let handle = scope.spawn(move || {
                chunk
                    .iter()
                    .map(|&id| {
                        expand_state(&ts.states[id].abox, gamma, options, checker, generated)
                    })
                    .collect::<Vec<_>>()
            });
            handles.push(handle);
        }
        for handle in handles {
            merged.push(handle.join().expect("expansion workers do not panic"));
        }
    });
    merged.into_iter().flatten().collect()
}

impl TransitionSystem {
    /// Line-oriented text form: one `state` line per state in id order,
    /// one `edge` line per transition, and the truncation flag.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for state in &self.states {
            let facts: Vec<String> = state.abox.iter().map(|f| f.to_string()).collect();
            let _ = writeln!(out, "state {}: {}", state.id, facts.join(", "));
        }
        for edge in &self.edges {
            let _ = writeln!(
                out,
                "edge {} -> {}: {} {}",
                edge.source, edge.target, edge.action, edge.binding
            );
        }
        match &self.truncation_reason {
            Some(reason) => {
                let _ = writeln!(out, "truncated: true {}", reason);
            }
            None => {
                let _ = writeln!(out, "truncated: false");
            }
        }
        out
    }

    /// DOT rendering; blocked instantiations (when recorded) appear as
    /// dashed self-loops on their source state.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        out.push_str("digraph dkb {\n");
        out.push_str("  rankdir=LR;\n");
        out.push_str("  node [shape=box];\n");
        for state in &self.states {
            let facts: Vec<String> = state.abox.iter().map(|f| f.to_string()).collect();
            let label = escape_dot(&format!("{}: {{{}}}", state.id, facts.join(", ")));
            let _ = writeln!(out, "  s{} [label=\"{}\"];", state.id, label);
        }
        for edge in &self.edges {
            let label = escape_dot(&format!("{}{}", edge.action, edge.binding));
            let _ = writeln!(out, "  s{} -> s{} [label=\"{}\"];", edge.source, edge.target, label);
        }
        for blocked in &self.blocked {
            let label = escape_dot(&format!(
                "BLOCKED: {}{}: {}",
                blocked.action, blocked.binding, blocked.reason
            ));
            let _ = writeln!(
                out,
                "  s{} -> s{} [style=dashed, label=\"{}\"];",
                blocked.source, blocked.source, label
            );
        }
        out.push_str("}\n");
        out
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Replays one labelled step directly, without blocking checks: the raw
/// successor `A \ E-_sub ∪ E+`. Used by oracles and diagnostics.
pub fn raw_successor(
    abox: &ABox,
    action: &RewrittenAction,
    binding: &Binding,
) -> Result<ABox, StepError> {
    let (removed, added) = instantiate_effects(action, binding, abox)?;
    let mut next: ABox = abox.difference(&removed).cloned().collect();
    next.extend(added);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_dkb;

    const EXAMPLE1: &str = "\
[tbox]
Technician <= Employee
Employee <= not Product
[abox]
Technician(t1)
Product(p1)
[action] create
guard: Employee(x)
new: y
add: Product(y)
[action] fire
guard: Employee(x)
del: Employee(x)
";

    const EXAMPLE3: &str = "\
[tbox]
Stored <= not Shipped
[abox]
Product(p1)
Stored(p1)
Product(p2)
[action] pack
guard: Product(x)
add: Packed(x)
[action] ship
guard: Packed(x)
add: Shipped(x)
";

    fn abox(facts: &[crate::model::ABoxAssertion]) -> ABox {
        facts.iter().cloned().collect()
    }

    fn fact(text: &str) -> crate::model::ABoxAssertion {
        let (pred, rest) = text.split_once('(').unwrap();
        let args: Vec<&str> = rest.trim_end_matches(')').split(',').map(|s| s.trim()).collect();
        match args.len() {
            1 => crate::model::ABoxAssertion::concept(pred, args[0]),
            2 => crate::model::ABoxAssertion::role(pred, args[0], args[1]),
            _ => panic!("bad fact literal"),
        }
    }

    #[test]
    fn applicable_bindings_for_example1() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let gamma = crate::actions::rewrite_actions(&doc.actions, &doc.kb.tbox);
        // gamma: create^rew1 (Employee), create^rew2 (Technician),
        //        fire^rew1 (Employee), fire^rew2 (Technician).
        assert_eq!(gamma.len(), 4);
        let a0 = &doc.kb.abox;

        let (fire2, _) = applicable(a0, &gamma[3], 8).unwrap();
        assert_eq!(fire2, vec![Binding::singleton("x", "t1")]);

        let (fire1, _) = applicable(a0, &gamma[2], 8).unwrap();
        assert!(fire1.is_empty(), "no Employee facts are stored");

        let (create2, _) = applicable(a0, &gamma[1], 8).unwrap();
        let mut expected = Binding::singleton("x", "t1");
        expected.bind(Name::from("y"), Individual::from("n1"));
        assert_eq!(create2, vec![expected]);

        // Nonempty guard over the empty state has no answers.
        let (none, _) = applicable(&ABox::new(), &gamma[1], 8).unwrap();
        assert!(none.is_empty());

        // An empty pool leaves create without a valid extension.
        let (none, exhausted) = applicable(a0, &gamma[1], 0).unwrap();
        assert!(none.is_empty());
        assert!(exhausted);
    }

    #[test]
    fn step_reproduces_example1_transitions() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let gamma = crate::actions::rewrite_actions(&doc.actions, &doc.kb.tbox);
        let a0 = &doc.kb.abox;

        let mut theta = Binding::singleton("x", "t1");
        theta.bind(Name::from("y"), Individual::from("p2"));
        let StepOutcome::Next(a1) = step(a0, &gamma[1], &theta, None).unwrap() else {
            panic!("create must not be blocked on the initial state");
        };
        assert_eq!(
            a1,
            abox(&[fact("Technician(t1)"), fact("Product(p1)"), fact("Product(p2)")])
        );

        let theta = Binding::singleton("x", "t1");
        let StepOutcome::Next(a2) = step(a0, &gamma[3], &theta, None).unwrap() else {
            panic!("fire must not be blocked");
        };
        assert_eq!(a2, abox(&[fact("Product(p1)")]));
    }

    #[test]
    fn ship_is_blocked_when_stored_holds() {
        let doc = parse_dkb(EXAMPLE3).unwrap();
        let gamma = crate::actions::rewrite_actions(&doc.actions, &doc.kb.tbox);
        let ship = &gamma[1];
        // After packing p1 in the complete system, Stored(p1) still holds.
        let state = abox(&[
            fact("Product(p1)"),
            fact("Stored(p1)"),
            fact("Product(p2)"),
            fact("Packed(p1)"),
        ]);
        let outcome = step(&state, ship, &Binding::singleton("x", "p1"), None).unwrap();
        assert_eq!(outcome, StepOutcome::Blocked("Stored(p1)".to_string()));
    }

    #[test]
    fn partial_steps_follow_the_focus() {
        let doc = parse_dkb(EXAMPLE3).unwrap();
        let gamma = crate::actions::rewrite_actions(&doc.actions, &doc.kb.tbox);
        let pack = &gamma[0];
        let ship = &gamma[1];

        let packed_only =
            FocusPolicy::Signature([Name::from("Packed")].into_iter().collect());
        let ap0 = abox(&[fact("Product(p1)")]);
        let StepOutcome::Next(ap1) =
            partial_step(&ap0, pack, &Binding::singleton("x", "p1"), &packed_only, None).unwrap()
        else {
            panic!("pack applies");
        };
        assert_eq!(ap1, abox(&[fact("Packed(p1)")]));

        let shipped_only =
            FocusPolicy::Signature([Name::from("Shipped")].into_iter().collect());
        let StepOutcome::Next(ap2) =
            partial_step(&ap1, ship, &Binding::singleton("x", "p1"), &shipped_only, None).unwrap()
        else {
            panic!("ship applies on the partial state");
        };
        assert_eq!(ap2, abox(&[fact("Shipped(p1)")]));

        // KeepAll coincides with the complete step.
        let StepOutcome::Next(full) =
            step(&ap0, pack, &Binding::singleton("x", "p1"), None).unwrap()
        else {
            panic!()
        };
        let StepOutcome::Next(kept) =
            partial_step(&ap0, pack, &Binding::singleton("x", "p1"), &FocusPolicy::KeepAll, None)
                .unwrap()
        else {
            panic!()
        };
        assert_eq!(full, kept);
    }

    #[test]
    fn individuals_focus_keeps_induced_substructure() {
        let state = abox(&[fact("A(a)"), fact("P(a, b)"), fact("P(a, c)"), fact("B(b)")]);
        let focus = FocusPolicy::Individuals(
            [Individual::from("a"), Individual::from("b")].into_iter().collect(),
        );
        assert_eq!(focus.retain(&state), abox(&[fact("A(a)"), fact("P(a, b)"), fact("B(b)")]));
    }

    #[test]
    fn explore_example1_with_small_pool_matches_hand_enumeration() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let options = ExploreOptions {
            bounds: Bounds { max_depth: 2, max_states: 100, fresh_pool: 1 },
            ..Default::default()
        };
        let ts = explore(&doc.kb, &doc.actions, &options).unwrap();

        // Hand enumeration: S0 = {Technician(t1), Product(p1)};
        // create^rew2 -> S1 = S0 + Product(n1); fire^rew2 -> S2 = {Product(p1)};
        // from S1 the pool is spent, fire^rew2 -> S3 = {Product(p1), Product(n1)};
        // S2 has no applicable action.
        assert_eq!(ts.states.len(), 4);
        assert_eq!(ts.edges.len(), 3);
        assert_eq!(ts.states[1].abox, abox(&[
            fact("Product(n1)"),
            fact("Product(p1)"),
            fact("Technician(t1)"),
        ]));
        assert_eq!(ts.states[2].abox, abox(&[fact("Product(p1)")]));
        assert_eq!(ts.states[3].abox, abox(&[fact("Product(n1)"), fact("Product(p1)")]));
        let rendered: Vec<String> = ts
            .edges
            .iter()
            .map(|e| format!("{}->{} {} {}", e.source, e.target, e.action, e.binding))
            .collect();
        assert_eq!(
            rendered,
            vec![
                "0->1 create^rew2 {x=t1, y=n1}",
                "0->2 fire^rew2 {x=t1}",
                "1->3 fire^rew2 {x=t1}",
            ]
        );
        // The spent pool marks the system truncated.
        assert!(ts.truncated);
    }

    #[test]
    fn empty_fresh_pool_leaves_only_fire_edges() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let options = ExploreOptions {
            bounds: Bounds { max_depth: 3, max_states: 100, fresh_pool: 0 },
            ..Default::default()
        };
        let ts = explore(&doc.kb, &doc.actions, &options).unwrap();
        assert!(!ts.edges.is_empty());
        assert!(ts.edges.iter().all(|e| e.action.as_str().starts_with("fire")));
        assert!(ts.truncated, "the dry pool marks the run truncated");
    }

    #[test]
    fn incomplete_bindings_are_rejected() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let gamma = crate::actions::rewrite_actions(&doc.actions, &doc.kb.tbox);
        // create^rew2 needs x and y; x alone must be refused.
        let err = step(&doc.kb.abox, &gamma[1], &Binding::singleton("x", "t1"), None)
            .unwrap_err();
        assert!(matches!(err, crate::actions::StepError::MissingVariable(_)));
        // Unknown extras are refused as well.
        let mut overfull = Binding::singleton("x", "t1");
        overfull.bind(Name::from("y"), Individual::from("p9"));
        overfull.bind(Name::from("zz"), Individual::from("p8"));
        let err = step(&doc.kb.abox, &gamma[1], &overfull, None).unwrap_err();
        assert!(matches!(err, crate::actions::StepError::UnknownVariable(_)));
    }

    #[test]
    fn exploration_is_deterministic_across_worker_counts() {
        for source in [EXAMPLE1, EXAMPLE3] {
            let doc = parse_dkb(source).unwrap();
            let serial = explore(
                &doc.kb,
                &doc.actions,
                &ExploreOptions {
                    bounds: Bounds { max_depth: 4, max_states: 500, fresh_pool: 2 },
                    threads: 1,
                    ..Default::default()
                },
            )
            .unwrap();
            let parallel = explore(
                &doc.kb,
                &doc.actions,
                &ExploreOptions {
                    bounds: Bounds { max_depth: 4, max_states: 500, fresh_pool: 2 },
                    threads: 4,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(serial.serialize(), parallel.serialize());
        }
    }

    #[test]
    fn partial_exploration_reaches_shipped_p2() {
        let doc = parse_dkb(EXAMPLE3).unwrap();
        let options = ExploreOptions {
            bounds: Bounds { max_depth: 2, max_states: 100, fresh_pool: 0 },
            mode: ExploreMode::Partial {
                focus: FocusPolicy::Signature(
                    [Name::from("Packed"), Name::from("Shipped")].into_iter().collect(),
                ),
                initial: abox(&[fact("Product(p2)")]),
            },
            ..Default::default()
        };
        let ts = explore(&doc.kb, &doc.actions, &options).unwrap();
        // The pack;ship path on p2 exists and ends in a state whose
        // focused content includes Shipped(p2).
        let shipped = fact("Shipped(p2)");
        let pack_edge = ts
            .edges
            .iter()
            .find(|e| e.action.as_str() == "pack^rew1" && e.source == 0)
            .expect("pack fires from the initial partial state");
        let ship_edge = ts
            .edges
            .iter()
            .find(|e| e.action.as_str() == "ship^rew1" && e.source == pack_edge.target)
            .expect("ship fires from the packed partial state");
        assert!(ts.states[ship_edge.target].abox.contains(&shipped), "{}", ts.serialize());
        // Nothing outside the focus signature survives in any state
        // reached by a partial step.
        for state in &ts.states[1..] {
            for f in &state.abox {
                assert!(matches!(f.predicate().as_str(), "Packed" | "Shipped"));
            }
        }
    }

    #[test]
    fn partial_initial_must_be_subset() {
        let doc = parse_dkb(EXAMPLE3).unwrap();
        let options = ExploreOptions {
            mode: ExploreMode::Partial {
                focus: FocusPolicy::KeepAll,
                initial: abox(&[fact("Product(p9)")]),
            },
            ..Default::default()
        };
        assert_eq!(
            explore(&doc.kb, &doc.actions, &options).unwrap_err(),
            ExploreError::PartialInitNotSubset
        );
    }

    #[test]
    fn inconsistent_initial_state_is_refused() {
        let text = "\
[tbox]
A <= not B
[abox]
A(c)
B(c)
[action] noop
guard: A(x)
";
        let doc = parse_dkb(text).unwrap();
        assert_eq!(
            explore(&doc.kb, &doc.actions, &ExploreOptions::default()).unwrap_err(),
            ExploreError::InconsistentInitial
        );
    }

    #[test]
    fn audit_mode_checks_every_state() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let options = ExploreOptions {
            bounds: Bounds { max_depth: 3, max_states: 100, fresh_pool: 2 },
            audit: true,
            ..Default::default()
        };
        // Soundness of the blocking query makes audits pass silently.
        explore(&doc.kb, &doc.actions, &options).unwrap();
    }

    #[test]
    fn audit_catches_a_broken_blocking_query() {
        // Erase ship's blocking query: stepping onto Stored(p1) now goes
        // through, and the audit flags the inconsistent successor.
        let doc = parse_dkb(EXAMPLE3).unwrap();
        let mut gamma = crate::actions::rewrite_actions(&doc.actions, &doc.kb.tbox);
        gamma[1].blocking = crate::query::UnionQuery::bottom();
        let checker = crate::consistency::ConsistencyChecker::new(&doc.kb.tbox);
        let state = abox(&[fact("Stored(p1)"), fact("Packed(p1)")]);
        let outcome =
            step(&state, &gamma[1], &Binding::singleton("x", "p1"), Some(&checker)).unwrap();
        assert!(matches!(outcome, StepOutcome::Inconsistent(_)));

        let kb = crate::model::KnowledgeBase::new(doc.kb.tbox.clone(), state);
        let err = explore_rewritten(
            &kb,
            &gamma,
            &ExploreOptions { audit: true, ..Default::default() },
        )
        .unwrap_err();
        assert!(matches!(err, ExploreError::AuditFailure { .. }));
    }

    #[test]
    fn explain_mode_records_blocked_instantiations() {
        let doc = parse_dkb(EXAMPLE3).unwrap();
        let options = ExploreOptions {
            bounds: Bounds { max_depth: 3, max_states: 100, fresh_pool: 0 },
            record_blocked: true,
            ..Default::default()
        };
        let ts = explore(&doc.kb, &doc.actions, &options).unwrap();
        assert!(
            ts.blocked.iter().any(|b| b.reason == "Stored(p1)"),
            "shipping p1 is blocked in the complete system"
        );
        let dot = ts.to_dot();
        assert!(dot.contains("style=dashed"));
        assert!(dot.contains("BLOCKED"));
    }

    #[test]
    fn state_bound_truncates() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let options = ExploreOptions {
            bounds: Bounds { max_depth: 10, max_states: 2, fresh_pool: 4 },
            ..Default::default()
        };
        let ts = explore(&doc.kb, &doc.actions, &options).unwrap();
        assert!(ts.truncated);
        assert_eq!(ts.truncation_reason.as_deref(), Some("state bound reached"));
        assert!(ts.states.len() <= 2);
    }

    #[test]
    fn quotient_collapses_fresh_name_variants() {
        // With least-unused naming the quotient is mostly a no-op, but
        // renaming keeps states canonical even when inherited names make
        // the generator skip ahead.
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let with = ExploreOptions {
            bounds: Bounds { max_depth: 3, max_states: 200, fresh_pool: 3 },
            quotient_iso: true,
            ..Default::default()
        };
        let without = ExploreOptions { quotient_iso: false, ..with.clone() };
        let q = explore(&doc.kb, &doc.actions, &with).unwrap();
        let plain = explore(&doc.kb, &doc.actions, &without).unwrap();
        assert!(q.states.len() <= plain.states.len());
    }

    #[test]
    fn serialized_graph_has_expected_shape() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let options = ExploreOptions {
            bounds: Bounds { max_depth: 1, max_states: 100, fresh_pool: 1 },
            ..Default::default()
        };
        let ts = explore(&doc.kb, &doc.actions, &options).unwrap();
        let text = ts.serialize();
        assert!(text.starts_with("state 0: Product(p1), Technician(t1)\n"));
        assert!(text.contains("edge 0 -> 1: create^rew2 {x=t1, y=n1}"));
        assert!(text.trim_end().ends_with("truncated: true depth bound reached"));
    }
}
