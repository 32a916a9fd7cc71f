//! Dynamic knowledge bases: DL-Lite_A knowledge bases evolved by guarded
//! add/delete actions.
//!
//! The library centers on three pieces of machinery:
//!
//! - **Action rewriting** ([`actions`], [`rewriting`]): every action guard
//!   is compiled against the TBox into a union of TBox-free guards, and
//!   each action gets a *blocking query* — a union query that, when false
//!   on a state, guarantees the successor state is consistent without ever
//!   touching the TBox again.
//! - **Transition systems** ([`transition`]): breadth-first construction
//!   of the labelled transition system induced by a document's actions,
//!   complete or partial (states projected through a focus policy), under
//!   explicit finiteness bounds.
//! - **Path certification** ([`global_blocking`]): a finite path found over
//!   partial states yields a *global blocking query*; evaluating it over a
//!   full initial state certifies that the very same action instantiations
//!   can be replayed there without ever producing an inconsistent state.
//!
//! Consistency itself ([`consistency`]) is decided TBox-free as well, by
//! closing the TBox's negative inclusions and functionality assertions and
//! translating the closure into a boolean union query with inequalities.

pub mod actions;
pub mod consistency;
pub mod global_blocking;
pub mod model;
pub mod parser;
pub mod query;
pub mod rewriting;
pub mod transition;

pub use actions::{
    build_blocking_query, instantiate_effects, rewrite_action, rewrite_actions, Action,
    ActionError, RewrittenAction, StepError,
};
pub use consistency::{is_consistent, ni_closure, unsat_query, ConsistencyChecker, NiClosure};
pub use global_blocking::{
    build_partial_path, check_completion, global_blocking_query, replay, CompletionVerdict,
    GlobalBlockingQuery, PartialPath, PathError, PathStep, ReplayOutcome,
};
pub use model::{
    adom, validate_kb, validate_tbox, ABox, ABoxAssertion, BasicConcept, Diagnostic, Individual,
    KnowledgeBase, Name, RoleExpr, Severity, SourceSpan, TBoxAssertion,
};
pub use parser::{parse_abox, parse_dkb, parse_path, parse_query, serialize_dkb, DkbDocument};
pub use query::{
    eval_cq, eval_cq_with, eval_ucq, holds, match_with_wildcards, sorted_answers, Binding,
    ConjunctiveQuery, QueryAtom, QueryError, Term, UnionQuery,
};
pub use rewriting::{compute_e_minus_sub, ent_neg_effects, perfect_ref, EntSet};
pub use transition::{
    applicable, explore, explore_rewritten, partial_step, step, Bounds, ExploreError,
    ExploreMode, ExploreOptions, FocusPolicy, State, StepOutcome, TransitionSystem,
};
