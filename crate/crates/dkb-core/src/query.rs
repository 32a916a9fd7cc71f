//! Conjunctive and union queries with (in)equality constraints, evaluated
//! over an ABox read as its minimal model: a concept or role atom holds
//! exactly when the corresponding fact is present, and two individuals are
//! equal exactly when their names are (UNA).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::model::{ABox, ABoxAssertion, Individual, Name};

/// A query term: a named variable, an individual constant, or the
/// non-distinguished non-shared placeholder `_`.
///
/// The wildcard only appears in atoms produced by negative-effect
/// rewriting; user-facing queries are wildcard-free.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Var(Name),
    Const(Individual),
    Wildcard,
}

impl Term {
    pub fn var(name: impl Into<Name>) -> Self {
        Term::Var(name.into())
    }

    pub fn constant(ind: impl Into<Individual>) -> Self {
        Term::Const(ind.into())
    }

    pub fn as_var(&self) -> Option<&Name> {
        match self {
            Term::Var(name) => Some(name),
            _ => None,
        }
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, Term::Wildcard)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(name) => write!(f, "{}", name),
            Term::Const(ind) => write!(f, "{}", ind),
            Term::Wildcard => write!(f, "_"),
        }
    }
}

/// One conjunct of a conjunctive query.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum QueryAtom {
    Concept { name: Name, term: Term },
    Role { name: Name, first: Term, second: Term },
    Eq(Term, Term),
    Neq(Term, Term),
}

impl QueryAtom {
    pub fn concept(name: impl Into<Name>, term: Term) -> Self {
        QueryAtom::Concept { name: name.into(), term }
    }

    pub fn role(name: impl Into<Name>, first: Term, second: Term) -> Self {
        QueryAtom::Role { name: name.into(), first, second }
    }

    pub fn is_relational(&self) -> bool {
        matches!(self, QueryAtom::Concept { .. } | QueryAtom::Role { .. })
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        let (a, b) = match self {
            QueryAtom::Concept { term, .. } => (term, None),
            QueryAtom::Role { first, second, .. } => (first, Some(second)),
            QueryAtom::Eq(x, y) | QueryAtom::Neq(x, y) => (x, Some(y)),
        };
        std::iter::once(a).chain(b)
    }

    pub fn variables(&self) -> impl Iterator<Item = &Name> {
        self.terms().filter_map(Term::as_var)
    }

    pub fn has_wildcard(&self) -> bool {
        self.terms().any(Term::is_wildcard)
    }

    /// Applies a substitution to every term.
    pub fn substitute(&self, binding: &Binding) -> QueryAtom {
        let sub = |t: &Term| match t {
            Term::Var(name) => match binding.get(name) {
                Some(ind) => Term::Const(ind.clone()),
                None => t.clone(),
            },
            _ => t.clone(),
        };
        match self {
            QueryAtom::Concept { name, term } => {
                QueryAtom::Concept { name: name.clone(), term: sub(term) }
            }
            QueryAtom::Role { name, first, second } => {
                QueryAtom::Role { name: name.clone(), first: sub(first), second: sub(second) }
            }
            QueryAtom::Eq(a, b) => QueryAtom::Eq(sub(a), sub(b)),
            QueryAtom::Neq(a, b) => QueryAtom::Neq(sub(a), sub(b)),
        }
    }
}

impl fmt::Display for QueryAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryAtom::Concept { name, term } => write!(f, "{}({})", name, term),
            QueryAtom::Role { name, first, second } => {
                write!(f, "{}({}, {})", name, first, second)
            }
            QueryAtom::Eq(a, b) => write!(f, "{} == {}", a, b),
            QueryAtom::Neq(a, b) => write!(f, "{} != {}", a, b),
        }
    }
}

/// An assignment of individuals to variable names.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Default)]
pub struct Binding(pub BTreeMap<Name, Individual>);

impl Binding {
    pub fn new() -> Self {
        Binding(BTreeMap::new())
    }

    pub fn get(&self, name: &Name) -> Option<&Individual> {
        self.0.get(name)
    }

    pub fn bind(&mut self, name: Name, ind: Individual) {
        self.0.insert(name, ind);
    }

    pub fn singleton(name: impl Into<Name>, ind: impl Into<Individual>) -> Self {
        let mut b = Binding::new();
        b.bind(name.into(), ind.into());
        b
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Individual)> {
        self.0.iter()
    }

    /// Keeps only the entries for the given variables.
    pub fn restricted_to<'a>(&self, vars: impl IntoIterator<Item = &'a Name>) -> Binding {
        let mut out = Binding::new();
        for var in vars {
            if let Some(ind) = self.0.get(var) {
                out.bind(var.clone(), ind.clone());
            }
        }
        out
    }
}

impl FromIterator<(Name, Individual)> for Binding {
    fn from_iter<T: IntoIterator<Item = (Name, Individual)>>(iter: T) -> Self {
        Binding(iter.into_iter().collect())
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (name, ind)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}={}", name, ind)?;
        }
        write!(f, "}}")
    }
}

/// A conjunctive query: relational atoms plus (in)equality constraints,
/// with an ordered tuple of answer variables and a set of existentially
/// quantified ones.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct ConjunctiveQuery {
    pub atoms: Vec<QueryAtom>,
    pub free_vars: Vec<Name>,
    pub exist_vars: BTreeSet<Name>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("variable {0} is not declared free or existential")]
    UndeclaredVariable(Name),
    #[error("variable {0} is declared both free and existential")]
    OverlappingQuantifiers(Name),
    #[error("unsafe query: variable {0} occurs only in (in)equalities")]
    Unsafe(Name),
    #[error("query contains the reserved wildcard `_`")]
    WildcardInQuery,
}

impl ConjunctiveQuery {
    /// Builds a query, checking that the variable partition is consistent.
    pub fn new(
        atoms: Vec<QueryAtom>,
        free_vars: Vec<Name>,
        exist_vars: BTreeSet<Name>,
    ) -> Result<Self, QueryError> {
        for var in &free_vars {
            if exist_vars.contains(var) {
                return Err(QueryError::OverlappingQuantifiers(var.clone()));
            }
        }
        let declared: BTreeSet<&Name> = free_vars.iter().chain(exist_vars.iter()).collect();
        for atom in &atoms {
            for var in atom.variables() {
                if !declared.contains(var) {
                    return Err(QueryError::UndeclaredVariable(var.clone()));
                }
            }
        }
        Ok(ConjunctiveQuery { atoms, free_vars, exist_vars })
    }

    /// A query with no atoms and no variables; always true.
    pub fn tautology() -> Self {
        ConjunctiveQuery { atoms: Vec::new(), free_vars: Vec::new(), exist_vars: BTreeSet::new() }
    }

    pub fn is_boolean(&self) -> bool {
        self.free_vars.is_empty()
    }

    pub fn variables(&self) -> BTreeSet<&Name> {
        self.atoms.iter().flat_map(|a| a.variables()).collect()
    }

    pub fn has_wildcard(&self) -> bool {
        self.atoms.iter().any(QueryAtom::has_wildcard)
    }

    /// Every variable must occur in at least one relational atom; variables
    /// floating in (in)equalities alone, or declared free but never used,
    /// have no range.
    pub fn check_safe(&self) -> Result<(), QueryError> {
        let mut ranged: BTreeSet<&Name> = BTreeSet::new();
        for atom in &self.atoms {
            if atom.is_relational() {
                ranged.extend(atom.variables());
            }
        }
        for atom in &self.atoms {
            if !atom.is_relational() {
                for var in atom.variables() {
                    if !ranged.contains(var) {
                        return Err(QueryError::Unsafe(var.clone()));
                    }
                }
            }
        }
        for var in &self.free_vars {
            if !ranged.contains(var) {
                return Err(QueryError::Unsafe(var.clone()));
            }
        }
        Ok(())
    }

    /// Applies a substitution, dropping substituted variables from the
    /// quantifier lists.
    pub fn substitute(&self, binding: &Binding) -> ConjunctiveQuery {
        ConjunctiveQuery {
            atoms: self.atoms.iter().map(|a| a.substitute(binding)).collect(),
            free_vars: self
                .free_vars
                .iter()
                .filter(|v| binding.get(v).is_none())
                .cloned()
                .collect(),
            exist_vars: self
                .exist_vars
                .iter()
                .filter(|v| binding.get(v).is_none())
                .cloned()
                .collect(),
        }
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return write!(f, "true");
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " & ")?;
            }
            write!(f, "{}", atom)?;
        }
        Ok(())
    }
}

/// A union of conjunctive queries. The empty union is the always-false
/// query; `Top` is the distinguished always-true marker used by the global
/// blocking query construction.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum UnionQuery {
    Top,
    Union(Vec<ConjunctiveQuery>),
}

impl UnionQuery {
    pub fn bottom() -> Self {
        UnionQuery::Union(Vec::new())
    }

    pub fn is_top(&self) -> bool {
        matches!(self, UnionQuery::Top)
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, UnionQuery::Union(cqs) if cqs.is_empty())
    }

    pub fn disjuncts(&self) -> &[ConjunctiveQuery] {
        match self {
            UnionQuery::Top => &[],
            UnionQuery::Union(cqs) => cqs,
        }
    }

    pub fn substitute(&self, binding: &Binding) -> UnionQuery {
        match self {
            UnionQuery::Top => UnionQuery::Top,
            UnionQuery::Union(cqs) => {
                UnionQuery::Union(cqs.iter().map(|cq| cq.substitute(binding)).collect())
            }
        }
    }
}

impl fmt::Display for UnionQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnionQuery::Top => write!(f, "true"),
            UnionQuery::Union(cqs) if cqs.is_empty() => write!(f, "false"),
            UnionQuery::Union(cqs) => {
                for (i, cq) in cqs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " | ")?;
                    }
                    write!(f, "{}", cq)?;
                }
                Ok(())
            }
        }
    }
}

/// Certain answers of a wildcard-free conjunctive query over an ABox.
///
/// Returns every assignment of the free variables that extends to a
/// homomorphism of the relational atoms into the fact set and satisfies
/// all (in)equalities. Equality holds exactly on syntactically equal
/// individuals.
pub fn eval_cq(query: &ConjunctiveQuery, abox: &ABox) -> Result<BTreeSet<Binding>, QueryError> {
    if query.has_wildcard() {
        return Err(QueryError::WildcardInQuery);
    }
    query.check_safe()?;
    Ok(eval_cq_unchecked(query, abox))
}

/// As [`eval_cq`] but starting from a partial assignment; equivalent to
/// substituting the binding first.
pub fn eval_cq_with(
    query: &ConjunctiveQuery,
    initial: &Binding,
    abox: &ABox,
) -> Result<BTreeSet<Binding>, QueryError> {
    eval_cq(&query.substitute(initial), abox)
}

fn eval_cq_unchecked(query: &ConjunctiveQuery, abox: &ABox) -> BTreeSet<Binding> {
    let relational: Vec<&QueryAtom> =
        query.atoms.iter().filter(|a| a.is_relational()).collect();
    let constraints: Vec<&QueryAtom> =
        query.atoms.iter().filter(|a| !a.is_relational()).collect();
    let mut answers = BTreeSet::new();
    let mut env = Binding::new();
    search(&relational, &constraints, 0, &mut env, abox, &mut |env| {
        answers.insert(env.restricted_to(&query.free_vars));
    });
    answers
}

fn search(
    relational: &[&QueryAtom],
    constraints: &[&QueryAtom],
    index: usize,
    env: &mut Binding,
    abox: &ABox,
    found: &mut impl FnMut(&Binding),
) {
    // (In)equalities are checked as soon as both sides are resolvable.
    if !constraints
        .iter()
        .all(|c| check_constraint(c, env) != Some(false))
    {
        return;
    }
    if index == relational.len() {
        if constraints.iter().all(|c| check_constraint(c, env) == Some(true)) {
            found(env);
        }
        return;
    }
    let atom = relational[index];
    match atom {
        QueryAtom::Concept { name, term } => {
            for fact in abox {
                if let ABoxAssertion::Concept(fact_name, ind) = fact {
                    if fact_name == name {
                        try_extend(&[(term, ind)], env, |env| {
                            search(relational, constraints, index + 1, env, abox, found)
                        });
                    }
                }
            }
        }
        QueryAtom::Role { name, first, second } => {
            for fact in abox {
                if let ABoxAssertion::Role(fact_name, a, b) = fact {
                    if fact_name == name {
                        try_extend(&[(first, a), (second, b)], env, |env| {
                            search(relational, constraints, index + 1, env, abox, found)
                        });
                    }
                }
            }
        }
        _ => unreachable!("relational atoms only"),
    }
}

/// Extends the environment with the given term/individual matches, runs
/// the continuation, then rolls the extension back.
fn try_extend(
    pairs: &[(&Term, &Individual)],
    env: &mut Binding,
    cont: impl FnOnce(&mut Binding),
) {
    let mut added: Vec<Name> = Vec::new();
    for (term, ind) in pairs {
        match term {
            Term::Const(c) => {
                if c != *ind {
                    for name in added {
                        env.0.remove(&name);
                    }
                    return;
                }
            }
            Term::Var(name) => match env.get(name) {
                Some(bound) if bound == *ind => {}
                Some(_) => {
                    for name in added {
                        env.0.remove(&name);
                    }
                    return;
                }
                None => {
                    env.bind(name.clone(), (*ind).clone());
                    added.push(name.clone());
                }
            },
            Term::Wildcard => unreachable!("wildcards are rejected before evaluation"),
        }
    }
    cont(env);
    for name in added {
        env.0.remove(&name);
    }
}

/// Three-valued constraint check: `None` while a side is still unbound.
/// An (in)equality mentioning the wildcard never holds.
fn check_constraint(constraint: &QueryAtom, env: &Binding) -> Option<bool> {
    let resolve = |t: &Term| -> Option<Option<Individual>> {
        match t {
            Term::Const(c) => Some(Some(c.clone())),
            Term::Var(name) => env.get(name).map(|i| Some(i.clone())),
            Term::Wildcard => Some(None),
        }
    };
    match constraint {
        QueryAtom::Eq(a, b) => match (resolve(a), resolve(b)) {
            (Some(Some(x)), Some(Some(y))) => Some(x == y),
            (Some(None), _) | (_, Some(None)) => Some(false),
            _ => None,
        },
        QueryAtom::Neq(a, b) => match (resolve(a), resolve(b)) {
            (Some(Some(x)), Some(Some(y))) => Some(x != y),
            (Some(None), _) | (_, Some(None)) => Some(false),
            _ => None,
        },
        _ => unreachable!("constraints only"),
    }
}

/// Certain answers of a union query: the union of the disjunct answers.
/// `Top` yields the single empty binding (boolean truth).
pub fn eval_ucq(query: &UnionQuery, abox: &ABox) -> Result<BTreeSet<Binding>, QueryError> {
    match query {
        UnionQuery::Top => {
            let mut set = BTreeSet::new();
            set.insert(Binding::new());
            Ok(set)
        }
        UnionQuery::Union(cqs) => {
            let mut answers = BTreeSet::new();
            for cq in cqs {
                answers.extend(eval_cq(cq, abox)?);
            }
            Ok(answers)
        }
    }
}

/// Boolean evaluation of a union query.
pub fn holds(query: &UnionQuery, abox: &ABox) -> Result<bool, QueryError> {
    Ok(!eval_ucq(query, abox)?.is_empty())
}

/// Tests a single (possibly wildcarded) concept or role atom against the
/// ABox after grounding its named variables: true when some fact equals
/// the grounded atom, with `_` standing for any individual.
pub fn match_with_wildcards(atom: &QueryAtom, binding: &Binding, abox: &ABox) -> bool {
    abox.iter().any(|fact| atom_matches_fact(atom, binding, fact))
}

/// Grounded-atom/fact comparison used by wildcard matching.
pub fn atom_matches_fact(atom: &QueryAtom, binding: &Binding, fact: &ABoxAssertion) -> bool {
    let term_matches = |term: &Term, ind: &Individual| match term {
        Term::Wildcard => true,
        Term::Const(c) => c == ind,
        Term::Var(name) => binding.get(name).is_some_and(|bound| bound == ind),
    };
    match (atom, fact) {
        (QueryAtom::Concept { name, term }, ABoxAssertion::Concept(fact_name, ind)) => {
            name == fact_name && term_matches(term, ind)
        }
        (
            QueryAtom::Role { name, first, second },
            ABoxAssertion::Role(fact_name, a, b),
        ) => name == fact_name && term_matches(first, a) && term_matches(second, b),
        _ => false,
    }
}

/// Orders an answer set by the query's free-variable tuple, lexicographic
/// on individual names. Used wherever answers reach the user.
pub fn sorted_answers(query_vars: &[Name], answers: &BTreeSet<Binding>) -> Vec<Binding> {
    let mut out: Vec<Binding> = answers.iter().cloned().collect();
    out.sort_by_key(|b| {
        query_vars
            .iter()
            .map(|v| b.get(v).cloned())
            .collect::<Vec<_>>()
    });
    out
}
