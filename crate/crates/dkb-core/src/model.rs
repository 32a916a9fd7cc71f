//! Vocabulary and assertion types for restricted DL-Lite_A knowledge bases.
//!
//! A knowledge base pairs a TBox (inclusion and functionality axioms over
//! atomic concepts, existential restrictions and roles) with an ABox of
//! ground facts. The Unique Name Assumption applies throughout: two
//! individuals are equal exactly when their names are equal.

use std::borrow::Borrow;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Shared identifier for concepts, roles, individuals and variables.
///
/// Backed by a reference-counted string so clones are cheap; ordering and
/// equality are by content, which keeps every derived ordering (assertion
/// sets, answer sets, serialized output) independent of allocation order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name(Arc::from(s))
    }
}

impl From<String> for Name {
    fn from(s: String) -> Self {
        Name(Arc::from(s.as_str()))
    }
}

impl Borrow<str> for Name {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// An element of the object universe. Distinct names denote distinct
/// individuals (UNA), so equality is plain name equality.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Individual(pub Name);

impl Individual {
    pub fn new(name: impl Into<Name>) -> Self {
        Individual(name.into())
    }

    pub fn name(&self) -> &Name {
        &self.0
    }
}

impl fmt::Display for Individual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Individual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for Individual {
    fn from(s: &str) -> Self {
        Individual(Name::from(s))
    }
}

/// An atomic role or its inverse.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RoleExpr {
    pub name: Name,
    pub inverted: bool,
}

impl RoleExpr {
    pub fn direct(name: impl Into<Name>) -> Self {
        RoleExpr { name: name.into(), inverted: false }
    }

    pub fn inverse_of(name: impl Into<Name>) -> Self {
        RoleExpr { name: name.into(), inverted: true }
    }

    /// Inversion is involutive: `r.inverse().inverse() == r`.
    pub fn inverse(&self) -> RoleExpr {
        RoleExpr { name: self.name.clone(), inverted: !self.inverted }
    }
}

impl fmt::Display for RoleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverted {
            write!(f, "{}-", self.name)
        } else {
            write!(f, "{}", self.name)
        }
    }
}

/// A basic concept: an atomic concept name or an unqualified existential
/// restriction over a role expression.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum BasicConcept {
    Atomic(Name),
    Exists(RoleExpr),
}

impl BasicConcept {
    pub fn atomic(name: impl Into<Name>) -> Self {
        BasicConcept::Atomic(name.into())
    }

    pub fn exists(role: RoleExpr) -> Self {
        BasicConcept::Exists(role)
    }
}

impl fmt::Display for BasicConcept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasicConcept::Atomic(name) => write!(f, "{}", name),
            BasicConcept::Exists(role) => write!(f, "exists {}", role),
        }
    }
}

/// A TBox axiom. The left-hand side is always positive; negation may only
/// occur on the right-hand side of an inclusion.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum TBoxAssertion {
    ConceptInclusion {
        lhs: BasicConcept,
        rhs: BasicConcept,
        negated_rhs: bool,
    },
    RoleInclusion {
        lhs: RoleExpr,
        rhs: RoleExpr,
        negated_rhs: bool,
    },
    Functionality(RoleExpr),
}

impl TBoxAssertion {
    pub fn concept_sub(lhs: BasicConcept, rhs: BasicConcept) -> Self {
        TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: false }
    }

    pub fn concept_disjoint(lhs: BasicConcept, rhs: BasicConcept) -> Self {
        TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: true }
    }

    pub fn role_sub(lhs: RoleExpr, rhs: RoleExpr) -> Self {
        TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: false }
    }

    pub fn role_disjoint(lhs: RoleExpr, rhs: RoleExpr) -> Self {
        TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: true }
    }

    pub fn is_negative_inclusion(&self) -> bool {
        matches!(
            self,
            TBoxAssertion::ConceptInclusion { negated_rhs: true, .. }
                | TBoxAssertion::RoleInclusion { negated_rhs: true, .. }
        )
    }

    pub fn is_positive_inclusion(&self) -> bool {
        matches!(
            self,
            TBoxAssertion::ConceptInclusion { negated_rhs: false, .. }
                | TBoxAssertion::RoleInclusion { negated_rhs: false, .. }
        )
    }
}

impl fmt::Display for TBoxAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs } => {
                if *negated_rhs {
                    write!(f, "{} <= not {}", lhs, rhs)
                } else {
                    write!(f, "{} <= {}", lhs, rhs)
                }
            }
            TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs } => {
                if *negated_rhs {
                    write!(f, "{} <= not {}", lhs, rhs)
                } else {
                    write!(f, "{} <= {}", lhs, rhs)
                }
            }
            TBoxAssertion::Functionality(role) => write!(f, "funct {}", role),
        }
    }
}

/// A ground fact. Only atomic concept and role names appear here: an
/// inverse-role fact `P-(a,b)` is normalized to `P(b,a)` at parse time.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ABoxAssertion {
    Concept(Name, Individual),
    Role(Name, Individual, Individual),
}

impl ABoxAssertion {
    pub fn concept(name: impl Into<Name>, ind: impl Into<Individual>) -> Self {
        ABoxAssertion::Concept(name.into(), ind.into())
    }

    pub fn role(
        name: impl Into<Name>,
        first: impl Into<Individual>,
        second: impl Into<Individual>,
    ) -> Self {
        ABoxAssertion::Role(name.into(), first.into(), second.into())
    }

    /// Builds a role fact from a possibly inverted role expression,
    /// normalizing `P-(a,b)` to `P(b,a)`.
    pub fn role_normalized(role: &RoleExpr, first: Individual, second: Individual) -> Self {
        if role.inverted {
            ABoxAssertion::Role(role.name.clone(), second, first)
        } else {
            ABoxAssertion::Role(role.name.clone(), first, second)
        }
    }

    pub fn predicate(&self) -> &Name {
        match self {
            ABoxAssertion::Concept(name, _) => name,
            ABoxAssertion::Role(name, _, _) => name,
        }
    }

    pub fn individuals(&self) -> impl Iterator<Item = &Individual> {
        let (first, second) = match self {
            ABoxAssertion::Concept(_, ind) => (ind, None),
            ABoxAssertion::Role(_, a, b) => (a, Some(b)),
        };
        std::iter::once(first).chain(second)
    }
}

impl fmt::Display for ABoxAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ABoxAssertion::Concept(name, ind) => write!(f, "{}({})", name, ind),
            ABoxAssertion::Role(name, a, b) => write!(f, "{}({}, {})", name, a, b),
        }
    }
}

/// A state of the system: a canonical (sorted, deduplicated) fact set.
pub type ABox = BTreeSet<ABoxAssertion>;

/// The individual constants mentioned in an ABox.
pub fn adom(abox: &ABox) -> BTreeSet<Individual> {
    abox.iter().flat_map(|a| a.individuals().cloned()).collect()
}

/// A DL-Lite_A knowledge base. TBox order is preserved as written, the
/// ABox is kept canonical.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct KnowledgeBase {
    pub tbox: Vec<TBoxAssertion>,
    pub abox: ABox,
}

impl KnowledgeBase {
    pub fn new(tbox: Vec<TBoxAssertion>, abox: ABox) -> Self {
        KnowledgeBase { tbox, abox }
    }

    /// Concept and role names appearing anywhere in the TBox.
    pub fn tbox_vocabulary(&self) -> (BTreeSet<Name>, BTreeSet<Name>) {
        let mut concepts = BTreeSet::new();
        let mut roles = BTreeSet::new();
        let visit_concept = |concept: &BasicConcept, roles: &mut BTreeSet<Name>,
                                 concepts: &mut BTreeSet<Name>| match concept {
            BasicConcept::Atomic(name) => {
                concepts.insert(name.clone());
            }
            BasicConcept::Exists(role) => {
                roles.insert(role.name.clone());
            }
        };
        for axiom in &self.tbox {
            match axiom {
                TBoxAssertion::ConceptInclusion { lhs, rhs, .. } => {
                    visit_concept(lhs, &mut roles, &mut concepts);
                    visit_concept(rhs, &mut roles, &mut concepts);
                }
                TBoxAssertion::RoleInclusion { lhs, rhs, .. } => {
                    roles.insert(lhs.name.clone());
                    roles.insert(rhs.name.clone());
                }
                TBoxAssertion::Functionality(role) => {
                    roles.insert(role.name.clone());
                }
            }
        }
        (concepts, roles)
    }
}

/// Severity of a validation or parse diagnostic.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => write!(f, "warning"),
            Severity::Error => write!(f, "error"),
        }
    }
}

/// Line/column position inside a source file, 1-based.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// A diagnostic produced by validation or parsing. Never thrown: callers
/// decide how to surface them.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: Option<SourceSpan>,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>, span: Option<SourceSpan>) -> Self {
        Diagnostic { severity: Severity::Error, message: message.into(), span }
    }

    pub fn warning(message: impl Into<String>, span: Option<SourceSpan>) -> Self {
        Diagnostic { severity: Severity::Warning, message: message.into(), span }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.span {
            Some(span) => write!(f, "{}: {} ({})", self.severity, self.message, span),
            None => write!(f, "{}: {}", self.severity, self.message),
        }
    }
}

/// Checks the restricted DL-Lite_A well-formedness conditions that the
/// typed representation cannot rule out.
///
/// FOL-rewritability requires that no functional role (or its inverse) is
/// specialized by a positive role inclusion. That condition is reported as
/// a warning by default and as an error under `strict`.
pub fn validate_tbox(tbox: &[TBoxAssertion], strict: bool) -> Vec<Diagnostic> {
    let mut diagnostics = Vec::new();
    let functional: BTreeSet<&Name> = tbox
        .iter()
        .filter_map(|a| match a {
            TBoxAssertion::Functionality(role) => Some(&role.name),
            _ => None,
        })
        .collect();
    for axiom in tbox {
        if let TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: false } = axiom {
            if functional.contains(&rhs.name) {
                let severity = if strict { Severity::Error } else { Severity::Warning };
                diagnostics.push(Diagnostic {
                    severity,
                    message: format!(
                        "functional role {} is specialized by {} <= {}; \
                         rewriting-based consistency is unsound for such TBoxes",
                        rhs.name, lhs, rhs
                    ),
                    span: None,
                });
            }
        }
    }
    diagnostics
}

/// Validates a whole knowledge base: TBox restrictions plus a warning for
/// every ABox predicate that never appears in the TBox vocabulary.
pub fn validate_kb(kb: &KnowledgeBase, strict: bool) -> Vec<Diagnostic> {
    let mut diagnostics = validate_tbox(&kb.tbox, strict);
    let (concepts, roles) = kb.tbox_vocabulary();
    let mut reported = BTreeSet::new();
    for assertion in &kb.abox {
        let (name, known) = match assertion {
            ABoxAssertion::Concept(name, _) => (name, concepts.contains(name)),
            ABoxAssertion::Role(name, _, _) => (name, roles.contains(name)),
        };
        if !known && reported.insert(name.clone()) {
            diagnostics.push(Diagnostic::warning(
                format!("{} is used in the ABox but does not appear in the TBox", name),
                None,
            ));
        }
    }
    diagnostics
}
