//! Desk-scale oracles and random instance generators for exercising the
//! core library. Everything here recomputes results from first
//! principles (bounded chase, direct enumeration) so the tests never
//! trust the code paths they are checking.

pub mod chase;
pub mod generate;

pub use chase::{certain_answers_by_chase, chase, consistent_by_chase, ChaseModel, Element};
pub use generate::{random_dkb, random_query, GeneratorConfig};

use std::collections::BTreeMap;

use dkb_core::{ABox, ABoxAssertion, BasicConcept, Individual, RoleExpr, TBoxAssertion};

/// Direct enumeration consistency check: every member of the NI-closure
/// is tested by scanning assertion (pairs), with no query evaluation
/// involved.
pub fn consistent_by_pairs(tbox: &[TBoxAssertion], abox: &ABox) -> bool {
    let closure = dkb_core::ni_closure(tbox);
    let holds_concept = |concept: &BasicConcept, ind: &Individual| -> bool {
        match concept {
            BasicConcept::Atomic(name) => {
                abox.contains(&ABoxAssertion::Concept(name.clone(), ind.clone()))
            }
            BasicConcept::Exists(role) => abox.iter().any(|fact| match fact {
                ABoxAssertion::Role(name, a, b) if name == &role.name => {
                    if role.inverted {
                        b == ind
                    } else {
                        a == ind
                    }
                }
                _ => false,
            }),
        }
    };
    let role_pairs = |role: &RoleExpr| -> Vec<(Individual, Individual)> {
        abox.iter()
            .filter_map(|fact| match fact {
                ABoxAssertion::Role(name, a, b) if name == &role.name => {
                    if role.inverted {
                        Some((b.clone(), a.clone()))
                    } else {
                        Some((a.clone(), b.clone()))
                    }
                }
                _ => None,
            })
            .collect()
    };
    for member in closure.iter() {
        match member {
            TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: true } => {
                for ind in dkb_core::adom(abox) {
                    if holds_concept(lhs, &ind) && holds_concept(rhs, &ind) {
                        return false;
                    }
                }
            }
            TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: true } => {
                let left = role_pairs(lhs);
                let right = role_pairs(rhs);
                if left.iter().any(|pair| right.contains(pair)) {
                    return false;
                }
            }
            TBoxAssertion::Functionality(role) => {
                let mut seen: BTreeMap<Individual, Individual> = BTreeMap::new();
                for (a, b) in role_pairs(role) {
                    if let Some(previous) = seen.get(&a) {
                        if previous != &b {
                            return false;
                        }
                    }
                    seen.insert(a, b);
                }
            }
            _ => unreachable!("the closure only holds negative members"),
        }
    }
    true
}
