//! Structural invariants exercised over generated inputs.

use std::collections::BTreeSet;

use proptest::prelude::*;

use dkb_core::{
    adom, eval_cq, eval_ucq, ni_closure, parse_dkb, serialize_dkb, ABox, ABoxAssertion, Action,
    BasicConcept, ConjunctiveQuery, DkbDocument, KnowledgeBase, Name, QueryAtom, RoleExpr,
    TBoxAssertion, Term, UnionQuery,
};

fn concept_name() -> impl Strategy<Value = Name> {
    prop_oneof![Just(Name::from("A")), Just(Name::from("B")), Just(Name::from("C"))]
}

fn role_name() -> impl Strategy<Value = Name> {
    prop_oneof![Just(Name::from("P")), Just(Name::from("S"))]
}

fn individual() -> impl Strategy<Value = dkb_core::Individual> {
    prop_oneof![
        Just(dkb_core::Individual::from("a")),
        Just(dkb_core::Individual::from("b")),
        Just(dkb_core::Individual::from("c")),
        Just(dkb_core::Individual::from("d")),
    ]
}

fn fact() -> impl Strategy<Value = ABoxAssertion> {
    prop_oneof![
        (concept_name(), individual()).prop_map(|(n, i)| ABoxAssertion::Concept(n, i)),
        (role_name(), individual(), individual())
            .prop_map(|(n, a, b)| ABoxAssertion::Role(n, a, b)),
    ]
}

fn abox() -> impl Strategy<Value = ABox> {
    prop::collection::btree_set(fact(), 0..8)
}

fn role_expr() -> impl Strategy<Value = RoleExpr> {
    (role_name(), any::<bool>()).prop_map(|(name, inverted)| RoleExpr { name, inverted })
}

fn basic_concept() -> impl Strategy<Value = BasicConcept> {
    prop_oneof![
        concept_name().prop_map(BasicConcept::Atomic),
        role_expr().prop_map(BasicConcept::Exists),
    ]
}

fn tbox_axiom() -> impl Strategy<Value = TBoxAssertion> {
    prop_oneof![
        (basic_concept(), basic_concept(), any::<bool>()).prop_map(|(lhs, rhs, neg)| {
            TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: neg }
        }),
        (role_expr(), role_expr(), any::<bool>()).prop_map(|(lhs, rhs, neg)| {
            TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: neg }
        }),
        role_expr().prop_map(TBoxAssertion::Functionality),
    ]
}

fn tbox() -> impl Strategy<Value = Vec<TBoxAssertion>> {
    prop::collection::vec(tbox_axiom(), 0..7)
}

/// Positive conjunctive queries over a tiny variable pool; every
/// occurring variable is declared, some distinguished.
fn positive_cq() -> impl Strategy<Value = ConjunctiveQuery> {
    let var = prop_oneof![
        Just(Name::from("x")),
        Just(Name::from("y")),
        Just(Name::from("z"))
    ];
    let atom = prop_oneof![
        (concept_name(), var.clone())
            .prop_map(|(n, v)| QueryAtom::concept(n, Term::Var(v))),
        (role_name(), var.clone(), var)
            .prop_map(|(n, a, b)| QueryAtom::role(n, Term::Var(a), Term::Var(b))),
    ];
    (prop::collection::vec(atom, 1..4), any::<u8>()).prop_map(|(atoms, mask)| {
        let mut occurring: Vec<Name> = Vec::new();
        for atom in &atoms {
            for v in atom.variables() {
                if !occurring.contains(v) {
                    occurring.push(v.clone());
                }
            }
        }
        let mut free_vars = Vec::new();
        let mut exist_vars = BTreeSet::new();
        for (i, var) in occurring.into_iter().enumerate() {
            if mask & (1 << i) != 0 {
                free_vars.push(var);
            } else {
                exist_vars.insert(var);
            }
        }
        ConjunctiveQuery { atoms, free_vars, exist_vars }
    })
}

proptest! {
    #[test]
    fn adom_is_monotone(small in abox(), extra in abox()) {
        let mut large = small.clone();
        large.extend(extra);
        prop_assert!(adom(&small).is_subset(&adom(&large)));
    }

    #[test]
    fn positive_queries_are_monotone(q in positive_cq(), small in abox(), extra in abox()) {
        let mut large = small.clone();
        large.extend(extra);
        let on_small = eval_cq(&q, &small).unwrap();
        let on_large = eval_cq(&q, &large).unwrap();
        prop_assert!(on_small.is_subset(&on_large));
    }

    #[test]
    fn union_query_answers_are_disjunct_unions(
        qs in prop::collection::vec(positive_cq(), 0..3),
        state in abox(),
    ) {
        let union = UnionQuery::Union(qs.clone());
        let combined = eval_ucq(&union, &state).unwrap();
        let mut expected = BTreeSet::new();
        for q in &qs {
            expected.extend(eval_cq(q, &state).unwrap());
        }
        prop_assert_eq!(combined, expected);
    }

    #[test]
    fn ni_closure_is_idempotent(axioms in tbox()) {
        let closure = ni_closure(&axioms);
        let mut widened = axioms.clone();
        widened.extend(closure.iter().cloned());
        prop_assert_eq!(ni_closure(&widened), closure);
    }

    #[test]
    fn serialization_is_a_fixpoint(kb_tbox in tbox(), kb_abox in abox()) {
        // The typed document may use vocabulary ambiguously (a name as
        // both concept and role); skip those, the parser rejects them.
        let doc = DkbDocument {
            kb: KnowledgeBase::new(kb_tbox, kb_abox),
            actions: example_actions(),
        };
        let text = serialize_dkb(&doc);
        if let Ok(reparsed) = parse_dkb(&text) {
            let again = serialize_dkb(&reparsed);
            prop_assert_eq!(&text, &again);
            prop_assert_eq!(serialize_dkb(&parse_dkb(&again).unwrap()), again);
        }
    }
}

fn example_actions() -> Vec<Action> {
    let doc = parse_dkb(
        "[tbox]\n[abox]\n[action] act\nguard: A(x), P(x, _w)\nnew: v\nadd: B(v)\ndel: A(x)\n",
    )
    .unwrap();
    doc.actions
}

#[test]
fn parsed_documents_round_trip_structurally() {
    let source = "\
[tbox]
Technician <= Employee
Employee <= not Product
exists P- <= A
funct P
[abox]
Technician(t1)
P(a, b)
[action] create
guard: Employee(x), P(x, _w)
new: y
add: Product(y), P(x, y)
[action] fire
guard: Employee(x)
del: Employee(x)
";
    let doc = parse_dkb(source).unwrap();
    let text = serialize_dkb(&doc);
    let reparsed = parse_dkb(&text).unwrap();
    assert_eq!(doc, reparsed);
    assert_eq!(text, serialize_dkb(&reparsed));
}

/// Brute force: enumerate every assignment of every variable over the
/// active domain and keep those satisfying all atoms by direct lookup.
fn brute_force_answers(q: &ConjunctiveQuery, state: &ABox) -> BTreeSet<dkb_core::Binding> {
    let dom: Vec<dkb_core::Individual> = adom(state).into_iter().collect();
    let vars: Vec<Name> = {
        let mut seen: Vec<Name> = Vec::new();
        for atom in &q.atoms {
            for v in atom.variables() {
                if !seen.contains(v) {
                    seen.push(v.clone());
                }
            }
        }
        seen
    };
    let mut answers = BTreeSet::new();
    let mut indices = vec![0usize; vars.len()];
    if dom.is_empty() && !vars.is_empty() {
        return answers;
    }
    loop {
        let assignment: dkb_core::Binding = vars
            .iter()
            .zip(indices.iter())
            .map(|(v, &i)| (v.clone(), dom[i].clone()))
            .collect();
        let ok = q.atoms.iter().all(|atom| {
            let grounded = atom.substitute(&assignment);
            match grounded {
                QueryAtom::Concept { name, term: Term::Const(ind) } => {
                    state.contains(&ABoxAssertion::Concept(name, ind))
                }
                QueryAtom::Role { name, first: Term::Const(a), second: Term::Const(b) } => {
                    state.contains(&ABoxAssertion::Role(name, a, b))
                }
                QueryAtom::Eq(Term::Const(a), Term::Const(b)) => a == b,
                QueryAtom::Neq(Term::Const(a), Term::Const(b)) => a != b,
                _ => false,
            }
        });
        if ok {
            let mut projected = dkb_core::Binding::new();
            for v in &q.free_vars {
                if let Some(ind) = assignment.get(v) {
                    projected.bind(v.clone(), ind.clone());
                }
            }
            answers.insert(projected);
        }
        // Advance the odometer.
        let mut pos = 0;
        loop {
            if pos == indices.len() {
                return answers;
            }
            indices[pos] += 1;
            if indices[pos] < dom.len() {
                break;
            }
            indices[pos] = 0;
            pos += 1;
        }
    }
}

proptest! {
    #[test]
    fn evaluation_matches_brute_force_enumeration(q in positive_cq(), state in abox()) {
        let fast = eval_cq(&q, &state).unwrap();
        let slow = brute_force_answers(&q, &state);
        prop_assert_eq!(fast, slow);

        // Same comparison with an inequality constraint conjoined.
        let occurring: Vec<Name> = q.variables().into_iter().cloned().collect();
        if occurring.len() >= 2 {
            let mut with_neq = q.clone();
            with_neq.atoms.push(QueryAtom::Neq(
                Term::Var(occurring[0].clone()),
                Term::Var(occurring[1].clone()),
            ));
            let fast = eval_cq(&with_neq, &state).unwrap();
            let slow = brute_force_answers(&with_neq, &state);
            prop_assert_eq!(fast, slow);
        }
    }
}

#[test]
fn keepall_partial_exploration_matches_complete() {
    let source = "\
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
    let doc = parse_dkb(source).unwrap();
    let bounds = dkb_core::Bounds { max_depth: 3, max_states: 200, fresh_pool: 2 };
    let complete = dkb_core::explore(
        &doc.kb,
        &doc.actions,
        &dkb_core::ExploreOptions { bounds, ..Default::default() },
    )
    .unwrap();
    let partial = dkb_core::explore(
        &doc.kb,
        &doc.actions,
        &dkb_core::ExploreOptions {
            bounds,
            mode: dkb_core::ExploreMode::Partial {
                focus: dkb_core::FocusPolicy::KeepAll,
                initial: doc.kb.abox.clone(),
            },
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(complete.serialize(), partial.serialize());
}

proptest! {
    // Hostile input never panics the parsers; it parses or it reports.
    #[test]
    fn document_parser_is_total(input in "[ -~\n]{0,200}") {
        let _ = parse_dkb(&input);
    }

    #[test]
    fn path_parser_is_total(input in "[ -~\n]{0,120}") {
        let _ = dkb_core::parse_path(&input);
    }

    #[test]
    fn query_parser_is_total(input in "[ -~]{0,80}") {
        let _ = dkb_core::parse_query(&input, &BTreeSet::new());
    }

    // Sectioned noise: section headers with arbitrary bodies.
    #[test]
    fn sectioned_noise_is_total(body in "[A-Za-z0-9_ (),<=!-]{0,80}") {
        let _ = parse_dkb(&format!("[tbox]\n{}\n[abox]\n{}\n[action] a\nguard: {}\n", body, body, body));
    }
}
