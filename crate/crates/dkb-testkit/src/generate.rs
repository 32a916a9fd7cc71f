//! Seeded random instances: small TBoxes respecting the DL-Lite_A
//! functional-role restriction, consistent ABoxes, guarded actions, and
//! positive conjunctive queries. Everything is driven by the caller's
//! RNG, so suites replay identically from a fixed seed.

use std::collections::BTreeSet;

use rand::Rng;

use dkb_core::{
    ABox, ABoxAssertion, Action, BasicConcept, ConjunctiveQuery, ConsistencyChecker, Individual,
    KnowledgeBase, Name, QueryAtom, RoleExpr, TBoxAssertion, Term,
};

#[derive(Clone, Debug)]
pub struct GeneratorConfig {
    pub concepts: usize,
    pub roles: usize,
    pub tbox_axioms: usize,
    pub individuals: usize,
    pub abox_facts: usize,
    pub actions: usize,
    pub max_guard_atoms: usize,
    pub max_effects: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            concepts: 5,
            roles: 3,
            tbox_axioms: 8,
            individuals: 10,
            abox_facts: 12,
            actions: 3,
            max_guard_atoms: 2,
            max_effects: 2,
        }
    }
}

impl GeneratorConfig {
    pub fn concept_names(&self) -> Vec<Name> {
        (0..self.concepts).map(|i| Name::from(format!("C{}", i))).collect()
    }

    pub fn role_names(&self) -> Vec<Name> {
        (0..self.roles).map(|i| Name::from(format!("R{}", i))).collect()
    }

    pub fn individuals(&self) -> Vec<Individual> {
        (0..self.individuals).map(|i| Individual::from(format!("i{}", i).as_str())).collect()
    }
}

fn random_role_expr(rng: &mut impl Rng, cfg: &GeneratorConfig) -> RoleExpr {
    let name = cfg.role_names()[rng.gen_range(0..cfg.roles)].clone();
    RoleExpr { name, inverted: rng.gen_bool(0.3) }
}

fn random_basic(rng: &mut impl Rng, cfg: &GeneratorConfig) -> BasicConcept {
    if cfg.roles == 0 || rng.gen_bool(0.6) {
        BasicConcept::Atomic(cfg.concept_names()[rng.gen_range(0..cfg.concepts)].clone())
    } else {
        BasicConcept::Exists(random_role_expr(rng, cfg))
    }
}

/// A random TBox that never specializes a functional role, keeping the
/// rewriting-based consistency check exact.
pub fn random_tbox(rng: &mut impl Rng, cfg: &GeneratorConfig) -> Vec<TBoxAssertion> {
    let mut tbox: Vec<TBoxAssertion> = Vec::new();
    let mut functional: BTreeSet<Name> = BTreeSet::new();
    let mut specialized: BTreeSet<Name> = BTreeSet::new();
    let mut attempts = 0;
    while tbox.len() < cfg.tbox_axioms && attempts < cfg.tbox_axioms * 20 {
        attempts += 1;
        let roll = rng.gen_range(0..100);
        let axiom = if roll < 40 {
            TBoxAssertion::concept_sub(random_basic(rng, cfg), random_basic(rng, cfg))
        } else if roll < 62 {
            TBoxAssertion::concept_disjoint(random_basic(rng, cfg), random_basic(rng, cfg))
        } else if roll < 74 && cfg.roles > 0 {
            let lhs = random_role_expr(rng, cfg);
            let rhs = random_role_expr(rng, cfg);
            if functional.contains(&rhs.name) {
                continue;
            }
            specialized.insert(rhs.name.clone());
            TBoxAssertion::role_sub(lhs, rhs)
        } else if roll < 84 && cfg.roles > 0 {
            TBoxAssertion::role_disjoint(random_role_expr(rng, cfg), random_role_expr(rng, cfg))
        } else if cfg.roles > 0 {
            let role = random_role_expr(rng, cfg);
            if specialized.contains(&role.name) {
                continue;
            }
            functional.insert(role.name.clone());
            TBoxAssertion::Functionality(role)
        } else {
            continue;
        };
        if !tbox.contains(&axiom) {
            tbox.push(axiom);
        }
    }
    tbox
}

fn random_fact(rng: &mut impl Rng, cfg: &GeneratorConfig) -> ABoxAssertion {
    let inds = cfg.individuals();
    if cfg.roles == 0 || rng.gen_bool(0.6) {
        ABoxAssertion::Concept(
            cfg.concept_names()[rng.gen_range(0..cfg.concepts)].clone(),
            inds[rng.gen_range(0..inds.len())].clone(),
        )
    } else {
        ABoxAssertion::Role(
            cfg.role_names()[rng.gen_range(0..cfg.roles)].clone(),
            inds[rng.gen_range(0..inds.len())].clone(),
            inds[rng.gen_range(0..inds.len())].clone(),
        )
    }
}

/// Greedily grows a consistent ABox: each candidate fact is kept only if
/// the state stays consistent.
pub fn random_consistent_abox(
    rng: &mut impl Rng,
    cfg: &GeneratorConfig,
    checker: &ConsistencyChecker,
) -> ABox {
    let mut abox = ABox::new();
    for _ in 0..cfg.abox_facts {
        let fact = random_fact(rng, cfg);
        abox.insert(fact.clone());
        if !checker.is_consistent(&abox) {
            abox.remove(&fact);
        }
    }
    abox
}

/// An arbitrary (not necessarily consistent) ABox.
pub fn random_abox(rng: &mut impl Rng, cfg: &GeneratorConfig) -> ABox {
    (0..cfg.abox_facts).map(|_| random_fact(rng, cfg)).collect()
}

/// A positive conjunctive query over the vocabulary: up to three atoms,
/// variables shared across atoms, a random subset of them distinguished.
pub fn random_query(rng: &mut impl Rng, cfg: &GeneratorConfig) -> ConjunctiveQuery {
    let var_pool: Vec<Name> = (0..4).map(|i| Name::from(format!("v{}", i))).collect();
    let n_atoms = rng.gen_range(1..=3);
    let mut atoms = Vec::new();
    for _ in 0..n_atoms {
        if cfg.roles == 0 || rng.gen_bool(0.5) {
            atoms.push(QueryAtom::concept(
                cfg.concept_names()[rng.gen_range(0..cfg.concepts)].clone(),
                Term::Var(var_pool[rng.gen_range(0..var_pool.len())].clone()),
            ));
        } else {
            atoms.push(QueryAtom::role(
                cfg.role_names()[rng.gen_range(0..cfg.roles)].clone(),
                Term::Var(var_pool[rng.gen_range(0..var_pool.len())].clone()),
                Term::Var(var_pool[rng.gen_range(0..var_pool.len())].clone()),
            ));
        }
    }
    let occurring: Vec<Name> = {
        let mut seen = Vec::new();
        for atom in &atoms {
            for var in atom.variables() {
                if !seen.contains(var) {
                    seen.push(var.clone());
                }
            }
        }
        seen
    };
    let mut free_vars = Vec::new();
    let mut exist_vars = BTreeSet::new();
    for var in occurring {
        if rng.gen_bool(0.5) {
            free_vars.push(var);
        } else {
            exist_vars.insert(var);
        }
    }
    ConjunctiveQuery { atoms, free_vars, exist_vars }
}

/// Random guarded actions over the vocabulary; always well-formed.
pub fn random_actions(rng: &mut impl Rng, cfg: &GeneratorConfig) -> Vec<Action> {
    let mut actions = Vec::new();
    for idx in 0..cfg.actions {
        let pool: Vec<Name> = (0..3).map(|i| Name::from(format!("v{}", i))).collect();
        let n_atoms = rng.gen_range(1..=cfg.max_guard_atoms.max(1));
        let mut guard_atoms = Vec::new();
        for _ in 0..n_atoms {
            if cfg.roles == 0 || rng.gen_bool(0.6) {
                guard_atoms.push(QueryAtom::concept(
                    cfg.concept_names()[rng.gen_range(0..cfg.concepts)].clone(),
                    Term::Var(pool[rng.gen_range(0..pool.len())].clone()),
                ));
            } else {
                guard_atoms.push(QueryAtom::role(
                    cfg.role_names()[rng.gen_range(0..cfg.roles)].clone(),
                    Term::Var(pool[rng.gen_range(0..pool.len())].clone()),
                    Term::Var(pool[rng.gen_range(0..pool.len())].clone()),
                ));
            }
        }
        let mut occurring: Vec<Name> = Vec::new();
        for atom in &guard_atoms {
            for var in atom.variables() {
                if !occurring.contains(var) {
                    occurring.push(var.clone());
                }
            }
        }
        // Keep most variables distinguished so effects have something to
        // work with.
        let mut free_vars: Vec<Name> = Vec::new();
        let mut exist_vars: BTreeSet<Name> = BTreeSet::new();
        for var in occurring {
            if free_vars.is_empty() || rng.gen_bool(0.75) {
                free_vars.push(var);
            } else {
                exist_vars.insert(var);
            }
        }
        let fresh_vars: Vec<Name> = if rng.gen_bool(0.4) {
            vec![Name::from(format!("w{}", idx))]
        } else {
            Vec::new()
        };

        let mut add_pool = free_vars.clone();
        add_pool.extend(fresh_vars.iter().cloned());
        let mut add_effects: Vec<QueryAtom> = Vec::new();
        let mut del_effects: Vec<QueryAtom> = Vec::new();
        for _ in 0..rng.gen_range(0..=cfg.max_effects) {
            if add_pool.is_empty() {
                break;
            }
            let atom = random_effect_atom(rng, cfg, &add_pool);
            if !add_effects.contains(&atom) {
                add_effects.push(atom);
            }
        }
        for _ in 0..rng.gen_range(0..=cfg.max_effects) {
            if free_vars.is_empty() {
                break;
            }
            let atom = random_effect_atom(rng, cfg, &free_vars);
            if !del_effects.contains(&atom) {
                del_effects.push(atom);
            }
        }

        let action = Action {
            name: Name::from(format!("a{}", idx)),
            guard: ConjunctiveQuery { atoms: guard_atoms, free_vars, exist_vars },
            fresh_vars,
            add_effects,
            del_effects,
        };
        action.validate().expect("generated actions are well-formed");
        actions.push(action);
    }
    actions
}

fn random_effect_atom(rng: &mut impl Rng, cfg: &GeneratorConfig, pool: &[Name]) -> QueryAtom {
    if cfg.roles == 0 || rng.gen_bool(0.6) {
        QueryAtom::concept(
            cfg.concept_names()[rng.gen_range(0..cfg.concepts)].clone(),
            Term::Var(pool[rng.gen_range(0..pool.len())].clone()),
        )
    } else {
        QueryAtom::role(
            cfg.role_names()[rng.gen_range(0..cfg.roles)].clone(),
            Term::Var(pool[rng.gen_range(0..pool.len())].clone()),
            Term::Var(pool[rng.gen_range(0..pool.len())].clone()),
        )
    }
}

/// A complete random instance: TBox, consistent initial ABox, actions.
pub fn random_dkb(rng: &mut impl Rng, cfg: &GeneratorConfig) -> (KnowledgeBase, Vec<Action>) {
    let tbox = random_tbox(rng, cfg);
    let checker = ConsistencyChecker::new(&tbox);
    let abox = random_consistent_abox(rng, cfg, &checker);
    let actions = random_actions(rng, cfg);
    (KnowledgeBase::new(tbox, abox), actions)
}
