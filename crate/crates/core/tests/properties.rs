//! Algebraic invariants, checked with proptest.

mod common;

use common::*;
use proptest::prelude::*;
use protosec::oracle::KnowledgeSet;
use protosec::{
    encryption_patterns, extract_generalized_roles, f_max_ik, lower_bound, unify, Atom, KeyTerm, Message,
    SecurityLevel, Sort, Subject, Variable,
};

fn leaf_atoms() -> Vec<Atom> {
    small_context().1
}

fn key_atoms() -> Vec<Atom> {
    small_context().2
}

fn vars() -> Vec<Variable> {
    vec![
        Variable::new("X", Sort::Any),
        Variable::new("Y", Sort::Any),
        Variable::new("N", Sort::Nonce),
    ]
}

fn arb_message(with_vars: bool) -> impl Strategy<Value = Message> {
    let atoms = prop::sample::select(leaf_atoms()).prop_map(Message::Atom);
    let leaf = if with_vars {
        prop_oneof![2 => atoms, 1 => prop::sample::select(vars()).prop_map(Message::Var)].boxed()
    } else {
        atoms.boxed()
    };
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Message::concat),
            (inner, prop::sample::select(key_atoms())).prop_map(|(b, k)| Message::enc(b, KeyTerm::Atom(k))),
        ]
    })
}

fn arb_set() -> impl Strategy<Value = Vec<Message>> {
    prop::collection::vec(arb_message(false), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn unifier_is_a_solution(a in arb_message(true), b in arb_message(true)) {
        if let Some(s) = unify(&a, &b) {
            prop_assert_eq!(a.apply(&s), b.apply(&s));
        }
        prop_assert_eq!(unify(&a, &b).is_some(), unify(&b, &a).is_some());
    }

    #[test]
    fn a_message_unifies_with_itself(a in arb_message(true)) {
        let s = unify(&a, &a).expect("self-unification");
        prop_assert_eq!(a.apply(&s), a);
    }

    #[test]
    fn instances_unify_with_their_pattern(a in arb_message(true), vals in prop::collection::vec(arb_message(false), 3)) {
        // Concatenation unifies positionally, so a variable bound to a pair
        // would need list splitting; those instances are out of reach.
        let sigma = protosec::Substitution::from_pairs(
            vars().into_iter().zip(vals).filter(|(v, m)| v.accepts(m) && !matches!(m, Message::Concat(_))),
        ).unwrap();
        let inst = a.apply(&sigma);
        if let Some(s) = unify(&a, &inst) {
            prop_assert_eq!(a.apply(&s), inst.apply(&s));
        } else {
            prop_assert!(false, "{} does not unify with its instance {}", a, inst);
        }
    }

    #[test]
    fn derivation_erases_variables(m in arb_message(true)) {
        let d = m.derive();
        prop_assert!(d.is_ground());
        prop_assert_eq!(d.derive(), d.clone());
        // Only keys of ciphertexts left empty can disappear.
        for a in m.atoms().difference(&d.atoms()) {
            prop_assert_eq!(a.sort, Sort::Key);
        }
        for x in m.vars() {
            let kept = m.derive_keep(&x);
            prop_assert_eq!(kept.vars().into_iter().collect::<Vec<_>>(), vec![x]);
        }
    }

    #[test]
    fn derivation_of_ground_is_identity(m in arb_message(false)) {
        prop_assert_eq!(m.derive(), m);
    }

    #[test]
    fn message_json_round_trip(m in arb_message(true)) {
        let text = serde_json::to_string(&m).unwrap();
        let back: Message = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn knowledge_is_monotone(set in arb_set(), extra in arb_message(false), t in arb_message(false)) {
        let ctx = small_context().0;
        let mut small = KnowledgeSet::from_messages(set.clone());
        let mut big = KnowledgeSet::from_messages(set.into_iter().chain([extra]));
        if small.derives(&t, &ctx) {
            prop_assert!(big.derives(&t, &ctx));
        }
        for m in small.messages().clone() {
            prop_assert!(big.derives(&m, &ctx));
        }
    }

    #[test]
    fn members_are_derivable_and_analysis_is_idempotent(set in arb_set()) {
        let ctx = small_context().0;
        let mut k = KnowledgeSet::from_messages(set.clone());
        for m in &set {
            prop_assert!(k.derives(m, &ctx));
        }
        let once = k.messages().clone();
        let mut again = KnowledgeSet::from_messages(once.iter().cloned());
        again.analyze(&ctx);
        prop_assert_eq!(again.messages(), &once);
    }

    #[test]
    fn cut(set in arb_set(), m in arb_message(false), t in arb_message(false)) {
        let ctx = small_context().0;
        let mut k = KnowledgeSet::from_messages(set.clone());
        if k.derives(&m, &ctx) {
            let mut with = KnowledgeSet::from_messages(set.into_iter().chain([m]));
            prop_assert_eq!(with.derives(&t, &ctx), k.derives(&t, &ctx));
        }
    }

    #[test]
    fn closure_matches_naive_fixpoint(set in arb_set()) {
        let ctx = small_context().0;
        let mut k = KnowledgeSet::from_messages(set.clone());
        k.analyze(&ctx);
        prop_assert_eq!(k.messages(), &naive_analysis(&set, &ctx));
    }

    #[test]
    fn f_max_ik_meets_over_pairs(a in arb_message(false), b in arb_message(false), pick in 0usize..16) {
        let ctx = small_context().0;
        let atoms = leaf_atoms();
        let alpha = &atoms[pick % atoms.len()];
        let s = Subject::Atom(alpha.clone());
        let whole = f_max_ik(&s, &Message::concat([a.clone(), b.clone()]), &ctx).unwrap();
        let parts = f_max_ik(&s, &a, &ctx).unwrap().meet(&f_max_ik(&s, &b, &ctx).unwrap());
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn lower_bound_of_ground_is_f(m in arb_message(false), pick in 0usize..16) {
        let ctx = small_context().0;
        let atoms = leaf_atoms();
        let s = Subject::Atom(atoms[pick % atoms.len()].clone());
        let lb = lower_bound(&s, &m, &[], &ctx).unwrap();
        prop_assert_eq!(lb.level, f_max_ik(&s, &m, &ctx).unwrap());
    }

    #[test]
    fn verdicts_are_monotone(
        sent in prop::collection::btree_set(prop::sample::select(vec!["A", "B", "S"]), 0..3),
        recv in prop::collection::btree_set(prop::sample::select(vec!["A", "B", "S"]), 0..3),
        ctxl in prop::collection::btree_set(prop::sample::select(vec!["A", "B", "S"]), 0..3),
        drop in prop::sample::select(vec!["A", "B", "S"]),
        add in prop::sample::select(vec!["A", "B", "S", "C"]),
    ) {
        let l = |s: &std::collections::BTreeSet<&str>| SecurityLevel::finite(s.iter().copied());
        let holds = |s: &SecurityLevel, r: &SecurityLevel, c: &SecurityLevel| s.geq_provable(&c.meet(r));
        let (s, r, c) = (l(&sent), l(&recv), l(&ctxl));
        if holds(&s, &r, &c) {
            // A tighter sent level or a looser received level keeps the verdict.
            let mut tighter = sent.clone();
            tighter.remove(drop);
            prop_assert!(holds(&l(&tighter), &r, &c));
            let mut looser = recv.clone();
            looser.insert(add);
            prop_assert!(holds(&s, &l(&looser), &c));
        }
    }
}

#[test]
fn patterns_are_stable_under_reextraction() {
    let d = doc(P);
    let a = extract_generalized_roles(&d.spec, &d.context).unwrap();
    let b = extract_generalized_roles(&d.spec, &d.context).unwrap();
    assert_eq!(encryption_patterns(&a), encryption_patterns(&b));
}
