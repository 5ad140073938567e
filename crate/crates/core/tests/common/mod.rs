//! Shared fixtures, samplers and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use protosec::dsl::{parse_dsl, Document};
use protosec::{Atom, KeyTerm, Message, Sort, VerificationContext, Variable};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const P: &str = include_str!("../../examples/p.proto");
pub const P_BROKEN: &str = include_str!("../../examples/p_broken.proto");
pub const P_ROLES: &str = include_str!("../../examples/p_roles.proto");

pub fn doc(src: &str) -> Document {
    parse_dsl(src).expect("fixture parses")
}

pub fn fixture_path(name: &str) -> String {
    format!("{}/examples/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Random ground messages over a fixed alphabet.
pub struct Gen<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub atoms: &'a [Atom],
    pub keys: &'a [Atom],
}

impl Gen<'_> {
    pub fn ground(&mut self, depth: usize) -> Message {
        let p: f64 = self.rng.gen();
        if depth == 0 || p < 0.3 {
            return Message::Atom(self.atoms.choose(self.rng).unwrap().clone());
        }
        if p < 0.6 {
            let n = self.rng.gen_range(2..=3);
            Message::concat((0..n).map(|_| self.ground(depth - 1)).collect::<Vec<_>>())
        } else {
            let k = self.keys.choose(self.rng).unwrap().clone();
            Message::enc(self.ground(depth - 1), KeyTerm::Atom(k))
        }
    }

    /// Like [`Gen::ground`] but leaves may also be one of `vars`.
    pub fn open(&mut self, depth: usize, vars: &[Variable]) -> Message {
        let p: f64 = self.rng.gen();
        if depth == 0 || p < 0.3 {
            if self.rng.gen_bool(0.4) {
                return Message::Var(vars.choose(self.rng).unwrap().clone());
            }
            return Message::Atom(self.atoms.choose(self.rng).unwrap().clone());
        }
        if p < 0.6 {
            let n = self.rng.gen_range(2..=3);
            Message::concat((0..n).map(|_| self.open(depth - 1, vars)).collect::<Vec<_>>())
        } else {
            let k = self.keys.choose(self.rng).unwrap().clone();
            Message::enc(self.open(depth - 1, vars), KeyTerm::Atom(k))
        }
    }
}

/// A small context with a public key per principal and one shared key.
pub fn small_context() -> (VerificationContext, Vec<Atom>, Vec<Atom>) {
    let mut ctx = VerificationContext::new(["A", "B", "C"], "I");
    let ka = ctx.add_public_key("ka", "A");
    let kb = ctx.add_public_key("kb", "B");
    let kab = ctx.add_shared_key("kab", &["A", "B"]);
    ctx.set_level("n", protosec::SecurityLevel::finite(["A", "B"]));
    ctx.set_level("s", protosec::SecurityLevel::finite(["A"]));
    let keys = vec![ka.clone(), ka.inverted(), kb.clone(), kb.inverted(), kab];
    let mut atoms = keys.clone();
    atoms.extend([Atom::identity("A"), Atom::identity("B"), Atom::nonce("n"), Atom::secret("s")]);
    (ctx, atoms, keys)
}

/// Analysis closure computed the slow way: a plain fixpoint over the whole
/// set, opening a ciphertext only when the inverse key is present verbatim.
pub fn naive_analysis(start: &[Message], ctx: &VerificationContext) -> BTreeSet<Message> {
    let mut set: BTreeSet<Message> = start.iter().filter(|m| !m.is_empty()).cloned().collect();
    loop {
        let before = set.len();
        let snapshot: Vec<Message> = set.iter().cloned().collect();
        for m in snapshot {
            match m {
                Message::Concat(items) => set.extend(items),
                Message::Enc { body, key: KeyTerm::Atom(k) } => {
                    let inv = ctx.inverse_key(&k).expect("context key");
                    if set.contains(&Message::Atom(inv)) {
                        set.insert(*body);
                    }
                }
                _ => {}
            }
        }
        if set.len() == before {
            return set;
        }
    }
}

/// Nesting depth of constructors.
pub fn depth(m: &Message) -> usize {
    match m {
        Message::Concat(items) => 1 + items.iter().map(depth).max().unwrap_or(0),
        Message::Enc { body, .. } => 1 + depth(body),
        _ => 0,
    }
}

/// Every subterm, keys included.
pub fn universe(m: &Message, out: &mut BTreeSet<Message>) {
    out.insert(m.clone());
    match m {
        Message::Concat(items) => items.iter().for_each(|i| universe(i, out)),
        Message::Enc { body, key } => {
            universe(body, out);
            out.insert(key.to_message());
        }
        _ => {}
    }
}

/// Bottom-up enumeration of everything buildable from `analyzed` in at most
/// `rounds` composition rounds, restricted to subterms of `target`. Each
/// round admits a pair or ciphertext whose parts were available in the
/// previous round.
pub fn enumerate_derivable(
    analyzed: &BTreeSet<Message>,
    target: &Message,
    rounds: usize,
) -> BTreeSet<Message> {
    let mut pool = BTreeSet::new();
    universe(target, &mut pool);
    let mut level = analyzed.clone();
    for _ in 0..rounds {
        let mut next = level.clone();
        for t in &pool {
            let ok = match t {
                Message::Concat(items) => items.iter().all(|i| level.contains(i)),
                Message::Enc { body, key } => level.contains(body) && level.contains(&key.to_message()),
                _ => false,
            };
            if ok {
                next.insert(t.clone());
            }
        }
        level = next;
    }
    level
}

pub fn sorted_var(name: &str, sort: Sort) -> Variable {
    Variable::new(name, sort)
}
