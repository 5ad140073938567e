//! Randomized probing of the full-invariance-by-intruder property:
//! `M ⊨ m ⇒ F(α, m) ⊒ F(α, M) ∨ ⌜K(I)⌝ ⊒ ⌜α⌝`.
//!
//! `⌜K(I)⌝` is the join of the levels of every atom the intruder holds in
//! clear in the run, i.e. its initial knowledge plus whatever it extracts
//! from `M`. It dominates `⌜α⌝` as soon as the intruder holds `α` itself or
//! a key at least as restricted as `α`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analyzer::Metric;
use crate::context::{ContextError, VerificationContext};
use crate::interp::{dek, dekan, occurrences, inverse_level};
use crate::lattice::SecurityLevel;
use crate::oracle::KnowledgeSet;
use crate::protocol::ProtocolSpec;
use crate::term::{Atom, KeyTerm, Message, Sort, Subject};
use crate::witness::f_max_ik;

/// A metric ranking atoms in ground messages.
pub trait AtomMetric {
    fn name(&self) -> String;
    fn level(&self, alpha: &Atom, m: &Message, ctx: &VerificationContext) -> Result<SecurityLevel, ContextError>;

    /// `F(α, M)` for a set: the meet over its members.
    fn level_of_set(
        &self,
        alpha: &Atom,
        ms: &[Message],
        ctx: &VerificationContext,
    ) -> Result<SecurityLevel, ContextError> {
        let mut l = SecurityLevel::Top;
        for m in ms {
            l = l.meet(&self.level(alpha, m, ctx)?);
        }
        Ok(l)
    }
}

/// `Witness` ranks with `F_MAX^IK`.
impl AtomMetric for Metric {
    fn name(&self) -> String {
        match self {
            Metric::Witness => "f_max_ik".into(),
            other => other.name().to_string(),
        }
    }

    fn level(&self, alpha: &Atom, m: &Message, ctx: &VerificationContext) -> Result<SecurityLevel, ContextError> {
        let s = Subject::Atom(alpha.clone());
        match self {
            Metric::Dek => dek(&s, m, ctx),
            Metric::Dekan => dekan(&s, m, ctx),
            Metric::Witness => f_max_ik(&s, m, ctx),
        }
    }
}

/// Ranks every atom `⊤`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConstantTop;

impl AtomMetric for ConstantTop {
    fn name(&self) -> String {
        "constant_top".into()
    }

    fn level(&self, _: &Atom, _: &Message, _: &VerificationContext) -> Result<SecurityLevel, ContextError> {
        Ok(SecurityLevel::Top)
    }
}

/// Ranks an occurrence by its outermost key only. Peeling an outer layer
/// changes the rank, so this one is not full-invariant.
#[derive(Clone, Copy, Debug, Default)]
pub struct OutermostKey;

impl AtomMetric for OutermostKey {
    fn name(&self) -> String {
        "outermost_key".into()
    }

    fn level(&self, alpha: &Atom, m: &Message, ctx: &VerificationContext) -> Result<SecurityLevel, ContextError> {
        let mut l = SecurityLevel::Top;
        for stack in occurrences(m, &Subject::Atom(alpha.clone())) {
            let c = match stack.first() {
                Some(Message::Enc { key, .. }) => inverse_level(key, ctx)?.unwrap_or(SecurityLevel::Bottom),
                _ => SecurityLevel::Bottom,
            };
            l = l.meet(&c);
        }
        Ok(l)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeConfig {
    pub trials: usize,
    /// Sampled messages added to `K(I)` to form `M`.
    pub max_messages: usize,
    /// Composition depth, both for sampling `M` and for deriving `m`.
    pub depth: usize,
    /// Random compositions checked per trial, on top of the closure itself
    /// and every closure element wrapped once under each usable key.
    pub derived_per_trial: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            trials: 1000,
            max_messages: 3,
            depth: 2,
            derived_per_trial: 40,
            seed: 0x5EC2E7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub knowledge: Vec<Message>,
    pub derived: Message,
    pub atom: Atom,
    pub derived_level: SecurityLevel,
    pub knowledge_level: SecurityLevel,
}

/// Atoms to sample from: everything the protocol mentions, every key of the
/// context with its inverse, every principal identity.
pub fn probe_atoms(spec: &ProtocolSpec, ctx: &VerificationContext) -> Vec<Atom> {
    let mut atoms: std::collections::BTreeSet<Atom> =
        spec.steps.iter().flat_map(|s| s.message.atoms()).collect();
    for e in ctx.keys() {
        atoms.insert(e.key.clone());
        atoms.insert(e.inverse.clone());
    }
    atoms.extend(ctx.principals().iter().map(|p| Atom::identity(p)));
    atoms.into_iter().collect()
}

struct Sampler<'a> {
    rng: ChaCha8Rng,
    atoms: &'a [Atom],
    keys: Vec<Atom>,
    secrets: Vec<Atom>,
}

impl Sampler<'_> {
    fn message(&mut self, depth: usize) -> Message {
        let p: f64 = self.rng.gen();
        if depth == 0 || p < 0.25 {
            // Bias leaves towards leveled atoms so ciphertexts carry something to protect.
            if !self.secrets.is_empty() && self.rng.gen_bool(0.5) {
                return Message::Atom(self.secrets.choose(&mut self.rng).unwrap().clone());
            }
            return Message::Atom(self.atoms.choose(&mut self.rng).unwrap().clone());
        }
        if p < 0.5 {
            let n = self.rng.gen_range(2..=3);
            Message::concat((0..n).map(|_| self.message(depth - 1)).collect::<Vec<_>>())
        } else {
            let k = self.keys.choose(&mut self.rng).unwrap().clone();
            Message::enc(self.message(depth - 1), KeyTerm::Atom(k))
        }
    }
}

fn derived_sample(rng: &mut ChaCha8Rng, closure: &[Message], keys: &[Atom], depth: usize) -> Message {
    let p: f64 = rng.gen();
    if depth == 0 || p < 0.3 || (keys.is_empty() && p < 0.6) {
        return closure.choose(rng).unwrap().clone();
    }
    if p < 0.6 || keys.is_empty() {
        let n = rng.gen_range(2..=3);
        Message::concat((0..n).map(|_| derived_sample(rng, closure, keys, depth - 1)).collect::<Vec<_>>())
    } else {
        let k = keys.choose(rng).unwrap().clone();
        Message::enc(derived_sample(rng, closure, keys, depth - 1), KeyTerm::Atom(k))
    }
}

fn clearance(plain: &[Atom], ctx: &VerificationContext) -> SecurityLevel {
    plain
        .iter()
        .filter_map(|a| ctx.level_of(a).ok())
        .fold(SecurityLevel::Bottom, |acc, l| acc.join(&l).unwrap_or(acc))
}

/// Samples `M = K(I) ∪ {m₁..mₖ}`, derives messages from its closure and
/// returns every violation of the full-invariance implication.
pub fn probe_full_invariance(
    metric: &dyn AtomMetric,
    ctx: &VerificationContext,
    atoms: &[Atom],
    config: &ProbeConfig,
) -> Vec<Counterexample> {
    let keys: Vec<Atom> = atoms.iter().filter(|a| a.sort == Sort::Key).cloned().collect();
    let secrets: Vec<Atom> = atoms
        .iter()
        .filter(|a| a.sort != Sort::Identity && a.sort != Sort::Key && ctx.level_of(a).is_ok())
        .cloned()
        .collect();
    if atoms.is_empty() || keys.is_empty() {
        return Vec::new();
    }
    let mut sampler = Sampler {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        atoms,
        keys,
        secrets,
    };
    let mut found = Vec::new();
    for trial in 0..config.trials {
        let initial: Vec<Message> = ctx.intruder_knowledge().into_iter().map(Message::Atom).collect();
        let mut m_set = initial.clone();
        let k = sampler.rng.gen_range(1..=config.max_messages.max(1));
        for _ in 0..k {
            m_set.push(sampler.message(config.depth));
        }
        if sampler.rng.gen_bool(0.3) {
            let inv: Vec<Atom> = sampler.keys.iter().filter(|k| k.inverse).cloned().collect();
            if let Some(k) = inv.choose(&mut sampler.rng) {
                m_set.push(Message::Atom(k.clone()));
            }
        }
        m_set.sort();
        m_set.dedup();

        let mut ks = KnowledgeSet::from_messages(m_set.iter().cloned());
        ks.analyze(ctx);
        let closure: Vec<Message> = ks.messages().iter().cloned().collect();
        let plain: Vec<Atom> = ks.known_atoms(ctx).into_iter().collect();
        let usable: Vec<Atom> = sampler.keys.iter().filter(|k| plain.contains(k)).cloned().collect();
        let cl = clearance(&plain, ctx);

        let mut derived: Vec<Message> = closure.clone();
        for c in &closure {
            for k in &usable {
                derived.push(Message::enc(c.clone(), KeyTerm::Atom(k.clone())));
            }
        }
        for _ in 0..config.derived_per_trial {
            derived.push(derived_sample(&mut sampler.rng, &closure, &usable, config.depth));
        }
        derived.sort();
        derived.dedup();

        for m in derived {
            for alpha in m.atoms() {
                let Ok(alpha_level) = ctx.level_of(&alpha) else { continue };
                if cl.geq_provable(&alpha_level) {
                    continue;
                }
                let (Ok(lm), Ok(lset)) = (metric.level(&alpha, &m, ctx), metric.level_of_set(&alpha, &m_set, ctx))
                else {
                    continue;
                };
                if !lm.geq_provable(&lset) {
                    found.push(Counterexample {
                        trial,
                        knowledge: m_set.clone(),
                        derived: m.clone(),
                        atom: alpha,
                        derived_level: lm,
                        knowledge_level: lset,
                    });
                }
            }
        }
    }
    found
}
