//! Bounded-session attack search. Each generalized role is instantiated up
//! to `sessions` times; the intruder delivers every received message, built
//! either from ciphertexts it holds or by composing with keys it holds, with
//! variables drawn from atoms and ciphertexts of its current closure. A trace
//! is returned as soon as the secret becomes derivable.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::context::VerificationContext;
use crate::oracle::KnowledgeSet;
use crate::term::{unify, Atom, KeyTerm, Message, Session, Substitution, Variable};
use crate::protocol::GeneralizedRole;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("search budget of {0} nodes exceeded")]
    SearchBudgetExceeded(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchConfig {
    pub sessions: u32,
    pub node_cap: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            sessions: 2,
            node_cap: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackStep {
    pub session: u32,
    pub role: String,
    /// 1-based rule index.
    pub rule: usize,
    pub received: Message,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub received_from: Option<String>,
    pub sent: Message,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sent_to: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackTrace {
    /// What the intruder starts with, including its own fresh nonce.
    pub initial_knowledge: Vec<Message>,
    pub interleaving: Vec<AttackStep>,
    pub leaked: Atom,
}

impl AttackTrace {
    /// One line per message: `I(S) -> B : ...` for deliveries and
    /// `B -> I(A) : ...` for interceptions.
    pub fn narration(&self, intruder: &str) -> String {
        let mut out = String::new();
        for s in &self.interleaving {
            let tag = format!("[{}#{} rule {}]", s.role, s.session, s.rule);
            if !s.received.is_empty() {
                let from = s.received_from.as_deref().unwrap_or("?");
                out.push_str(&format!("{tag} {intruder}({from}) -> {} : {}\n", s.role, s.received));
            }
            if !s.sent.is_empty() {
                let to = s.sent_to.as_deref().unwrap_or("?");
                out.push_str(&format!("{tag} {} -> {intruder}({to}) : {}\n", s.role, s.sent));
            }
        }
        out.push_str(&format!("{intruder} derives {}\n", self.leaked));
        out
    }
}

/// The nonce the intruder generates for itself.
pub fn intruder_nonce(ctx: &VerificationContext) -> Atom {
    Atom::nonce(&format!("N_{}", ctx.intruder()))
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
struct Instance {
    role: usize,
    session: u32,
    next: usize,
    sigma: BTreeMap<Variable, Message>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    knowledge: BTreeSet<Message>,
    instances: Vec<Instance>,
}

struct Search<'a> {
    roles: Vec<GeneralizedRole>,
    ctx: &'a VerificationContext,
    secret: &'a Atom,
    sessions: u32,
    cap: usize,
    nodes: usize,
    seen: HashSet<(BTreeSet<Message>, Vec<Instance>)>,
    initial: Vec<Message>,
}

fn session_atom(a: &Atom, session: u32) -> Atom {
    if a.session == Some(Session::Generic) {
        a.with_session(Some(Session::Run(session)))
    } else {
        a.clone()
    }
}

fn instantiate_session(m: &Message, session: u32) -> Message {
    match m {
        Message::Empty | Message::Var(_) => m.clone(),
        Message::Atom(a) => Message::Atom(session_atom(a, session)),
        Message::Concat(items) => Message::concat(items.iter().map(|i| instantiate_session(i, session))),
        Message::Enc { body, key } => Message::enc(
            instantiate_session(body, session),
            match key {
                KeyTerm::Atom(a) => KeyTerm::Atom(session_atom(a, session)),
                KeyTerm::Var(_) => key.clone(),
            },
        ),
    }
}

fn to_subst(sigma: &BTreeMap<Variable, Message>) -> Substitution {
    Substitution::from_pairs(sigma.iter().map(|(v, m)| (v.clone(), m.clone())))
        .expect("bindings are ground and sort-checked")
}

impl Search<'_> {
    fn tick(&mut self) -> Result<(), OracleError> {
        self.nodes += 1;
        if self.nodes > self.cap {
            Err(OracleError::SearchBudgetExceeded(self.cap))
        } else {
            Ok(())
        }
    }

    /// Candidate values for an unbound variable: plain atoms and ciphertexts
    /// of the closure, sort permitting.
    fn domain(&self, v: &Variable, closure: &KnowledgeSet) -> Vec<Message> {
        closure
            .messages()
            .iter()
            .filter(|m| matches!(m, Message::Atom(_) | Message::Enc { .. }) && v.accepts(m))
            .cloned()
            .collect()
    }

    /// All extensions of `sigma` under which the intruder can produce `pattern`.
    fn produce(
        &self,
        pattern: &Message,
        sigma: &BTreeMap<Variable, Message>,
        closure: &mut KnowledgeSet,
    ) -> Vec<BTreeMap<Variable, Message>> {
        let current = pattern.apply(&to_subst(sigma));
        if current.is_ground() {
            return if closure.derives(&current, self.ctx) {
                vec![sigma.clone()]
            } else {
                Vec::new()
            };
        }
        let mut out: Vec<BTreeMap<Variable, Message>> = Vec::new();
        match &current {
            Message::Var(v) => {
                for val in self.domain(v, closure) {
                    let mut s = sigma.clone();
                    s.insert(v.clone(), val);
                    out.push(s);
                }
            }
            Message::Concat(items) => {
                let mut partial = vec![sigma.clone()];
                for item in items {
                    let mut next = Vec::new();
                    for s in &partial {
                        next.extend(self.produce(item, s, closure));
                    }
                    next.sort();
                    next.dedup();
                    partial = next;
                    if partial.is_empty() {
                        break;
                    }
                }
                out = partial;
            }
            Message::Enc { body, key } => {
                // Replay a ciphertext the intruder holds.
                let held: Vec<Message> = closure.messages().iter().filter(|m| m.is_enc()).cloned().collect();
                for c in held {
                    if let Some(u) = unify(&current, &c) {
                        let mut s = sigma.clone();
                        let mut ok = true;
                        for (v, t) in u.iter() {
                            if !t.is_ground() {
                                ok = false;
                                break;
                            }
                            s.insert(v.clone(), t.clone());
                        }
                        if ok {
                            out.push(s);
                        }
                    }
                }
                // Or encrypt a composed body under a held key.
                for s in self.produce(&key.to_message(), sigma, closure) {
                    out.extend(self.produce(body, &s, closure));
                }
            }
            Message::Empty | Message::Atom(_) => {}
        }
        out.sort();
        out.dedup();
        out
    }

    fn dfs(&mut self, state: State, trace: &mut Vec<AttackStep>) -> Result<Option<AttackTrace>, OracleError> {
        self.tick()?;
        let mut closure = KnowledgeSet::from_messages(state.knowledge.iter().cloned());
        closure.analyze(self.ctx);
        if closure.derives(&Message::Atom(self.secret.clone()), self.ctx) {
            return Ok(Some(AttackTrace {
                initial_knowledge: self.initial.clone(),
                interleaving: trace.clone(),
                leaked: self.secret.clone(),
            }));
        }
        let key = (closure.messages().clone(), state.instances.clone());
        if !self.seen.insert(key) {
            return Ok(None);
        }
        for (ri, role) in self.roles.clone().iter().enumerate() {
            // Symmetry: only the lowest idle session of a role may start.
            let mut started_fresh = false;
            for session in 1..=self.sessions {
                let pos = state.instances.iter().position(|i| i.role == ri && i.session == session);
                let inst = match pos {
                    Some(p) => state.instances[p].clone(),
                    None => {
                        if started_fresh {
                            continue;
                        }
                        started_fresh = true;
                        Instance {
                            role: ri,
                            session,
                            next: 0,
                            sigma: BTreeMap::new(),
                        }
                    }
                };
                if inst.next >= role.rules.len() {
                    continue;
                }
                let rule = &role.rules[inst.next];
                let last = inst.next + 1 == role.rules.len();
                let recv = instantiate_session(&rule.received, session);
                let send = instantiate_session(&rule.sent, session);
                if last && send.is_empty() {
                    continue;
                }
                for sigma in self.produce(&recv, &inst.sigma, &mut closure) {
                    let subst = to_subst(&sigma);
                    let sent = send.apply(&subst);
                    if !sent.is_ground() {
                        continue;
                    }
                    if last && closure.derives(&sent, self.ctx) {
                        continue;
                    }
                    let mut next = state.clone();
                    let moved = Instance {
                        role: ri,
                        session,
                        next: inst.next + 1,
                        sigma: sigma.clone(),
                    };
                    match pos {
                        Some(p) => next.instances[p] = moved,
                        None => {
                            next.instances.push(moved);
                            next.instances.sort();
                        }
                    }
                    next.knowledge = closure.messages().clone();
                    if !sent.is_empty() {
                        next.knowledge.insert(sent.clone());
                    }
                    trace.push(AttackStep {
                        session,
                        role: role.agent.clone(),
                        rule: inst.next + 1,
                        received: recv.apply(&subst),
                        received_from: rule.received_from.clone(),
                        sent,
                        sent_to: rule.sent_to.clone(),
                    });
                    if let Some(t) = self.dfs(next, trace)? {
                        return Ok(Some(t));
                    }
                    trace.pop();
                }
            }
        }
        Ok(None)
    }
}

/// Depth-first search over interleavings of at most `sessions` runs of each
/// role. Returns the first trace that leaks `secret`.
pub fn bounded_attack_search(
    roles: &[GeneralizedRole],
    ctx: &VerificationContext,
    secret: &Atom,
    config: &SearchConfig,
) -> Result<Option<AttackTrace>, OracleError> {
    let mut initial: Vec<Message> = ctx.intruder_knowledge().into_iter().map(Message::Atom).collect();
    initial.push(Message::Atom(intruder_nonce(ctx)));
    initial.sort();
    let mut search = Search {
        roles: roles.to_vec(),
        ctx,
        secret,
        sessions: config.sessions,
        cap: config.node_cap,
        nodes: 0,
        seen: HashSet::new(),
        initial: initial.clone(),
    };
    let state = State {
        knowledge: initial.into_iter().collect(),
        instances: Vec::new(),
    };
    search.dfs(state, &mut Vec::new())
}

/// Replays a trace: every delivered message must be derivable from what the
/// intruder held just before, and the leaked atom from the final knowledge.
pub fn replay_is_consistent(trace: &AttackTrace, ctx: &VerificationContext) -> bool {
    let mut k = KnowledgeSet::from_messages(trace.initial_knowledge.iter().cloned());
    for step in &trace.interleaving {
        if !k.derives(&step.received, ctx) {
            return false;
        }
        k.insert(step.sent.clone());
    }
    k.derives(&Message::Atom(trace.leaked.clone()), ctx)
}
