//! Protocol specifications, generalized roles and encryption patterns.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::VerificationContext;
use crate::oracle::knowledge::decryption_key;
use crate::oracle::KnowledgeSet;
use crate::term::{unify, Atom, KeyTerm, Message, Session, Sort, Substitution, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("malformed specification: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub id: u32,
    pub sender: String,
    pub receiver: String,
    pub message: Message,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProtocolSpec {
    pub steps: Vec<Step>,
    /// Atoms generated fresh by each agent.
    pub fresh: BTreeMap<String, BTreeSet<Atom>>,
}

impl ProtocolSpec {
    pub fn validate(&self, ctx: &VerificationContext) -> Result<(), ProtocolError> {
        let mut last = None;
        for step in &self.steps {
            if let Some(prev) = last {
                if step.id <= prev {
                    return Err(ProtocolError::Malformed(format!(
                        "step ids must be strictly increasing ({} after {prev})",
                        step.id
                    )));
                }
            }
            last = Some(step.id);
            for who in [&step.sender, &step.receiver] {
                if !ctx.is_principal(who) {
                    return Err(ProtocolError::Malformed(format!(
                        "step {} references unknown principal {who}",
                        step.id
                    )));
                }
            }
            if step.sender == step.receiver {
                return Err(ProtocolError::Malformed(format!(
                    "step {} sends a message from {} to itself",
                    step.id, step.sender
                )));
            }
            if !step.message.is_ground() {
                return Err(ProtocolError::Malformed(format!(
                    "step {} contains variables",
                    step.id
                )));
            }
        }
        Ok(())
    }

    /// Participating agents, in context declaration order.
    pub fn agents(&self, ctx: &VerificationContext) -> Vec<String> {
        ctx.principals()
            .iter()
            .filter(|p| {
                self.steps
                    .iter()
                    .any(|s| &s.sender == *p || &s.receiver == *p)
            })
            .cloned()
            .collect()
    }

    fn is_fresh_for(&self, agent: &str, a: &Atom) -> bool {
        self.fresh
            .get(agent)
            .is_some_and(|set| set.iter().any(|f| f.same_value(a)))
    }
}

/// One receive/send rule `R⁻ / r⁺` of a generalized role. Either side may be ε.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleRule {
    pub received: Message,
    /// Principal the message claims to come from; the intruder delivers it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_from: Option<String>,
    pub sent: Message,
    /// Intended recipient; the intruder intercepts it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent_to: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralizedRole {
    pub agent: String,
    pub rules: Vec<RoleRule>,
    pub variables: Vec<Variable>,
}

impl GeneralizedRole {
    /// Concatenation of every message received up to and including rule `idx`.
    pub fn received_prefix(&self, idx: usize) -> Message {
        Message::concat(self.rules[..=idx].iter().map(|r| r.received.clone()))
    }

    /// Every variable must be received before it is sent.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let mut seen = BTreeSet::new();
        for (i, rule) in self.rules.iter().enumerate() {
            seen.extend(rule.received.vars());
            if let Some(v) = rule.sent.vars().into_iter().find(|v| !seen.contains(v)) {
                return Err(ProtocolError::Malformed(format!(
                    "role {}: variable {v} sent in rule {} before being received",
                    self.agent,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptionPattern {
    pub index: u32,
    pub term: Message,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Source {
    pub pattern: EncryptionPattern,
    pub unifier: Substitution,
}

const VAR_POOL: [&str; 7] = ["X", "Y", "Z", "T", "U", "V", "W"];

struct VarNamer {
    reserved: BTreeSet<String>,
    next: usize,
}

impl VarNamer {
    fn fresh(&mut self, sort: Sort) -> Variable {
        loop {
            let round = self.next / VAR_POOL.len();
            let base = VAR_POOL[self.next % VAR_POOL.len()];
            self.next += 1;
            let name = if round == 0 {
                base.to_string()
            } else {
                format!("{base}{round}")
            };
            if !self.reserved.contains(&name) {
                self.reserved.insert(name.clone());
                return Variable::new(&name, sort);
            }
        }
    }
}

/// Derives one generalized role per participating agent. In every received
/// message, each maximal subterm the agent can neither decrypt nor rebuild
/// becomes a fresh variable; fresh nonces of the agent carry the generic
/// session index.
pub fn extract_generalized_roles(
    spec: &ProtocolSpec,
    ctx: &VerificationContext,
) -> Result<Vec<GeneralizedRole>, ProtocolError> {
    spec.validate(ctx)?;
    let mut reserved: BTreeSet<String> = ctx.principals().iter().cloned().collect();
    for step in &spec.steps {
        reserved.extend(step.message.atoms().into_iter().map(|a| a.name));
    }
    let mut namer = VarNamer { reserved, next: 0 };
    spec.agents(ctx)
        .into_iter()
        .filter(|a| a != ctx.intruder())
        .map(|agent| RoleBuilder::new(spec, ctx, &agent).build(&mut namer))
        .collect()
}

struct RoleBuilder<'a> {
    spec: &'a ProtocolSpec,
    ctx: &'a VerificationContext,
    agent: String,
    knowledge: KnowledgeSet,
    learned: Vec<(Message, Variable)>,
}

impl<'a> RoleBuilder<'a> {
    fn new(spec: &'a ProtocolSpec, ctx: &'a VerificationContext, agent: &str) -> Self {
        let mut b = RoleBuilder {
            spec,
            ctx,
            agent: agent.to_string(),
            knowledge: KnowledgeSet::new(),
            learned: Vec::new(),
        };
        let initial: Vec<Atom> = ctx
            .knowledge_of(agent)
            .into_iter()
            .chain(spec.fresh.get(agent).into_iter().flatten().cloned())
            .collect();
        for a in initial {
            let a = b.localize(&a);
            b.knowledge.insert(Message::Atom(a));
        }
        b
    }

    fn localize(&self, a: &Atom) -> Atom {
        if a.sort == Sort::Nonce && self.spec.is_fresh_for(&self.agent, a) {
            a.with_session(Some(Session::Generic))
        } else {
            a.clone()
        }
    }

    fn learned_var(&self, m: &Message) -> Option<&Variable> {
        self.learned.iter().find(|(t, _)| t == m).map(|(_, v)| v)
    }

    fn build(mut self, namer: &mut VarNamer) -> Result<GeneralizedRole, ProtocolError> {
        let mut rules = Vec::new();
        let mut pending: Vec<Message> = Vec::new();
        let mut pending_from = None;
        for step in &self.spec.steps {
            if step.receiver == self.agent {
                let abstracted = self.abstract_received(&step.message, namer);
                self.knowledge.insert(abstracted.clone());
                pending.push(abstracted);
                pending_from.get_or_insert_with(|| step.sender.clone());
            }
            if step.sender == self.agent {
                let sent = self.translate(&step.message);
                if !self.knowledge.derives(&sent, self.ctx) {
                    return Err(ProtocolError::Malformed(format!(
                        "{} cannot produce {} at step {}",
                        self.agent, sent, step.id
                    )));
                }
                rules.push(RoleRule {
                    received: Message::concat(pending.drain(..)),
                    received_from: pending_from.take(),
                    sent,
                    sent_to: Some(step.receiver.clone()),
                });
            }
        }
        if !pending.is_empty() {
            rules.push(RoleRule {
                received: Message::concat(pending.drain(..)),
                received_from: pending_from.take(),
                sent: Message::Empty,
                sent_to: None,
            });
        }
        let role = GeneralizedRole {
            agent: self.agent.clone(),
            rules,
            variables: self.learned.iter().map(|(_, v)| v.clone()).collect(),
        };
        role.validate()?;
        Ok(role)
    }

    fn new_var(&mut self, original: &Message, sort: Sort, namer: &mut VarNamer) -> Message {
        let v = namer.fresh(sort);
        self.learned.push((original.clone(), v.clone()));
        Message::Var(v)
    }

    fn abstract_received(&mut self, t: &Message, namer: &mut VarNamer) -> Message {
        if let Some(v) = self.learned_var(t) {
            return Message::Var(v.clone());
        }
        match t {
            Message::Atom(a) => {
                let local = Message::Atom(self.localize(a));
                if self.knowledge.derives(&local, self.ctx) {
                    local
                } else {
                    self.new_var(t, a.sort, namer)
                }
            }
            Message::Concat(items) => {
                Message::concat(items.iter().map(|i| self.abstract_received(i, namer)).collect::<Vec<_>>())
            }
            Message::Enc { body, key } => {
                let key = self.translate_key(key);
                let opens = decryption_key(&key, self.ctx)
                    .is_some_and(|dk| self.knowledge.derives(&dk, self.ctx));
                if opens {
                    Message::enc(self.abstract_received(body, namer), key)
                } else {
                    let rebuilt = self.translate(t);
                    if self.knowledge.derives(&rebuilt, self.ctx) {
                        rebuilt
                    } else {
                        self.new_var(t, Sort::Any, namer)
                    }
                }
            }
            Message::Empty | Message::Var(_) => t.clone(),
        }
    }

    fn translate_key(&self, key: &KeyTerm) -> KeyTerm {
        let as_msg = key.to_message();
        match self.learned_var(&as_msg) {
            Some(v) if v.sort == Sort::Key => KeyTerm::Var(v.clone()),
            _ => match key {
                KeyTerm::Atom(a) => KeyTerm::Atom(self.localize(a)),
                KeyTerm::Var(_) => key.clone(),
            },
        }
    }

    /// Rewrites a message in the agent's vocabulary: learned subterms become
    /// their variables and the agent's fresh nonces get the session index.
    fn translate(&self, t: &Message) -> Message {
        if let Some(v) = self.learned_var(t) {
            return Message::Var(v.clone());
        }
        match t {
            Message::Atom(a) => Message::Atom(self.localize(a)),
            Message::Concat(items) => Message::concat(items.iter().map(|i| self.translate(i))),
            Message::Enc { body, key } => Message::enc(self.translate(body), self.translate_key(key)),
            Message::Empty | Message::Var(_) => t.clone(),
        }
    }
}

/// `M̃_p^G`: every top-level ciphertext component of every received and sent
/// message, in role order, receives before sends, renamed with consecutive
/// indices starting at 1. Nested ciphertexts stay inside their pattern.
pub fn encryption_patterns(roles: &[GeneralizedRole]) -> Vec<EncryptionPattern> {
    let mut out = Vec::new();
    let mut index = 1;
    for role in roles {
        for rule in &role.rules {
            for m in [&rule.received, &rule.sent] {
                for c in m.components().iter().filter(|c| c.is_enc()) {
                    out.push(EncryptionPattern {
                        index,
                        term: c.rename_with_index(index),
                    });
                    index += 1;
                }
            }
        }
    }
    out
}

/// All patterns unifiable with `m`, each with its most general unifier.
pub fn sources_of(m: &Message, patterns: &[EncryptionPattern]) -> Vec<Source> {
    patterns
        .iter()
        .filter_map(|p| {
            unify(&p.term, m).map(|unifier| Source {
                pattern: p.clone(),
                unifier,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_dsl;

    fn fixture() -> (ProtocolSpec, VerificationContext) {
        let doc = parse_dsl(include_str!("../examples/p.proto")).unwrap();
        (doc.spec, doc.context)
    }
    fn show(m: &Message) -> String {
        m.to_string()
    }

    #[test]
    fn roles_of_the_table_protocol() {
        let (spec, ctx) = fixture();
        let roles = extract_generalized_roles(&spec, &ctx).unwrap();
        let agents: Vec<&str> = roles.iter().map(|r| r.agent.as_str()).collect();
        assert_eq!(agents, ["A", "B", "S"]);
        let lines: Vec<Vec<(String, String)>> = roles
            .iter()
            .map(|r| r.rules.iter().map(|x| (show(&x.received), show(&x.sent))).collect())
            .collect();
        assert_rules(&lines);
        for r in &roles {
            r.validate().unwrap();
        }
    }

    fn assert_rules(lines: &[Vec<(String, String)>]) {
        let flat: Vec<String> = lines.iter().flatten().map(|(r, s)| format!("{r} => {s}")).collect();
        assert_eq!(
            flat,
            [
                "ε => {A.Na^i.S.B}ks",
                "{B.{S.X}ka.A.Na^i.S}ka => ε",
                "{B.A.S.Y}kb.{A.B.S.Z}kb => {B.Z.A.Y.S}ka",
                "{A.T.S.B}ks => {B.A.S.T}kb.{A.B.S.{S.sec}ka}kb",
            ]
        );
    }

    #[test]
    fn eight_patterns_and_their_sources() {
        let (spec, ctx) = fixture();
        let roles = extract_generalized_roles(&spec, &ctx).unwrap();
        let ps = encryption_patterns(&roles);
        assert_eq!(ps.len(), 8);
        assert_eq!(ps.iter().map(|p| p.index).collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
        let b = &roles[1];
        let found: Vec<u32> = sources_of(&b.rules[0].sent, &ps).iter().map(|s| s.pattern.index).collect();
        assert_eq!(found, [2, 5]);
        let s = &roles[2];
        let found: Vec<u32> =
            sources_of(&s.rules[0].sent.components()[0], &ps).iter().map(|s| s.pattern.index).collect();
        assert_eq!(found, [3, 7]);
    }

    #[test]
    fn role_invariants() {
        let (spec, ctx) = fixture();
        let roles = extract_generalized_roles(&spec, &ctx).unwrap();
        let all: Vec<&Variable> = roles.iter().flat_map(|r| r.variables.iter()).collect();
        let distinct: BTreeSet<&Variable> = all.iter().copied().collect();
        assert_eq!(all.len(), distinct.len());
        let ps = encryption_patterns(&roles);
        let encs = roles
            .iter()
            .flat_map(|r| r.rules.iter())
            .flat_map(|x| x.received.components().iter().chain(x.sent.components()))
            .filter(|c| c.is_enc())
            .count();
        assert_eq!(ps.len(), encs);
        for r in &roles {
            for rule in &r.rules {
                for c in rule.sent.components() {
                    assert!(!sources_of(c, &ps).is_empty(), "{c} has no source");
                }
            }
        }
    }

    #[test]
    fn sending_before_receiving_is_rejected() {
        let x = Variable::new("X", Sort::Any);
        let role = GeneralizedRole {
            agent: "A".into(),
            rules: vec![RoleRule { received: Message::Empty, received_from: None, sent: x.clone().into(), sent_to: None }],
            variables: vec![x],
        };
        assert!(role.validate().is_err());
    }
}
