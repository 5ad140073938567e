//! The verification context: principals, intruder, key table, the partial
//! level assignment `⌜·⌝` and per-agent initial knowledge.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::lattice::SecurityLevel;
use crate::oracle::KnowledgeSet;
use crate::term::{Atom, Message, Sort};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("no security level assigned to {0}")]
    UnassignedLevel(String),
    #[error("{0} is not a key of the context")]
    UnknownKey(String),
    #[error("unknown principal {0}")]
    UnknownPrincipal(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyEntry {
    pub key: Atom,
    pub inverse: Atom,
    pub key_level: SecurityLevel,
    pub inverse_level: SecurityLevel,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationContext {
    principals: Vec<String>,
    intruder: String,
    keys: Vec<KeyEntry>,
    atom_levels: BTreeMap<String, SecurityLevel>,
    knowledge: BTreeMap<String, BTreeSet<Atom>>,
}

impl VerificationContext {
    /// The intruder is added to the principal set if missing.
    pub fn new<I, S>(principals: I, intruder: &str) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut principals: Vec<String> = principals.into_iter().map(Into::into).collect();
        if !principals.iter().any(|p| p == intruder) {
            principals.push(intruder.to_string());
        }
        VerificationContext {
            principals,
            intruder: intruder.to_string(),
            keys: Vec::new(),
            atom_levels: BTreeMap::new(),
            knowledge: BTreeMap::new(),
        }
    }

    /// Declares a key pair owned by `owner`: `⌜k⌝ = ⊥` and `⌜k^-1⌝ = {owner}`.
    pub fn add_public_key(&mut self, name: &str, owner: &str) -> Atom {
        let key = Atom::key(name, Some(owner));
        self.keys.push(KeyEntry {
            inverse: key.inverted(),
            key: key.clone(),
            key_level: SecurityLevel::Bottom,
            inverse_level: SecurityLevel::finite([owner]),
        });
        key
    }

    /// Declares a symmetric key known to `holders`; it is its own inverse.
    pub fn add_shared_key(&mut self, name: &str, holders: &[&str]) -> Atom {
        let key = Atom::key(name, None);
        let level = SecurityLevel::finite(holders.iter().copied());
        self.keys.push(KeyEntry {
            key: key.clone(),
            inverse: key.clone(),
            key_level: level.clone(),
            inverse_level: level,
        });
        key
    }

    pub fn set_level(&mut self, atom_name: &str, level: SecurityLevel) {
        self.atom_levels.insert(atom_name.to_string(), level);
    }

    pub fn set_knowledge<I: IntoIterator<Item = Atom>>(&mut self, agent: &str, atoms: I) {
        self.knowledge
            .insert(agent.to_string(), atoms.into_iter().collect());
    }

    pub fn add_knowledge<I: IntoIterator<Item = Atom>>(&mut self, agent: &str, atoms: I) {
        self.knowledge
            .entry(agent.to_string())
            .or_default()
            .extend(atoms);
    }

    pub fn principals(&self) -> &[String] {
        &self.principals
    }

    pub fn is_principal(&self, name: &str) -> bool {
        self.principals.iter().any(|p| p == name)
    }

    pub fn intruder(&self) -> &str {
        &self.intruder
    }

    pub fn keys(&self) -> &[KeyEntry] {
        &self.keys
    }

    pub fn levels(&self) -> &BTreeMap<String, SecurityLevel> {
        &self.atom_levels
    }

    pub fn knowledge_of(&self, agent: &str) -> BTreeSet<Atom> {
        self.knowledge.get(agent).cloned().unwrap_or_default()
    }

    pub fn intruder_knowledge(&self) -> BTreeSet<Atom> {
        self.knowledge_of(&self.intruder)
    }

    pub fn knowledge(&self) -> &BTreeMap<String, BTreeSet<Atom>> {
        &self.knowledge
    }

    fn key_entry(&self, k: &Atom) -> Option<(&KeyEntry, bool)> {
        self.keys.iter().find_map(|e| {
            if e.key.same_value(k) {
                Some((e, false))
            } else if e.inverse.same_value(k) {
                Some((e, true))
            } else {
                None
            }
        })
    }

    /// `⌜a⌝`. Identities are public; keys are looked up in the key table;
    /// everything else must have been assigned explicitly.
    pub fn level_of(&self, a: &Atom) -> Result<SecurityLevel, ContextError> {
        match a.sort {
            Sort::Identity => Ok(SecurityLevel::Bottom),
            Sort::Key => match self.key_entry(a) {
                Some((e, false)) => Ok(e.key_level.clone()),
                Some((e, true)) => Ok(e.inverse_level.clone()),
                None => self
                    .atom_levels
                    .get(&a.name)
                    .cloned()
                    .ok_or_else(|| ContextError::UnassignedLevel(a.to_string())),
            },
            _ => self
                .atom_levels
                .get(&a.name)
                .cloned()
                .ok_or_else(|| ContextError::UnassignedLevel(a.to_string())),
        }
    }

    /// `k^-1` from the key table.
    pub fn inverse_key(&self, k: &Atom) -> Result<Atom, ContextError> {
        if k.sort != Sort::Key {
            return Err(ContextError::UnknownKey(k.to_string()));
        }
        match self.key_entry(k) {
            Some((e, false)) => Ok(e.inverse.with_session(k.session)),
            Some((e, true)) => Ok(e.key.with_session(k.session)),
            None => Err(ContextError::UnknownKey(k.to_string())),
        }
    }

    /// Whether `agent` can build `m` from its initial knowledge by pairing,
    /// unpairing, encryption, and decryption with known inverse keys.
    pub fn agent_can_derive(&self, agent: &str, m: &Message) -> bool {
        let mut k = KnowledgeSet::from_messages(self.knowledge_of(agent).into_iter().map(Message::Atom));
        k.derives(m, self)
    }
}
