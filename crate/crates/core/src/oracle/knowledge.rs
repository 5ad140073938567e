use std::collections::BTreeSet;

use crate::context::VerificationContext;
use crate::term::{KeyTerm, Message};

/// Intruder (or agent) knowledge. Once analyzed, the set is closed under
/// unpairing and under decryption with derivable inverse keys.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeSet {
    messages: BTreeSet<Message>,
    analyzed: bool,
}

impl KnowledgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_messages<I: IntoIterator<Item = Message>>(messages: I) -> Self {
        KnowledgeSet {
            messages: messages.into_iter().filter(|m| !m.is_empty()).collect(),
            analyzed: false,
        }
    }

    pub fn insert(&mut self, m: Message) -> bool {
        if m.is_empty() {
            return false;
        }
        let fresh = self.messages.insert(m);
        if fresh {
            self.analyzed = false;
        }
        fresh
    }

    pub fn messages(&self) -> &BTreeSet<Message> {
        &self.messages
    }

    pub fn contains(&self, m: &Message) -> bool {
        self.messages.contains(m)
    }

    pub fn is_analyzed(&self) -> bool {
        self.analyzed
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Saturates under unpairing and decryption. Every added message is a
    /// strict subterm of an existing one, so this terminates.
    pub fn analyze(&mut self, ctx: &VerificationContext) {
        if self.analyzed {
            return;
        }
        loop {
            let mut new = Vec::new();
            for m in &self.messages {
                match m {
                    Message::Concat(items) => {
                        new.extend(items.iter().filter(|i| !self.messages.contains(i)).cloned());
                    }
                    Message::Enc { body, key } => {
                        if !self.messages.contains(body) {
                            if let Some(dk) = decryption_key(key, ctx) {
                                if self.can_synthesize(&dk) {
                                    new.push((**body).clone());
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
            if new.is_empty() {
                break;
            }
            self.messages.extend(new);
        }
        self.analyzed = true;
    }

    /// Composition over the current set: verbatim membership, pairing and
    /// encryption with a synthesizable key.
    pub fn can_synthesize(&self, target: &Message) -> bool {
        if self.messages.contains(target) {
            return true;
        }
        match target {
            Message::Empty => true,
            Message::Atom(_) | Message::Var(_) => false,
            Message::Concat(items) => items.iter().all(|i| self.can_synthesize(i)),
            Message::Enc { body, key } => {
                self.can_synthesize(&key.to_message()) && self.can_synthesize(body)
            }
        }
    }

    /// `M ⊨ target`.
    pub fn derives(&mut self, target: &Message, ctx: &VerificationContext) -> bool {
        self.analyze(ctx);
        self.can_synthesize(target)
    }

    /// Atoms available in plain form after analysis.
    pub fn known_atoms(&mut self, ctx: &VerificationContext) -> BTreeSet<crate::term::Atom> {
        self.analyze(ctx);
        self.messages
            .iter()
            .filter_map(|m| match m {
                Message::Atom(a) => Some(a.clone()),
                _ => None,
            })
            .collect()
    }
}

/// The key that opens a ciphertext under `key`.
pub(crate) fn decryption_key(key: &KeyTerm, ctx: &VerificationContext) -> Option<Message> {
    match key {
        KeyTerm::Atom(a) => ctx.inverse_key(a).ok().map(Message::Atom),
        KeyTerm::Var(v) => Some(Message::Var(v.inverted())),
    }
}

/// Decides whether `target` is derivable from the ground set `m`.
pub fn derives<'a, I>(m: I, target: &Message, ctx: &VerificationContext) -> bool
where
    I: IntoIterator<Item = &'a Message>,
{
    KnowledgeSet::from_messages(m.into_iter().cloned()).derives(target, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{Atom, Variable, Sort};

    fn ctx() -> VerificationContext {
        let mut c = VerificationContext::new(["A", "B"], "I");
        c.add_public_key("ka", "A");
        c.add_shared_key("kab", &["A", "B"]);
        c
    }
    fn enc(b: Message, k: Atom) -> Message {
        Message::enc(b, KeyTerm::Atom(k))
    }

    #[test]
    fn decrypts_only_with_the_inverse() {
        let ka = Atom::key("ka", Some("A"));
        let n: Message = Atom::nonce("N").into();
        let c = enc(n.clone(), ka.clone());
        assert!(!derives([&c, &ka.clone().into()], &n, &ctx()));
        assert!(derives([&c, &ka.inverted().into()], &n, &ctx()));
        let kab = Atom::key("kab", None);
        assert!(derives([&enc(n.clone(), kab.clone()), &kab.into()], &n, &ctx()));
    }

    #[test]
    fn nested_layers_open_in_sequence() {
        let ka = Atom::key("ka", Some("A"));
        let kab = Atom::key("kab", None);
        let n: Message = Atom::nonce("N").into();
        let inner = enc(Message::concat([n.clone(), ka.inverted().into()]), kab.clone());
        let outer = enc(Message::concat([Atom::identity("A").into(), inner]), ka.clone());
        let mut k = KnowledgeSet::from_messages([outer.clone(), kab.clone().into()]);
        assert!(!k.derives(&n, &ctx()));
        k.insert(ka.inverted().into());
        assert!(!k.is_analyzed());
        assert!(k.derives(&n, &ctx()));
        // Pairing and re-encryption of what is known.
        let built = enc(Message::concat([n.clone(), n]), kab.clone());
        assert!(k.derives(&built, &ctx()));
        assert!(!k.derives(&enc(Atom::identity("A").into(), ka), &ctx()));
        assert!(k.derives(&outer, &ctx()));
    }

    #[test]
    fn variables_and_empty() {
        let mut k = KnowledgeSet::new();
        assert!(!k.insert(Message::Empty));
        assert!(k.derives(&Message::Empty, &ctx()));
        assert!(!k.derives(&Variable::new("X", Sort::Any).into(), &ctx()));
        assert!(k.is_empty());
    }
}
