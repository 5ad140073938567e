//! DEK and DEKAN interpretation-functions.
//!
//! Both rank each occurrence of the subject by its direct (innermost)
//! encryption key: the level of the key's inverse, plus for DEKAN the
//! identities and variables sitting next to the subject under that key.
//! Occurrences are combined with `⊓`; a plaintext occurrence is `⊥` and an
//! absent subject is `⊤`. Key slots are not occurrences.

use crate::context::{ContextError, VerificationContext};
use crate::lattice::SecurityLevel;
use crate::term::{KeyTerm, Message, Sort, Subject};

/// Every payload occurrence of `s`, each with its enclosing ciphertexts
/// listed outermost first.
pub(crate) fn occurrences<'a>(m: &'a Message, s: &Subject) -> Vec<Vec<&'a Message>> {
    fn walk<'a>(m: &'a Message, s: &Subject, stack: &mut Vec<&'a Message>, out: &mut Vec<Vec<&'a Message>>) {
        match m {
            Message::Empty => {}
            Message::Atom(_) | Message::Var(_) => {
                if s.matches(m) {
                    out.push(stack.clone());
                }
            }
            Message::Concat(items) => items.iter().for_each(|i| walk(i, s, stack, out)),
            Message::Enc { body, .. } => {
                stack.push(m);
                walk(body, s, stack, out);
                stack.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(m, s, &mut Vec::new(), &mut out);
    out
}

/// `⌜k^-1⌝` for the key slot, or `None` for a key variable.
pub(crate) fn inverse_level(
    key: &KeyTerm,
    ctx: &VerificationContext,
) -> Result<Option<SecurityLevel>, ContextError> {
    match key {
        KeyTerm::Atom(k) => {
            let inv = ctx
                .inverse_key(k)
                .map_err(|_| ContextError::UnassignedLevel(k.to_string()))?;
            ctx.level_of(&inv).map(Some)
        }
        KeyTerm::Var(_) => Ok(None),
    }
}

fn split_enc(m: &Message) -> (&Message, &KeyTerm) {
    match m {
        Message::Enc { body, key } => (body, key),
        _ => unreachable!("occurrence stacks only hold ciphertexts"),
    }
}

pub fn dek(s: &Subject, m: &Message, ctx: &VerificationContext) -> Result<SecurityLevel, ContextError> {
    aggregate(s, m, ctx, |_, _| None)
}

pub fn dekan(s: &Subject, m: &Message, ctx: &VerificationContext) -> Result<SecurityLevel, ContextError> {
    aggregate(s, m, ctx, |s, body| Some(neighbors(s, body)))
}

fn aggregate(
    s: &Subject,
    m: &Message,
    ctx: &VerificationContext,
    extra: impl Fn(&Subject, &Message) -> Option<SecurityLevel>,
) -> Result<SecurityLevel, ContextError> {
    let mut level = SecurityLevel::Top;
    for stack in occurrences(m, s) {
        let contribution = match stack.last() {
            None => SecurityLevel::Bottom,
            Some(enc) => {
                let (body, key) = split_enc(enc);
                match inverse_level(key, ctx)? {
                    None => SecurityLevel::Bottom,
                    Some(l) => match extra(s, body) {
                        Some(n) => l.meet(&n),
                        None => l,
                    },
                }
            }
        };
        level = level.meet(&contribution);
    }
    Ok(level)
}

/// Identities and variables that are direct siblings of the subject inside a
/// ciphertext body.
fn neighbors(s: &Subject, body: &Message) -> SecurityLevel {
    let mut known = Vec::new();
    let mut unknowns = Vec::new();
    for c in body.components() {
        if s.matches(c) {
            continue;
        }
        match c {
            Message::Atom(a) if a.sort == Sort::Identity => known.push(a.name.clone()),
            Message::Var(v) => unknowns.push(v.clone()),
            _ => {}
        }
    }
    SecurityLevel::with_unknowns(known, unknowns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{Atom, Variable};

    fn ctx() -> VerificationContext {
        let mut c = VerificationContext::new(["A", "B", "C", "S"], "I");
        c.add_public_key("ka", "A");
        c.add_public_key("kb", "B");
        c.add_shared_key("kab", &["A", "B"]);
        c
    }
    fn id(n: &str) -> Message {
        Atom::identity(n).into()
    }
    fn key(n: &str, o: &str) -> KeyTerm {
        KeyTerm::Atom(Atom::key(n, Some(o)))
    }
    fn var(n: &str, s: Sort) -> Variable {
        Variable::new(n, s)
    }

    #[test]
    fn dek_and_dekan_direct_key_example() {
        let alpha = Atom::secret("alpha");
        let m = Message::enc(
            Message::concat([alpha.clone().into(), id("C"), var("X", Sort::Any).into()]),
            KeyTerm::Atom(Atom::key("kab", None)),
        );
        assert_eq!(dek(&alpha.clone().into(), &m, &ctx()), Ok(SecurityLevel::finite(["A", "B"])));
        assert_eq!(
            dekan(&alpha.into(), &m, &ctx()),
            Ok(SecurityLevel::with_unknowns(["A", "B", "C"], [var("X", Sort::Any)]))
        );
    }

    fn b_received() -> Message {
        Message::concat([
            Message::enc(
                Message::concat([id("B"), id("A"), id("S"), var("Y", Sort::Nonce).into()]),
                key("kb", "B"),
            ),
            Message::enc(
                Message::concat([id("A"), id("B"), id("S"), var("Z", Sort::Any).into()]),
                key("kb", "B"),
            ),
        ])
    }

    fn b_sent() -> Message {
        Message::enc(
            Message::concat([
                id("B"),
                var("Z", Sort::Any).into(),
                id("A"),
                var("Y", Sort::Nonce).into(),
                id("S"),
            ]),
            key("ka", "A"),
        )
    }

    #[test]
    fn dek_role_b() {
        let y: Subject = var("Y", Sort::Nonce).into();
        assert_eq!(dek(&y, &b_received(), &ctx()), Ok(SecurityLevel::finite(["B"])));
        assert_eq!(dek(&y, &b_sent(), &ctx()), Ok(SecurityLevel::finite(["A"])));
        let second = &b_received().components()[1].clone();
        assert_eq!(dek(&y, second, &ctx()), Ok(SecurityLevel::Top));
    }

    #[test]
    fn dekan_role_b() {
        let y: Subject = var("Y", Sort::Nonce).into();
        assert_eq!(dekan(&y, &b_received(), &ctx()), Ok(SecurityLevel::finite(["A", "B", "S"])));
        assert_eq!(
            dekan(&y, &b_sent(), &ctx()),
            Ok(SecurityLevel::with_unknowns(["A", "B", "S"], [var("Z", Sort::Any)]))
        );
        assert_eq!(dekan(&y, &Message::Empty, &ctx()), Ok(SecurityLevel::Top));
    }

    #[test]
    fn plaintext_is_bottom() {
        let a: Subject = Atom::secret("alpha").into();
        assert_eq!(dek(&a, &a.to_message(), &ctx()), Ok(SecurityLevel::Bottom));
        assert_eq!(dekan(&a, &a.to_message(), &ctx()), Ok(SecurityLevel::Bottom));
    }

    #[test]
    fn unknown_key_is_an_error() {
        let a: Subject = Atom::secret("alpha").into();
        let m = Message::enc(a.to_message(), KeyTerm::Atom(Atom::key("kx", None)));
        assert!(matches!(dek(&a, &m, &ctx()), Err(ContextError::UnassignedLevel(_))));
    }
}
