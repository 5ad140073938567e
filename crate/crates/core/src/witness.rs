//! `F_MAX^IK`, its derivative form `F′` (the upper bound of the
//! witness-function) and the lower bound `Υ` computed from the encryption
//! patterns that unify with a sent message.

use serde::Serialize;
use thiserror::Error;

use crate::context::{ContextError, VerificationContext};
use crate::interp::{inverse_level, occurrences};
use crate::lattice::SecurityLevel;
use crate::protocol::{sources_of, EncryptionPattern};
use crate::term::{Atom, Message, Sort, Subject, Substitution, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WitnessError {
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("no encryption pattern unifies with {component}")]
    NoSource { component: String },
}

/// One term of the meet computed by the lower bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Contribution {
    pub component: String,
    /// `None` when the component is ground and ranked directly.
    pub pattern: Option<u32>,
    pub unifier: Option<String>,
    /// The term `F′` was applied to.
    pub evaluated: String,
    pub level: SecurityLevel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelWithProvenance {
    pub level: SecurityLevel,
    pub sources: Vec<Contribution>,
}

/// `F_MAX^IK(α, m)`. Per occurrence, the innermost enclosing key whose
/// inverse level dominates `⌜α⌝` is the protective key; the occurrence is
/// ranked by that inverse level met with every identity inside the
/// protective ciphertext. Unprotected occurrences rank `⊥`. For a variable
/// subject `⌜α⌝` is taken as `⊥`, so its direct key always protects.
pub fn f_max_ik(
    s: &Subject,
    m: &Message,
    ctx: &VerificationContext,
) -> Result<SecurityLevel, ContextError> {
    let occ = occurrences(m, s);
    if occ.is_empty() {
        return Ok(SecurityLevel::Top);
    }
    let alpha_level = match s {
        Subject::Atom(a) => ctx.level_of(a)?,
        Subject::Var(_) => SecurityLevel::Bottom,
    };
    let mut level = SecurityLevel::Top;
    for stack in occ {
        let mut contribution = SecurityLevel::Bottom;
        for enc in stack.iter().rev() {
            let Message::Enc { body, key } = enc else {
                unreachable!()
            };
            if let Some(l) = inverse_level(key, ctx)? {
                if l.geq_provable(&alpha_level) {
                    contribution = l.meet(&identities_within(body, s));
                    break;
                }
            }
        }
        level = level.meet(&contribution);
    }
    Ok(level)
}

fn identities_within(body: &Message, s: &Subject) -> SecurityLevel {
    SecurityLevel::finite(
        body.atoms()
            .into_iter()
            .filter(|a| a.sort == Sort::Identity && !matches!(s, Subject::Atom(x) if x == a))
            .map(|a| a.name),
    )
}

/// `F′(α, m)`: `F(α, ∂m)` for an atom, `F(X, ∂[X]m)` for a variable `X`
/// of `m`, `⊤` when the subject is absent.
pub fn f_prime(
    s: &Subject,
    m: &Message,
    ctx: &VerificationContext,
) -> Result<SecurityLevel, ContextError> {
    match s {
        Subject::Atom(a) => {
            let d = m.derive();
            if d.atoms().contains(a) {
                f_max_ik(s, &d, ctx)
            } else {
                Ok(SecurityLevel::Top)
            }
        }
        Subject::Var(x) => {
            if m.contains_var(x) {
                f_max_ik(s, &m.derive_keep(x), ctx)
            } else {
                Ok(SecurityLevel::Top)
            }
        }
    }
}

/// `F′(α, mσ)` for a run `σ`: the atom clause when `α` survives derivation
/// of `m`, otherwise the variable clause for every `X` with `Xσ = α`.
/// The run itself only selects which variables instantiate `α`.
pub fn f_prime_instance(
    alpha: &Atom,
    m: &Message,
    sigma: &Substitution,
    ctx: &VerificationContext,
) -> Result<SecurityLevel, ContextError> {
    let d = m.derive();
    if d.atoms().contains(alpha) {
        return f_max_ik(&Subject::Atom(alpha.clone()), &d, ctx);
    }
    let target = Message::Atom(alpha.clone());
    let mut level = SecurityLevel::Top;
    for x in m.vars() {
        if Message::Var(x.clone()).apply(sigma) == target {
            level = level.meet(&f_max_ik(&Subject::Var(x.clone()), &m.derive_keep(&x), ctx)?);
        }
    }
    Ok(level)
}

fn payload_vars(m: &Message, out: &mut Vec<Variable>) {
    match m {
        Message::Var(v) => {
            if !out.contains(v) {
                out.push(v.clone())
            }
        }
        Message::Concat(items) => items.iter().for_each(|i| payload_vars(i, out)),
        Message::Enc { body, .. } => payload_vars(body, out),
        Message::Empty | Message::Atom(_) => {}
    }
}

/// Applies `σ` to the pattern everywhere except at `keep`.
fn static_neighborhood(pattern: &Message, sigma: &Substitution, keep: &Variable) -> Message {
    let mut pruned = Substitution::new();
    for (v, t) in sigma.iter() {
        if v != keep && !t.contains_var(keep) {
            // Re-inserting a subset of an idempotent substitution cannot fail.
            pruned.insert(v.clone(), t.clone()).expect("subset of a valid unifier");
        }
    }
    pattern.apply(&pruned)
}

/// `Υ(α, m)`: splits `m` into top-level components and meets their
/// contributions. A ground component is ranked directly with `F`; a
/// component without `α` contributes `⊤`; otherwise every unifiable
/// pattern contributes `F′` of its static neighborhood, once per pattern
/// position whose variable is instantiated to `α`.
pub fn lower_bound(
    s: &Subject,
    m: &Message,
    patterns: &[EncryptionPattern],
    ctx: &VerificationContext,
) -> Result<LevelWithProvenance, WitnessError> {
    let mut level = SecurityLevel::Top;
    let mut sources = Vec::new();
    let alpha = s.to_message();
    for c in m.components() {
        if !c.contains_subject(s) {
            continue;
        }
        if c.is_ground() {
            let l = f_max_ik(s, c, ctx)?;
            sources.push(Contribution {
                component: c.to_string(),
                pattern: None,
                unifier: None,
                evaluated: c.to_string(),
                level: l.clone(),
            });
            level = level.meet(&l);
            continue;
        }
        if !c.is_enc() {
            // The subject travels in clear.
            sources.push(Contribution {
                component: c.to_string(),
                pattern: None,
                unifier: None,
                evaluated: c.to_string(),
                level: SecurityLevel::Bottom,
            });
            level = SecurityLevel::Bottom;
            continue;
        }
        let found = sources_of(c, patterns);
        if found.is_empty() {
            return Err(WitnessError::NoSource {
                component: c.to_string(),
            });
        }
        for src in found {
            let image = alpha.apply(&src.unifier);
            let mut vars = Vec::new();
            payload_vars(&src.pattern.term, &mut vars);
            let positions: Vec<Variable> = vars
                .into_iter()
                .filter(|v| Message::Var(v.clone()).apply(&src.unifier) == image)
                .collect();
            if positions.is_empty() {
                // α is absorbed into a compound subterm of the pattern.
                sources.push(Contribution {
                    component: c.to_string(),
                    pattern: Some(src.pattern.index),
                    unifier: Some(src.unifier.to_string()),
                    evaluated: src.pattern.term.apply(&src.unifier).to_string(),
                    level: SecurityLevel::Top,
                });
                continue;
            }
            for v in positions {
                let hood = static_neighborhood(&src.pattern.term, &src.unifier, &v);
                let l = f_prime(&Subject::Var(v.clone()), &hood, ctx)?;
                sources.push(Contribution {
                    component: c.to_string(),
                    pattern: Some(src.pattern.index),
                    unifier: Some(src.unifier.to_string()),
                    evaluated: hood.to_string(),
                    level: l.clone(),
                });
                level = level.meet(&l);
            }
        }
    }
    Ok(LevelWithProvenance { level, sources })
}
