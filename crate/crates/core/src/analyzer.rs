//! The increasing criterion, checked per generalized-role rule and subject.
//!
//! For a rule `R.r` and a subject `α` of `r⁺` the criterion is
//! `F(α, r⁺) ⊒ ⌜α⌝ ⊓ F(α, R⁻)`. With the witness metric the sent side is the
//! lower bound `Υ` and the received side is `F′`. Variables have no static
//! level, so their context is `⊤` and the check must hold without it.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::context::{ContextError, VerificationContext};
use crate::interp::{dek, dekan};
use crate::lattice::SecurityLevel;
use crate::protocol::{
    encryption_patterns, extract_generalized_roles, EncryptionPattern, GeneralizedRole,
    ProtocolError, ProtocolSpec,
};
use crate::term::Subject;
use crate::witness::{f_prime, lower_bound, WitnessError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dek,
    Dekan,
    Witness,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Dek => "dek",
            Metric::Dekan => "dekan",
            Metric::Witness => "witness",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dek" => Ok(Metric::Dek),
            "dekan" => Ok(Metric::Dekan),
            "witness" | "fmaxik" | "f_max_ik" => Ok(Metric::Witness),
            other => Err(format!("unknown metric {other:?} (expected dek, dekan or witness)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub role: String,
    /// 1-based rule index within the role.
    pub rule: usize,
    pub subject: Subject,
    pub sent_level: SecurityLevel,
    pub received_level: SecurityLevel,
    pub context_level: SecurityLevel,
    pub holds: bool,
    pub explanation: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Overall {
    Increasing,
    NotProvedIncreasing,
}

impl fmt::Display for Overall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Overall::Increasing => f.write_str("increasing => correct for secrecy"),
            Overall::NotProvedIncreasing => f.write_str("not proved increasing (not proved correct)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnalysisReport {
    pub metric: Metric,
    pub verdicts: Vec<Verdict>,
    pub overall: Overall,
}

impl AnalysisReport {
    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.holds)
    }

    pub fn find(&self, role: &str, rule: usize, subject: &str) -> Option<&Verdict> {
        self.verdicts
            .iter()
            .find(|v| v.role == role && v.rule == rule && v.subject.to_string() == subject)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Checks every subject of rule `idx` (0-based) of `role`.
pub fn check_rule(
    role: &GeneralizedRole,
    idx: usize,
    metric: Metric,
    patterns: &[EncryptionPattern],
    ctx: &VerificationContext,
) -> Vec<Verdict> {
    let sent = &role.rules[idx].sent;
    let received = role.received_prefix(idx);
    sent.subjects()
        .into_iter()
        .map(|s| {
            let context = match &s {
                Subject::Atom(a) => ctx.level_of(a),
                Subject::Var(_) => Ok(SecurityLevel::Top),
            };
            let outcome = context.map_err(WitnessError::from).and_then(|context| {
                let (sent_level, why) = match metric {
                    Metric::Dek => (dek(&s, sent, ctx)?, String::new()),
                    Metric::Dekan => (dekan(&s, sent, ctx)?, String::new()),
                    Metric::Witness => match lower_bound(&s, sent, patterns, ctx) {
                        Ok(p) => {
                            let why = p
                                .sources
                                .iter()
                                .map(|c| match c.pattern {
                                    Some(i) => format!("pattern {i} via {} gives {}", c.evaluated, c.level),
                                    None => format!("{} gives {}", c.evaluated, c.level),
                                })
                                .collect::<Vec<_>>()
                                .join("; ");
                            (p.level, why)
                        }
                        Err(WitnessError::NoSource { component }) => (
                            SecurityLevel::Bottom,
                            format!("no encryption pattern unifies with {component}"),
                        ),
                        Err(e) => return Err(e),
                    },
                };
                let received_level = match metric {
                    Metric::Dek => dek(&s, &received, ctx)?,
                    Metric::Dekan => dekan(&s, &received, ctx)?,
                    Metric::Witness => f_prime(&s, &received, ctx)?,
                };
                Ok((context, sent_level, received_level, why))
            });
            match outcome {
                Ok((context_level, sent_level, received_level, why)) => {
                    let holds = sent_level.geq_provable(&context_level.meet(&received_level));
                    let explanation = explain(metric, &s, sent, &sent_level, &received_level, &context_level, holds, why);
                    Verdict {
                        role: role.agent.clone(),
                        rule: idx + 1,
                        subject: s,
                        sent_level,
                        received_level,
                        context_level,
                        holds,
                        explanation,
                    }
                }
                Err(e) => Verdict {
                    role: role.agent.clone(),
                    rule: idx + 1,
                    subject: s,
                    sent_level: SecurityLevel::Bottom,
                    received_level: SecurityLevel::Bottom,
                    context_level: SecurityLevel::Bottom,
                    holds: false,
                    explanation: error_text(&e),
                },
            }
        })
        .collect()
}

fn error_text(e: &WitnessError) -> String {
    match e {
        WitnessError::Context(ContextError::UnassignedLevel(a)) => format!("no security level assigned to {a}"),
        other => other.to_string(),
    }
}

#[allow(clippy::too_many_arguments)]
fn explain(
    metric: Metric,
    s: &Subject,
    sent: &crate::term::Message,
    sent_level: &SecurityLevel,
    received_level: &SecurityLevel,
    context_level: &SecurityLevel,
    holds: bool,
    why: String,
) -> String {
    let rel = if holds { "⊒" } else { "⋣" };
    let mut out = format!("{sent_level} {rel} {context_level} ⊓ {received_level}");
    if !holds {
        if sent_level.has_unknowns() {
            let extra: Vec<String> = sent_level
                .unknowns()
                .difference(&context_level.meet(received_level).unknowns())
                .map(crate::lattice::marker)
                .collect();
            if !extra.is_empty() {
                out.push_str(&format!("; unbounded contribution {}", extra.join(", ")));
            }
        }
        if metric != Metric::Witness {
            if let Some(k) = direct_key(s, sent) {
                out.push_str(&format!("; direct key {k}"));
            }
        }
    }
    if !why.is_empty() {
        out.push_str(&format!("; {why}"));
    }
    out
}

fn direct_key(s: &Subject, m: &crate::term::Message) -> Option<String> {
    crate::interp::occurrences(m, s).into_iter().find_map(|stack| match stack.last() {
        Some(crate::term::Message::Enc { key, .. }) => Some(key.to_string()),
        _ => None,
    })
}

pub fn analyze_roles(
    roles: &[GeneralizedRole],
    metric: Metric,
    ctx: &VerificationContext,
) -> AnalysisReport {
    let patterns = encryption_patterns(roles);
    let verdicts: Vec<Verdict> = roles
        .iter()
        .flat_map(|role| {
            (0..role.rules.len()).flat_map(|i| check_rule(role, i, metric, &patterns, ctx)).collect::<Vec<_>>()
        })
        .collect();
    let overall = if verdicts.iter().all(|v| v.holds) {
        Overall::Increasing
    } else {
        Overall::NotProvedIncreasing
    };
    AnalysisReport {
        metric,
        verdicts,
        overall,
    }
}

pub fn analyze(
    spec: &ProtocolSpec,
    metric: Metric,
    ctx: &VerificationContext,
) -> Result<AnalysisReport, AnalysisError> {
    let roles = extract_generalized_roles(spec, ctx)?;
    Ok(analyze_roles(&roles, metric, ctx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_dsl;

    fn report(metric: Metric) -> AnalysisReport {
        let doc = parse_dsl(include_str!("../examples/p.proto")).unwrap();
        analyze(&doc.spec, metric, &doc.context).unwrap()
    }

    #[test]
    fn dek_fails_on_y() {
        let r = report(Metric::Dek);
        assert_eq!(r.overall, Overall::NotProvedIncreasing);
        let y = r.find("B", 1, "Y").unwrap();
        assert_eq!(y.sent_level, SecurityLevel::finite(["A"]));
        assert_eq!(y.received_level, SecurityLevel::finite(["B"]));
        assert!(!y.holds);
        assert!(y.explanation.contains("direct key ka"), "{}", y.explanation);
    }

    #[test]
    fn dekan_leaves_an_unbounded_neighbor() {
        let r = report(Metric::Dekan);
        assert_eq!(r.overall, Overall::NotProvedIncreasing);
        let y = r.find("B", 1, "Y").unwrap();
        assert_eq!(y.sent_level.known(), SecurityLevel::finite(["A", "B", "S"]).known());
        assert_eq!(y.sent_level.unknowns().iter().map(|v| v.name.as_str()).collect::<Vec<_>>(), ["Z"]);
        assert_eq!(y.received_level, SecurityLevel::finite(["A", "B", "S"]));
        assert!(y.explanation.contains("unbounded contribution"), "{}", y.explanation);
    }

    #[test]
    fn witness_proves_increasing() {
        let r = report(Metric::Witness);
        assert_eq!(r.overall, Overall::Increasing, "{:#?}", r.failures().collect::<Vec<_>>());
        assert_eq!(r.failures().count(), 0);
        let sec = r.find("S", 1, "sec").unwrap();
        assert_eq!(sec.sent_level, SecurityLevel::finite(["A", "S"]));
        assert_eq!(sec.context_level, SecurityLevel::finite(["A", "S"]));
        assert!(r.find("B", 1, "Z").unwrap().explanation.contains("pattern 5"));
    }

    #[test]
    fn missing_level_is_a_failed_verdict() {
        let doc = parse_dsl(
            "principals A, B; intruder I; keys { kb: pub(B); } fresh { A: Nx; }\n\
             protocol { 1. A -> B : enc(A.Nx, kb); }",
        )
        .unwrap();
        let r = analyze(&doc.spec, Metric::Witness, &doc.context).unwrap();
        let v = r.failures().next().unwrap();
        assert!(v.explanation.contains("no security level"), "{}", v.explanation);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [Metric::Dek, Metric::Dekan, Metric::Witness] {
            assert_eq!(m.name().parse::<Metric>(), Ok(m));
        }
        assert!("nope".parse::<Metric>().is_err());
    }
}
