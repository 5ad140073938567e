//! Text and JSON renderings. Every JSON document carries `"schema": 1`.

use serde::Deserialize;
use serde_json::{json, Value};

use crate::analyzer::{AnalysisReport, Overall};
use crate::oracle::{AttackTrace, Counterexample};
use crate::protocol::{EncryptionPattern, GeneralizedRole};

pub const SCHEMA: u32 = 1;

pub fn report_json(r: &AnalysisReport) -> Value {
    json!({
        "schema": SCHEMA,
        "metric": r.metric,
        "verdicts": r.verdicts.iter().map(|v| json!({
            "role": v.role,
            "rule": v.rule,
            "subject": v.subject.to_string(),
            "sent_level": v.sent_level,
            "received_level": v.received_level,
            "context_level": v.context_level,
            "holds": v.holds,
            "explanation": v.explanation,
        })).collect::<Vec<_>>(),
        "overall": r.overall,
    })
}

pub fn report_text(r: &AnalysisReport) -> String {
    let mut out = format!("metric: {}\n", r.metric);
    let mut current = None;
    for v in &r.verdicts {
        if current != Some((&v.role, v.rule)) {
            out.push_str(&format!("role {} rule {}\n", v.role, v.rule));
            current = Some((&v.role, v.rule));
        }
        out.push_str(&format!(
            "  {:<6} {}  sent {}  received {}  context {}\n         {}\n",
            v.subject.to_string(),
            if v.holds { "ok  " } else { "FAIL" },
            v.sent_level,
            v.received_level,
            v.context_level,
            v.explanation
        ));
    }
    match r.overall {
        Overall::Increasing => out.push_str("result: increasing ⇒ correct for secrecy\n"),
        Overall::NotProvedIncreasing => {
            let n = r.failures().count();
            out.push_str(&format!("result: not proved increasing ({n} failing verdicts); not proved correct for secrecy\n"));
        }
    }
    out
}

pub fn roles_json(roles: &[GeneralizedRole]) -> Value {
    json!({ "schema": SCHEMA, "roles": roles })
}

#[derive(Deserialize)]
struct RolesDoc {
    schema: u32,
    roles: Vec<GeneralizedRole>,
}

/// Reads back the output of [`roles_json`].
pub fn roles_from_json(text: &str) -> Result<Vec<GeneralizedRole>, String> {
    let doc: RolesDoc = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if doc.schema != SCHEMA {
        return Err(format!("unsupported schema version {}", doc.schema));
    }
    for r in &doc.roles {
        r.validate().map_err(|e| e.to_string())?;
    }
    Ok(doc.roles)
}

pub fn roles_text(roles: &[GeneralizedRole], intruder: &str) -> String {
    let mut out = String::new();
    for r in roles {
        out.push_str(&format!("role {}\n", r.agent));
        let mut n = 0;
        for rule in &r.rules {
            if !rule.received.is_empty() {
                n += 1;
                let from = rule.received_from.as_deref().unwrap_or("?");
                out.push_str(&format!("  i.{n}  {intruder}({from}) -> {} : {}\n", r.agent, rule.received));
            }
            if !rule.sent.is_empty() {
                n += 1;
                let to = rule.sent_to.as_deref().unwrap_or("?");
                out.push_str(&format!("  i.{n}  {} -> {intruder}({to}) : {}\n", r.agent, rule.sent));
            }
        }
        if !r.variables.is_empty() {
            let vs: Vec<String> = r.variables.iter().map(|v| format!("{v}: {}", v.sort)).collect();
            out.push_str(&format!("  variables {}\n", vs.join(", ")));
        }
    }
    out
}

pub fn patterns_json(patterns: &[EncryptionPattern]) -> Value {
    json!({
        "schema": SCHEMA,
        "patterns": patterns.iter().map(|p| json!({
            "index": p.index,
            "display": p.term.to_string(),
            "term": p.term,
        })).collect::<Vec<_>>(),
    })
}

pub fn patterns_text(patterns: &[EncryptionPattern]) -> String {
    patterns.iter().map(|p| format!("{:>3}. {}\n", p.index, p.term)).collect()
}

pub fn trace_json(trace: Option<&AttackTrace>, intruder: &str) -> Value {
    json!({
        "schema": SCHEMA,
        "trace": trace.map(|t| json!({
            "initial_knowledge": t.initial_knowledge.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
            "interleaving": t.interleaving.iter().map(|s| json!({
                "session": s.session,
                "role": s.role,
                "rule": s.rule,
                "received": s.received.to_string(),
                "received_from": s.received_from,
                "sent": s.sent.to_string(),
                "sent_to": s.sent_to,
            })).collect::<Vec<_>>(),
            "leaked": t.leaked.to_string(),
            "narration": t.narration(intruder),
        })),
    })
}

pub fn probe_json(metric: &str, found: &[Counterexample]) -> Value {
    json!({
        "schema": SCHEMA,
        "metric": metric,
        "counterexamples": found.iter().map(|c| json!({
            "trial": c.trial,
            "knowledge": c.knowledge.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
            "derived": c.derived.to_string(),
            "atom": c.atom.to_string(),
            "derived_level": c.derived_level,
            "knowledge_level": c.knowledge_level,
        })).collect::<Vec<_>>(),
    })
}

pub fn probe_text(metric: &str, found: &[Counterexample]) -> String {
    let mut out = format!("metric: {metric}\ncounterexamples: {}\n", found.len());
    for c in found.iter().take(20) {
        let ks: Vec<String> = c.knowledge.iter().map(|m| m.to_string()).collect();
        out.push_str(&format!(
            "  trial {}: {{{}}} ⊨ {}  at {}: {} ⋣ {}\n",
            c.trial,
            ks.join(", "),
            c.derived,
            c.atom,
            c.derived_level,
            c.knowledge_level
        ));
    }
    if found.len() > 20 {
        out.push_str(&format!("  ... {} more\n", found.len() - 20));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{analyze_roles, Metric};
    use crate::dsl::parse_dsl;
    use crate::protocol::extract_generalized_roles;

    fn roles() -> (Vec<GeneralizedRole>, crate::context::VerificationContext) {
        let doc = parse_dsl(include_str!("../examples/p.proto")).unwrap();
        (extract_generalized_roles(&doc.spec, &doc.context).unwrap(), doc.context)
    }

    #[test]
    fn roles_json_round_trips() {
        let (r, _) = roles();
        let text = roles_json(&r).to_string();
        assert_eq!(roles_from_json(&text).unwrap(), r);
        let bumped = text.replacen("\"schema\":1", "\"schema\":2", 1);
        assert!(roles_from_json(&bumped).unwrap_err().contains("schema"));
    }

    #[test]
    fn every_document_has_a_schema() {
        let (r, ctx) = roles();
        let rep = analyze_roles(&r, Metric::Witness, &ctx);
        let docs = [
            report_json(&rep),
            roles_json(&r),
            patterns_json(&crate::protocol::encryption_patterns(&r)),
            trace_json(None, "I"),
            probe_json("f_max_ik", &[]),
        ];
        for d in docs {
            assert_eq!(d["schema"], 1);
        }
    }

    #[test]
    fn text_outputs() {
        let (r, ctx) = roles();
        let rep = analyze_roles(&r, Metric::Dek, &ctx);
        let t = report_text(&rep);
        assert!(t.ends_with("not proved correct for secrecy\n"), "{t}");
        let rt = roles_text(&r, "I");
        assert!(rt.contains("i.1  B -> I(A)") || rt.contains("i.2  B -> I(A)"), "{rt}");
        assert_eq!(patterns_text(&crate::protocol::encryption_patterns(&r)).lines().count(), 8);
    }
}
