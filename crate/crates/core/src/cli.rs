//! Command-line driver.
//!
//! Exit codes: `analyze` 0 increasing, 2 not proved increasing; `oracle probe`
//! 0 no counterexample, 2 counterexamples; `oracle attack` 0 no trace, 3 trace
//! found; 1 on any error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::analyzer::{analyze_roles, Metric, Overall};
use crate::dsl::{parse_dsl, Document};
use crate::oracle::{
    bounded_attack_search, probe_atoms, probe_full_invariance, AtomMetric, ConstantTop, OutermostKey,
    ProbeConfig, SearchConfig,
};
use crate::protocol::{encryption_patterns, extract_generalized_roles, GeneralizedRole};
use crate::report;
use crate::term::{Atom, Sort};

pub const DEFAULT_SEED: u64 = 0x5EC2E7;

#[derive(Parser, Debug)]
#[command(name = "protosec", version, about = "Static secrecy analysis of cryptographic protocols")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Dek,
    Dekan,
    Witness,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Dek => Metric::Dek,
            MetricArg::Dekan => Metric::Dekan,
            MetricArg::Witness => Metric::Witness,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProbeMetricArg {
    Dek,
    Dekan,
    /// `F_MAX^IK`.
    Witness,
    /// Broken on purpose: ranks every atom `⊤`.
    ConstantTop,
    /// Broken on purpose: ranks by the outermost key.
    OutermostKey,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check whether the protocol is increasing under a metric.
    Analyze {
        #[arg(long, value_enum, default_value = "witness")]
        metric: MetricArg,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Generalized roles as emitted by `roles --format json`.
        #[arg(long)]
        roles: Option<PathBuf>,
        input: PathBuf,
    },
    /// Print the generalized roles.
    Roles {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        input: PathBuf,
    },
    /// Print the numbered encryption patterns.
    Patterns {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        roles: Option<PathBuf>,
        input: PathBuf,
    },
    /// Dolev-Yao cross-checks.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
}

#[derive(Subcommand, Debug)]
pub enum OracleCommand {
    /// Search for violations of full invariance by the intruder.
    Probe {
        #[arg(long, value_enum, default_value = "witness")]
        metric: ProbeMetricArg,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 3)]
        max_messages: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        input: PathBuf,
    },
    /// Bounded-session attack search for a secret.
    Attack {
        #[arg(long, default_value_t = 2)]
        sessions: u32,
        /// Atom to protect; defaults to the only leveled secret.
        #[arg(long)]
        secret: Option<String>,
        #[arg(long, default_value_t = 200_000)]
        node_cap: usize,
        #[arg(long)]
        roles: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        input: PathBuf,
    },
}

fn load(input: &PathBuf) -> Result<Document, String> {
    let text = fs::read_to_string(input).map_err(|e| format!("{}: {e}", input.display()))?;
    parse_dsl(&text).map_err(|e| format!("{}:{e}", input.display()))
}

fn roles_for(doc: &Document, override_path: Option<&PathBuf>) -> Result<Vec<GeneralizedRole>, String> {
    if let Some(p) = override_path {
        let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        return report::roles_from_json(&text).map_err(|e| format!("{}: {e}", p.display()));
    }
    if let Some(r) = &doc.roles {
        return Ok(r.clone());
    }
    extract_generalized_roles(&doc.spec, &doc.context).map_err(|e| e.to_string())
}

fn pick_secret(doc: &Document, name: Option<&str>) -> Result<Atom, String> {
    let atoms: Vec<Atom> = doc
        .spec
        .steps
        .iter()
        .flat_map(|s| s.message.atoms())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    match name {
        Some(n) => atoms
            .into_iter()
            .find(|a| a.name == n && !a.inverse)
            .ok_or_else(|| format!("the protocol never sends an atom named {n}")),
        None => {
            let secrets: Vec<Atom> = atoms
                .into_iter()
                .filter(|a| a.sort == Sort::Secret && doc.context.level_of(a).is_ok())
                .collect();
            match secrets.as_slice() {
                [one] => Ok(one.clone()),
                [] => Err("no leveled secret in the protocol; pass --secret".into()),
                _ => Err("several secrets in the protocol; pass --secret".into()),
            }
        }
    }
}

fn emit(out: &mut dyn Write, s: &str) -> Result<(), String> {
    out.write_all(s.as_bytes()).map_err(|e| e.to_string())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

/// Runs a parsed command line and returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, String> {
    match cli.command {
        Command::Analyze { metric, format, roles, input } => {
            let doc = load(&input)?;
            let roles = roles_for(&doc, roles.as_ref())?;
            let r = analyze_roles(&roles, metric.into(), &doc.context);
            match format {
                Format::Text => emit(out, &report::report_text(&r))?,
                Format::Json => emit(out, &pretty(&report::report_json(&r)))?,
            }
            Ok(if r.overall == Overall::Increasing { 0 } else { 2 })
        }
        Command::Roles { format, input } => {
            let doc = load(&input)?;
            let roles = roles_for(&doc, None)?;
            match format {
                Format::Text => emit(out, &report::roles_text(&roles, doc.context.intruder()))?,
                Format::Json => emit(out, &pretty(&report::roles_json(&roles)))?,
            }
            Ok(0)
        }
        Command::Patterns { format, roles, input } => {
            let doc = load(&input)?;
            let patterns = encryption_patterns(&roles_for(&doc, roles.as_ref())?);
            match format {
                Format::Text => emit(out, &report::patterns_text(&patterns))?,
                Format::Json => emit(out, &pretty(&report::patterns_json(&patterns)))?,
            }
            Ok(0)
        }
        Command::Oracle { command } => match command {
            OracleCommand::Probe { metric, trials, depth, max_messages, seed, format, input } => {
                let doc = load(&input)?;
                let m: Box<dyn AtomMetric> = match metric {
                    ProbeMetricArg::Dek => Box::new(Metric::Dek),
                    ProbeMetricArg::Dekan => Box::new(Metric::Dekan),
                    ProbeMetricArg::Witness => Box::new(Metric::Witness),
                    ProbeMetricArg::ConstantTop => Box::new(ConstantTop),
                    ProbeMetricArg::OutermostKey => Box::new(OutermostKey),
                };
                let config = ProbeConfig { trials, depth, max_messages, seed, ..ProbeConfig::default() };
                let atoms = probe_atoms(&doc.spec, &doc.context);
                let found = probe_full_invariance(m.as_ref(), &doc.context, &atoms, &config);
                match format {
                    Format::Text => emit(out, &report::probe_text(&m.name(), &found))?,
                    Format::Json => emit(out, &pretty(&report::probe_json(&m.name(), &found)))?,
                }
                Ok(if found.is_empty() { 0 } else { 2 })
            }
            OracleCommand::Attack { sessions, secret, node_cap, roles, format, input } => {
                let doc = load(&input)?;
                let roles = roles_for(&doc, roles.as_ref())?;
                let secret = pick_secret(&doc, secret.as_deref())?;
                let config = SearchConfig { sessions, node_cap };
                let trace = bounded_attack_search(&roles, &doc.context, &secret, &config).map_err(|e| e.to_string())?;
                let intruder = doc.context.intruder();
                match format {
                    Format::Text => match &trace {
                        Some(t) => emit(out, &format!("attack found, {} leaks:\n{}", t.leaked, t.narration(intruder)))?,
                        None => emit(out, &format!("no attack on {secret} within {sessions} sessions per role\n"))?,
                    },
                    Format::Json => emit(out, &pretty(&report::trace_json(trace.as_ref(), intruder)))?,
                }
                Ok(if trace.is_some() { 3 } else { 0 })
            }
        },
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, out, err),
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                1
            } else {
                let _ = write!(out, "{}", e.render());
                0
            }
        }
    }
}
