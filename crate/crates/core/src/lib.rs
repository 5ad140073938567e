//! Static secrecy analysis of cryptographic protocols.
//!
//! A protocol is correct for secrecy when it is increasing under a safe
//! metric: in every generalized-role rule, the level of each atom in the sent
//! message dominates its context level met with its level in the received
//! messages. Metrics provided are DEK, DEKAN and the witness bounds built on
//! `F_MAX^IK`. A Dolev-Yao oracle cross-checks verdicts on small instances.

pub mod analyzer;
pub mod cli;
pub mod context;
pub mod dsl;
pub mod interp;
pub mod lattice;
pub mod oracle;
pub mod protocol;
pub mod report;
pub mod term;
pub mod witness;

pub use analyzer::{analyze, analyze_roles, check_rule, AnalysisReport, Metric, Overall, Verdict};
pub use context::{ContextError, VerificationContext};
pub use lattice::SecurityLevel;
pub use protocol::{
    encryption_patterns, extract_generalized_roles, sources_of, EncryptionPattern, GeneralizedRole,
    ProtocolSpec, RoleRule, Step,
};
pub use term::{unify, Atom, KeyTerm, Message, Session, Sort, Subject, Substitution, Variable};
pub use witness::{f_max_ik, f_prime, lower_bound, LevelWithProvenance};
