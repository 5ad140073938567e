//! The Dolev-Yao intruder: deduction, full-invariance probing and bounded
//! attack search.

pub mod attack;
pub mod knowledge;
pub mod probe;

pub use attack::{bounded_attack_search, replay_is_consistent, AttackStep, AttackTrace, OracleError, SearchConfig};
pub use knowledge::{derives, KnowledgeSet};
pub use probe::{probe_atoms, probe_full_invariance, AtomMetric, ConstantTop, Counterexample, OutermostKey, ProbeConfig};
