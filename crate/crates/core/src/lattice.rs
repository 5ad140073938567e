//! Security levels: sets of principal identities ordered by reverse
//! inclusion, with symbolic contributions for variables (`X̄`).
//!
//! A smaller set is a higher level. `Top` is the empty set and `Bottom` the
//! whole (open-ended) principal set. The meet `⊓` is set union and the join
//! `⊔` set intersection.

use std::collections::BTreeSet;
use std::fmt;

use serde::ser::{Serialize, SerializeSeq, Serializer};
use thiserror::Error;

use crate::term::Variable;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SecurityLevel {
    Top,
    Bottom,
    Finite {
        known: BTreeSet<String>,
        unknowns: BTreeSet<Variable>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("join is undefined on levels with symbolic contributions")]
    JoinWithUnknowns,
}

impl SecurityLevel {
    pub fn finite<I, S>(known: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_unknowns(known, std::iter::empty())
    }

    pub fn with_unknowns<I, S, U>(known: I, unknowns: U) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
        U: IntoIterator<Item = Variable>,
    {
        Self::normalized(
            known.into_iter().map(Into::into).collect(),
            unknowns.into_iter().collect(),
        )
    }

    fn normalized(known: BTreeSet<String>, unknowns: BTreeSet<Variable>) -> Self {
        if known.is_empty() && unknowns.is_empty() {
            SecurityLevel::Top
        } else {
            SecurityLevel::Finite { known, unknowns }
        }
    }

    pub fn is_top(&self) -> bool {
        matches!(self, SecurityLevel::Top)
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, SecurityLevel::Bottom)
    }

    pub fn known(&self) -> BTreeSet<String> {
        match self {
            SecurityLevel::Finite { known, .. } => known.clone(),
            _ => BTreeSet::new(),
        }
    }

    pub fn unknowns(&self) -> BTreeSet<Variable> {
        match self {
            SecurityLevel::Finite { unknowns, .. } => unknowns.clone(),
            _ => BTreeSet::new(),
        }
    }

    pub fn has_unknowns(&self) -> bool {
        matches!(self, SecurityLevel::Finite { unknowns, .. } if !unknowns.is_empty())
    }

    /// `⊓`: union of the identity sets. Top is neutral, Bottom absorbing.
    pub fn meet(&self, other: &SecurityLevel) -> SecurityLevel {
        use SecurityLevel::*;
        match (self, other) {
            (Bottom, _) | (_, Bottom) => Bottom,
            (Top, l) | (l, Top) => l.clone(),
            (
                Finite {
                    known: k1,
                    unknowns: u1,
                },
                Finite {
                    known: k2,
                    unknowns: u2,
                },
            ) => Self::normalized(k1.union(k2).cloned().collect(), u1.union(u2).cloned().collect()),
        }
    }

    /// `⊔`: intersection of the identity sets. Top absorbing, Bottom neutral.
    pub fn join(&self, other: &SecurityLevel) -> Result<SecurityLevel, LatticeError> {
        use SecurityLevel::*;
        if self.has_unknowns() || other.has_unknowns() {
            return Err(LatticeError::JoinWithUnknowns);
        }
        Ok(match (self, other) {
            (Top, _) | (_, Top) => Top,
            (Bottom, l) | (l, Bottom) => l.clone(),
            (Finite { known: k1, .. }, Finite { known: k2, .. }) => {
                Self::normalized(k1.intersection(k2).cloned().collect(), BTreeSet::new())
            }
        })
    }

    /// Conservative `⊒`: true only if `set(self) ⊆ set(other)` under every
    /// instantiation of the symbolic contributions.
    pub fn geq_provable(&self, other: &SecurityLevel) -> bool {
        use SecurityLevel::*;
        match (self, other) {
            (_, Bottom) => true,
            (Top, _) => true,
            (Bottom, _) => false,
            (_, Top) => false,
            (
                Finite {
                    known: k1,
                    unknowns: u1,
                },
                Finite {
                    known: k2,
                    unknowns: u2,
                },
            ) => k1.is_subset(k2) && u1.is_subset(u2),
        }
    }

    /// Sorted elements: identity names first, then `X̄` markers.
    pub fn elements(&self) -> Vec<String> {
        let mut out: Vec<String> = self.known().into_iter().collect();
        out.extend(self.unknowns().iter().map(marker));
        out
    }
}

pub(crate) fn marker(v: &Variable) -> String {
    format!("{v}\u{0304}")
}

impl fmt::Display for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SecurityLevel::Top => f.write_str("∅/Top"),
            SecurityLevel::Bottom => f.write_str("I/Bottom"),
            SecurityLevel::Finite { .. } => write!(f, "{{{}}}", self.elements().join(", ")),
        }
    }
}

/// JSON form: `"Top"`, `"Bottom"`, or a sorted array of names and markers.
impl Serialize for SecurityLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SecurityLevel::Top => serializer.serialize_str("Top"),
            SecurityLevel::Bottom => serializer.serialize_str("Bottom"),
            SecurityLevel::Finite { .. } => {
                let elems = self.elements();
                let mut seq = serializer.serialize_seq(Some(elems.len()))?;
                for e in &elems {
                    seq.serialize_element(e)?;
                }
                seq.end()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Sort;
    use proptest::prelude::*;

    fn set(names: &[&str]) -> SecurityLevel {
        SecurityLevel::finite(names.iter().copied())
    }

    fn z() -> Variable {
        Variable::new("Z", Sort::Any)
    }

    #[test]
    fn meet_is_union() {
        assert_eq!(set(&["B"]).meet(&set(&["B", "A", "S"])), set(&["A", "B", "S"]));
        assert_eq!(set(&["A"]).meet(&SecurityLevel::Top), set(&["A"]));
        let l = SecurityLevel::with_unknowns(["A"], [z()]);
        assert_eq!(
            l.meet(&set(&["B", "S"])),
            SecurityLevel::with_unknowns(["A", "B", "S"], [z()])
        );
        assert_eq!(l.meet(&SecurityLevel::Bottom), SecurityLevel::Bottom);
    }

    #[test]
    fn join_is_intersection() {
        assert_eq!(set(&["A", "B"]).join(&set(&["B", "S"])), Ok(set(&["B"])));
        assert_eq!(set(&["A"]).join(&SecurityLevel::Bottom), Ok(set(&["A"])));
        assert_eq!(
            SecurityLevel::with_unknowns(["A"], [z()]).join(&set(&["A"])),
            Err(LatticeError::JoinWithUnknowns)
        );
    }

    #[test]
    fn geq_examples() {
        assert!(set(&["A", "B", "S"]).geq_provable(&set(&["A", "B", "S"])));
        assert!(!set(&["A"]).geq_provable(&set(&["B"])));
        let y = Variable::new("Y", Sort::Nonce);
        assert!(!SecurityLevel::with_unknowns(["B", "A", "S"], [z()])
            .geq_provable(&SecurityLevel::with_unknowns(["A", "B", "S"], [y])));
        assert!(SecurityLevel::Bottom.geq_provable(&SecurityLevel::Bottom));
        assert!(set(&["A"]).geq_provable(&SecurityLevel::Bottom));
        assert!(SecurityLevel::Top.geq_provable(&set(&["A"])));
        assert!(!SecurityLevel::Bottom.geq_provable(&set(&["A"])));
    }

    #[test]
    fn empty_finite_normalizes_to_top() {
        assert_eq!(SecurityLevel::finite(Vec::<String>::new()), SecurityLevel::Top);
    }

    #[test]
    fn rendering() {
        let l = SecurityLevel::with_unknowns(["S", "A", "B"], [z()]);
        assert_eq!(l.to_string(), "{A, B, S, Z\u{0304}}");
        assert_eq!(serde_json::to_string(&SecurityLevel::Top).unwrap(), "\"Top\"");
        assert_eq!(serde_json::to_string(&set(&["B", "A"])).unwrap(), "[\"A\",\"B\"]");
    }

    fn arb_level() -> impl Strategy<Value = SecurityLevel> {
        let names = prop::collection::btree_set(prop::sample::select(vec!["A", "B", "C", "S"]), 0..4);
        let vars = prop::collection::btree_set(prop::sample::select(vec!["X", "Y"]), 0..2);
        prop_oneof![
            1 => Just(SecurityLevel::Top),
            1 => Just(SecurityLevel::Bottom),
            4 => (names, vars).prop_map(|(k, u)| SecurityLevel::with_unknowns(
                k,
                u.into_iter().map(|n| Variable::new(n, Sort::Any)),
            )),
        ]
    }

    /// Expands a level to a concrete identity set given an instantiation of markers.
    fn concretize(l: &SecurityLevel, inst: &dyn Fn(&str) -> BTreeSet<String>) -> Option<BTreeSet<String>> {
        match l {
            SecurityLevel::Top => Some(BTreeSet::new()),
            SecurityLevel::Bottom => None,
            SecurityLevel::Finite { known, unknowns } => {
                let mut s = known.clone();
                for u in unknowns {
                    s.extend(inst(&u.name));
                }
                Some(s)
            }
        }
    }

    proptest! {
        #[test]
        fn meet_laws(a in arb_level(), b in arb_level(), c in arb_level()) {
            prop_assert_eq!(a.meet(&b), b.meet(&a));
            prop_assert_eq!(a.meet(&b).meet(&c), a.meet(&b.meet(&c)));
            prop_assert_eq!(a.meet(&a), a.clone());
            prop_assert_eq!(a.meet(&SecurityLevel::Top), a.clone());
            prop_assert_eq!(a.meet(&SecurityLevel::Bottom), SecurityLevel::Bottom);
        }

        #[test]
        fn geq_reflexive_transitive(a in arb_level(), b in arb_level(), c in arb_level()) {
            prop_assert!(a.geq_provable(&a));
            if a.geq_provable(&b) && b.geq_provable(&c) {
                prop_assert!(a.geq_provable(&c));
            }
            if !a.has_unknowns() && !b.has_unknowns() && a.geq_provable(&b) && b.geq_provable(&a) {
                prop_assert_eq!(a.clone(), b.clone());
            }
        }

        #[test]
        fn geq_sound_under_instantiation(
            a in arb_level(),
            b in arb_level(),
            x in prop::collection::btree_set(prop::sample::select(vec!["A", "B", "C", "D", "I"]), 0..4),
            y in prop::collection::btree_set(prop::sample::select(vec!["A", "B", "C", "D", "I"]), 0..4),
        ) {
            let inst = |n: &str| -> BTreeSet<String> {
                let src = if n == "X" { &x } else { &y };
                src.iter().map(|s| s.to_string()).collect()
            };
            if a.geq_provable(&b) {
                match (concretize(&a, &inst), concretize(&b, &inst)) {
                    (_, None) => {}
                    (Some(sa), Some(sb)) => prop_assert!(sa.is_subset(&sb)),
                    (None, Some(_)) => prop_assert!(false, "Bottom certified above a finite set"),
                }
            }
            if !a.has_unknowns() && !b.has_unknowns() {
                if let (SecurityLevel::Finite { known: ka, .. }, SecurityLevel::Finite { known: kb, .. }) = (&a, &b) {
                    prop_assert_eq!(a.geq_provable(&b), ka.is_subset(kb));
                }
            }
        }
    }
}
