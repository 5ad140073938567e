//! Message algebra: sorted atoms, variables, flattened concatenation and
//! asymmetric encryption, together with substitution, syntactic
//! unification and the variable-erasing derivation operator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sort {
    Identity,
    Nonce,
    Key,
    Secret,
    /// Only variables carry this sort.
    Any,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Sort::Identity => "identity",
            Sort::Nonce => "nonce",
            Sort::Key => "key",
            Sort::Secret => "secret",
            Sort::Any => "any",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Sort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Sort::Identity),
            "nonce" => Ok(Sort::Nonce),
            "key" => Ok(Sort::Key),
            "secret" => Ok(Sort::Secret),
            "any" => Ok(Sort::Any),
            other => Err(format!("unknown sort `{other}`")),
        }
    }
}

/// Session a fresh value belongs to: the symbolic session `i` of a
/// generalized role, or a concrete run number in the bounded search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Session {
    Generic,
    Run(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub name: String,
    pub sort: Sort,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<Session>,
    /// Owning principal of a key pair (`ka` is owned by `A`). Shared keys have no owner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inverse: bool,
}

impl Atom {
    fn plain(name: &str, sort: Sort) -> Self {
        Atom {
            name: name.to_string(),
            sort,
            session: None,
            owner: None,
            inverse: false,
        }
    }

    pub fn identity(name: &str) -> Self {
        Self::plain(name, Sort::Identity)
    }

    pub fn nonce(name: &str) -> Self {
        Self::plain(name, Sort::Nonce)
    }

    pub fn secret(name: &str) -> Self {
        Self::plain(name, Sort::Secret)
    }

    pub fn key(name: &str, owner: Option<&str>) -> Self {
        Atom {
            owner: owner.map(str::to_string),
            ..Self::plain(name, Sort::Key)
        }
    }

    /// Structural inverse of a key atom: flips the inverse marker.
    /// `(k^-1)^-1 = k` holds by construction.
    pub fn inverted(&self) -> Self {
        Atom {
            inverse: !self.inverse,
            ..self.clone()
        }
    }

    pub fn with_session(&self, session: Option<Session>) -> Self {
        Atom {
            session,
            ..self.clone()
        }
    }

    /// Same atom ignoring the session index.
    pub fn same_value(&self, other: &Atom) -> bool {
        self.name == other.name && self.sort == other.sort && self.inverse == other.inverse
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverse {
            write!(f, "inv(")?;
        }
        write!(f, "{}", self.name)?;
        match self.session {
            Some(Session::Generic) => write!(f, "^i")?,
            Some(Session::Run(n)) => write!(f, "^{n}")?,
            None => {}
        }
        if self.inverse {
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub sort: Sort,
    /// Renaming subscript (`Z5`), also used to separate runs in the bounded search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u32>,
    /// For key variables: the identity variable owning the key (`K_A5` -> `A5`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<Box<Variable>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inverse: bool,
}

impl Variable {
    pub fn new(name: &str, sort: Sort) -> Self {
        Variable {
            name: name.to_string(),
            sort,
            index: None,
            owner: None,
            inverse: false,
        }
    }

    pub fn indexed(name: &str, sort: Sort, index: u32) -> Self {
        Variable {
            index: Some(index),
            ..Self::new(name, sort)
        }
    }

    /// A key variable linked to an owner identity variable.
    pub fn key_of(owner: Variable) -> Self {
        Variable {
            name: format!("K_{}", owner.name),
            sort: Sort::Key,
            index: owner.index,
            owner: Some(Box::new(owner)),
            inverse: false,
        }
    }

    pub fn with_index(&self, index: Option<u32>) -> Self {
        Variable {
            index,
            owner: self
                .owner
                .as_ref()
                .map(|o| Box::new(o.with_index(index))),
            ..self.clone()
        }
    }

    pub fn inverted(&self) -> Self {
        Variable {
            inverse: !self.inverse,
            ..self.clone()
        }
    }

    /// Whether this variable may be bound to `m` without a sort clash.
    pub fn accepts(&self, m: &Message) -> bool {
        match (self.sort, m) {
            (_, Message::Empty) => false,
            (Sort::Any, _) => true,
            (Sort::Key, Message::Atom(a)) => a.sort == Sort::Key && a.inverse == self.inverse,
            (Sort::Key, Message::Var(v)) => v.sort == Sort::Key && v.inverse == self.inverse,
            (s, Message::Atom(a)) => a.sort == s,
            (s, Message::Var(v)) => v.sort == s,
            _ => false,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverse {
            write!(f, "inv(")?;
        }
        write!(f, "{}", self.name)?;
        if let Some(i) = self.index {
            write!(f, "{i}")?;
        }
        if self.inverse {
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// The key slot of a ciphertext: a key atom or a key variable.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyTerm {
    Atom(Atom),
    Var(Variable),
}

impl KeyTerm {
    pub fn from_message(m: Message) -> Result<Self, TermError> {
        match m {
            Message::Atom(a) if a.sort == Sort::Key => Ok(KeyTerm::Atom(a)),
            Message::Var(v) if v.sort == Sort::Key => Ok(KeyTerm::Var(v)),
            other => Err(TermError::NotAKey(other.to_string())),
        }
    }

    pub fn to_message(&self) -> Message {
        match self {
            KeyTerm::Atom(a) => Message::Atom(a.clone()),
            KeyTerm::Var(v) => Message::Var(v.clone()),
        }
    }
}

impl fmt::Display for KeyTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyTerm::Atom(a) => a.fmt(f),
            KeyTerm::Var(v) => v.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Message {
    /// The empty message ε.
    Empty,
    Atom(Atom),
    Var(Variable),
    /// Flattened: no element is a `Concat` or `Empty`, and there are at least two elements.
    Concat(Vec<Message>),
    Enc { body: Box<Message>, key: KeyTerm },
}

/// Something whose security level is measured: an atom or a variable.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subject {
    Atom(Atom),
    Var(Variable),
}

impl Subject {
    pub fn to_message(&self) -> Message {
        match self {
            Subject::Atom(a) => Message::Atom(a.clone()),
            Subject::Var(v) => Message::Var(v.clone()),
        }
    }

    pub fn matches(&self, m: &Message) -> bool {
        match (self, m) {
            (Subject::Atom(a), Message::Atom(b)) => a == b,
            (Subject::Var(x), Message::Var(y)) => x == y,
            _ => false,
        }
    }
}

impl From<Atom> for Subject {
    fn from(a: Atom) -> Self {
        Subject::Atom(a)
    }
}

impl From<Variable> for Subject {
    fn from(v: Variable) -> Self {
        Subject::Var(v)
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Atom(a) => a.fmt(f),
            Subject::Var(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("sort clash: variable {var} of sort {sort} cannot be bound to {value}")]
    Sort {
        var: String,
        sort: Sort,
        value: String,
    },
    #[error("occurs check: {var} occurs in {value}")]
    Occurs { var: String, value: String },
    #[error("{0} cannot be used as an encryption key")]
    NotAKey(String),
}

impl From<Atom> for Message {
    fn from(a: Atom) -> Self {
        Message::Atom(a)
    }
}

impl From<Variable> for Message {
    fn from(v: Variable) -> Self {
        Message::Var(v)
    }
}

impl Message {
    /// Builds a concatenation, flattening nested lists and dropping ε.
    pub fn concat<I: IntoIterator<Item = Message>>(items: I) -> Message {
        let mut out = Vec::new();
        for item in items {
            match item {
                Message::Empty => {}
                Message::Concat(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Message::Empty,
            1 => out.pop().unwrap(),
            _ => Message::Concat(out),
        }
    }

    pub fn enc(body: Message, key: KeyTerm) -> Message {
        Message::Enc {
            body: Box::new(body),
            key,
        }
    }

    /// Top-level components: the elements of a concatenation, `[]` for ε,
    /// or the message itself.
    pub fn components(&self) -> &[Message] {
        match self {
            Message::Empty => &[],
            Message::Concat(items) => items,
            other => std::slice::from_ref(other),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Message::Empty)
    }

    pub fn is_enc(&self) -> bool {
        matches!(self, Message::Enc { .. })
    }

    /// The set A(m) of atoms, key atoms included.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Message::Empty | Message::Var(_) => {}
            Message::Atom(a) => {
                out.insert(a.clone());
            }
            Message::Concat(items) => items.iter().for_each(|m| m.collect_atoms(out)),
            Message::Enc { body, key } => {
                body.collect_atoms(out);
                if let KeyTerm::Atom(k) = key {
                    out.insert(k.clone());
                }
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Variable>) {
        match self {
            Message::Empty | Message::Atom(_) => {}
            Message::Var(v) => {
                out.insert(v.clone());
            }
            Message::Concat(items) => items.iter().for_each(|m| m.collect_vars(out)),
            Message::Enc { body, key } => {
                body.collect_vars(out);
                if let KeyTerm::Var(v) = key {
                    out.insert(v.clone());
                }
            }
        }
    }

    /// Atoms and variables in first-occurrence order (payload positions, then keys).
    pub fn subjects(&self) -> Vec<Subject> {
        fn walk(m: &Message, out: &mut Vec<Subject>) {
            let mut push = |s: Subject| {
                if !out.contains(&s) {
                    out.push(s);
                }
            };
            match m {
                Message::Empty => {}
                Message::Atom(a) => push(Subject::Atom(a.clone())),
                Message::Var(v) => push(Subject::Var(v.clone())),
                Message::Concat(items) => items.iter().for_each(|i| walk(i, out)),
                Message::Enc { body, key } => {
                    walk(body, out);
                    let s = match key {
                        KeyTerm::Atom(a) => Subject::Atom(a.clone()),
                        KeyTerm::Var(v) => Subject::Var(v.clone()),
                    };
                    if !out.contains(&s) {
                        out.push(s);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Message::Empty | Message::Atom(_) => true,
            Message::Var(_) => false,
            Message::Concat(items) => items.iter().all(Message::is_ground),
            Message::Enc { body, key } => body.is_ground() && matches!(key, KeyTerm::Atom(_)),
        }
    }

    pub fn contains_var(&self, v: &Variable) -> bool {
        match self {
            Message::Empty | Message::Atom(_) => false,
            Message::Var(x) => x == v,
            Message::Concat(items) => items.iter().any(|m| m.contains_var(v)),
            Message::Enc { body, key } => {
                body.contains_var(v) || matches!(key, KeyTerm::Var(x) if x == v)
            }
        }
    }

    /// Whether the subject occurs anywhere in the message (key slots included).
    pub fn contains_subject(&self, s: &Subject) -> bool {
        match s {
            Subject::Atom(a) => self.atoms().contains(a),
            Subject::Var(v) => self.contains_var(v),
        }
    }

    /// Number of nodes (atoms, variables, concatenations and ciphertexts).
    pub fn size(&self) -> usize {
        match self {
            Message::Empty => 0,
            Message::Atom(_) | Message::Var(_) => 1,
            Message::Concat(items) => 1 + items.iter().map(Message::size).sum::<usize>(),
            Message::Enc { body, .. } => 2 + body.size(),
        }
    }

    /// All subterms in pre-order, the message itself first. Key slots are
    /// reported as atom/variable subterms.
    pub fn subterms(&self) -> Vec<Message> {
        fn walk(m: &Message, out: &mut Vec<Message>) {
            match m {
                Message::Empty => {}
                Message::Concat(items) => {
                    out.push(m.clone());
                    items.iter().for_each(|i| walk(i, out));
                }
                Message::Enc { body, key } => {
                    out.push(m.clone());
                    walk(body, out);
                    out.push(key.to_message());
                }
                _ => out.push(m.clone()),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn apply(&self, sigma: &Substitution) -> Message {
        if sigma.is_empty() {
            return self.clone();
        }
        self.map_vars(&|v| sigma.get(v).cloned())
    }

    fn map_vars(&self, f: &dyn Fn(&Variable) -> Option<Message>) -> Message {
        match self {
            Message::Empty | Message::Atom(_) => self.clone(),
            Message::Var(v) => f(v).unwrap_or_else(|| self.clone()),
            Message::Concat(items) => Message::concat(items.iter().map(|m| m.map_vars(f))),
            Message::Enc { body, key } => {
                let key = match key {
                    KeyTerm::Var(v) => match f(v) {
                        // Substitutions are sort-checked, so a key variable only ever maps to a key.
                        Some(m) => KeyTerm::from_message(m).expect("key variable bound to a non-key"),
                        None => key.clone(),
                    },
                    KeyTerm::Atom(_) => key.clone(),
                };
                Message::enc(body.map_vars(f), key)
            }
        }
    }

    /// ∂m: erases every variable in payload position. A ciphertext whose body
    /// becomes empty is erased as well. Key slots are left untouched.
    pub fn derive(&self) -> Message {
        self.derive_with(None)
    }

    /// ∂[X]m: like [`Message::derive`] but keeps occurrences of `keep`.
    pub fn derive_keep(&self, keep: &Variable) -> Message {
        self.derive_with(Some(keep))
    }

    fn derive_with(&self, keep: Option<&Variable>) -> Message {
        match self {
            Message::Empty | Message::Atom(_) => self.clone(),
            Message::Var(v) => {
                if keep == Some(v) {
                    self.clone()
                } else {
                    Message::Empty
                }
            }
            Message::Concat(items) => Message::concat(items.iter().map(|m| m.derive_with(keep))),
            Message::Enc { body, key } => match body.derive_with(keep) {
                Message::Empty => Message::Empty,
                b => Message::enc(b, key.clone()),
            },
        }
    }

    /// Replaces every atom and variable by a variable of the same sort
    /// carrying subscript `index` (A -> A5, ka -> K_A5 linked to A5).
    pub fn rename_with_index(&self, index: u32) -> Message {
        match self {
            Message::Empty => Message::Empty,
            Message::Atom(a) => Message::Var(rename_atom(a, index)),
            Message::Var(v) => Message::Var(v.with_index(Some(index))),
            Message::Concat(items) => {
                Message::Concat(items.iter().map(|m| m.rename_with_index(index)).collect())
            }
            Message::Enc { body, key } => {
                let key = match key {
                    KeyTerm::Atom(a) => KeyTerm::Var(rename_atom(a, index)),
                    KeyTerm::Var(v) => KeyTerm::Var(v.with_index(Some(index))),
                };
                Message::enc(body.rename_with_index(index), key)
            }
        }
    }
}

fn rename_atom(a: &Atom, index: u32) -> Variable {
    match (&a.owner, a.sort) {
        (Some(owner), Sort::Key) => {
            let owner = Variable::indexed(owner, Sort::Identity, index);
            let mut v = Variable::key_of(owner);
            if a.name != format!("k{}", v.owner.as_ref().unwrap().name.to_lowercase()) {
                v.name = a.name.clone();
            }
            v.inverse = a.inverse;
            v
        }
        _ => {
            let mut v = Variable::indexed(&a.name, a.sort, index);
            v.inverse = a.inverse;
            v
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Empty => f.write_str("ε"),
            Message::Atom(a) => a.fmt(f),
            Message::Var(v) => v.fmt(f),
            Message::Concat(items) => {
                for (i, m) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(".")?;
                    }
                    m.fmt(f)?;
                }
                Ok(())
            }
            Message::Enc { body, key } => write!(f, "{{{body}}}{key}"),
        }
    }
}

/// An idempotent, sort-respecting substitution.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Substitution {
    bindings: BTreeMap<Variable, Message>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (Variable, Message)>>(
        pairs: I,
    ) -> Result<Self, TermError> {
        let mut s = Self::new();
        for (v, m) in pairs {
            s.insert(v, m)?;
        }
        Ok(s)
    }

    pub fn get(&self, v: &Variable) -> Option<&Message> {
        self.bindings.get(v)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Variable, &Message)> {
        self.bindings.iter()
    }

    /// Adds `v ↦ m`, keeping the substitution idempotent.
    pub fn insert(&mut self, v: Variable, m: Message) -> Result<(), TermError> {
        let m = m.apply(self);
        if !v.accepts(&m) {
            return Err(TermError::Sort {
                var: v.to_string(),
                sort: v.sort,
                value: m.to_string(),
            });
        }
        if m == Message::Var(v.clone()) {
            return Ok(());
        }
        if m.contains_var(&v) {
            return Err(TermError::Occurs {
                var: v.to_string(),
                value: m.to_string(),
            });
        }
        let single = |x: &Variable| (x == &v).then(|| m.clone());
        for range in self.bindings.values_mut() {
            *range = range.map_vars(&single);
        }
        self.bindings.insert(v, m);
        Ok(())
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, m)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v} ↦ {m}")?;
        }
        f.write_str("}")
    }
}

/// Most general sort-respecting syntactic unifier, with occurs check.
/// Concatenations unify positionally and must have equal length. Binding an
/// owned key variable also binds its owner variable to the key's owner.
pub fn unify(m1: &Message, m2: &Message) -> Option<Substitution> {
    let mut sigma = Substitution::new();
    unify_into(&mut sigma, m1, m2).then_some(sigma)
}

fn unify_into(sigma: &mut Substitution, a: &Message, b: &Message) -> bool {
    let a = a.apply(sigma);
    let b = b.apply(sigma);
    if a == b {
        return true;
    }
    match (&a, &b) {
        (Message::Var(x), Message::Var(y)) => unify_vars(sigma, x, y),
        (Message::Var(x), t) | (t, Message::Var(x)) => bind(sigma, x, t),
        (Message::Concat(xs), Message::Concat(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| unify_into(sigma, x, y))
        }
        (Message::Enc { body: b1, key: k1 }, Message::Enc { body: b2, key: k2 }) => {
            unify_into(sigma, &k1.to_message(), &k2.to_message()) && unify_into(sigma, b1, b2)
        }
        _ => false,
    }
}

fn unify_vars(sigma: &mut Substitution, x: &Variable, y: &Variable) -> bool {
    // Bind the more general variable to the more specific one.
    if x.sort == Sort::Any && y.sort != Sort::Any {
        return bind(sigma, x, &Message::Var(y.clone()));
    }
    if y.sort == Sort::Any && x.sort != Sort::Any {
        return bind(sigma, y, &Message::Var(x.clone()));
    }
    if x.sort != y.sort {
        return false;
    }
    if x.sort == Sort::Key {
        if x.inverse != y.inverse {
            return false;
        }
        return match (&x.owner, &y.owner) {
            (Some(ox), Some(oy)) => {
                let (ox, oy) = (Message::Var((**ox).clone()), Message::Var((**oy).clone()));
                bind(sigma, x, &Message::Var(y.clone())) && unify_into(sigma, &ox, &oy)
            }
            (None, Some(_)) => bind(sigma, x, &Message::Var(y.clone())),
            _ => bind(sigma, y, &Message::Var(x.clone())),
        };
    }
    bind(sigma, x, &Message::Var(y.clone()))
}

fn bind(sigma: &mut Substitution, x: &Variable, t: &Message) -> bool {
    if sigma.insert(x.clone(), t.clone()).is_err() {
        return false;
    }
    match (&x.owner, t) {
        (Some(owner), Message::Atom(k)) => match &k.owner {
            Some(name) => unify_into(
                sigma,
                &Message::Var((**owner).clone()),
                &Message::Atom(Atom::identity(name)),
            ),
            None => false,
        },
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: &str) -> Message {
        Atom::identity(n).into()
    }
    fn pk(n: &str, owner: &str) -> KeyTerm {
        KeyTerm::Atom(Atom::key(n, Some(owner)))
    }
    fn cat(items: Vec<Message>) -> Message {
        Message::concat(items)
    }
    fn var(n: &str, s: Sort) -> Message {
        Variable::new(n, s).into()
    }

    fn b_send() -> Message {
        Message::enc(
            cat(vec![id("B"), var("Z", Sort::Any), id("A"), var("Y", Sort::Nonce), id("S")]),
            pk("ka", "A"),
        )
    }

    #[test]
    fn concat_flattens_and_drops_empty() {
        let m = cat(vec![id("A"), cat(vec![id("B"), id("S")]), Message::Empty]);
        assert_eq!(m, Message::Concat(vec![id("A"), id("B"), id("S")]));
        assert_eq!(cat(vec![Message::Empty]), Message::Empty);
        assert_eq!(cat(vec![id("A")]), id("A"));
    }

    #[test]
    fn atoms_of_nested_ciphertext() {
        let inner = Message::enc(cat(vec![id("S"), Atom::secret("sec").into()]), pk("ka", "A"));
        let m = Message::enc(cat(vec![id("A"), id("B"), id("S"), inner]), pk("kb", "B"));
        let names: Vec<_> = m.atoms().into_iter().map(|a| a.name).collect();
        let mut expected = vec!["A", "B", "S", "sec", "ka", "kb"];
        expected.sort();
        let mut names_sorted = names.clone();
        names_sorted.sort();
        assert_eq!(names_sorted, expected);
        assert!(var("Y", Sort::Any).atoms().is_empty());
    }

    #[test]
    fn rename_pattern_five() {
        let p = b_send().rename_with_index(5);
        assert_eq!(p.to_string(), "{B5.Z5.A5.Y5.S5}K_A5");
        let Message::Enc { key: KeyTerm::Var(k), .. } = &p else {
            panic!("expected key variable")
        };
        assert_eq!(k.owner.as_deref(), Some(&Variable::indexed("A", Sort::Identity, 5)));
        assert_eq!(Message::Empty.rename_with_index(3), Message::Empty);
    }

    #[test]
    fn unify_pattern_five_gives_the_expected_unifier() {
        let p = b_send().rename_with_index(5);
        let sigma = unify(&p, &b_send()).expect("unifiable");
        assert_eq!(p.apply(&sigma), b_send().apply(&sigma));
        let b5 = Variable::indexed("B", Sort::Identity, 5);
        let a5 = Variable::indexed("A", Sort::Identity, 5);
        assert_eq!(sigma.get(&b5), Some(&id("B")));
        assert_eq!(sigma.get(&a5), Some(&id("A")));
        let ka5 = Variable::key_of(a5);
        assert_eq!(sigma.get(&ka5), Some(&Message::Atom(Atom::key("ka", Some("A")))));
    }

    #[test]
    fn unify_arity_mismatch_fails() {
        let p1 = Message::enc(
            cat(vec![id("A"), Atom::nonce("Na").into(), id("S"), id("B")]),
            pk("ks", "S"),
        )
        .rename_with_index(1);
        assert!(unify(&p1, &b_send()).is_none());
    }

    #[test]
    fn unify_nested_enc_against_nonce_variable_fails() {
        let inner = Message::enc(cat(vec![id("S"), Atom::secret("sec").into()]), pk("ka", "A"));
        let p8 = Message::enc(cat(vec![id("A"), id("B"), id("S"), inner]), pk("kb", "B"))
            .rename_with_index(8);
        let m = Message::enc(
            cat(vec![id("B"), id("A"), id("S"), var("T", Sort::Nonce)]),
            pk("kb", "B"),
        );
        assert!(unify(&p8, &m).is_none());
    }

    #[test]
    fn unify_self_is_empty() {
        let x = var("X", Sort::Any);
        assert_eq!(unify(&x, &x), Some(Substitution::new()));
    }

    #[test]
    fn occurs_check() {
        let x = var("X", Sort::Any);
        let m = cat(vec![x.clone(), id("A")]);
        assert!(unify(&x, &m).is_none());
    }

    #[test]
    fn key_owner_link_conflict_rejects() {
        // {B4.Z4}K_B4 against {A.T}kb: B4 must be B through the key and A through the slot.
        let pattern = Message::enc(cat(vec![id("B"), var("Z", Sort::Any)]), pk("kb", "B"))
            .rename_with_index(4);
        let m = Message::enc(cat(vec![id("A"), var("T", Sort::Nonce)]), pk("kb", "B"));
        assert!(unify(&pattern, &m).is_none());
    }

    #[test]
    fn substitution_rejects_sort_clash() {
        let y = Variable::new("Y", Sort::Nonce);
        let err = Substitution::from_pairs([(y, id("A"))]).unwrap_err();
        assert!(matches!(err, TermError::Sort { .. }));
    }

    #[test]
    fn apply_identity_and_simple_binding() {
        assert_eq!(b_send().apply(&Substitution::new()), b_send());
        let x = Variable::new("X", Sort::Any);
        let target = Message::enc(cat(vec![id("S"), Atom::secret("sec").into()]), pk("ka", "A"));
        let s = Substitution::from_pairs([(x.clone(), target.clone())]).unwrap();
        assert_eq!(Message::Var(x).apply(&s), target);
    }

    #[test]
    fn derive_erases_variables_and_empty_ciphertexts() {
        let m = Message::enc(
            cat(vec![id("B"), id("A"), id("S"), var("Y", Sort::Nonce)]),
            pk("kb", "B"),
        );
        assert_eq!(m.derive().to_string(), "{B.A.S}kb");
        let only_var = Message::enc(var("X", Sort::Any), pk("ka", "A"));
        assert_eq!(only_var.derive(), Message::Empty);
        let ground = Message::enc(id("A"), pk("ka", "A"));
        assert_eq!(ground.derive(), ground);
    }

    #[test]
    fn derive_keep_retains_kept_variable() {
        let y = Variable::new("Y", Sort::Nonce);
        let z = Variable::new("Z", Sort::Any);
        let r = cat(vec![
            Message::enc(cat(vec![id("B"), id("A"), id("S"), y.clone().into()]), pk("kb", "B")),
            Message::enc(cat(vec![id("A"), id("B"), id("S"), z.clone().into()]), pk("kb", "B")),
        ]);
        assert_eq!(r.derive_keep(&z).to_string(), "{B.A.S}kb.{A.B.S.Z}kb");
        assert_eq!(r.derive_keep(&y).to_string(), "{B.A.S.Y}kb.{A.B.S}kb");
    }
}
