//! The protocol description language.
//!
//! ```text
//! principals A, B, S ;
//! intruder I ;
//! keys   { ka: pub(A); kab: shared(A, B); }
//! fresh  { A: Na; S: secret sec; }
//! levels { Na = {A,B,S}; sec = {A,S}; }
//! knows  { A: A,B,S,ka,inv(ka); I: A,B,S,ka; }
//! protocol {
//!   1. A -> S : enc( A . Na . S . B , ks ) ;
//! }
//! roles {
//!   vars { X: any; Y: nonce; }
//!   role A { eps => enc(A . Na^i . S . B, ks) to S ; }
//! }
//! ```
//!
//! `#` starts a comment. Fresh atoms are nonces when prefixed `nonce` or,
//! without a prefix, when their name starts with `N`; otherwise secrets.
//! Names that only appear in `levels` are secrets. Without a `knows` block
//! every principal knows all identities, all public keys, its own private
//! keys and the shared keys it holds; the intruder knows identities and
//! public keys.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::context::VerificationContext;
use crate::lattice::SecurityLevel;
use crate::protocol::{GeneralizedRole, ProtocolSpec, RoleRule, Step};
use crate::term::{Atom, KeyTerm, Message, Session, Sort, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub context: VerificationContext,
    pub spec: ProtocolSpec,
    /// Explicit generalized roles, when the `roles` block is present.
    pub roles: Option<Vec<GeneralizedRole>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u32),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(n) => write!(f, "`{n}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const SYMBOLS: [&str; 14] = ["->", "=>", ";", ",", ":", "{", "}", "(", ")", ".", "=", "^", "[", "]"];

fn lex(input: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = input.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = (line, col);
        if c.is_ascii_alphabetic() || c == '_' || c == 'ε' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == 'ε') {
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            out.push(Token { tok: Tok::Ident(s), line: start.0, column: start.1 });
            continue;
        }
        if c.is_ascii_digit() {
            let mut n: u64 = 0;
            while i < chars.len() && chars[i].is_ascii_digit() {
                n = n * 10 + chars[i].to_digit(10).unwrap() as u64;
                if n > u32::MAX as u64 {
                    return Err(ParseError { line: start.0, column: start.1, message: "number too large".into() });
                }
                i += 1;
                col += 1;
            }
            out.push(Token { tok: Tok::Num(n as u32), line: start.0, column: start.1 });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.chars().count();
                col += s.chars().count();
                out.push(Token { tok: Tok::Sym(s), line: start.0, column: start.1 });
            }
            None => {
                return Err(ParseError {
                    line: start.0,
                    column: start.1,
                    message: format!("unexpected character {c:?}"),
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

struct KeyDecl {
    name: String,
    kind: KeyKind,
}

enum KeyKind {
    Public(String),
    Shared(Vec<String>),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    principals: Vec<String>,
    intruder: Option<String>,
    atoms: BTreeMap<String, Atom>,
    vars: BTreeMap<String, Variable>,
}

fn sort_name(s: &str) -> Option<Sort> {
    s.parse().ok()
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn err_at<T>(&self, pos: usize, message: impl Into<String>) -> Result<T, ParseError> {
        let t = &self.toks[pos.min(self.toks.len() - 1)];
        Err(ParseError { line: t.line, column: t.column, message: message.into() })
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        self.err_at(self.pos, message)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.peek()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected an identifier, found {other}")),
        }
    }

    fn ident_list(&mut self, terminator: &str) -> Result<Vec<(String, usize)>, ParseError> {
        let mut out = Vec::new();
        loop {
            let pos = self.pos;
            out.push((self.ident()?, pos));
            if !self.eat_sym(",") {
                break;
            }
        }
        if !self.is_sym(terminator) {
            return self.err(format!("expected `,` or `{terminator}`, found {}", self.peek()));
        }
        Ok(out)
    }

    fn principal(&self, name: &str, pos: usize) -> Result<(), ParseError> {
        if self.principals.iter().any(|p| p == name) {
            Ok(())
        } else {
            self.err_at(pos, format!("undeclared principal `{name}`"))
        }
    }

    fn declare(&mut self, atom: Atom, pos: usize) -> Result<(), ParseError> {
        if let Some(prev) = self.atoms.get(&atom.name) {
            if prev.sort != atom.sort {
                return self.err_at(pos, format!("`{}` declared as both {} and {}", atom.name, prev.sort, atom.sort));
            }
            return Ok(());
        }
        self.atoms.insert(atom.name.clone(), atom);
        Ok(())
    }

    fn parse(mut self) -> Result<Document, ParseError> {
        if matches!(self.peek(), Tok::Eof) {
            return self.err("empty protocol description");
        }
        let mut keys: Vec<KeyDecl> = Vec::new();
        let mut fresh: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut levels: Vec<(String, SecurityLevel, usize)> = Vec::new();
        let mut knows: Option<Vec<(String, Vec<Atom>)>> = None;
        let mut steps: Option<Vec<Step>> = None;
        let mut roles = None;
        while !matches!(self.peek(), Tok::Eof) {
            let pos = self.pos;
            let kw = self.ident()?;
            match kw.as_str() {
                "principals" => {
                    for (p, ppos) in self.ident_list(";")? {
                        if self.principals.contains(&p) {
                            return self.err_at(ppos, format!("principal `{p}` declared twice"));
                        }
                        self.atoms.insert(p.clone(), Atom::identity(&p));
                        self.principals.push(p);
                    }
                    self.expect_sym(";")?;
                }
                "intruder" => {
                    let ipos = self.pos;
                    let name = self.ident()?;
                    if self.intruder.is_some() {
                        return self.err_at(ipos, "intruder declared twice");
                    }
                    if !self.principals.contains(&name) {
                        self.principals.push(name.clone());
                        self.atoms.insert(name.clone(), Atom::identity(&name));
                    }
                    self.intruder = Some(name);
                    self.expect_sym(";")?;
                }
                "keys" => keys.extend(self.keys_block()?),
                "fresh" => {
                    for (agent, atoms) in self.fresh_block()? {
                        fresh.entry(agent).or_default().extend(atoms);
                    }
                }
                "levels" => levels.extend(self.levels_block()?),
                "knows" => knows = Some(self.knows_block()?),
                "protocol" => steps = Some(self.protocol_block()?),
                "roles" => roles = Some(self.roles_block()?),
                other => return self.err_at(pos, format!("unknown section `{other}`")),
            }
        }
        let Some(intruder) = self.intruder.clone() else {
            return self.err("missing `intruder` declaration");
        };
        let Some(steps) = steps else {
            return self.err("missing `protocol` block");
        };

        let mut ctx = VerificationContext::new(self.principals.clone(), &intruder);
        for k in &keys {
            match &k.kind {
                KeyKind::Public(owner) => {
                    ctx.add_public_key(&k.name, owner);
                }
                KeyKind::Shared(holders) => {
                    let hs: Vec<&str> = holders.iter().map(String::as_str).collect();
                    ctx.add_shared_key(&k.name, &hs);
                }
            }
        }
        for (name, level, pos) in levels {
            if !self.atoms.contains_key(&name) {
                return self.err_at(pos, format!("no atom named `{name}`"));
            }
            ctx.set_level(&name, level);
        }
        match knows {
            Some(entries) => {
                for (agent, atoms) in entries {
                    ctx.add_knowledge(&agent, atoms);
                }
            }
            None => {
                for p in &self.principals {
                    let mut k: Vec<Atom> = self.principals.iter().map(|q| Atom::identity(q)).collect();
                    for d in &keys {
                        let atom = &self.atoms[&d.name];
                        match &d.kind {
                            KeyKind::Public(owner) => {
                                k.push(atom.clone());
                                if owner == p && *p != intruder {
                                    k.push(atom.inverted());
                                }
                            }
                            KeyKind::Shared(holders) => {
                                if holders.contains(p) {
                                    k.push(atom.clone());
                                }
                            }
                        }
                    }
                    ctx.set_knowledge(p, k);
                }
            }
        }
        let spec = ProtocolSpec {
            steps,
            fresh: fresh
                .into_iter()
                .map(|(agent, names)| (agent, names.iter().map(|n| self.atoms[n].clone()).collect()))
                .collect(),
        };
        Ok(Document { context: ctx, spec, roles })
    }

    fn keys_block(&mut self) -> Result<Vec<KeyDecl>, ParseError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            let pos = self.pos;
            let name = self.ident()?;
            self.expect_sym(":")?;
            let kpos = self.pos;
            let kind = self.ident()?;
            self.expect_sym("(")?;
            let args = self.ident_list(")")?;
            self.expect_sym(")")?;
            self.expect_sym(";")?;
            for (a, apos) in &args {
                self.principal(a, *apos)?;
            }
            let kind = match kind.as_str() {
                "pub" => {
                    if args.len() != 1 {
                        return self.err_at(kpos, "pub(..) takes exactly one owner");
                    }
                    KeyKind::Public(args[0].0.clone())
                }
                "shared" => KeyKind::Shared(args.into_iter().map(|(a, _)| a).collect()),
                other => return self.err_at(kpos, format!("unknown key kind `{other}` (expected pub or shared)")),
            };
            let owner = match &kind {
                KeyKind::Public(o) => Some(o.as_str()),
                KeyKind::Shared(_) => None,
            };
            self.declare(Atom::key(&name, owner), pos)?;
            out.push(KeyDecl { name, kind });
        }
        Ok(out)
    }

    fn fresh_block(&mut self) -> Result<Vec<(String, Vec<String>)>, ParseError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            let apos = self.pos;
            let agent = self.ident()?;
            self.principal(&agent, apos)?;
            self.expect_sym(":")?;
            let mut names = Vec::new();
            loop {
                let mut sort = None;
                if let (Tok::Ident(s), Tok::Ident(_)) = (self.peek().clone(), self.peek_at(1).clone()) {
                    if let Some(x @ (Sort::Nonce | Sort::Secret)) = sort_name(&s) {
                        sort = Some(x);
                        self.bump();
                    }
                }
                let pos = self.pos;
                let name = self.ident()?;
                let sort = sort.unwrap_or(if name.starts_with('N') { Sort::Nonce } else { Sort::Secret });
                let atom = if sort == Sort::Nonce { Atom::nonce(&name) } else { Atom::secret(&name) };
                self.declare(atom, pos)?;
                names.push(name);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(";")?;
            out.push((agent, names));
        }
        Ok(out)
    }

    fn levels_block(&mut self) -> Result<Vec<(String, SecurityLevel, usize)>, ParseError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            let pos = self.pos;
            let name = self.ident()?;
            self.expect_sym("=")?;
            let level = if self.is_kw("top") || self.is_kw("Top") {
                self.bump();
                SecurityLevel::Top
            } else if self.is_kw("bottom") || self.is_kw("Bottom") {
                self.bump();
                SecurityLevel::Bottom
            } else {
                self.expect_sym("{")?;
                let mut names = Vec::new();
                if !self.is_sym("}") {
                    for (p, ppos) in self.ident_list("}")? {
                        self.principal(&p, ppos)?;
                        names.push(p);
                    }
                }
                self.expect_sym("}")?;
                SecurityLevel::finite(names)
            };
            self.expect_sym(";")?;
            if !self.atoms.contains_key(&name) {
                self.declare(Atom::secret(&name), pos)?;
            }
            out.push((name, level, pos));
        }
        Ok(out)
    }

    fn knows_block(&mut self) -> Result<Vec<(String, Vec<Atom>)>, ParseError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            let apos = self.pos;
            let agent = self.ident()?;
            self.principal(&agent, apos)?;
            self.expect_sym(":")?;
            let mut atoms = Vec::new();
            if !self.is_sym(";") {
                loop {
                    match self.message()? {
                        Message::Atom(a) => atoms.push(a),
                        _ => return self.err("initial knowledge lists atoms only"),
                    }
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(";")?;
            out.push((agent, atoms));
        }
        Ok(out)
    }

    fn protocol_block(&mut self) -> Result<Vec<Step>, ParseError> {
        self.expect_sym("{")?;
        let mut steps: Vec<Step> = Vec::new();
        while !self.eat_sym("}") {
            let pos = self.pos;
            let id = match self.bump() {
                Tok::Num(n) => n,
                other => return self.err_at(pos, format!("expected a step number, found {other}")),
            };
            if let Some(prev) = steps.last() {
                if id <= prev.id {
                    return self.err_at(pos, format!("step {id} follows step {}", prev.id));
                }
            }
            self.expect_sym(".")?;
            let spos = self.pos;
            let sender = self.ident()?;
            self.principal(&sender, spos)?;
            self.expect_sym("->")?;
            let rpos = self.pos;
            let receiver = self.ident()?;
            self.principal(&receiver, rpos)?;
            self.expect_sym(":")?;
            let mpos = self.pos;
            let message = self.message()?;
            if !message.is_ground() {
                return self.err_at(mpos, "protocol steps must not contain variables");
            }
            self.expect_sym(";")?;
            steps.push(Step { id, sender, receiver, message });
        }
        Ok(steps)
    }

    fn roles_block(&mut self) -> Result<Vec<GeneralizedRole>, ParseError> {
        self.expect_sym("{")?;
        let mut roles = Vec::new();
        while !self.eat_sym("}") {
            let pos = self.pos;
            match self.ident()?.as_str() {
                "vars" => {
                    self.expect_sym("{")?;
                    while !self.eat_sym("}") {
                        let vpos = self.pos;
                        let name = self.ident()?;
                        self.expect_sym(":")?;
                        let spos = self.pos;
                        let s = self.ident()?;
                        let Some(sort) = sort_name(&s) else {
                            return self.err_at(spos, format!("unknown sort `{s}`"));
                        };
                        self.expect_sym(";")?;
                        if self.atoms.contains_key(&name) {
                            return self.err_at(vpos, format!("variable `{name}` shadows an atom"));
                        }
                        self.vars.insert(name.clone(), Variable::new(&name, sort));
                    }
                }
                "role" => {
                    let apos = self.pos;
                    let agent = self.ident()?;
                    self.principal(&agent, apos)?;
                    self.expect_sym("{")?;
                    let mut rules = Vec::new();
                    while !self.eat_sym("}") {
                        let received = self.message()?;
                        self.expect_sym("=>")?;
                        let sent = self.message()?;
                        let mut rule = RoleRule { received, received_from: None, sent, sent_to: None };
                        loop {
                            if self.is_kw("from") || self.is_kw("to") {
                                let kw = self.ident()?;
                                let ppos = self.pos;
                                let p = self.ident()?;
                                self.principal(&p, ppos)?;
                                if kw == "from" {
                                    rule.received_from = Some(p);
                                } else {
                                    rule.sent_to = Some(p);
                                }
                            } else {
                                break;
                            }
                        }
                        self.expect_sym(";")?;
                        rules.push(rule);
                    }
                    let mut variables = Vec::new();
                    for r in &rules {
                        for v in r.received.vars().into_iter().chain(r.sent.vars()) {
                            if !variables.contains(&v) {
                                variables.push(v);
                            }
                        }
                    }
                    let role = GeneralizedRole { agent, rules, variables };
                    if let Err(e) = role.validate() {
                        return self.err_at(apos, e.to_string());
                    }
                    roles.push(role);
                }
                other => return self.err_at(pos, format!("expected `vars` or `role`, found `{other}`")),
            }
        }
        Ok(roles)
    }

    /// message := item ('.' item)*
    fn message(&mut self) -> Result<Message, ParseError> {
        let mut items = vec![self.item()?];
        while self.eat_sym(".") {
            items.push(self.item()?);
        }
        Ok(Message::concat(items))
    }

    fn item(&mut self) -> Result<Message, ParseError> {
        if self.eat_sym("(") {
            let m = self.message()?;
            self.expect_sym(")")?;
            return Ok(m);
        }
        let pos = self.pos;
        let name = self.ident()?;
        match name.as_str() {
            "eps" | "ε" => return Ok(Message::Empty),
            "enc" if self.is_sym("(") => {
                self.bump();
                let body = self.message()?;
                self.expect_sym(",")?;
                let kpos = self.pos;
                let key = self.message()?;
                self.expect_sym(")")?;
                return match KeyTerm::from_message(key) {
                    Ok(k) => Ok(Message::enc(body, k)),
                    Err(e) => self.err_at(kpos, e.to_string()),
                };
            }
            "inv" if self.is_sym("(") => {
                self.bump();
                let kpos = self.pos;
                let inner = self.item()?;
                self.expect_sym(")")?;
                return match inner {
                    Message::Atom(a) if a.sort == Sort::Key => Ok(Message::Atom(a.inverted())),
                    Message::Var(v) if v.sort == Sort::Key => Ok(Message::Var(v.inverted())),
                    _ => self.err_at(kpos, "inv(..) expects a key"),
                };
            }
            _ => {}
        }
        if let Some(v) = self.vars.get(&name) {
            return Ok(Message::Var(v.clone()));
        }
        let Some(atom) = self.atoms.get(&name).cloned() else {
            return self.err_at(pos, format!("undeclared identifier `{name}`"));
        };
        if self.eat_sym("^") {
            let spos = self.pos;
            let session = match self.bump() {
                Tok::Ident(s) if s == "i" => Session::Generic,
                Tok::Num(n) => Session::Run(n),
                other => return self.err_at(spos, format!("expected `i` or a session number, found {other}")),
            };
            return Ok(Message::Atom(atom.with_session(Some(session))));
        }
        Ok(Message::Atom(atom))
    }
}

/// Parses a complete protocol description.
pub fn parse_dsl(text: &str) -> Result<Document, ParseError> {
    let parser = Parser {
        toks: lex(text)?,
        pos: 0,
        principals: Vec::new(),
        intruder: None,
        atoms: BTreeMap::new(),
        vars: BTreeMap::new(),
    };
    let doc = parser.parse()?;
    doc.spec
        .validate(&doc.context)
        .map_err(|e| ParseError { line: 1, column: 1, message: e.to_string() })?;
    Ok(doc)
}

/// Parses a single message against the atoms of `doc`. Variables are taken
/// from the explicit roles of `doc` and from `vars`.
pub fn parse_message(doc: &Document, text: &str, vars: &[Variable]) -> Result<Message, ParseError> {
    let mut atoms = BTreeMap::new();
    let mut add = |a: Atom| {
        let base = Atom { session: None, inverse: false, ..a };
        atoms.entry(base.name.clone()).or_insert(base);
    };
    doc.context.principals().iter().for_each(|p| add(Atom::identity(p)));
    doc.context.keys().iter().for_each(|k| add(k.key.clone()));
    doc.spec.steps.iter().flat_map(|s| s.message.atoms()).for_each(&mut add);
    doc.context.knowledge().values().flatten().cloned().for_each(&mut add);
    let mut table = BTreeMap::new();
    let declared = doc.roles.iter().flatten().flat_map(|r| r.variables.iter());
    for v in declared.chain(vars) {
        table.insert(v.name.clone(), v.clone());
    }
    let mut parser = Parser {
        toks: lex(text)?,
        pos: 0,
        principals: doc.context.principals().to_vec(),
        intruder: Some(doc.context.intruder().to_string()),
        atoms,
        vars: table,
    };
    if matches!(parser.peek(), Tok::Eof) {
        return parser.err("empty message");
    }
    let m = parser.message()?;
    if !matches!(parser.peek(), Tok::Eof) {
        return parser.err(format!("unexpected {} after the message", parser.peek()));
    }
    Ok(m)
}
