//! Text front-end for formulas: a hand-written recursive-descent parser and
//! a canonical fully-parenthesized renderer.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! formula := disj [ "->" formula ]
//! disj    := conj { "|" conj }
//! conj    := unary { "&" unary }
//! unary   := "!" unary | quant | "(" formula ")" | atom
//! quant   := ("forall" | "exists") var ":" sort "." formula
//! atom    := rel "(" term { "," term } ")" | term "=" term
//! term    := var | const | func "(" term { "," term } ")"
//! ```
//!
//! A quantifier body is a full `formula`, so its scope runs as far right as
//! possible. Free variables get their sort from the argument positions they
//! occupy (or from the only sort of a one-sorted signature); a free variable
//! whose sort cannot be inferred is a parse error.

mod structure;

pub use structure::{
    load_structure, parse_structure, structure_to_json, LoadError, StructureJson,
};

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::logic::{sort_check, Formula, Signature, SortDiagnostic, Term, Var};

/// Nesting limit; deeper input is rejected rather than risking the stack.
pub const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseDiagnostic {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {0}")]
    Syntax(ParseDiagnostic),
    #[error("sort error: {0}")]
    Sort(SortDiagnostic),
}

impl ParseError {
    pub fn syntax(&self) -> Option<&ParseDiagnostic> {
        match self {
            ParseError::Syntax(d) => Some(d),
            ParseError::Sort(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Forall,
    Exists,
    LParen,
    RParen,
    Comma,
    Colon,
    Dot,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Eq,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Forall => "`forall`".into(),
            Tok::Exists => "`exists`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
    (line, column)
}

fn diagnostic(text: &str, offset: usize, message: String, expected: &[&str]) -> ParseDiagnostic {
    let offset = offset.min(text.len());
    let (line, column) = line_col(text, offset);
    ParseDiagnostic {
        offset,
        line,
        column,
        message,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseDiagnostic> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            '.' => Tok::Dot,
            '!' => Tok::Bang,
            '&' => Tok::Amp,
            '|' => Tok::Pipe,
            '=' => Tok::Eq,
            '-' => {
                chars.next();
                match chars.peek() {
                    Some(&(_, '>')) => {}
                    _ => {
                        return Err(diagnostic(
                            text,
                            i,
                            "stray `-`".into(),
                            &["`->`"],
                        ))
                    }
                }
                Tok::Arrow
            }
            c if is_ident_char(c) => {
                let mut end = i;
                while let Some(&(j, d)) = chars.peek() {
                    if is_ident_char(d) {
                        end = j + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let word = &text[i..end];
                out.push((
                    match word {
                        "forall" => Tok::Forall,
                        "exists" => Tok::Exists,
                        _ => Tok::Ident(word.to_string()),
                    },
                    i,
                ));
                continue;
            }
            other => {
                return Err(diagnostic(
                    text,
                    i,
                    format!("unexpected character {other:?}"),
                    &[],
                ))
            }
        };
        chars.next();
        out.push((tok, i));
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

/// Free variable occurrence awaiting sort inference.
const UNRESOLVED: &str = "";

struct Parser<'a> {
    text: &'a str,
    sig: &'a Signature,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
    scope: Vec<(String, String)>,
    /// Sort evidence for free variables, in order of first occurrence.
    free: Vec<(String, usize, Option<String>)>,
    /// Equalities between two unresolved free variables.
    links: Vec<(String, String)>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: String, expected: &[&str]) -> ParseDiagnostic {
        diagnostic(self.text, self.offset(), message, expected)
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseDiagnostic> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(
                format!("expected {expected}, found {}", self.peek().describe()),
                &[expected],
            ))
        }
    }

    fn enter(&mut self) -> Result<(), ParseDiagnostic> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error(format!("nesting deeper than {MAX_DEPTH}"), &[]));
        }
        Ok(())
    }

    fn formula(&mut self) -> Result<Formula, ParseDiagnostic> {
        self.enter()?;
        let lhs = self.disjunction()?;
        let out = if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            lhs.implies(rhs)
        } else {
            lhs
        };
        self.depth -= 1;
        Ok(out)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseDiagnostic> {
        let mut lhs = self.conjunction()?;
        while *self.peek() == Tok::Pipe {
            self.bump();
            let rhs = self.conjunction()?;
            lhs = lhs.or(rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseDiagnostic> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::Amp {
            self.bump();
            let rhs = self.unary()?;
            lhs = lhs.and(rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseDiagnostic> {
        self.enter()?;
        let out = match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                self.unary()?.not()
            }
            Tok::Forall | Tok::Exists => self.quantifier()?,
            Tok::LParen => {
                self.bump();
                let inner = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                inner
            }
            Tok::Ident(_) => self.atom()?,
            other => {
                return Err(self.error(
                    format!("expected a formula, found {}", other.describe()),
                    &["`!`", "`(`", "`forall`", "`exists`", "identifier"],
                ))
            }
        };
        self.depth -= 1;
        Ok(out)
    }

    fn quantifier(&mut self) -> Result<Formula, ParseDiagnostic> {
        let universal = self.bump() == Tok::Forall;
        let name = match self.peek().clone() {
            Tok::Ident(n) if self.is_variable_name(&n) => {
                self.bump();
                n
            }
            other => {
                return Err(self.error(
                    format!("expected a variable name, found {}", other.describe()),
                    &["variable"],
                ));
            }
        };
        self.expect(Tok::Colon, "`:`")?;
        let sort_offset = self.offset();
        let sort = match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                s
            }
            other => {
                return Err(self.error(
                    format!("expected a sort name, found {}", other.describe()),
                    &["sort"],
                ));
            }
        };
        if self.sig.sort_id(&sort).is_none() {
            return Err(diagnostic(
                self.text,
                sort_offset,
                format!("unknown sort `{sort}`"),
                &["sort"],
            ));
        }
        self.expect(Tok::Dot, "`.`")?;
        self.scope.push((name.clone(), sort.clone()));
        let body = self.formula();
        self.scope.pop();
        let body = Box::new(body?);
        let var = Var { name, sort };
        Ok(if universal {
            Formula::Forall(var, body)
        } else {
            Formula::Exists(var, body)
        })
    }

    fn is_variable_name(&self, name: &str) -> bool {
        self.sig.relation(name).is_none()
            && self.sig.function(name).is_none()
            && self.sig.constant(name).is_none()
    }

    fn atom(&mut self) -> Result<Formula, ParseDiagnostic> {
        if let Tok::Ident(name) = self.peek().clone() {
            if let Some((_, sym)) = self.sig.relation(&name) {
                let sorts: Vec<String> = sym
                    .arg_sorts
                    .iter()
                    .map(|&s| self.sig.sort_name(s).to_string())
                    .collect();
                self.bump();
                let args = self.arguments(&sorts)?;
                return Ok(Formula::Rel(name, args));
            }
        }
        let lhs = self.term(None)?;
        if *self.peek() != Tok::Eq {
            return Err(self.error(
                format!("expected `=`, found {}", self.peek().describe()),
                &["`=`"],
            ));
        }
        self.bump();
        let lhs_sort = self.term_sort(&lhs);
        let rhs = self.term(lhs_sort.as_deref())?;
        if lhs_sort.is_none() {
            match (&lhs, self.term_sort(&rhs)) {
                (Term::Var(v), Some(s)) => self.note_free(&v.name, usize::MAX, Some(s)),
                (Term::Var(a), None) => {
                    if let Term::Var(b) = &rhs {
                        self.links.push((a.name.clone(), b.name.clone()));
                    }
                }
                _ => {}
            }
        }
        Ok(Formula::Eq(lhs, rhs))
    }

    fn arguments(&mut self, sorts: &[String]) -> Result<Vec<Term>, ParseDiagnostic> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(args);
        }
        loop {
            let hint = sorts.get(args.len()).map(String::as_str);
            args.push(self.term(hint)?);
            match self.peek().clone() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(args);
                }
                other => {
                    return Err(self.error(
                        format!("expected `,` or `)`, found {}", other.describe()),
                        &["`,`", "`)`"],
                    ));
                }
            }
        }
    }

    /// Sort of a term when it is already known.
    fn term_sort(&self, t: &Term) -> Option<String> {
        match t {
            Term::Var(v) if v.sort != UNRESOLVED => Some(v.sort.clone()),
            Term::Var(v) => self
                .free
                .iter()
                .find(|(n, _, _)| n == &v.name)
                .and_then(|(_, _, s)| s.clone()),
            Term::Const(c) => self
                .sig
                .constant(c)
                .map(|(_, s)| self.sig.sort_name(s.sort).to_string()),
            Term::App(f, _) => self
                .sig
                .function(f)
                .map(|(_, s)| self.sig.sort_name(s.result_sort).to_string()),
        }
    }

    fn note_free(&mut self, name: &str, offset: usize, sort: Option<String>) {
        match self.free.iter_mut().find(|(n, _, _)| n == name) {
            Some(entry) => {
                if entry.2.is_none() {
                    entry.2 = sort;
                }
                if entry.1 == usize::MAX {
                    entry.1 = offset;
                }
            }
            None => self.free.push((name.to_string(), offset, sort)),
        }
    }

    fn term(&mut self, hint: Option<&str>) -> Result<Term, ParseDiagnostic> {
        self.enter()?;
        let offset = self.offset();
        let name = match self.peek().clone() {
            Tok::Ident(n) => {
                self.bump();
                n
            }
            other => {
                return Err(self.error(
                    format!("expected a term, found {}", other.describe()),
                    &["identifier"],
                ));
            }
        };
        let out = if let Some((_, sym)) = self.sig.function(&name) {
            let sorts: Vec<String> = sym
                .arg_sorts
                .iter()
                .map(|&s| self.sig.sort_name(s).to_string())
                .collect();
            let args = self.arguments(&sorts)?;
            Term::App(name, args)
        } else if self.sig.constant(&name).is_some() {
            Term::Const(name)
        } else if self.sig.relation(&name).is_some() {
            return Err(diagnostic(
                self.text,
                offset,
                format!("relation `{name}` used as a term"),
                &["term"],
            ));
        } else if *self.peek() == Tok::LParen {
            return Err(diagnostic(
                self.text,
                offset,
                format!("unknown relation or function `{name}`"),
                &["relation", "function"],
            ));
        } else if let Some((_, sort)) = self.scope.iter().rev().find(|(n, _)| n == &name) {
            Term::var(&name, sort)
        } else {
            self.note_free(&name, offset, hint.map(str::to_string));
            Term::var(&name, UNRESOLVED)
        };
        self.depth -= 1;
        Ok(out)
    }

    fn resolve_free(&mut self) -> Result<HashMap<String, String>, ParseDiagnostic> {
        loop {
            let mut changed = false;
            for (a, b) in self.links.clone() {
                let sa = self.free.iter().find(|e| e.0 == a).and_then(|e| e.2.clone());
                let sb = self.free.iter().find(|e| e.0 == b).and_then(|e| e.2.clone());
                match (sa, sb) {
                    (Some(s), None) => {
                        self.note_free(&b, usize::MAX, Some(s));
                        changed = true;
                    }
                    (None, Some(s)) => {
                        self.note_free(&a, usize::MAX, Some(s));
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        if let [only] = self.sig.sorts() {
            for entry in self.free.iter_mut() {
                entry.2.get_or_insert_with(|| only.clone());
            }
        }
        let mut out = HashMap::new();
        for (name, offset, sort) in &self.free {
            match sort {
                Some(s) => {
                    out.insert(name.clone(), s.clone());
                }
                None => {
                    return Err(diagnostic(
                        self.text,
                        *offset,
                        format!("cannot infer the sort of free variable `{name}`"),
                        &[],
                    ))
                }
            }
        }
        Ok(out)
    }
}

fn fill_sorts(f: &mut Formula, sorts: &HashMap<String, String>) {
    fn term(t: &mut Term, sorts: &HashMap<String, String>) {
        match t {
            Term::Var(v) if v.sort == UNRESOLVED => {
                if let Some(s) = sorts.get(&v.name) {
                    v.sort = s.clone();
                }
            }
            Term::Var(_) | Term::Const(_) => {}
            Term::App(_, args) => args.iter_mut().for_each(|a| term(a, sorts)),
        }
    }
    match f {
        Formula::Rel(_, args) => args.iter_mut().for_each(|a| term(a, sorts)),
        Formula::Eq(a, b) => {
            term(a, sorts);
            term(b, sorts);
        }
        Formula::Not(a) => fill_sorts(a, sorts),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            fill_sorts(a, sorts);
            fill_sorts(b, sorts);
        }
        Formula::Exists(_, body) | Formula::Forall(_, body) => fill_sorts(body, sorts),
    }
}

/// Parses and sort-checks a formula against `sig`.
pub fn parse_formula(text: &str, sig: &Signature) -> Result<Formula, ParseError> {
    let toks = lex(text).map_err(ParseError::Syntax)?;
    let mut p = Parser {
        text,
        sig,
        toks,
        pos: 0,
        depth: 0,
        scope: Vec::new(),
        free: Vec::new(),
        links: Vec::new(),
    };
    let mut f = p.formula().map_err(ParseError::Syntax)?;
    if *p.peek() != Tok::Eof {
        return Err(ParseError::Syntax(p.error(
            format!("unexpected {} after formula", p.peek().describe()),
            &["`&`", "`|`", "`->`", "end of input"],
        )));
    }
    let sorts = p.resolve_free().map_err(ParseError::Syntax)?;
    fill_sorts(&mut f, &sorts);
    sort_check(&f, sig).map_err(ParseError::Sort)?;
    Ok(f)
}

pub fn render_term(t: &Term) -> String {
    match t {
        Term::Var(v) => v.name.clone(),
        Term::Const(c) => c.clone(),
        Term::App(f, args) => format!(
            "{f}({})",
            args.iter().map(render_term).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Canonical text: every compound operand is parenthesized.
pub fn render_formula(f: &Formula) -> String {
    let mut out = String::new();
    render_into(f, &mut out);
    out
}

fn render_into(f: &Formula, out: &mut String) {
    let paren = |g: &Formula, out: &mut String| {
        out.push('(');
        render_into(g, out);
        out.push(')');
    };
    match f {
        Formula::Rel(r, args) => {
            out.push_str(r);
            out.push('(');
            out.push_str(&args.iter().map(render_term).collect::<Vec<_>>().join(", "));
            out.push(')');
        }
        Formula::Eq(a, b) => {
            out.push_str(&render_term(a));
            out.push_str(" = ");
            out.push_str(&render_term(b));
        }
        Formula::Not(a) => {
            out.push('!');
            paren(a, out);
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            let op = match f {
                Formula::And(..) => " & ",
                Formula::Or(..) => " | ",
                _ => " -> ",
            };
            paren(a, out);
            out.push_str(op);
            paren(b, out);
        }
        Formula::Exists(v, body) | Formula::Forall(v, body) => {
            out.push_str(if matches!(f, Formula::Exists(..)) {
                "exists "
            } else {
                "forall "
            });
            out.push_str(&v.name);
            out.push(':');
            out.push_str(&v.sort);
            out.push_str(". ");
            paren(body, out);
        }
    }
}
