//! Group words, their images, and setwise triple products.
//!
//! Word syntax: variables `x`, `y`, `z`, `w` or `x1`..`x9`; `e` for the
//! identity; `*` for multiplication; postfix `^k` for integer powers
//! (so `^-1` is the inverse); `[a, b]` for the commutator `a^-1 b^-1 a b`;
//! parentheses for grouping.

use std::fmt;

use serde::Serialize;

use super::groups::FiniteGroup;
use super::FamilyError;
use crate::engine::exec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WordExpr {
    Var(usize),
    Identity,
    Mul(Box<WordExpr>, Box<WordExpr>),
    Pow(Box<WordExpr>, i64),
}

impl WordExpr {
    /// Number of variables, i.e. one more than the largest index used.
    pub fn arity(&self) -> usize {
        match self {
            WordExpr::Var(i) => i + 1,
            WordExpr::Identity => 0,
            WordExpr::Mul(a, b) => a.arity().max(b.arity()),
            WordExpr::Pow(a, _) => a.arity(),
        }
    }

    pub fn eval(&self, g: &FiniteGroup, vals: &[u32]) -> u32 {
        match self {
            WordExpr::Var(i) => vals[*i],
            WordExpr::Identity => g.identity(),
            WordExpr::Mul(a, b) => g.mul(a.eval(g, vals), b.eval(g, vals)),
            WordExpr::Pow(a, k) => g.pow(a.eval(g, vals), *k),
        }
    }

    pub fn parse(text: &str) -> Result<Self, FamilyError> {
        let mut p = WordParser {
            s: text.as_bytes(),
            pos: 0,
            depth: 0,
        };
        let w = p.product()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(w)
    }
}

impl fmt::Display for WordExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WordExpr::Var(i) => write!(f, "x{}", i + 1),
            WordExpr::Identity => write!(f, "e"),
            WordExpr::Mul(a, b) => write!(f, "({a} * {b})"),
            WordExpr::Pow(a, k) => write!(f, "({a})^{k}"),
        }
    }
}

struct WordParser<'a> {
    s: &'a [u8],
    pos: usize,
    depth: usize,
}

impl WordParser<'_> {
    fn err(&self, msg: &str) -> FamilyError {
        FamilyError::InvalidParameter(format!("word syntax at byte {}: {msg}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn product(&mut self) -> Result<WordExpr, FamilyError> {
        self.depth += 1;
        if self.depth > 128 {
            return Err(self.err("nesting too deep"));
        }
        let mut w = self.power()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let rhs = self.power()?;
            w = WordExpr::Mul(Box::new(w), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(w)
    }

    fn power(&mut self) -> Result<WordExpr, FamilyError> {
        let mut w = self.atom()?;
        while self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            if self.s.get(self.pos) == Some(&b'-') {
                self.pos += 1;
            }
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let k: i64 = std::str::from_utf8(&self.s[start..self.pos])
                .ok()
                .and_then(|t| t.parse().ok())
                .filter(|k: &i64| k.abs() <= 1_000_000)
                .ok_or_else(|| self.err("expected an integer exponent"))?;
            w = WordExpr::Pow(Box::new(w), k);
        }
        Ok(w)
    }

    fn atom(&mut self) -> Result<WordExpr, FamilyError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let w = self.product()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(w)
            }
            Some(b'[') => {
                self.pos += 1;
                let a = self.product()?;
                if self.peek() != Some(b',') {
                    return Err(self.err("expected `,` in commutator"));
                }
                self.pos += 1;
                let b = self.product()?;
                if self.peek() != Some(b']') {
                    return Err(self.err("expected `]`"));
                }
                self.pos += 1;
                let inv = |w: &WordExpr| WordExpr::Pow(Box::new(w.clone()), -1);
                Ok(WordExpr::Mul(
                    Box::new(WordExpr::Mul(Box::new(inv(&a)), Box::new(inv(&b)))),
                    Box::new(WordExpr::Mul(Box::new(a), Box::new(b))),
                ))
            }
            Some(b'e') => {
                self.pos += 1;
                Ok(WordExpr::Identity)
            }
            Some(c @ (b'x' | b'y' | b'z' | b'w')) => {
                self.pos += 1;
                if c == b'x' && self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                    let d = (self.s[self.pos] - b'0') as usize;
                    self.pos += 1;
                    if d == 0 {
                        return Err(self.err("variables are numbered from x1"));
                    }
                    return Ok(WordExpr::Var(d - 1));
                }
                Ok(WordExpr::Var(match c {
                    b'x' => 0,
                    b'y' => 1,
                    b'z' => 2,
                    _ => 3,
                }))
            }
            _ => Err(self.err("expected a variable, `e`, `(` or `[`")),
        }
    }
}

/// Enumeration limit for word images: |G|^d tuples.
pub const WORD_BUDGET: u64 = 200_000_000;

/// The set w(G), sorted.
pub fn word_image(w: &WordExpr, g: &FiniteGroup, workers: usize) -> Result<Vec<u32>, FamilyError> {
    let d = w.arity().max(1);
    let n = g.order() as u64;
    let tuples = n.checked_pow(d as u32).filter(|&t| t <= WORD_BUDGET).ok_or_else(|| {
        FamilyError::TooLarge(format!("{n}^{d} word evaluations exceed {WORD_BUDGET}"))
    })?;
    let inner = tuples / n;
    let words = g.order().div_ceil(64);
    let bits = exec::map_reduce(
        workers,
        g.order(),
        |first| {
            let mut seen = vec![0u64; words];
            let mut vals = vec![0u32; d];
            vals[0] = first as u32;
            for mut t in 0..inner {
                for v in vals.iter_mut().skip(1) {
                    *v = (t % n) as u32;
                    t /= n;
                }
                let x = w.eval(g, &vals) as usize;
                seen[x / 64] |= 1 << (x % 64);
            }
            seen
        },
        || vec![0u64; words],
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x |= y);
            a
        },
    );
    Ok((0..g.order() as u32)
        .filter(|&x| bits[x as usize / 64] >> (x % 64) & 1 == 1)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TripleProduct {
    pub covers: bool,
    /// Elements of G outside X1 X2 X3.
    pub missing: Vec<u32>,
}

fn product_set(a: &[bool], b: &[u32], g: &FiniteGroup, workers: usize) -> Vec<bool> {
    let n = g.order();
    let members: Vec<u32> = (0..n as u32).filter(|&x| a[x as usize]).collect();
    exec::map_reduce(
        workers,
        members.len(),
        |i| {
            let mut out = vec![false; n];
            for &y in b {
                out[g.mul(members[i], y) as usize] = true;
            }
            out
        },
        || vec![false; n],
        |mut x, y| {
            x.iter_mut().zip(y).for_each(|(p, q)| *p |= q);
            x
        },
    )
}

/// Whether X1 X2 X3 = G, with the gap when it does not.
pub fn triple_product_covers(
    x1: &[u32],
    x2: &[u32],
    x3: &[u32],
    g: &FiniteGroup,
    workers: usize,
) -> TripleProduct {
    let mut first = vec![false; g.order()];
    for &x in x1 {
        first[x as usize] = true;
    }
    let two = product_set(&first, x2, g, workers);
    let three = product_set(&two, x3, g, workers);
    let missing: Vec<u32> = (0..g.order() as u32).filter(|&x| !three[x as usize]).collect();
    TripleProduct {
        covers: missing.is_empty(),
        missing,
    }
}
