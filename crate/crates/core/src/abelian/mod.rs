//! Counting standard-form definable sets in homocyclic groups (Z/p^n Z)^m.
//!
//! A standard atom is `t = 0` or `q^l | t` for an integer-linear term `t` in
//! counted variables `x1..xr` and parameters `y1..ys`, possibly negated.
//! [`exact_count`] handles one counted variable through the chain of
//! subgroups `p^i G`; [`symbolic_count`] produces guarded exponent
//! polynomials valid for every homocyclic group at once.
//!
//! Text syntax: `3*x1 - y1 = 0`, `div(2^2, x1 + y2)`, `!` before an atom,
//! `&` between atoms. `x` and `y` abbreviate `x1` and `y1`.

use std::fmt;

use thiserror::Error;

use crate::logic::{Formula, Signature, Term};

mod exact;
mod lattice;
mod symbolic;

pub use exact::{exact_count, MAX_NEGATIONS};
pub use symbolic::{
    evaluate_poly, symbolic_count, ExponentPolynomial, Guard, GuardClause, NRange, PrimeClass,
    SymbolicConfig, SymbolicCount, SymbolicEntry,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbelianError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("too many negated atoms: {found} (limit {limit})")]
    TooManyNegations { found: usize, limit: usize },
    #[error("too many counted variables: {found} (limit {limit})")]
    TooManyVariables { found: usize, limit: usize },
    #[error("negative exponent {exponent} with nonzero coefficient")]
    NegativeExponent { exponent: i64 },
}

/// Integer coefficients of `x1..xr` then `y1..ys`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LinearTerm {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
}

impl LinearTerm {
    pub fn new(x: Vec<i64>, y: Vec<i64>) -> Self {
        LinearTerm { x, y }
    }

    pub fn is_zero(&self) -> bool {
        self.x.iter().chain(&self.y).all(|&c| c == 0)
    }

    fn padded(&self, r: usize, s: usize) -> Self {
        let mut t = self.clone();
        t.x.resize(r, 0);
        t.y.resize(s, 0);
        t
    }
}

impl fmt::Display for LinearTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts = self
            .x
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, format!("x{}", i + 1)))
            .chain(self.y.iter().enumerate().map(|(i, &c)| (c, format!("y{}", i + 1))))
            .filter(|(c, _)| *c != 0);
        let mut first = true;
        for (c, v) in parts {
            let (sign, a) = if c < 0 { ("-", -c) } else { ("+", c) };
            match (first, sign) {
                (true, "-") => write!(f, "-")?,
                (true, _) => {}
                (false, s) => write!(f, " {s} ")?,
            }
            if a == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{a}*{v}")?;
            }
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomKind {
    /// `t = 0`
    Eq,
    /// `prime^power | t`, with `power >= 1`
    Div { prime: u64, power: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StandardAtom {
    pub kind: AtomKind,
    pub term: LinearTerm,
    pub negated: bool,
}

impl StandardAtom {
    pub fn eq(term: LinearTerm) -> Self {
        StandardAtom {
            kind: AtomKind::Eq,
            term,
            negated: false,
        }
    }

    pub fn div(prime: u64, power: u32, term: LinearTerm) -> Self {
        StandardAtom {
            kind: AtomKind::Div { prime, power },
            term,
            negated: false,
        }
    }

    pub fn negate(mut self) -> Self {
        self.negated = !self.negated;
        self
    }
}

impl fmt::Display for StandardAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body = match self.kind {
            AtomKind::Eq => format!("{} = 0", self.term),
            AtomKind::Div { prime, power } => format!("div({prime}^{power}, {})", self.term),
        };
        if self.negated {
            write!(f, "!({body})")
        } else {
            f.write_str(&body)
        }
    }
}

/// A conjunction of standard atoms with `r` counted variables and `s` parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conjunction {
    atoms: Vec<StandardAtom>,
    r: usize,
    s: usize,
}

impl Conjunction {
    /// Pads every term to `r` counted and `s` parameter coefficients.
    pub fn new(atoms: Vec<StandardAtom>, r: usize, s: usize) -> Result<Self, AbelianError> {
        let mut out = Vec::with_capacity(atoms.len());
        for a in atoms {
            if a.term.x.len() > r || a.term.y.len() > s {
                return Err(AbelianError::Invalid(format!(
                    "atom `{a}` uses more than {r} counted or {s} parameter variables"
                )));
            }
            if let AtomKind::Div { prime, power } = a.kind {
                if !crate::families::is_prime(prime) || power == 0 {
                    return Err(AbelianError::Invalid(format!(
                        "divisibility needs a prime base and positive power, got {prime}^{power}"
                    )));
                }
            }
            out.push(StandardAtom {
                term: a.term.padded(r, s),
                ..a
            });
        }
        Ok(Conjunction { atoms: out, r, s })
    }

    /// Counted and parameter arity inferred from the highest indices used, at least 1 counted.
    pub fn infer(atoms: Vec<StandardAtom>) -> Result<Self, AbelianError> {
        let r = atoms.iter().map(|a| a.term.x.len()).max().unwrap_or(0).max(1);
        let s = atoms.iter().map(|a| a.term.y.len()).max().unwrap_or(0);
        Conjunction::new(atoms, r, s)
    }

    pub fn atoms(&self) -> &[StandardAtom] {
        &self.atoms
    }

    pub fn counted(&self) -> usize {
        self.r
    }

    pub fn params(&self) -> usize {
        self.s
    }

    /// Largest l such that some `q^l | t` occurs or some coefficient is divisible by q^l.
    pub fn degree_bound(&self) -> u32 {
        let mut d = 0;
        for a in &self.atoms {
            if let AtomKind::Div { power, .. } = a.kind {
                d = d.max(power);
            }
            for &c in a.term.x.iter().chain(&a.term.y) {
                d = d.max(max_prime_power(c.unsigned_abs()));
            }
        }
        d
    }

    /// The conjunction as a formula over `add`, `neg`, `0` on sort `G`, with
    /// divisibility spelled out as `exists z:G. q^l z = t`.
    pub fn to_formula(&self, sig: &Signature) -> Result<Formula, AbelianError> {
        for (name, arity) in [("add", 2), ("neg", 1)] {
            if sig.function(name).map(|(_, f)| f.arg_sorts.len()) != Some(arity) {
                return Err(AbelianError::Invalid(format!("signature lacks `{name}`")));
            }
        }
        if sig.constant("0").is_none() {
            return Err(AbelianError::Invalid("signature lacks constant `0`".into()));
        }
        let mut conj: Option<Formula> = None;
        for a in &self.atoms {
            let t = linear_term(&a.term);
            let atom = match a.kind {
                AtomKind::Eq => Formula::eq(t, Term::constant("0")),
                AtomKind::Div { prime, power } => {
                    let q = prime
                        .checked_pow(power)
                        .filter(|&q| q <= 4096)
                        .ok_or_else(|| AbelianError::Invalid("divisor too large to spell out".into()))?;
                    let z = Term::var("z", "G");
                    Formula::exists("z", "G", Formula::eq(multiple(q as i64, z), t))
                }
            };
            let atom = if a.negated { Formula::not(atom) } else { atom };
            conj = Some(match conj {
                None => atom,
                Some(c) => Formula::and(c, atom),
            });
        }
        Ok(conj.unwrap_or_else(|| {
            let x = Term::var("x1", "G");
            Formula::eq(x.clone(), x)
        }))
    }
}

impl fmt::Display for Conjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return f.write_str("x1 = x1");
        }
        let parts: Vec<String> = self.atoms.iter().map(|a| a.to_string()).collect();
        f.write_str(&parts.join(" & "))
    }
}

fn max_prime_power(c: u64) -> u32 {
    if c == 0 {
        return 0;
    }
    let mut rest = c;
    let mut best = 0;
    let mut q = 2;
    while q * q <= rest {
        let mut e = 0;
        while rest % q == 0 {
            rest /= q;
            e += 1;
        }
        best = best.max(e);
        q += 1;
    }
    if rest > 1 {
        best = best.max(1);
    }
    best
}

fn multiple(k: i64, t: Term) -> Term {
    if k == 0 {
        return Term::constant("0");
    }
    let mut acc = t.clone();
    for _ in 1..k.unsigned_abs() {
        acc = Term::app("add", vec![acc, t.clone()]);
    }
    if k < 0 {
        Term::app("neg", vec![acc])
    } else {
        acc
    }
}

fn linear_term(t: &LinearTerm) -> Term {
    let vars = t
        .x
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, format!("x{}", i + 1)))
        .chain(t.y.iter().enumerate().map(|(i, &c)| (c, format!("y{}", i + 1))));
    let mut acc: Option<Term> = None;
    for (c, v) in vars.filter(|(c, _)| *c != 0) {
        let m = multiple(c, Term::var(&v, "G"));
        acc = Some(match acc {
            None => m,
            Some(a) => Term::app("add", vec![a, m]),
        });
    }
    acc.unwrap_or_else(|| Term::constant("0"))
}

/// Parses `atom & atom & ...`.
pub fn parse_conjunction(text: &str) -> Result<Conjunction, AbelianError> {
    let mut p = TermParser {
        s: text.as_bytes(),
        pos: 0,
    };
    let mut atoms = Vec::new();
    loop {
        atoms.push(p.atom()?);
        p.ws();
        if p.eat(b'&') {
            continue;
        }
        if p.pos == p.s.len() {
            break;
        }
        return Err(p.err("expected `&` or end of input"));
    }
    Conjunction::infer(atoms)
}

struct TermParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl TermParser<'_> {
    fn err(&self, message: &str) -> AbelianError {
        AbelianError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn ws(&mut self) {
        while self.s.get(self.pos).is_some_and(u8::is_ascii_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Option<u64> {
        self.ws();
        let start = self.pos;
        while self.s.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok()
    }

    fn atom(&mut self) -> Result<StandardAtom, AbelianError> {
        if self.eat(b'!') {
            let save = self.pos;
            if self.eat(b'(') {
                if let Ok(a) = self.atom() {
                    if self.eat(b')') {
                        return Ok(a.negate());
                    }
                }
                self.pos = save;
            }
            return Ok(self.atom()?.negate());
        }
        self.ws();
        if self.s[self.pos..].starts_with(b"div") {
            self.pos += 3;
            if !self.eat(b'(') {
                return Err(self.err("expected `(` after div"));
            }
            let prime = self.number().ok_or_else(|| self.err("expected a prime"))?;
            let power = if self.eat(b'^') {
                self.number()
                    .and_then(|e| u32::try_from(e).ok())
                    .ok_or_else(|| self.err("expected an exponent"))?
            } else {
                1
            };
            if !self.eat(b',') {
                return Err(self.err("expected `,`"));
            }
            let t = self.term()?;
            if !self.eat(b')') {
                return Err(self.err("expected `)`"));
            }
            if !crate::families::is_prime(prime) || power == 0 {
                return Err(self.err("divisor must be p^l with p prime and l >= 1"));
            }
            return Ok(StandardAtom::div(prime, power, t));
        }
        let lhs = self.term()?;
        if !self.eat(b'=') {
            return Err(self.err("expected `=`"));
        }
        let rhs = self.term()?;
        let n = lhs.x.len().max(rhs.x.len());
        let k = lhs.y.len().max(rhs.y.len());
        let (l, r) = (lhs.padded(n, k), rhs.padded(n, k));
        let sub = |a: &[i64], b: &[i64]| -> Result<Vec<i64>, AbelianError> {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.checked_sub(*y).ok_or_else(|| self.err("coefficient overflow")))
                .collect()
        };
        Ok(StandardAtom::eq(LinearTerm::new(sub(&l.x, &r.x)?, sub(&l.y, &r.y)?)))
    }

    fn term(&mut self) -> Result<LinearTerm, AbelianError> {
        let mut t = LinearTerm::default();
        let mut first = true;
        loop {
            let sign: i64 = if self.eat(b'-') {
                -1
            } else if first || self.eat(b'+') {
                1
            } else {
                return Ok(t);
            };
            first = false;
            let sign = if self.eat(b'-') { -sign } else { sign };
            self.ws();
            let coeff = match self.s.get(self.pos) {
                Some(c) if c.is_ascii_digit() => {
                    let c = self.number().ok_or_else(|| self.err("bad coefficient"))?;
                    let c = i64::try_from(c).map_err(|_| self.err("coefficient too large"))?;
                    self.eat(b'*');
                    c
                }
                _ => 1,
            };
            self.ws();
            match self.s.get(self.pos) {
                Some(&v @ (b'x' | b'y')) => {
                    self.pos += 1;
                    let idx = if self.s.get(self.pos).is_some_and(u8::is_ascii_digit) {
                        self.number()
                            .filter(|&i| (1..=64).contains(&i))
                            .ok_or_else(|| self.err("variable index must be in 1..=64"))?
                            as usize
                    } else {
                        1
                    };
                    let slot = if v == b'x' { &mut t.x } else { &mut t.y };
                    if slot.len() < idx {
                        slot.resize(idx, 0);
                    }
                    slot[idx - 1] = slot[idx - 1]
                        .checked_add(sign * coeff)
                        .ok_or_else(|| self.err("coefficient overflow"))?;
                }
                _ if coeff == 0 => {}
                _ => return Err(self.err("expected a variable x<i> or y<i>")),
            }
        }
    }
}

/// A homocyclic group element as residues mod p^n, one per summand.
pub type Residues = Vec<u64>;

/// Evaluates the parameter part of `t` at `params`, coordinate-wise mod `modulus`.
pub(crate) fn eval_params(t: &LinearTerm, params: &[Residues], modulus: u64, m: usize) -> Residues {
    let q = modulus as i128;
    (0..m)
        .map(|c| {
            let v = t
                .y
                .iter()
                .zip(params)
                .map(|(&b, y)| b as i128 * y[c] as i128)
                .sum::<i128>();
            v.rem_euclid(q) as u64
        })
        .collect()
}

pub(crate) fn check_params(
    conj: &Conjunction,
    params: &[Residues],
    modulus: u64,
    m: usize,
) -> Result<(), AbelianError> {
    if params.len() != conj.params() {
        return Err(AbelianError::Invalid(format!(
            "expected {} parameter values, got {}",
            conj.params(),
            params.len()
        )));
    }
    for y in params {
        if y.len() != m || y.iter().any(|&v| v >= modulus) {
            return Err(AbelianError::Invalid(format!(
                "parameter {y:?} is not {m} residues mod {modulus}"
            )));
        }
    }
    Ok(())
}

/// Direct enumeration: the number of `x` in G^r satisfying `conj` at `params`.
pub fn brute_force_count(
    conj: &Conjunction,
    g: &crate::families::Homocyclic,
    params: &[Residues],
) -> Result<u64, AbelianError> {
    let q = g.modulus();
    let m = g.m as usize;
    check_params(conj, params, q, m)?;
    let order = g.order();
    let r = conj.counted() as u32;
    let total = order
        .checked_pow(r)
        .filter(|&t| t <= 1 << 26)
        .ok_or_else(|| AbelianError::Invalid("too many tuples to enumerate".into()))?;
    let consts: Vec<Residues> = conj.atoms.iter().map(|a| eval_params(&a.term, params, q, m)).collect();
    let residues: Vec<Residues> = (0..order).map(|e| g.residues(e as u32)).collect();
    let p = g.p;
    let holds = |a: &StandardAtom, c: &Residues, xs: &[usize]| -> bool {
        let value: Vec<u64> = (0..m)
            .map(|coord| {
                let v = a
                    .term
                    .x
                    .iter()
                    .zip(xs)
                    .map(|(&k, &x)| k as i128 * residues[x][coord] as i128)
                    .sum::<i128>()
                    + c[coord] as i128;
                v.rem_euclid(q as i128) as u64
            })
            .collect();
        let sat = match a.kind {
            AtomKind::Eq => value.iter().all(|&v| v == 0),
            AtomKind::Div { prime, power } => {
                // q^l | v in Z/p^n: automatic for q != p, else v lies in p^min(l,n) G
                prime != p || {
                    let l = power.min(g.n);
                    let d = p.pow(l);
                    value.iter().all(|&v| v % d == 0)
                }
            }
        };
        sat != a.negated
    };
    let mut xs = vec![0usize; r as usize];
    let mut count = 0;
    for mut t in 0..total {
        for x in xs.iter_mut() {
            *x = (t % order) as usize;
            t /= order;
        }
        if conj.atoms.iter().zip(&consts).all(|(a, c)| holds(a, c, &xs)) {
            count += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{count, EngineConfig};
    use crate::families::Homocyclic;
    use crate::logic::Assignment;

    #[test]
    fn parse_and_render() {
        let c = parse_conjunction("2*x1 + -3*y1 = 0 & !div(2^2, x - y2) & x1 = y1").unwrap();
        assert_eq!(c.counted(), 1);
        assert_eq!(c.params(), 2);
        assert_eq!(c.atoms()[0].term, LinearTerm::new(vec![2], vec![-3, 0]));
        assert!(c.atoms()[1].negated);
        assert_eq!(c.atoms()[2].term, LinearTerm::new(vec![1], vec![-1, 0]));
        let again = parse_conjunction(&c.to_string()).unwrap();
        assert_eq!(again, c);
        assert_eq!(c.degree_bound(), 2);
        assert!(parse_conjunction("div(4, x)").is_err());
        assert!(parse_conjunction("x +").is_err());
        assert!(parse_conjunction("x = 0 &").is_err());
        assert!(parse_conjunction("!(x = 0)").unwrap().atoms()[0].negated);
    }

    #[test]
    fn brute_force_matches_engine() {
        let g = Homocyclic::new(2, 2, 2).unwrap();
        let m = g.structure();
        let conj = parse_conjunction("div(2, x + y1) & !(2*x = y2)").unwrap();
        let f = conj.to_formula(m.signature()).unwrap();
        for (a, b) in [(0u32, 0u32), (1, 2), (5, 10), (3, 15)] {
            let params = vec![g.residues(a), g.residues(b)];
            let mut asg = Assignment::new();
            asg.insert("y1", "G", a);
            asg.insert("y2", "G", b);
            let via_engine = count(&f, &m, &asg, &["x1"]).unwrap();
            let direct = brute_force_count(&conj, &g, &params).unwrap();
            assert_eq!(via_engine.value(), &direct.into(), "params {a} {b}");
            let _ = EngineConfig::default();
        }
    }
}
