//! Counting one vector variable in finite vector spaces F_q^dim.
//!
//! Two kinds of sets are handled exactly:
//! - θ-instances `theta_n(u + w_1, .., u + w_m, w'_1, .., w'_m')`, split into
//!   the disjunct where u lies outside the span of the w's and the disjunct
//!   where it lies inside;
//! - coset differences `(U_1 ∩ .. ∩ U_l) \ (V_1 ∪ .. ∪ V_k)`.
//!
//! Each count comes with a polynomial in V = |V| and F = |F| that produced
//! it. [`fiber_compose`] combines such polynomials along a projection.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::families::{FamilyError, VectorSpace};
use crate::logic::{Element, Formula, Term};

#[derive(Debug, Error)]
pub enum VsError {
    #[error("vector id {id} is not in a space of {size} vectors")]
    MixedSpaces { id: Element, size: u32 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("guard set {set} is not a partition: {reason}")]
    NotPartition { set: usize, reason: String },
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// Rank of `vectors` over F_q.
pub fn span_rank(space: &VectorSpace, vectors: &[Element]) -> Result<usize, VsError> {
    if let Some(&id) = vectors.iter().find(|&&v| v >= space.size()) {
        return Err(VsError::MixedSpaces {
            id,
            size: space.size(),
        });
    }
    Ok(space.rank(vectors))
}

/// Integer-coefficient polynomial in the field parameters y1, y2, ..
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FieldPoly {
    terms: BTreeMap<Vec<u32>, i64>,
}

impl FieldPoly {
    pub fn constant(c: i64) -> Self {
        let mut p = FieldPoly::default();
        p.add_term(vec![], c);
        p
    }

    /// The parameter y_i, 1-based.
    pub fn param(i: usize) -> Self {
        let mut pows = vec![0; i];
        pows[i - 1] = 1;
        let mut p = FieldPoly::default();
        p.add_term(pows, 1);
        p
    }

    fn add_term(&mut self, mut pows: Vec<u32>, c: i64) {
        while pows.last() == Some(&0) {
            pows.pop();
        }
        let e = self.terms.entry(pows.clone()).or_insert(0);
        *e += c;
        if *e == 0 {
            self.terms.remove(&pows);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn params(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn eval(&self, space: &VectorSpace, ys: &[u8]) -> u8 {
        let f = space.field();
        let p = f.characteristic() as i64;
        self.terms.iter().fold(0u8, |acc, (pows, &c)| {
            let mut v = (0..c.rem_euclid(p)).fold(0u8, |s, _| f.add(s, 1));
            for (i, &e) in pows.iter().enumerate() {
                for _ in 0..e {
                    v = f.mul(v, ys[i]);
                }
            }
            f.add(acc, v)
        })
    }

    fn to_term(&self, space_char: u32) -> Term {
        let sum = |a: Term, b: Term| Term::app("fadd", vec![a, b]);
        let mut out: Option<Term> = None;
        for (pows, &c) in &self.terms {
            let c = c.rem_euclid(space_char as i64);
            if c == 0 {
                continue;
            }
            let mut t = (1..c).fold(Term::constant("1f"), |acc, _| sum(acc, Term::constant("1f")));
            for (i, &e) in pows.iter().enumerate() {
                for _ in 0..e {
                    t = Term::app("fmul", vec![t, Term::var(&format!("y{}", i + 1), "F")]);
                }
            }
            out = Some(match out {
                None => t,
                Some(o) => sum(o, t),
            });
        }
        out.unwrap_or_else(|| Term::constant("0f"))
    }

    /// Parses sums of terms `c*y1^2*y3`, e.g. `2*y1^2 - y2 + 1`.
    pub fn parse(text: &str) -> Result<Self, VsError> {
        let bad = |m: &str| VsError::Invalid(format!("field polynomial `{text}`: {m}"));
        let mut p = FieldPoly::default();
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(bad("empty"));
        }
        let mut rest = s.as_str();
        while !rest.is_empty() {
            let mut sign = 1;
            if let Some(r) = rest.strip_prefix('-') {
                sign = -1;
                rest = r;
            } else if let Some(r) = rest.strip_prefix('+') {
                rest = r;
            }
            let end = rest[1.min(rest.len())..]
                .find(['+', '-'])
                .map_or(rest.len(), |i| i + 1);
            let (term, tail) = rest.split_at(end);
            rest = tail;
            let mut c: i64 = sign;
            let mut pows: Vec<u32> = Vec::new();
            for factor in term.split('*') {
                if let Some(var) = factor.strip_prefix('y') {
                    let (idx, exp) = match var.split_once('^') {
                        Some((i, e)) => (i, e.parse::<u32>().map_err(|_| bad("bad exponent"))?),
                        None => (var, 1),
                    };
                    let idx: usize = idx.parse().map_err(|_| bad("bad variable index"))?;
                    if idx == 0 || idx > 16 {
                        return Err(bad("variable index must be in 1..=16"));
                    }
                    if pows.len() < idx {
                        pows.resize(idx, 0);
                    }
                    pows[idx - 1] += exp;
                } else {
                    let k: i64 = factor.parse().map_err(|_| bad("expected an integer or y<i>"))?;
                    c = c.checked_mul(k).ok_or_else(|| bad("coefficient overflow"))?;
                }
            }
            p.add_term(pows, c);
        }
        Ok(p)
    }
}

impl fmt::Display for FieldPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (n, (pows, &c)) in self.terms.iter().enumerate() {
            if n > 0 {
                f.write_str(if c < 0 { " - " } else { " + " })?;
            } else if c < 0 {
                f.write_str("-")?;
            }
            let mut factors: Vec<String> = Vec::new();
            if c.abs() != 1 || pows.iter().all(|&e| e == 0) {
                factors.push(c.abs().to_string());
            }
            for (i, &e) in pows.iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(format!("y{}", i + 1)),
                    e => factors.push(format!("y{}^{e}", i + 1)),
                }
            }
            f.write_str(&factors.join("*"))?;
        }
        Ok(())
    }
}

impl Serialize for FieldPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FieldPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FieldPoly::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// `Σ_j c_j(y) v_j` over the vector parameters v1, v2, ..
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorTerm {
    pub coeffs: Vec<FieldPoly>,
}

impl VectorTerm {
    pub fn new(coeffs: Vec<FieldPoly>) -> Self {
        VectorTerm { coeffs }
    }

    /// The parameter v_j, 1-based.
    pub fn param(j: usize) -> Self {
        let mut coeffs = vec![FieldPoly::default(); j];
        coeffs[j - 1] = FieldPoly::constant(1);
        VectorTerm { coeffs }
    }

    pub fn eval(&self, space: &VectorSpace, p: &VsParams) -> Element {
        self.coeffs.iter().zip(&p.vectors).fold(0, |acc, (c, &v)| {
            space.add(acc, space.scale(c.eval(space, &p.scalars), v))
        })
    }

    fn to_term(&self, char_p: u32) -> Term {
        let mut out: Option<Term> = None;
        for (j, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let t = Term::app(
                "smul",
                vec![c.to_term(char_p), Term::var(&format!("v{}", j + 1), "V")],
            );
            out = Some(match out {
                None => t,
                Some(o) => Term::app("vadd", vec![o, t]),
            });
        }
        out.unwrap_or_else(|| Term::constant("0v"))
    }

    fn arity(&self) -> (usize, usize) {
        (
            self.coeffs.len(),
            self.coeffs.iter().map(FieldPoly::params).max().unwrap_or(0),
        )
    }
}

/// Values for the vector parameters v_j and the field parameters y_i.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VsParams {
    #[serde(default)]
    pub vectors: Vec<Element>,
    #[serde(default)]
    pub scalars: Vec<u8>,
}

impl VsParams {
    fn check(&self, space: &VectorSpace, need: (usize, usize)) -> Result<(), VsError> {
        if self.vectors.len() < need.0 || self.scalars.len() < need.1 {
            return Err(VsError::Invalid(format!(
                "need {} vector and {} field parameters",
                need.0, need.1
            )));
        }
        if let Some(&id) = self.vectors.iter().find(|&&v| v >= space.size()) {
            return Err(VsError::MixedSpaces {
                id,
                size: space.size(),
            });
        }
        if self.scalars.iter().any(|&c| c as u32 >= space.q()) {
            return Err(VsError::Invalid("field parameter out of range".into()));
        }
        Ok(())
    }

    /// Binds v1.., y1.. in an assignment for the engine.
    pub fn assignment(&self) -> crate::logic::Assignment {
        let mut a = crate::logic::Assignment::new();
        for (j, &v) in self.vectors.iter().enumerate() {
            a.insert(&format!("v{}", j + 1), "V", v);
        }
        for (i, &c) in self.scalars.iter().enumerate() {
            a.insert(&format!("y{}", i + 1), "F", c as Element);
        }
        a
    }
}

/// Polynomial in V and F with rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default, PartialOrd, Ord, Hash)]
pub struct VFPolynomial {
    terms: BTreeMap<(u32, u32), BigRational>,
}

impl VFPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(v_pow: u32, f_pow: u32, c: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(v_pow, f_pow, c);
        p
    }

    pub fn one() -> Self {
        Self::monomial(0, 0, BigRational::one())
    }

    pub fn v() -> Self {
        Self::monomial(1, 0, BigRational::one())
    }

    pub fn f_pow(e: u32) -> Self {
        Self::monomial(0, e, BigRational::one())
    }

    fn add_term(&mut self, v_pow: u32, f_pow: u32, c: BigRational) {
        let e = self.terms.entry((v_pow, f_pow)).or_insert_with(BigRational::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&(v_pow, f_pow));
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, u32, &BigRational)> {
        self.terms.iter().map(|(&(a, b), c)| (a, b, c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn evaluate(&self, v: &BigInt, f: &BigInt) -> BigRational {
        self.terms().fold(BigRational::zero(), |acc, (a, b, c)| {
            acc + c * BigRational::from_integer(v.pow(a) * f.pow(b))
        })
    }

    /// Value at `(|V|, |F|) = (q^dim, q)` as a count, if it is one.
    pub fn evaluate_at(&self, q: u32, dim: u32) -> Option<BigUint> {
        let f = BigInt::from(q);
        let r = self.evaluate(&f.pow(dim), &f);
        if r.is_integer() && !r.is_negative() {
            r.to_integer().to_biguint()
        } else {
            None
        }
    }
}

impl std::ops::Add for &VFPolynomial {
    type Output = VFPolynomial;
    fn add(self, rhs: &VFPolynomial) -> VFPolynomial {
        let mut out = self.clone();
        for (a, b, c) in rhs.terms() {
            out.add_term(a, b, c.clone());
        }
        out
    }
}

impl std::ops::Sub for &VFPolynomial {
    type Output = VFPolynomial;
    fn sub(self, rhs: &VFPolynomial) -> VFPolynomial {
        let mut out = self.clone();
        for (a, b, c) in rhs.terms() {
            out.add_term(a, b, -c.clone());
        }
        out
    }
}

impl std::ops::Mul for &VFPolynomial {
    type Output = VFPolynomial;
    fn mul(self, rhs: &VFPolynomial) -> VFPolynomial {
        let mut out = VFPolynomial::zero();
        for (a, b, c) in self.terms() {
            for (a2, b2, c2) in rhs.terms() {
                out.add_term(a + a2, b + b2, c * c2);
            }
        }
        out
    }
}

impl fmt::Display for VFPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        // highest degree first
        for (n, (a, b, c)) in self.terms().collect::<Vec<_>>().into_iter().rev().enumerate() {
            if n > 0 {
                f.write_str(if c.is_negative() { " - " } else { " + " })?;
            } else if c.is_negative() {
                f.write_str("-")?;
            }
            let abs = c.abs();
            let mono = match (a, b) {
                (0, 0) => String::new(),
                (a, 0) => power("V", a),
                (0, b) => power("F", b),
                (a, b) => format!("{}*{}", power("V", a), power("F", b)),
            };
            match (abs.is_one(), mono.is_empty()) {
                (_, true) => write!(f, "{abs}")?,
                (true, false) => f.write_str(&mono)?,
                (false, false) => write!(f, "{abs}*{mono}")?,
            }
        }
        Ok(())
    }
}

fn power(x: &str, e: u32) -> String {
    if e == 1 {
        x.to_string()
    } else {
        format!("{x}^{e}")
    }
}

#[derive(Serialize)]
struct RationalJson {
    num: String,
    den: String,
}

#[derive(Serialize)]
struct TermJson {
    #[serde(rename = "vPow")]
    v_pow: u32,
    #[serde(rename = "fPow")]
    f_pow: u32,
    coeff: RationalJson,
}

impl Serialize for VFPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wrapper {
            terms: Vec<TermJson>,
        }
        Wrapper {
            terms: self
                .terms()
                .map(|(a, b, c)| TermJson {
                    v_pow: a,
                    f_pow: b,
                    coeff: RationalJson {
                        num: c.numer().to_string(),
                        den: c.denom().to_string(),
                    },
                })
                .collect(),
        }
        .serialize(s)
    }
}

/// `theta_{m+m'}(u + w_1, .., u + w_m, w'_1, .., w'_m')` with u counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorTermSpec {
    pub shifted: Vec<VectorTerm>,
    pub fixed: Vec<VectorTerm>,
}

/// Which part of a θ-instance to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaPart {
    Whole,
    /// u outside the span of the w's.
    First,
    /// u inside the span of the w's.
    Second,
}

/// Parameter condition selecting the polynomials of a θ-instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaGuard {
    /// The w's are linearly independent.
    Independent,
    /// Dependent, but no relation `Σ c_i w_i + Σ d_j w'_j = 0` has `Σ c_i = 0`.
    NoZeroSumRelation,
    /// Some nontrivial relation has `Σ c_i = 0`.
    ZeroSumRelation,
}

impl ThetaGuard {
    pub fn all() -> [ThetaGuard; 3] {
        [
            ThetaGuard::Independent,
            ThetaGuard::NoZeroSumRelation,
            ThetaGuard::ZeroSumRelation,
        ]
    }

    pub fn holds(self, space: &VectorSpace, spec: &VectorTermSpec, p: &VsParams) -> bool {
        classify_theta(space, spec, p) == self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaCount {
    #[serde(serialize_with = "crate::serde_util::biguint_str")]
    pub count: BigUint,
    #[serde(serialize_with = "crate::serde_util::biguint_str")]
    pub first: BigUint,
    #[serde(serialize_with = "crate::serde_util::biguint_str")]
    pub second: BigUint,
    pub guard: ThetaGuard,
    pub polynomial: VFPolynomial,
    #[serde(rename = "firstPolynomial")]
    pub first_polynomial: VFPolynomial,
    #[serde(rename = "secondPolynomial")]
    pub second_polynomial: VFPolynomial,
}

impl VectorTermSpec {
    pub fn arity(&self) -> usize {
        self.shifted.len() + self.fixed.len()
    }

    fn params_needed(&self) -> (usize, usize) {
        self.shifted
            .iter()
            .chain(&self.fixed)
            .map(VectorTerm::arity)
            .fold((0, 0), |(a, b), (c, d)| (a.max(c), b.max(d)))
    }

    /// Formula in the vector space signature with u free, parameters v_j, y_i.
    pub fn to_formula(&self, space: &VectorSpace, part: ThetaPart) -> Formula {
        let cp = space.field().characteristic();
        let u = Term::var("u", "V");
        let mut args: Vec<Term> = self
            .shifted
            .iter()
            .map(|w| Term::app("vadd", vec![u.clone(), w.to_term(cp)]))
            .collect();
        args.extend(self.fixed.iter().map(|w| w.to_term(cp)));
        let n = args.len();
        let theta = if n == 0 {
            Formula::eq(u.clone(), u.clone())
        } else if n as u32 > space.dim() {
            Formula::falsum("u", "V")
        } else {
            Formula::rel(&format!("theta{n}"), args)
        };
        // keep u free when it does not occur in the arguments
        let theta = theta.and(Formula::eq(u.clone(), u.clone()));
        let all: Vec<Term> = self.shifted.iter().chain(&self.fixed).map(|w| w.to_term(cp)).collect();
        let inside = span_membership(u, None, &all, "c");
        match part {
            ThetaPart::Whole => theta,
            ThetaPart::First => theta.and(inside.not()),
            ThetaPart::Second => theta.and(inside),
        }
    }
}

/// `u ∈ offset + <span>` with fresh field variables `<prefix>1..`.
fn span_membership(u: Term, offset: Option<Term>, span: &[Term], prefix: &str) -> Formula {
    let mut rhs = offset.unwrap_or_else(|| Term::constant("0v"));
    for (i, s) in span.iter().enumerate() {
        let c = Term::var(&format!("{prefix}{}", i + 1), "F");
        rhs = Term::app("vadd", vec![rhs, Term::app("smul", vec![c, s.clone()])]);
    }
    let mut f = Formula::eq(u, rhs);
    for i in (0..span.len()).rev() {
        f = Formula::exists(&format!("{prefix}{}", i + 1), "F", f);
    }
    f
}

fn classify_theta(space: &VectorSpace, spec: &VectorTermSpec, p: &VsParams) -> ThetaGuard {
    let n = spec.arity();
    let ws: Vec<Element> = spec.shifted.iter().chain(&spec.fixed).map(|w| w.eval(space, p)).collect();
    if space.rank(&ws) == n {
        return ThetaGuard::Independent;
    }
    // relations with Σ c_i = 0 are the kernel of the matrix with an extra
    // coordinate 1 on the shifted columns and 0 on the fixed ones
    let m = spec.shifted.len();
    let rows: Vec<Vec<u8>> = ws
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let mut c = space.coords(w);
            c.push((i < m) as u8);
            c
        })
        .collect();
    if space.field().rank(&rows) == n {
        ThetaGuard::NoZeroSumRelation
    } else {
        ThetaGuard::ZeroSumRelation
    }
}

/// The polynomials of the two disjuncts under `guard`; `dim_w` is the span dimension.
pub fn theta_polynomials(m: usize, m_fixed: usize, guard: ThetaGuard) -> (VFPolynomial, VFPolynomial) {
    let n = (m + m_fixed) as u32;
    match guard {
        ThetaGuard::Independent => {
            let first = &VFPolynomial::v() - &VFPolynomial::f_pow(n);
            let second = if m == 0 {
                VFPolynomial::f_pow(n)
            } else {
                &VFPolynomial::f_pow(n) - &VFPolynomial::f_pow(n - 1)
            };
            (first, second)
        }
        // here the span has dimension exactly n - 1
        ThetaGuard::NoZeroSumRelation => (&VFPolynomial::v() - &VFPolynomial::f_pow(n - 1), VFPolynomial::zero()),
        ThetaGuard::ZeroSumRelation => (VFPolynomial::zero(), VFPolynomial::zero()),
    }
}

/// Exact count of u with `theta(u + w_1, .., w'_m')`, by the two-disjunct analysis.
pub fn count_theta_case(space: &VectorSpace, spec: &VectorTermSpec, p: &VsParams) -> Result<ThetaCount, VsError> {
    if spec.arity() == 0 {
        return Err(VsError::Invalid("theta needs at least one argument".into()));
    }
    p.check(space, spec.params_needed())?;
    let guard = classify_theta(space, spec, p);
    let (first_polynomial, second_polynomial) = theta_polynomials(spec.shifted.len(), spec.fixed.len(), guard);
    let eval = |poly: &VFPolynomial| {
        poly.evaluate_at(space.q(), space.dim())
            .ok_or_else(|| VsError::Invalid(format!("{poly} is not a count here")))
    };
    let first = eval(&first_polynomial)?;
    let second = eval(&second_polynomial)?;
    Ok(ThetaCount {
        count: &first + &second,
        first,
        second,
        guard,
        polynomial: &first_polynomial + &second_polynomial,
        first_polynomial,
        second_polynomial,
    })
}

/// `offset + <span>`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Coset {
    pub offset: VectorTerm,
    #[serde(default)]
    pub span: Vec<VectorTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CosetKind {
    ComplementOfSpan,
    AffineSlice,
    CosetDifference,
}

/// `u ∈ (U_1 ∩ .. ∩ U_l) \ (V_1 ∪ .. ∪ V_k)`; with l = 0 the first part is all of V.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CosetCountSpec {
    #[serde(default)]
    pub include: Vec<Coset>,
    #[serde(default)]
    pub exclude: Vec<Coset>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CosetCount {
    pub kind: CosetKind,
    #[serde(serialize_with = "crate::serde_util::biguint_str")]
    pub count: BigUint,
    pub polynomial: VFPolynomial,
    /// Per subset of excluded cosets (bitmask), the dimension of the
    /// intersection with the included ones, or `None` when empty.
    pub pattern: Vec<Option<u32>>,
}

impl CosetCountSpec {
    pub fn kind(&self) -> CosetKind {
        let zero_offset = |c: &Coset| c.offset.coeffs.iter().all(FieldPoly::is_zero);
        if self.include.is_empty() && self.exclude.len() == 1 && zero_offset(&self.exclude[0]) {
            CosetKind::ComplementOfSpan
        } else if self.exclude.is_empty() {
            CosetKind::AffineSlice
        } else {
            CosetKind::CosetDifference
        }
    }

    fn params_needed(&self) -> (usize, usize) {
        self.include
            .iter()
            .chain(&self.exclude)
            .flat_map(|c| std::iter::once(&c.offset).chain(&c.span))
            .map(VectorTerm::arity)
            .fold((0, 0), |(a, b), (c, d)| (a.max(c), b.max(d)))
    }

    pub fn to_formula(&self, space: &VectorSpace) -> Formula {
        let cp = space.field().characteristic();
        let u = Term::var("u", "V");
        let member = |c: &Coset, tag: String| {
            let span: Vec<Term> = c.span.iter().map(|s| s.to_term(cp)).collect();
            span_membership(u.clone(), Some(c.offset.to_term(cp)), &span, &tag)
        };
        let mut f = Formula::eq(u.clone(), u.clone());
        for (i, c) in self.include.iter().enumerate() {
            f = f.and(member(c, format!("a{}_", i + 1)));
        }
        for (i, c) in self.exclude.iter().enumerate() {
            f = f.and(member(c, format!("b{}_", i + 1)).not());
        }
        f
    }
}

/// An affine subspace as the solutions of `rows · x = rhs`.
struct Affine {
    rows: Vec<Vec<u8>>,
    rhs: Vec<u8>,
}

fn affine(space: &VectorSpace, offset: Element, span: &[Element]) -> Affine {
    let f = space.field();
    let dim = space.dim() as usize;
    let s: Vec<Vec<u8>> = span.iter().map(|&v| space.coords(v)).collect();
    let ann = f.kernel(&s, dim);
    let a = space.coords(offset);
    let rhs = ann
        .iter()
        .map(|h| h.iter().zip(&a).fold(0, |acc, (&x, &y)| f.add(acc, f.mul(x, y))))
        .collect();
    Affine { rows: ann, rhs }
}

/// Dimension of the solution set, or `None` if it is empty.
fn solve_dim(space: &VectorSpace, parts: &[&Affine]) -> Option<u32> {
    let f = space.field();
    let rows: Vec<Vec<u8>> = parts.iter().flat_map(|a| a.rows.iter().cloned()).collect();
    let aug: Vec<Vec<u8>> = parts
        .iter()
        .flat_map(|a| {
            a.rows.iter().zip(&a.rhs).map(|(r, &c)| {
                let mut r = r.clone();
                r.push(c);
                r
            })
        })
        .collect();
    let rank = f.rank(&rows);
    (rank == f.rank(&aug)).then(|| space.dim() - rank as u32)
}

/// Exact count of a coset difference, by inclusion–exclusion over the excluded cosets.
pub fn count_coset_difference(space: &VectorSpace, spec: &CosetCountSpec, p: &VsParams) -> Result<CosetCount, VsError> {
    if spec.exclude.len() > 16 {
        return Err(VsError::Invalid("at most 16 excluded cosets".into()));
    }
    p.check(space, spec.params_needed())?;
    let build = |c: &Coset| {
        let span: Vec<Element> = c.span.iter().map(|s| s.eval(space, p)).collect();
        affine(space, c.offset.eval(space, p), &span)
    };
    let inc: Vec<Affine> = spec.include.iter().map(build).collect();
    let exc: Vec<Affine> = spec.exclude.iter().map(build).collect();
    let mut polynomial = VFPolynomial::zero();
    let mut pattern = Vec::with_capacity(1 << exc.len());
    for mask in 0..1u32 << exc.len() {
        let parts: Vec<&Affine> = inc
            .iter()
            .chain(exc.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, a)| a))
            .collect();
        let d = solve_dim(space, &parts);
        pattern.push(d);
        let Some(d) = d else { continue };
        let term = if parts.is_empty() {
            VFPolynomial::v()
        } else {
            VFPolynomial::f_pow(d)
        };
        polynomial = if mask.count_ones() % 2 == 0 {
            &polynomial + &term
        } else {
            &polynomial - &term
        };
    }
    let count = polynomial
        .evaluate_at(space.q(), space.dim())
        .ok_or_else(|| VsError::Invalid(format!("{polynomial} is not a count here")))?;
    Ok(CosetCount {
        kind: spec.kind(),
        count,
        polynomial,
        pattern,
    })
}

/// A polynomial together with the condition under which it applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Guarded<G> {
    pub poly: VFPolynomial,
    pub guard: G,
}

/// Checks on `samples` that exactly one guard of `set` holds at each.
pub fn check_partition<G, S>(
    set: &[Guarded<G>],
    samples: &[S],
    holds: impl Fn(&G, &S) -> bool,
) -> Result<(), String> {
    for (n, s) in samples.iter().enumerate() {
        let hits = set.iter().filter(|g| holds(&g.guard, s)).count();
        if hits != 1 {
            return Err(format!("{hits} guards hold at sample {n}"));
        }
    }
    Ok(())
}

/// Fiber composition: the outer entry `p_i` counts each fiber over the
/// points counted by the inner set `inner[i]`. For every selector h picking
/// one inner entry per outer entry the result is `Σ_i p_i q_{i h(i)}`,
/// guarded by the tuple of chosen inner guards.
///
/// Each inner set is checked to be a partition on `samples` first.
pub fn fiber_compose<G: Clone, S>(
    outer: &[Guarded<G>],
    inner: &[Vec<Guarded<G>>],
    samples: &[S],
    holds: impl Fn(&G, &S) -> bool,
) -> Result<Vec<Guarded<Vec<G>>>, VsError> {
    if outer.len() != inner.len() {
        return Err(VsError::Invalid(format!(
            "{} outer entries but {} inner sets",
            outer.len(),
            inner.len()
        )));
    }
    for (i, set) in inner.iter().enumerate() {
        if set.is_empty() {
            return Err(VsError::NotPartition {
                set: i,
                reason: "empty".into(),
            });
        }
        check_partition(set, samples, &holds).map_err(|reason| VsError::NotPartition { set: i, reason })?;
    }
    let mut out = vec![Guarded {
        poly: VFPolynomial::zero(),
        guard: Vec::new(),
    }];
    for (p, set) in outer.iter().zip(inner) {
        out = out
            .iter()
            .flat_map(|acc| {
                set.iter().map(move |q| {
                    let mut guard = acc.guard.clone();
                    guard.push(q.guard.clone());
                    Guarded {
                        poly: &acc.poly + &(&p.poly * &q.poly),
                        guard,
                    }
                })
            })
            .collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::count;

    fn brute(space: &VectorSpace, f: &Formula, p: &VsParams) -> BigUint {
        let m = space.structure();
        count(f, &m, &p.assignment(), &["u"]).unwrap().into_value()
    }

    fn vt(coeffs: &[&str]) -> VectorTerm {
        VectorTerm::new(coeffs.iter().map(|c| FieldPoly::parse(c).unwrap()).collect())
    }

    #[test]
    fn ranks() {
        let s = VectorSpace::new(2, 3).unwrap();
        let (e1, e2) = (s.basis(0), s.basis(1));
        assert_eq!(span_rank(&s, &[e1, e2]).unwrap(), 2);
        assert_eq!(span_rank(&s, &[0]).unwrap(), 0);
        assert_eq!(span_rank(&s, &[e1, e2, s.add(e1, e2)]).unwrap(), 2);
        assert!(span_rank(&s, &[8]).is_err());
    }

    #[test]
    fn field_poly_parse_and_eval() {
        let p = FieldPoly::parse("2*y1^2 - y2 + 1").unwrap();
        assert_eq!(p.to_string(), "1 - y2 + 2*y1^2");
        assert_eq!(FieldPoly::parse(&p.to_string()).unwrap(), p);
        let s = VectorSpace::new(3, 1).unwrap();
        // 2*4 - 1 + 1 = 8 = 2 mod 3
        assert_eq!(p.eval(&s, &[2, 1]), 2);
        assert!(FieldPoly::parse("y0").is_err());
        assert!(FieldPoly::parse("").is_err());
    }

    #[test]
    fn theta_examples() {
        // first disjunct with a 1-dimensional span: 8 - 2
        let s = VectorSpace::new(2, 3).unwrap();
        let spec = VectorTermSpec {
            shifted: vec![VectorTerm::param(1)],
            fixed: vec![],
        };
        let p = VsParams {
            vectors: vec![s.basis(0)],
            scalars: vec![],
        };
        let c = count_theta_case(&s, &spec, &p).unwrap();
        assert_eq!(c.first, BigUint::from(6u32));
        assert_eq!(c.first_polynomial.to_string(), "V - F");
        assert_eq!(c.count, brute(&s, &spec.to_formula(&s, ThetaPart::Whole), &p));

        // second disjunct with m = m' = 1 over F_3: 9 - 3
        let s = VectorSpace::new(3, 2).unwrap();
        let spec = VectorTermSpec {
            shifted: vec![VectorTerm::param(1)],
            fixed: vec![VectorTerm::param(2)],
        };
        let p = VsParams {
            vectors: vec![s.basis(0), s.basis(1)],
            scalars: vec![],
        };
        let c = count_theta_case(&s, &spec, &p).unwrap();
        assert_eq!(c.second, BigUint::from(6u32));
        assert_eq!(c.second, brute(&s, &spec.to_formula(&s, ThetaPart::Second), &p));

        // dependent with a zero-sum relation: 0
        let p = VsParams {
            vectors: vec![s.basis(0), 0],
            scalars: vec![],
        };
        let c = count_theta_case(&s, &spec, &p).unwrap();
        assert_eq!(c.guard, ThetaGuard::ZeroSumRelation);
        assert!(c.count.is_zero());
    }

    #[test]
    fn theta_matches_enumeration() {
        let specs = [
            VectorTermSpec {
                shifted: vec![vt(&["1", "0"]), vt(&["0", "1"])],
                fixed: vec![],
            },
            VectorTermSpec {
                shifted: vec![vt(&["y1", "0"])],
                fixed: vec![vt(&["1", "1"])],
            },
            VectorTermSpec {
                shifted: vec![],
                fixed: vec![vt(&["1"]), vt(&["0", "y1"])],
            },
            VectorTermSpec {
                shifted: vec![vt(&["1"]), vt(&["0", "1"]), vt(&["1", "1"])],
                fixed: vec![],
            },
        ];
        for (q, dim) in [(2, 2), (3, 2), (2, 3)] {
            let s = VectorSpace::new(q, dim).unwrap();
            for spec in &specs {
                for a in 0..s.size() {
                    for b in 0..s.size() {
                        for y in 0..q as u8 {
                            let p = VsParams {
                                vectors: vec![a, b],
                                scalars: vec![y],
                            };
                            let c = count_theta_case(&s, spec, &p).unwrap();
                            for (part, want) in [
                                (ThetaPart::Whole, &c.count),
                                (ThetaPart::First, &c.first),
                                (ThetaPart::Second, &c.second),
                            ] {
                                assert_eq!(want, &brute(&s, &spec.to_formula(&s, part), &p), "{spec:?} {p:?} {part:?}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn coset_examples() {
        let s = VectorSpace::new(2, 3).unwrap();
        let (e1, e2) = (s.basis(0), s.basis(1));
        let hyperplane = Coset {
            offset: VectorTerm::default(),
            span: vec![VectorTerm::param(1), VectorTerm::param(2)],
        };
        let spec = CosetCountSpec {
            include: vec![],
            exclude: vec![hyperplane.clone()],
        };
        let p = VsParams {
            vectors: vec![e1, e2],
            scalars: vec![],
        };
        let c = count_coset_difference(&s, &spec, &p).unwrap();
        assert_eq!(c.count, BigUint::from(4u32));
        assert_eq!(c.polynomial.to_string(), "V - F^2");
        assert_eq!(c.kind, CosetKind::ComplementOfSpan);

        let line = Coset {
            offset: VectorTerm::param(2),
            span: vec![VectorTerm::param(1)],
        };
        let spec = CosetCountSpec {
            include: vec![line.clone()],
            exclude: vec![],
        };
        let c = count_coset_difference(&s, &spec, &p).unwrap();
        assert_eq!(c.count, BigUint::from(2u32));
        assert_eq!(c.polynomial.to_string(), "F");

        let spec = CosetCountSpec {
            include: vec![line],
            exclude: vec![hyperplane],
        };
        let c = count_coset_difference(&s, &spec, &p).unwrap();
        assert!(c.count.is_zero());
    }

    #[test]
    fn cosets_match_enumeration() {
        let spec = CosetCountSpec {
            include: vec![Coset {
                offset: vt(&["1"]),
                span: vec![vt(&["0", "1"]), vt(&["0", "0", "y1"])],
            }],
            exclude: vec![
                Coset {
                    offset: vt(&["0", "0", "1"]),
                    span: vec![vt(&["0", "1"])],
                },
                Coset {
                    offset: VectorTerm::default(),
                    span: vec![vt(&["1", "1"])],
                },
            ],
        };
        for (q, dim) in [(2, 2), (2, 3), (3, 2)] {
            let s = VectorSpace::new(q, dim).unwrap();
            let f = spec.to_formula(&s);
            for a in 0..s.size() {
                for b in 0..s.size() {
                    for c in [0, 1, s.size() - 1] {
                        for y in 0..q as u8 {
                            let p = VsParams {
                                vectors: vec![a, b, c],
                                scalars: vec![y],
                            };
                            let got = count_coset_difference(&s, &spec, &p).unwrap();
                            assert_eq!(got.count, brute(&s, &f, &p), "{p:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fiber_composition() {
        let g = |poly: VFPolynomial, guard: &'static str| Guarded { poly, guard };
        let out = fiber_compose(&[g(VFPolynomial::v(), "always")], &[vec![g(VFPolynomial::f_pow(1), "always")]], &[()], |_, _| true).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].poly, &VFPolynomial::v() * &VFPolynomial::f_pow(1));

        let inner = vec![g(VFPolynomial::v(), "a"), g(VFPolynomial::f_pow(2), "b")];
        let out = fiber_compose(&[g(VFPolynomial::one(), "always")], &[inner.clone()], &[()], |_, _| true);
        assert!(out.is_err());
        let out = fiber_compose(&[g(VFPolynomial::one(), "always")], &[inner.clone()], &[0, 1], |gd, &s| (*gd == "a") == (s == 0)).unwrap();
        assert_eq!(out.iter().map(|e| e.poly.clone()).collect::<Vec<_>>(), vec![VFPolynomial::v(), VFPolynomial::f_pow(2)]);

        let outer = [g(VFPolynomial::v(), "x"), g(VFPolynomial::f_pow(1), "y")];
        let out = fiber_compose(&outer, &[inner.clone(), inner], &[] as &[()], |_, _| true).unwrap();
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn fibering_counts_independent_pairs() {
        // pairs (z, x) with theta3(z, x, v): the fiber over x is V - F^2 when
        // x, v are independent, and those x are counted by V - F when v != 0
        let outer = [Guarded {
            poly: &VFPolynomial::v() - &VFPolynomial::f_pow(2),
            guard: "x,v independent",
        }];
        let inner = [vec![
            Guarded {
                poly: &VFPolynomial::v() - &VFPolynomial::f_pow(1),
                guard: "v != 0",
            },
            Guarded {
                poly: VFPolynomial::zero(),
                guard: "v = 0",
            },
        ]];
        for (q, dim) in [(2, 3), (3, 3), (2, 4)] {
            let s = VectorSpace::new(q, dim).unwrap();
            let samples: Vec<Element> = (0..s.size()).collect();
            let out = fiber_compose(&outer, &inner, &samples, |g, &v| (*g == "v != 0") == (v != 0)).unwrap();
            for v in 0..s.size() {
                let want = (0..s.size())
                    .flat_map(|x| (0..s.size()).map(move |z| (x, z)))
                    .filter(|&(x, z)| s.rank(&[z, x, v]) == 3)
                    .count();
                let pick = out.iter().find(|e| (e.guard[0] == "v != 0") == (v != 0)).unwrap();
                assert_eq!(pick.poly.evaluate_at(q, dim), Some(BigUint::from(want)), "q={q} dim={dim} v={v}");
            }
        }
    }

    #[test]
    fn polynomial_json() {
        let p = &VFPolynomial::v() - &VFPolynomial::monomial(0, 2, BigRational::new(1.into(), 2.into()));
        let j = serde_json::to_value(&p).unwrap();
        assert_eq!(j["terms"][0]["fPow"], 2);
        assert_eq!(j["terms"][0]["coeff"]["num"], "-1");
        assert_eq!(j["terms"][0]["coeff"]["den"], "2");
        assert_eq!(j["terms"][1]["vPow"], 1);
    }
}
