//! Guarded exponent polynomials for standard-form conjunctions.
//!
//! Write each positive atom as `L x + c ∈ p^a G` (an equation has a = n),
//! introduce a slack `z` per divisibility atom so that the atom becomes the
//! equation `L x + c - p^a z = 0`, and diagonalize the integer coefficient
//! matrix. Per coordinate of G = (Z/p^n)^m the solution count is then
//! `p^(n (N - rank) + Σ min(e_i, n) - Σ a)`, where `e_i` are the p-adic
//! valuations of the diagonal and N the number of columns, provided the
//! transformed constants meet the matching divisibility conditions. Negated
//! atoms are handled by inclusion–exclusion, so a count is decided by which
//! subsets of negated atoms are jointly consistent with the positive ones.
//!
//! The valuations depend on p only through finitely many primes, and on n
//! only below a threshold, so the data splits into finitely many regimes.
//! Within a regime a guard is a consistency pattern; each pattern gives one
//! polynomial `Σ c_ij X^(u(i v + j))`, evaluated at X = p, u = m, v = n.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::lattice::diagonalize;
use super::{check_params, AbelianError, AtomKind, Conjunction, Residues};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolicConfig {
    pub max_counted: usize,
    pub max_negations: usize,
}

impl Default for SymbolicConfig {
    fn default() -> Self {
        SymbolicConfig {
            max_counted: 3,
            max_negations: 4,
        }
    }
}

/// `Σ c_ij X^(u(i v + j))` with `0 <= i <= k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExponentPolynomial {
    pub k: u32,
    pub d: u32,
    coeffs: BTreeMap<(u32, i64), BigInt>,
}

impl ExponentPolynomial {
    pub fn zero(k: u32, d: u32) -> Self {
        ExponentPolynomial {
            k,
            d,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, i: u32, j: i64, c: BigInt) {
        let e = self.coeffs.entry((i, j)).or_insert_with(BigInt::zero);
        *e += c;
        if e.is_zero() {
            self.coeffs.remove(&(i, j));
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, i64, &BigInt)> {
        self.coeffs.iter().map(|(&(i, j), c)| (i, j, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// All nonzero coefficients have `i <= k` and `|j| <= k d`.
    pub fn within_bounds(&self) -> bool {
        let kd = self.k as i64 * self.d as i64;
        self.terms().all(|(i, j, _)| i <= self.k && (-kd..=kd).contains(&j))
    }

    /// Exact value at X = p, u = m, v = n.
    pub fn evaluate(&self, p: u64, m: u32, n: u32) -> Result<BigInt, AbelianError> {
        let mut total = BigInt::zero();
        for (i, j, c) in self.terms() {
            let exponent = i as i64 * n as i64 + j;
            if exponent < 0 {
                return Err(AbelianError::NegativeExponent { exponent });
            }
            let e = u32::try_from(exponent * m as i64)
                .map_err(|_| AbelianError::Invalid("exponent too large".into()))?;
            total += c * BigInt::from(p).pow(e);
        }
        Ok(total)
    }
}

impl std::fmt::Display for ExponentPolynomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (n, (i, j, c)) in self.terms().enumerate() {
            let sign = if c.is_negative() { "-" } else { "+" };
            if n == 0 && sign == "-" {
                f.write_str("-")?;
            } else if n > 0 {
                write!(f, " {sign} ")?;
            }
            let a = c.abs();
            let exp = match (i, j) {
                (0, 0) => String::new(),
                (0, j) => format!("{j}"),
                (1, 0) => "v".into(),
                (i, 0) => format!("{i}v"),
                (1, j) if j < 0 => format!("v - {}", -j),
                (1, j) => format!("v + {j}"),
                (i, j) if j < 0 => format!("{i}v - {}", -j),
                (i, j) => format!("{i}v + {j}"),
            };
            match (a.is_one(), exp.is_empty()) {
                (_, true) => write!(f, "{a}")?,
                (true, false) => write!(f, "X^(u({exp}))")?,
                (false, false) => write!(f, "{a}*X^(u({exp}))")?,
            }
        }
        Ok(())
    }
}

impl Serialize for ExponentPolynomial {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ExponentPolynomial", 3)?;
        st.serialize_field("k", &self.k)?;
        st.serialize_field("d", &self.d)?;
        st.serialize_field("coeffs", &coeff_rows(self))?;
        st.end()
    }
}

#[derive(Serialize)]
struct CoeffRow {
    i: u32,
    j: i64,
    c: String,
}

fn coeff_rows(p: &ExponentPolynomial) -> Vec<CoeffRow> {
    p.terms()
        .map(|(i, j, c)| CoeffRow {
            i,
            j,
            c: c.to_string(),
        })
        .collect()
}

/// The value of `poly` at (p, m, n) as a cardinality.
pub fn evaluate_poly(poly: &ExponentPolynomial, p: u64, m: u32, n: u32) -> Result<BigUint, AbelianError> {
    let v = poly.evaluate(p, m, n)?;
    v.to_biguint()
        .ok_or_else(|| AbelianError::Invalid(format!("polynomial is negative ({v}) at ({p},{m},{n})")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrimeClass {
    Is(u64),
    /// Every prime outside the list.
    Other(Vec<u64>),
}

impl PrimeClass {
    fn contains(&self, p: u64) -> bool {
        match self {
            PrimeClass::Is(q) => *q == p,
            PrimeClass::Other(ex) => !ex.contains(&p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NRange {
    Exactly(u32),
    AtLeast(u32),
}

impl NRange {
    fn contains(&self, n: u32) -> bool {
        match *self {
            NRange::Exactly(v) => n == v,
            NRange::AtLeast(v) => n >= v,
        }
    }
}

/// `p^level | form(y)`, or `form(y) = 0` when `level` is `None`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Condition {
    form: Vec<BigInt>,
    level: Option<u32>,
}

/// One subset of negated atoms, conjoined with all positive atoms.
#[derive(Debug, Clone)]
struct System {
    conditions: Vec<Condition>,
    i: u32,
    j: i64,
}

#[derive(Debug, Clone)]
struct Regime {
    prime: PrimeClass,
    n: NRange,
    /// Indexed by bitmask over the negated atoms.
    systems: Vec<System>,
}

/// One regime together with the subsets (by bitmask) that are consistent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardClause {
    regime: usize,
    pattern: u32,
}

/// A disjunction of clauses; exactly one guard of a [`SymbolicCount`] holds at any point.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Guard {
    clauses: Vec<GuardClause>,
}

#[derive(Debug, Clone)]
pub struct SymbolicEntry {
    pub poly: ExponentPolynomial,
    pub guard: Guard,
}

#[derive(Debug, Clone)]
pub struct SymbolicCount {
    conj: Conjunction,
    d: u32,
    regimes: Vec<Regime>,
    entries: Vec<SymbolicEntry>,
}

fn valuation(v: &BigInt, p: u64) -> u32 {
    let p = BigInt::from(p);
    let mut v = v.abs();
    let mut e = 0;
    while !v.is_zero() && (&v % &p).is_zero() {
        v /= &p;
        e += 1;
    }
    e
}

fn prime_factors(v: &BigInt) -> Result<Vec<u64>, AbelianError> {
    let mut rest = v
        .abs()
        .to_u64()
        .filter(|&x| x <= 1 << 40)
        .ok_or_else(|| AbelianError::Invalid("invariant factor too large to factor".into()))?;
    let mut out = Vec::new();
    let mut q = 2;
    while q * q <= rest {
        if rest % q == 0 {
            out.push(q);
            while rest % q == 0 {
                rest /= q;
            }
        }
        q += 1;
    }
    if rest > 1 {
        out.push(rest);
    }
    Ok(out)
}

struct Builder<'a> {
    conj: &'a Conjunction,
    positives: Vec<usize>,
    negatives: Vec<usize>,
}

/// Regime data plus the diagonal entries met, for locating special primes.
struct RegimeData {
    systems: Vec<System>,
    diagonals: Vec<BigInt>,
    max_valuation: u32,
}

impl Builder<'_> {
    /// `prime` is `None` for the generic class; `n` is `None` for large n.
    fn regime(&self, prime: Option<u64>, n: Option<u32>) -> RegimeData {
        let r = self.conj.counted();
        let mut systems = Vec::new();
        let mut diagonals = Vec::new();
        let mut max_valuation = 0;
        for mask in 0..1u32 << self.negatives.len() {
            let rows: Vec<usize> = self
                .positives
                .iter()
                .copied()
                .chain(
                    self.negatives
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| mask >> b & 1 == 1)
                        .map(|(_, &a)| a),
                )
                .collect();
            // slack powers for active divisibility rows with power < n
            let mut slack: Vec<Option<u32>> = Vec::new();
            let mut active = Vec::new();
            for &a in &rows {
                let atom = &self.conj.atoms()[a];
                match atom.kind {
                    AtomKind::Eq => {
                        active.push(a);
                        slack.push(None);
                    }
                    AtomKind::Div { prime: q, power } if Some(q) == prime => {
                        active.push(a);
                        slack.push(match n {
                            Some(n) if power >= n => None,
                            _ => Some(power),
                        });
                    }
                    // coprime divisibility holds everywhere
                    AtomKind::Div { .. } => {}
                }
            }
            let slack_cols: Vec<usize> = (0..slack.len()).filter(|&i| slack[i].is_some()).collect();
            let cols = r + slack_cols.len();
            let p_big = BigInt::from(prime.unwrap_or(1));
            let matrix: Vec<Vec<BigInt>> = active
                .iter()
                .enumerate()
                .map(|(row, &a)| {
                    let mut v: Vec<BigInt> = self.conj.atoms()[a].term.x.iter().map(|&c| BigInt::from(c)).collect();
                    v.resize(cols, BigInt::zero());
                    if let Some(pos) = slack_cols.iter().position(|&s| s == row) {
                        v[r + pos] = -p_big.pow(slack[row].unwrap());
                    }
                    v
                })
                .collect();
            let dg = diagonalize(&matrix, cols);
            let rank = dg.diag.len();
            let mut conditions = Vec::new();
            let mut j: i64 = -(slack.iter().flatten().map(|&a| a as i64).sum::<i64>());
            for (row, urow) in dg.u.iter().enumerate() {
                let mut form = vec![BigInt::zero(); self.conj.params()];
                for (k, &a) in active.iter().enumerate() {
                    if urow[k].is_zero() {
                        continue;
                    }
                    for (slot, &b) in form.iter_mut().zip(&self.conj.atoms()[a].term.y) {
                        *slot += &urow[k] * b;
                    }
                }
                let level = if row < rank {
                    let e = prime.map_or(0, |p| valuation(&dg.diag[row], p));
                    max_valuation = max_valuation.max(e);
                    let e = n.map_or(e, |n| e.min(n));
                    j += e as i64;
                    if n == Some(e) {
                        None
                    } else {
                        Some(e)
                    }
                } else {
                    None
                };
                if form.iter().all(Zero::is_zero) || level == Some(0) {
                    continue;
                }
                conditions.push(Condition { form, level });
            }
            conditions.sort();
            conditions.dedup();
            diagonals.extend(dg.diag);
            systems.push(System {
                conditions,
                i: (cols - rank) as u32,
                j,
            });
        }
        RegimeData {
            systems,
            diagonals,
            max_valuation,
        }
    }
}

/// Downward-closed consistency patterns compatible with the conditions.
fn patterns(systems: &[System]) -> Vec<u32> {
    let total = systems.len();
    let mut out = Vec::new();
    let mut chosen = vec![false; total];
    fn rec(systems: &[System], s: usize, chosen: &mut Vec<bool>, out: &mut Vec<u32>) {
        if s == systems.len() {
            out.push(chosen.iter().enumerate().fold(0, |acc, (i, &c)| acc | (c as u32) << i));
            return;
        }
        let closed = (0..32).filter(|b| s >> b & 1 == 1).all(|b| chosen[s & !(1 << b)]);
        let same = (0..s).find(|&t| systems[t].conditions == systems[s].conditions);
        let options: &[bool] = match same {
            Some(t) => {
                if chosen[t] {
                    &[true]
                } else {
                    &[false]
                }
            }
            None if systems[s].conditions.is_empty() => &[true],
            None => &[true, false],
        };
        for &c in options {
            if c && !closed {
                continue;
            }
            chosen[s] = c;
            rec(systems, s + 1, chosen, out);
        }
        chosen[s] = false;
    }
    rec(systems, 0, &mut chosen, &mut out);
    out
}

/// Rewrites `X^(u(i n + j))` at fixed n into the index box when possible.
fn normalize(i: u32, j: i64, n: u32, k: u32, d: u32) -> (u32, i64) {
    let kd = k as i64 * d as i64;
    if i <= k && (-kd..=kd).contains(&j) {
        return (i, j);
    }
    let e = i as i64 * n as i64 + j;
    (0..=k)
        .map(|i2| (i2, e - i2 as i64 * n as i64))
        .find(|&(_, j2)| (-kd..=kd).contains(&j2))
        .unwrap_or((i, j))
}

/// The finite set of guarded polynomials for `conj`.
pub fn symbolic_count(conj: &Conjunction, cfg: &SymbolicConfig) -> Result<SymbolicCount, AbelianError> {
    if conj.counted() > cfg.max_counted {
        return Err(AbelianError::TooManyVariables {
            found: conj.counted(),
            limit: cfg.max_counted,
        });
    }
    let (negatives, positives): (Vec<usize>, Vec<usize>) =
        (0..conj.atoms().len()).partition(|&a| conj.atoms()[a].negated);
    let limit = cfg.max_negations.min(5);
    if negatives.len() > limit {
        return Err(AbelianError::TooManyNegations {
            found: negatives.len(),
            limit,
        });
    }
    let b = Builder {
        conj,
        positives,
        negatives,
    };
    let k = conj.counted() as u32;
    let d = conj.degree_bound();

    let generic = b.regime(None, None);
    let mut special: Vec<u64> = conj
        .atoms()
        .iter()
        .filter_map(|a| match a.kind {
            AtomKind::Div { prime, .. } => Some(prime),
            AtomKind::Eq => None,
        })
        .collect();
    for v in &generic.diagonals {
        special.extend(prime_factors(v)?);
    }
    special.sort_unstable();
    special.dedup();

    let mut regimes = vec![Regime {
        prime: PrimeClass::Other(special.clone()),
        n: NRange::AtLeast(1),
        systems: generic.systems,
    }];
    for &p in &special {
        let large = b.regime(Some(p), None);
        let max_power = conj
            .atoms()
            .iter()
            .filter_map(|a| match a.kind {
                AtomKind::Div { prime, power } if prime == p => Some(power),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let threshold = large.max_valuation.max(max_power);
        for n in 1..=threshold {
            let mut systems = b.regime(Some(p), Some(n)).systems;
            for s in &mut systems {
                (s.i, s.j) = normalize(s.i, s.j, n, k, d);
            }
            regimes.push(Regime {
                prime: PrimeClass::Is(p),
                n: NRange::Exactly(n),
                systems,
            });
        }
        regimes.push(Regime {
            prime: PrimeClass::Is(p),
            n: NRange::AtLeast(threshold + 1),
            systems: large.systems,
        });
    }

    let mut by_poly: BTreeMap<ExponentPolynomial, Guard> = BTreeMap::new();
    for (ri, regime) in regimes.iter().enumerate() {
        for pattern in patterns(&regime.systems) {
            let mut poly = ExponentPolynomial::zero(k, d);
            for (mask, sys) in regime.systems.iter().enumerate() {
                if pattern >> mask & 1 == 1 {
                    let sign = if mask.count_ones() % 2 == 0 { 1 } else { -1 };
                    poly.add_term(sys.i, sys.j, BigInt::from(sign));
                }
            }
            by_poly
                .entry(poly)
                .or_default()
                .clauses
                .push(GuardClause { regime: ri, pattern });
        }
    }
    let entries = by_poly
        .into_iter()
        .map(|(poly, guard)| SymbolicEntry { poly, guard })
        .collect();
    Ok(SymbolicCount {
        conj: conj.clone(),
        d,
        regimes,
        entries,
    })
}

impl Condition {
    fn holds(&self, p: u64, n: u32, modulus: u64, params: &[Residues]) -> bool {
        let q = BigInt::from(modulus);
        let coeffs: Vec<u64> = self
            .form
            .iter()
            .map(|c| {
                let r = c % &q;
                let r = if r.sign() == Sign::Minus { r + &q } else { r };
                r.to_u64().expect("reduced mod p^n")
            })
            .collect();
        let m = params.first().map_or(0, Vec::len);
        let div = match self.level {
            None => modulus,
            Some(e) => p.pow(e.min(n)),
        };
        (0..m).all(|coord| {
            let v = coeffs
                .iter()
                .zip(params)
                .map(|(&c, y)| c as u128 * y[coord] as u128 % modulus as u128)
                .sum::<u128>()
                % modulus as u128;
            v as u64 % div == 0
        })
    }

    fn render(&self, prime: &PrimeClass) -> String {
        let mut t = String::new();
        let mut first = true;
        for (i, c) in self.form.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let a = c.abs();
            let neg = c.is_negative();
            match (first, neg) {
                (true, true) => t.push('-'),
                (true, false) => {}
                (false, true) => t.push_str(" - "),
                (false, false) => t.push_str(" + "),
            }
            if !a.is_one() {
                let _ = write!(t, "{a}*");
            }
            let _ = write!(t, "y{}", i + 1);
            first = false;
        }
        match (self.level, prime) {
            (None, _) => format!("{t} = 0"),
            (Some(e), PrimeClass::Is(p)) => format!("{p}^{e} | {t}"),
            (Some(e), PrimeClass::Other(_)) => format!("p^{e} | {t}"),
        }
    }
}

impl SymbolicCount {
    pub fn conjunction(&self) -> &Conjunction {
        &self.conj
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn entries(&self) -> &[SymbolicEntry] {
        &self.entries
    }

    fn pattern(&self, regime: &Regime, p: u64, n: u32, params: &[Residues]) -> u32 {
        let modulus = p.pow(n);
        regime.systems.iter().enumerate().fold(0, |acc, (mask, s)| {
            let ok = s.conditions.iter().all(|c| c.holds(p, n, modulus, params));
            acc | (ok as u32) << mask
        })
    }

    /// Evaluates one guard from scratch.
    pub fn guard_holds(&self, guard: &Guard, p: u64, n: u32, params: &[Residues]) -> bool {
        guard.clauses.iter().any(|cl| {
            let rg = &self.regimes[cl.regime];
            rg.prime.contains(p) && rg.n.contains(n) && self.pattern(rg, p, n, params) == cl.pattern
        })
    }

    /// Indices of the entries whose guard holds.
    pub fn firing(&self, p: u64, n: u32, m: u32, params: &[Residues]) -> Result<Vec<usize>, AbelianError> {
        if !crate::families::is_prime(p) || n == 0 || m == 0 {
            return Err(AbelianError::Invalid(format!("no homocyclic group for p={p} n={n} m={m}")));
        }
        let modulus = p
            .checked_pow(n)
            .ok_or_else(|| AbelianError::Invalid("p^n overflows".into()))?;
        check_params(&self.conj, params, modulus, m as usize)?;
        Ok((0..self.entries.len())
            .filter(|&e| self.guard_holds(&self.entries[e].guard, p, n, params))
            .collect())
    }

    /// The count at (p, n, m, params) via the unique firing guard.
    pub fn evaluate(&self, p: u64, n: u32, m: u32, params: &[Residues]) -> Result<BigUint, AbelianError> {
        let fired = self.firing(p, n, m, params)?;
        match fired.as_slice() {
            [e] => evaluate_poly(&self.entries[*e].poly, p, m, n),
            other => Err(AbelianError::Invalid(format!(
                "{} guards hold instead of exactly one",
                other.len()
            ))),
        }
    }

    pub fn describe_guard(&self, guard: &Guard) -> String {
        let clauses: Vec<String> = guard
            .clauses
            .iter()
            .map(|cl| {
                let rg = &self.regimes[cl.regime];
                let mut parts = vec![
                    match &rg.prime {
                        PrimeClass::Is(p) => format!("p = {p}"),
                        PrimeClass::Other(ex) if ex.is_empty() => "p any prime".into(),
                        PrimeClass::Other(ex) => format!(
                            "p not in {{{}}}",
                            ex.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
                        ),
                    },
                    match rg.n {
                        NRange::Exactly(v) => format!("n = {v}"),
                        NRange::AtLeast(v) => format!("n >= {v}"),
                    },
                ];
                let mut seen = Vec::new();
                for (mask, s) in rg.systems.iter().enumerate() {
                    if s.conditions.is_empty() || seen.contains(&&s.conditions) {
                        continue;
                    }
                    seen.push(&s.conditions);
                    let body: Vec<String> = s.conditions.iter().map(|c| c.render(&rg.prime)).collect();
                    let body = body.join(" and ");
                    if cl.pattern >> mask & 1 == 1 {
                        parts.push(body);
                    } else {
                        parts.push(format!("not ({body})"));
                    }
                }
                format!("({})", parts.join(" and "))
            })
            .collect();
        if clauses.is_empty() {
            "false".into()
        } else {
            clauses.join(" or ")
        }
    }
}

#[derive(Serialize)]
struct EntryJson<'a> {
    k: u32,
    d: u32,
    coeffs: Vec<CoeffRow>,
    guard: String,
    #[serde(rename = "withinBounds")]
    within_bounds: bool,
    #[serde(skip)]
    _p: std::marker::PhantomData<&'a ()>,
}

impl Serialize for SymbolicCount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<EntryJson> = self
            .entries
            .iter()
            .map(|e| EntryJson {
                k: e.poly.k,
                d: e.poly.d,
                coeffs: coeff_rows(&e.poly),
                guard: self.describe_guard(&e.guard),
                within_bounds: e.poly.within_bounds(),
                _p: std::marker::PhantomData,
            })
            .collect();
        let mut st = s.serialize_struct("SymbolicCount", 4)?;
        st.serialize_field("formula", &self.conj.to_string())?;
        st.serialize_field("k", &self.conj.counted())?;
        st.serialize_field("d", &self.d)?;
        st.serialize_field("candidates", &entries)?;
        st.end()
    }
}
