//! Finite probability spaces with exact rational weights, the ratio
//! sequences |X ∩ D| / |D| along a family, and searches for events whose
//! intersections stay large.
//!
//! If events A_1, A_2, .. all have measure at least ε ≤ 1/2, some k of them
//! meet in measure at least ε^(3^(k-1)); for k = 2 already the first
//! N(ε) = ⌊1/ε² + 1/2⌋ events contain such a pair. Both facts are checked
//! here on concrete finite families.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::engine::{exec, EngineConfig, EngineError};
use crate::families::{bind_selector, FamilyError, FamilyHandle};
use crate::logic::{free_variables, Formula};
use crate::serde_util::{parse_rational, rational_str, rational_to_string};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("weights must be nonnegative and sum to 1, got sum {0}")]
    BadWeights(String),
    #[error("atom {atom} is out of bounds for {atoms} atoms")]
    OutOfBounds { atom: usize, atoms: usize },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("need at least {need} events, got {found}")]
    TooFewEvents { need: u64, found: usize },
    #[error("D is empty at index {0}")]
    EmptyDomain(u64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Atoms with exact weights summing to 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMeasureSpace {
    weights: Vec<BigRational>,
    /// Common denominator and integer numerators of the weights.
    den: u128,
    nums: Vec<u128>,
}

impl FiniteMeasureSpace {
    pub fn new(weights: Vec<BigRational>) -> Result<Self, MeasureError> {
        let sum: BigRational = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(Signed::is_negative) || !sum.is_one() {
            return Err(MeasureError::BadWeights(rational_to_string(&sum)));
        }
        let den = weights
            .iter()
            .fold(BigInt::one(), |acc, w| acc.lcm(w.denom()))
            .to_u128()
            .filter(|&d| d < 1 << 100)
            .ok_or_else(|| MeasureError::Invalid("common denominator too large".into()))?;
        let nums = weights
            .iter()
            .map(|w| (w * BigRational::from_integer(den.into())).to_integer().to_u128().expect("bounded by den"))
            .collect();
        Ok(FiniteMeasureSpace { weights, den, nums })
    }

    pub fn uniform(n: usize) -> Result<Self, MeasureError> {
        let w = BigRational::new(BigInt::one(), BigInt::from(n.max(1)));
        Self::new(vec![w; n])
    }

    pub fn atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    pub fn event(&self, atoms: &[usize]) -> Result<Event, MeasureError> {
        let mut bits = vec![0u64; self.atoms().div_ceil(64)];
        for &a in atoms {
            if a >= self.atoms() {
                return Err(MeasureError::OutOfBounds {
                    atom: a,
                    atoms: self.atoms(),
                });
            }
            bits[a / 64] |= 1 << (a % 64);
        }
        Ok(Event { bits })
    }

    fn mass(&self, e: &Event) -> u128 {
        let mut s = 0;
        for (w, &word) in e.bits.iter().enumerate() {
            let mut b = word;
            while b != 0 {
                let i = b.trailing_zeros() as usize;
                s += self.nums[w * 64 + i];
                b &= b - 1;
            }
        }
        s
    }

    fn ratio(&self, mass: u128) -> BigRational {
        BigRational::new(BigInt::from(mass), BigInt::from(self.den))
    }

    pub fn mu(&self, e: &Event) -> BigRational {
        self.ratio(self.mass(e))
    }

    /// Least integer mass reaching `bound`, or `None` if it exceeds the space.
    fn mass_threshold(&self, bound: &BigRational) -> Option<u128> {
        let t = (bound * BigRational::from_integer(self.den.into())).ceil().to_integer();
        if t.is_negative() {
            return Some(0);
        }
        t.to_u128().filter(|&t| t <= self.den)
    }
}

/// A set of atoms as a bitset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    bits: Vec<u64>,
}

impl Event {
    pub fn intersect(&self, other: &Event) -> Event {
        Event {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a & b).collect(),
        }
    }

    pub fn atoms(&self) -> Vec<usize> {
        (0..self.bits.len() * 64)
            .filter(|&i| self.bits[i / 64] >> (i % 64) & 1 == 1)
            .collect()
    }
}

/// Measure of an event given as atom ids.
pub fn mu(space: &FiniteMeasureSpace, atoms: &[usize]) -> Result<BigRational, MeasureError> {
    Ok(space.mu(&space.event(atoms)?))
}

/// The JSON form `{ "weights": ["p/q", ..], "events": [[atom, ..], ..] }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub weights: Vec<String>,
    #[serde(default)]
    pub events: Vec<Vec<usize>>,
}

impl MeasureSpec {
    pub fn build(&self) -> Result<(FiniteMeasureSpace, Vec<Event>), MeasureError> {
        let weights = self
            .weights
            .iter()
            .map(|w| parse_rational(w).ok_or_else(|| MeasureError::Invalid(format!("bad weight `{w}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let space = FiniteMeasureSpace::new(weights)?;
        let events = self
            .events
            .iter()
            .map(|e| space.event(e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((space, events))
    }

    pub fn from_parts(space: &FiniteMeasureSpace, events: &[Event]) -> Self {
        MeasureSpec {
            weights: space.weights().iter().map(rational_to_string).collect(),
            events: events.iter().map(Event::atoms).collect(),
        }
    }
}

/// `N(ε) = ⌊1/ε² + 1/2⌋`.
pub fn pair_threshold(eps: &BigRational) -> Result<u64, MeasureError> {
    if !eps.is_positive() {
        return Err(MeasureError::Hypothesis("ε must be positive".into()));
    }
    let half = BigRational::new(1.into(), 2.into());
    (eps.recip() * eps.recip() + half)
        .floor()
        .to_integer()
        .to_u64()
        .ok_or_else(|| MeasureError::Invalid("N(ε) too large".into()))
}

/// `ε^(3^(k-1))`, exactly.
pub fn k_bound(eps: &BigRational, k: u32) -> BigRational {
    let e = 3u64.pow(k.saturating_sub(1)) as i32;
    eps.pow(e)
}

/// The least measure among `events`.
pub fn epsilon(space: &FiniteMeasureSpace, events: &[Event]) -> Option<BigRational> {
    events.iter().map(|e| space.mu(e)).min()
}

fn check_hypothesis(space: &FiniteMeasureSpace, events: &[Event], eps: &BigRational) -> Result<(), MeasureError> {
    let half = BigRational::new(1.into(), 2.into());
    if !eps.is_positive() || *eps > half {
        return Err(MeasureError::Hypothesis(format!(
            "need 0 < ε <= 1/2, got {}",
            rational_to_string(eps)
        )));
    }
    if let Some((i, m)) = events
        .iter()
        .map(|e| space.mu(e))
        .enumerate()
        .find(|(_, m)| m < eps)
    {
        return Err(MeasureError::Hypothesis(format!(
            "event {i} has measure {} < ε = {}",
            rational_to_string(&m),
            rational_to_string(eps)
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Exhaustive,
    Recursive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum KIntersection {
    Found {
        /// 0-based event positions in increasing order.
        indices: Vec<usize>,
        #[serde(serialize_with = "rational_str")]
        measure: BigRational,
        #[serde(serialize_with = "rational_str")]
        bound: BigRational,
        strategy: Strategy,
    },
    /// The search space was covered without a witness.
    NotFound {
        #[serde(serialize_with = "rational_str")]
        bound: BigRational,
        strategy: Strategy,
    },
    /// The budget ran out first.
    Exhausted { visited: u64, strategy: Strategy },
}

/// Exhaustive search covers k <= this many events.
pub const EXHAUSTIVE_MAX_K: usize = 5;
/// Exhaustive search covers at most this many events.
pub const EXHAUSTIVE_MAX_EVENTS: usize = 24;

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Node visits (exhaustive) or tuple pairs (recursive) before giving up.
    pub budget: u64,
    pub workers: usize,
    /// Forces a strategy; `None` picks exhaustive when small enough.
    pub strategy: Option<Strategy>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            budget: 50_000_000,
            workers: crate::engine::exec::default_workers(),
            strategy: None,
        }
    }
}

/// Finds k events whose intersection has measure at least `ε^(3^(k-1))`,
/// where ε is the least event measure.
pub fn find_k_intersection(
    space: &FiniteMeasureSpace,
    events: &[Event],
    k: usize,
    opts: &SearchOptions,
) -> Result<KIntersection, MeasureError> {
    if k == 0 || k > events.len() {
        return Err(MeasureError::TooFewEvents {
            need: k.max(1) as u64,
            found: events.len(),
        });
    }
    let eps = epsilon(space, events).expect("nonempty");
    check_hypothesis(space, events, &eps)?;
    let bound = k_bound(&eps, k as u32);
    let strategy = opts.strategy.unwrap_or(if k <= EXHAUSTIVE_MAX_K && events.len() <= EXHAUSTIVE_MAX_EVENTS {
        Strategy::Exhaustive
    } else {
        Strategy::Recursive
    });
    let Some(t) = space.mass_threshold(&bound) else {
        return Ok(KIntersection::NotFound { bound, strategy });
    };
    let out = match strategy {
        Strategy::Exhaustive => exhaustive(space, events, k, t, opts),
        Strategy::Recursive => recursive(space, events, k, &eps, opts),
    };
    Ok(match out {
        Search::Found(indices) => {
            let all = indices
                .iter()
                .skip(1)
                .fold(events[indices[0]].clone(), |acc, &i| acc.intersect(&events[i]));
            let measure = space.mu(&all);
            debug_assert!(measure >= bound);
            KIntersection::Found {
                indices,
                measure,
                bound,
                strategy,
            }
        }
        Search::None => KIntersection::NotFound { bound, strategy },
        Search::Budget(visited) => KIntersection::Exhausted { visited, strategy },
    })
}

enum Search {
    Found(Vec<usize>),
    None,
    Budget(u64),
}

/// Depth-first over increasing index tuples, pruning once the running
/// intersection drops below the threshold mass `t`.
fn exhaustive(space: &FiniteMeasureSpace, events: &[Event], k: usize, t: u128, opts: &SearchOptions) -> Search {
    let visited = AtomicU64::new(0);
    let tripped = AtomicBool::new(false);
    struct Dfs<'a> {
        space: &'a FiniteMeasureSpace,
        events: &'a [Event],
        k: usize,
        t: u128,
        budget: u64,
        visited: &'a AtomicU64,
        tripped: &'a AtomicBool,
    }
    impl Dfs<'_> {
        fn go(&self, acc: &Event, chosen: &mut Vec<usize>) -> bool {
            if chosen.len() == self.k {
                return true;
            }
            let start = chosen.last().map_or(0, |&i| i + 1);
            for i in start..=self.events.len() - (self.k - chosen.len()) {
                if self.visited.fetch_add(1, Ordering::Relaxed) >= self.budget {
                    self.tripped.store(true, Ordering::Relaxed);
                    return false;
                }
                let next = acc.intersect(&self.events[i]);
                if self.space.mass(&next) < self.t {
                    continue;
                }
                chosen.push(i);
                if self.go(&next, chosen) {
                    return true;
                }
                chosen.pop();
                if self.tripped.load(Ordering::Relaxed) {
                    return false;
                }
            }
            false
        }
    }
    let dfs = Dfs {
        space,
        events,
        k,
        t,
        budget: opts.budget,
        visited: &visited,
        tripped: &tripped,
    };
    let lead = events.len() - k + 1;
    let found = exec::find_first(opts.workers, lead, |i| {
        if space.mass(&events[i]) < t {
            return None;
        }
        let mut chosen = vec![i];
        dfs.go(&events[i], &mut chosen).then_some(chosen)
    });
    match found {
        Some(v) => Search::Found(v),
        None if tripped.load(Ordering::Relaxed) => Search::Budget(visited.load(Ordering::Relaxed)),
        None => Search::None,
    }
}

/// The induction: from the tuples of size j meeting `ε^(3^(j-1))`, every
/// pair of distinct tuples whose intersections meet `ε^(3^j)` yields a
/// tuple of size j + 1 (the first j + 1 indices of their union).
fn recursive(space: &FiniteMeasureSpace, events: &[Event], k: usize, eps: &BigRational, opts: &SearchOptions) -> Search {
    let mut tuples: Vec<(Vec<usize>, Event)> = events.iter().cloned().enumerate().map(|(i, e)| (vec![i], e)).collect();
    let mut spent: u64 = 0;
    for j in 1..k {
        let Some(t) = space.mass_threshold(&k_bound(eps, j as u32 + 1)) else {
            return Search::None;
        };
        let mut next: Vec<(Vec<usize>, Event)> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for a in 0..tuples.len() {
            for b in a + 1..tuples.len() {
                spent += 1;
                if spent > opts.budget {
                    return Search::Budget(spent);
                }
                let both = tuples[a].1.intersect(&tuples[b].1);
                if space.mass(&both) < t {
                    continue;
                }
                let mut idx: Vec<usize> = tuples[a].0.iter().chain(&tuples[b].0).copied().collect();
                idx.sort_unstable();
                idx.dedup();
                idx.truncate(j + 1);
                if seen.insert(idx.clone()) {
                    let e = idx.iter().skip(1).fold(events[idx[0]].clone(), |acc, &i| acc.intersect(&events[i]));
                    next.push((idx, e));
                }
            }
        }
        if next.is_empty() {
            return Search::None;
        }
        tuples = next;
    }
    Search::Found(tuples.swap_remove(0).0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum PairwiseResult {
    Ok {
        pair: [usize; 2],
        #[serde(serialize_with = "rational_str")]
        measure: BigRational,
        #[serde(rename = "n")]
        threshold: u64,
    },
    /// No pair among the first N(ε) events reaches ε³.
    Counterexample {
        #[serde(rename = "n")]
        threshold: u64,
        #[serde(rename = "bestMeasure", serialize_with = "rational_str")]
        best: BigRational,
    },
}

/// Checks that among the first N(ε) events some pair meets in measure ≥ ε³.
pub fn pairwise_threshold_check(
    space: &FiniteMeasureSpace,
    events: &[Event],
    eps: &BigRational,
) -> Result<PairwiseResult, MeasureError> {
    check_hypothesis(space, events, eps)?;
    let n = pair_threshold(eps)?;
    if (events.len() as u64) < n || n < 2 {
        return Err(MeasureError::TooFewEvents {
            need: n.max(2),
            found: events.len(),
        });
    }
    let first = &events[..n as usize];
    let mut best: Option<(u128, [usize; 2])> = None;
    for i in 0..first.len() {
        for j in i + 1..first.len() {
            let m = space.mass(&first[i].intersect(&first[j]));
            if best.is_none_or(|(b, _)| m > b) {
                best = Some((m, [i, j]));
            }
        }
    }
    let (mass, pair) = best.expect("n >= 2");
    let measure = space.ratio(mass);
    Ok(if measure >= eps.pow(3) {
        PairwiseResult::Ok {
            pair,
            measure,
            threshold: n,
        }
    } else {
        PairwiseResult::Counterexample {
            threshold: n,
            best: measure,
        }
    })
}

/// `Σ μ(A_i) - Σ_{i<j} μ(A_i ∩ A_j)`, which never exceeds 1.
pub fn truncated_inclusion_exclusion(space: &FiniteMeasureSpace, events: &[Event]) -> BigRational {
    let singles: u128 = events.iter().map(|e| space.mass(e)).sum();
    let mut pairs: u128 = 0;
    for i in 0..events.len() {
        for j in i + 1..events.len() {
            pairs += space.mass(&events[i].intersect(&events[j]));
        }
    }
    BigRational::new(BigInt::from(singles), BigInt::from(space.den)) - space.ratio(pairs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RatioEntry {
    pub index: u64,
    #[serde(serialize_with = "rational_str")]
    pub ratio: BigRational,
    #[serde(rename = "domain", serialize_with = "crate::serde_util::biguint_str")]
    pub domain: BigUint,
}

/// `|X ∩ D| / |D|` at each index. The free variables of `d` not fixed by
/// `selector` are counted; `x` may only use those and the selector's.
pub fn mu_d_sequence(
    family: &FamilyHandle,
    d: &Formula,
    x: &Formula,
    indices: &[u64],
    selector: &[(String, String)],
    cfg: &EngineConfig,
) -> Result<Vec<RatioEntry>, MeasureError> {
    let fixed = |n: &String| selector.iter().any(|(v, _)| v == n);
    let counted: Vec<String> = free_variables(d)
        .into_iter()
        .map(|(n, _)| n)
        .filter(|n| !fixed(n))
        .collect();
    if let Some((stray, _)) = free_variables(x)
        .into_iter()
        .find(|(n, _)| !fixed(n) && !counted.contains(n))
    {
        return Err(MeasureError::Invalid(format!(
            "variable `{stray}` of X is neither counted in D nor fixed"
        )));
    }
    let counted: Vec<&str> = counted.iter().map(String::as_str).collect();
    let both = x.clone().and(d.clone());
    let mut out = Vec::with_capacity(indices.len());
    for &index in indices {
        let model = family.model(index)?;
        let b = bind_selector(family, selector, index)?;
        let dn = model.count(d, &b, &counted, cfg)?.into_value();
        if dn.is_zero() {
            return Err(MeasureError::EmptyDomain(index));
        }
        let xn = model.count(&both, &b, &counted, cfg)?.into_value();
        out.push(RatioEntry {
            index,
            ratio: BigRational::new(xn.into(), dn.clone().into()),
            domain: dn,
        });
    }
    Ok(out)
}

/// A random space of `atoms` atoms with integer weights in 1..=10, and
/// `events` events each grown atom by atom until its measure reaches `floor`.
pub fn random_space<R: rand::Rng>(
    rng: &mut R,
    atoms: usize,
    events: usize,
    floor: &BigRational,
) -> Result<(FiniteMeasureSpace, Vec<Event>), MeasureError> {
    if atoms == 0 || *floor > BigRational::one() {
        return Err(MeasureError::Invalid("need at least one atom and a floor <= 1".into()));
    }
    let ws: Vec<u64> = (0..atoms).map(|_| rng.gen_range(1..=10)).collect();
    let total: u64 = ws.iter().sum();
    let space = FiniteMeasureSpace::new(
        ws.iter()
            .map(|&w| BigRational::new(BigInt::from(w), BigInt::from(total)))
            .collect(),
    )?;
    let mut out = Vec::with_capacity(events);
    for _ in 0..events {
        let mut order: Vec<usize> = (0..atoms).collect();
        order.shuffle(rng);
        let mut chosen = Vec::new();
        for a in order {
            if space.mu(&space.event(&chosen)?) >= *floor {
                break;
            }
            chosen.push(a);
        }
        chosen.sort_unstable();
        out.push(space.event(&chosen)?);
    }
    Ok((space, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_formula;

    fn r(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    #[test]
    fn measures() {
        let s = FiniteMeasureSpace::uniform(10).unwrap();
        assert_eq!(mu(&s, &(0..10).collect::<Vec<_>>()).unwrap(), r(1, 1));
        assert_eq!(mu(&s, &[]).unwrap(), r(0, 1));
        assert_eq!(mu(&s, &[1, 4, 7]).unwrap(), r(3, 10));
        assert!(mu(&s, &[10]).is_err());
        assert!(FiniteMeasureSpace::new(vec![r(1, 2), r(1, 3)]).is_err());
        assert!(FiniteMeasureSpace::new(vec![r(3, 2), r(-1, 2)]).is_err());
        let a = s.event(&[0, 1, 2]).unwrap();
        let b = s.event(&[5, 6]).unwrap();
        let ab = s.event(&[0, 1, 2, 5, 6]).unwrap();
        assert_eq!(s.mu(&a) + s.mu(&b), s.mu(&ab));
    }

    #[test]
    fn spec_roundtrip() {
        let spec = MeasureSpec {
            weights: vec!["1/2".into(), "1/3".into(), "1/6".into()],
            events: vec![vec![0, 2], vec![1]],
        };
        let (s, ev) = spec.build().unwrap();
        assert_eq!(s.mu(&ev[0]), r(2, 3));
        assert_eq!(MeasureSpec::from_parts(&s, &ev), spec);
    }

    #[test]
    fn k_intersection_examples() {
        let s = FiniteMeasureSpace::uniform(8).unwrap();
        let half = s.event(&[0, 1, 2, 3]).unwrap();
        let ev = vec![half.clone(); 5];
        let opts = SearchOptions::default();
        match find_k_intersection(&s, &ev, 1, &opts).unwrap() {
            KIntersection::Found { measure, bound, .. } => {
                assert_eq!(bound, r(1, 2));
                assert!(measure >= bound);
            }
            other => panic!("{other:?}"),
        }
        match find_k_intersection(&s, &ev, 2, &opts).unwrap() {
            KIntersection::Found { measure, bound, .. } => {
                assert_eq!(measure, r(1, 2));
                assert_eq!(bound, r(1, 8));
            }
            other => panic!("{other:?}"),
        }
        let big = vec![s.event(&[0, 1, 2, 3, 4, 5]).unwrap(); 3];
        assert!(matches!(find_k_intersection(&s, &big, 2, &opts), Err(MeasureError::Hypothesis(_))));
    }

    #[test]
    fn strategies_agree_on_existence() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let atoms = rng.gen_range(4..=16);
            let ws: Vec<u64> = (0..atoms).map(|_| rng.gen_range(1..=10)).collect();
            let total: u64 = ws.iter().sum();
            let s = FiniteMeasureSpace::new(ws.iter().map(|&w| r(w as i64, total as i64)).collect()).unwrap();
            let ev: Vec<Event> = (0..12)
                .map(|_| {
                    let a: Vec<usize> = (0..atoms).filter(|_| rng.gen_bool(0.5)).collect();
                    s.event(&a).unwrap()
                })
                .collect();
            let Some(eps) = epsilon(&s, &ev) else { continue };
            if eps.is_zero() || eps > r(1, 2) {
                continue;
            }
            for k in 1..=3 {
                let ex = SearchOptions {
                    strategy: Some(Strategy::Exhaustive),
                    ..SearchOptions::default()
                };
                let rec = SearchOptions {
                    strategy: Some(Strategy::Recursive),
                    ..SearchOptions::default()
                };
                let a = find_k_intersection(&s, &ev, k, &ex).unwrap();
                let b = find_k_intersection(&s, &ev, k, &rec).unwrap();
                for res in [&a, &b] {
                    if let KIntersection::Found { indices, measure, bound, .. } = res {
                        assert_eq!(indices.len(), k);
                        assert!(indices.windows(2).all(|w| w[0] < w[1]));
                        assert!(measure >= bound);
                    }
                }
                // the recursion only builds witnesses, so it never beats exhaustive search
                if matches!(b, KIntersection::Found { .. }) {
                    assert!(matches!(a, KIntersection::Found { .. }));
                }
            }
        }
    }

    #[test]
    fn random_spaces_meet_the_floor() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let floor = r(1, 3);
        for atoms in 1..=20 {
            let (s, ev) = random_space(&mut rng, atoms, 16, &floor).unwrap();
            assert_eq!(s.atoms(), atoms);
            assert_eq!(ev.len(), 16);
            assert!(ev.iter().all(|e| s.mu(e) >= floor));
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(pair_threshold(&r(1, 2)).unwrap(), 4);
        assert_eq!(pair_threshold(&r(1, 3)).unwrap(), 9);
        assert_eq!(pair_threshold(&r(1, 4)).unwrap(), 16);
        assert_eq!(k_bound(&r(1, 3), 3), r(1, 3).pow(9));
    }

    #[test]
    fn pairwise_examples() {
        let s = FiniteMeasureSpace::uniform(6).unwrap();
        let same = vec![s.event(&[0, 1, 2]).unwrap(); 4];
        assert!(matches!(
            pairwise_threshold_check(&s, &same, &r(1, 2)).unwrap(),
            PairwiseResult::Ok { .. }
        ));
        assert!(matches!(
            pairwise_threshold_check(&s, &same[..3], &r(1, 2)),
            Err(MeasureError::TooFewEvents { need: 4, .. })
        ));
    }

    /// Every 4 events of measure ≥ 1/2 on up to 5 atoms with weights in
    /// twelfths contain a pair meeting in measure ≥ 1/8.
    #[test]
    fn pairwise_exhaustive_on_twelfths() {
        fn compositions(total: u32, parts: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if parts == 1 {
                cur.push(total);
                out.push(cur.clone());
                cur.pop();
                return;
            }
            for w in 1..=total - (parts as u32 - 1) {
                cur.push(w);
                compositions(total - w, parts - 1, cur, out);
                cur.pop();
            }
        }
        let mut checked = 0u64;
        for atoms in 1..=5usize {
            let mut ws = Vec::new();
            compositions(12, atoms, &mut Vec::new(), &mut ws);
            for w in ws {
                let mass = |m: u32| (0..atoms).filter(|i| m >> i & 1 == 1).map(|i| w[i]).sum::<u32>();
                let big: Vec<u32> = (0..1u32 << atoms).filter(|&m| mass(m) >= 6).collect();
                let n = big.len();
                for a in 0..n {
                    for b in a..n {
                        for c in b..n {
                            for d in c..n {
                                let e = [big[a], big[b], big[c], big[d]];
                                let best = (0..4)
                                    .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
                                    .map(|(i, j)| mass(e[i] & e[j]))
                                    .max()
                                    .unwrap();
                                // 1/8 of 12 is 1.5, so two twelfths are needed
                                assert!(best * 8 >= 12, "weights {w:?} events {e:?}");
                                checked += 1;
                            }
                        }
                    }
                }
            }
        }
        assert!(checked > 10_000);
        // and the library agrees on one of them
        let s = FiniteMeasureSpace::new(vec![r(3, 12), r(3, 12), r(3, 12), r(3, 12)]).unwrap();
        let ev: Vec<Event> = [[0, 1], [2, 3], [0, 2], [1, 3]].iter().map(|a| s.event(a).unwrap()).collect();
        match pairwise_threshold_check(&s, &ev, &r(1, 2)).unwrap() {
            PairwiseResult::Ok { measure, .. } => assert_eq!(measure, r(1, 4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inclusion_exclusion_bound() {
        let s = FiniteMeasureSpace::uniform(4).unwrap();
        let ev: Vec<Event> = [[0, 1], [1, 2], [2, 3], [3, 0]].iter().map(|a| s.event(a).unwrap()).collect();
        let v = truncated_inclusion_exclusion(&s, &ev);
        assert_eq!(v, r(1, 1));
    }

    #[test]
    fn ratio_sequences() {
        let cfg = EngineConfig::default();
        let fam = FamilyHandle::named("rank2classes").unwrap();
        let sig = fam.model(3).unwrap().signature().clone();
        let d = parse_formula("x = x", &sig).unwrap();
        let x = parse_formula("E(x,c)", &sig).unwrap();
        let sel = vec![("c".to_string(), "big-class".to_string())];
        let seq = mu_d_sequence(&fam, &d, &x, &[2, 3, 5, 8, 40], &sel, &cfg).unwrap();
        assert!(seq.iter().all(|e| e.ratio == r(1, 2)));
        let all = mu_d_sequence(&fam, &d, &d, &[2, 3], &[], &cfg).unwrap();
        assert!(all.iter().all(|e| e.ratio.is_one()));
        let none = parse_formula("!(x = x)", &sig).unwrap();
        let zero = mu_d_sequence(&fam, &d, &none, &[2, 3], &[], &cfg).unwrap();
        assert!(zero.iter().all(|e| e.ratio.is_zero()));
        assert!(matches!(
            mu_d_sequence(&fam, &none, &d, &[2], &[], &cfg),
            Err(MeasureError::EmptyDomain(2))
        ));
    }
}
