//! One counted variable: every atom defines the empty set, the whole group,
//! or a coset of some `p^i G`, and these subgroups form a chain.

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, Zero};

use super::{check_params, eval_params, AbelianError, AtomKind, Conjunction, Residues, StandardAtom};
use crate::families::Homocyclic;

/// Inclusion–exclusion over negated atoms is limited to this many.
pub const MAX_NEGATIONS: usize = 12;

/// Solution set of one atom.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Set {
    Empty,
    /// `rep + p^level G`; level 0 is the whole group.
    Coset { level: u32, rep: Residues },
}

struct Ctx {
    p: u64,
    n: u32,
    q: u64,
    m: usize,
}

impl Ctx {
    fn in_subgroup(&self, g: &[u64], level: u32) -> bool {
        let d = self.p.pow(level.min(self.n));
        g.iter().all(|&v| v % d == 0)
    }

    fn whole(&self) -> Set {
        Set::Coset {
            level: 0,
            rep: vec![0; self.m],
        }
    }

    /// Solutions of `k x + c` in `p^a G`, with `a <= n`.
    fn solve(&self, k: i64, c: &Residues, a: u32) -> Set {
        let k = (k as i128).rem_euclid(self.q as i128) as u64;
        let mut j = 0;
        let mut unit = k;
        while unit != 0 && unit % self.p == 0 && j < self.n {
            unit /= self.p;
            j += 1;
        }
        if k == 0 || j >= a {
            // k x already lies in p^a G
            return if self.in_subgroup(c, a) {
                self.whole()
            } else {
                Set::Empty
            };
        }
        if !self.in_subgroup(c, j) {
            return Set::Empty;
        }
        let inv = mod_inverse(unit, self.q);
        let pj = self.p.pow(j);
        let rep = c
            .iter()
            .map(|&v| {
                let v = (v / pj) as u128 * inv as u128 % self.q as u128;
                (self.q - v as u64) % self.q
            })
            .collect();
        Set::Coset { level: a - j, rep }
    }

    fn atom_set(&self, atom: &StandardAtom, c: &Residues) -> Set {
        let k = atom.term.x[0];
        match atom.kind {
            AtomKind::Eq => self.solve(k, c, self.n),
            AtomKind::Div { prime, .. } if prime != self.p => self.whole(),
            AtomKind::Div { power, .. } => self.solve(k, c, power.min(self.n)),
        }
    }

    fn intersect(&self, a: &Set, b: &Set) -> Set {
        match (a, b) {
            (Set::Coset { level: la, rep: ra }, Set::Coset { level: lb, rep: rb }) => {
                let (lo, hi, rhi) = if la <= lb { (*la, *lb, rb) } else { (*lb, *la, ra) };
                let diff: Vec<u64> = ra
                    .iter()
                    .zip(rb)
                    .map(|(&x, &y)| (x + self.q - y) % self.q)
                    .collect();
                if self.in_subgroup(&diff, lo) {
                    Set::Coset {
                        level: hi,
                        rep: rhi.clone(),
                    }
                } else {
                    Set::Empty
                }
            }
            _ => Set::Empty,
        }
    }

    fn size(&self, s: &Set) -> BigUint {
        match s {
            Set::Empty => BigUint::zero(),
            Set::Coset { level, .. } => {
                BigUint::from(self.p).pow((self.n - level) * self.m as u32)
            }
        }
    }
}

fn mod_inverse(a: u64, m: u64) -> u64 {
    let (mut r0, mut r1) = (m as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    t0.rem_euclid(m as i128) as u64
}

/// The number of `x` in G with G ⊨ conj(x, params), where each parameter is
/// given as residues mod p^n. No element of G is enumerated.
pub fn exact_count(
    conj: &Conjunction,
    g: &Homocyclic,
    params: &[Residues],
) -> Result<BigUint, AbelianError> {
    if conj.counted() != 1 {
        return Err(AbelianError::TooManyVariables {
            found: conj.counted(),
            limit: 1,
        });
    }
    let ctx = Ctx {
        p: g.p,
        n: g.n,
        q: g.modulus(),
        m: g.m as usize,
    };
    check_params(conj, params, ctx.q, ctx.m)?;
    let mut base = ctx.whole();
    let mut negs = Vec::new();
    for atom in conj.atoms() {
        let c = eval_params(&atom.term, params, ctx.q, ctx.m);
        let s = ctx.atom_set(atom, &c);
        if atom.negated {
            negs.push(s);
        } else {
            base = ctx.intersect(&base, &s);
        }
    }
    if negs.len() > MAX_NEGATIONS {
        return Err(AbelianError::TooManyNegations {
            found: negs.len(),
            limit: MAX_NEGATIONS,
        });
    }
    let mut total = BigInt::zero();
    include_exclude(&ctx, &base, &negs, 0, true, &mut total);
    debug_assert!(!total.is_negative());
    Ok(total.to_biguint().expect("inclusion–exclusion total is a cardinality"))
}

fn include_exclude(ctx: &Ctx, acc: &Set, negs: &[Set], from: usize, plus: bool, total: &mut BigInt) {
    if *acc == Set::Empty {
        return;
    }
    let size = BigInt::from(ctx.size(acc));
    if plus {
        *total += size;
    } else {
        *total -= size;
    }
    for i in from..negs.len() {
        let next = ctx.intersect(acc, &negs[i]);
        include_exclude(ctx, &next, negs, i + 1, !plus, total);
    }
}
