//! Homocyclic groups (Z/p^n Z)^m with sort `G`, `add`, `neg` and `0`.
//!
//! The element with residues `r[0..m]` has id `sum r[i] * (p^n)^i`.

use std::sync::Arc;

use crate::logic::{Element, FiniteStructure, Signature};

use super::{is_prime, FamilyError};

pub const MAX_ORDER: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Homocyclic {
    pub p: u64,
    pub n: u32,
    pub m: u32,
}

impl Homocyclic {
    pub fn new(p: u64, n: u32, m: u32) -> Result<Self, FamilyError> {
        if !is_prime(p) {
            return Err(FamilyError::InvalidParameter(format!("{p} is not prime")));
        }
        if n == 0 || m == 0 {
            return Err(FamilyError::InvalidParameter("n and m must be positive".into()));
        }
        let order = p
            .checked_pow(n)
            .and_then(|e| e.checked_pow(m))
            .filter(|&o| o <= MAX_ORDER)
            .ok_or_else(|| {
                FamilyError::TooLarge(format!("order {p}^({n}*{m}) exceeds {MAX_ORDER}"))
            })?;
        let _ = order;
        Ok(Homocyclic { p, n, m })
    }

    /// p^n, the exponent of the group.
    pub fn modulus(&self) -> u64 {
        self.p.pow(self.n)
    }

    pub fn order(&self) -> u64 {
        self.modulus().pow(self.m)
    }

    pub fn residues(&self, id: Element) -> Vec<u64> {
        let q = self.modulus();
        let mut v = id as u64;
        (0..self.m)
            .map(|_| {
                let r = v % q;
                v /= q;
                r
            })
            .collect()
    }

    pub fn id(&self, residues: &[u64]) -> Element {
        let q = self.modulus();
        residues.iter().rev().fold(0u64, |acc, &r| acc * q + r.rem_euclid(q)) as Element
    }

    pub fn add(&self, a: Element, b: Element) -> Element {
        let q = self.modulus();
        let r: Vec<u64> = self
            .residues(a)
            .iter()
            .zip(self.residues(b))
            .map(|(&x, y)| (x + y) % q)
            .collect();
        self.id(&r)
    }

    pub fn neg(&self, a: Element) -> Element {
        let q = self.modulus();
        let r: Vec<u64> = self.residues(a).iter().map(|&x| (q - x) % q).collect();
        self.id(&r)
    }

    /// k * a for any integer k.
    pub fn scale(&self, k: i64, a: Element) -> Element {
        let q = self.modulus() as i128;
        let r: Vec<u64> = self
            .residues(a)
            .iter()
            .map(|&x| ((k as i128 * x as i128).rem_euclid(q)) as u64)
            .collect();
        self.id(&r)
    }

    pub fn structure(&self) -> FiniteStructure {
        let sig = Arc::new(
            Signature::builder()
                .sort("G")
                .function("add", &["G", "G"], "G")
                .function("neg", &["G"], "G")
                .constant("0", "G")
                .build()
                .expect("fixed signature"),
        );
        let (g1, g2) = (*self, *self);
        FiniteStructure::builder(sig, vec![self.order() as u32])
            .function_fn("add", move |a| g1.add(a[0], a[1]))
            .function_fn("neg", move |a| g2.neg(a[0]))
            .constant("0", 0)
            .build()
            .expect("group tables are consistent")
    }
}

pub fn make_homocyclic(p: u64, n: u32, m: u32) -> Result<FiniteStructure, FamilyError> {
    Ok(Homocyclic::new(p, n, m)?.structure())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders() {
        assert_eq!(make_homocyclic(2, 2, 1).unwrap().size_of("G"), Some(4));
        assert_eq!(make_homocyclic(3, 1, 2).unwrap().size_of("G"), Some(9));
        assert_eq!(make_homocyclic(2, 3, 2).unwrap().size_of("G"), Some(64));
        assert!(make_homocyclic(4, 1, 1).is_err());
        assert!(make_homocyclic(2, 11, 1).is_err());
    }

    #[test]
    fn exponent() {
        let g = Homocyclic::new(3, 1, 2).unwrap();
        for a in 0..9 {
            assert_eq!(g.scale(3, a), 0);
        }
        let h = Homocyclic::new(2, 3, 1).unwrap();
        assert_ne!(h.scale(4, 1), 0);
        assert_eq!(h.scale(8, 1), 0);
    }

    #[test]
    fn group_axioms_exhaustive() {
        for (p, n, m) in [(2, 1, 1), (2, 2, 2), (3, 1, 2), (2, 3, 2), (3, 2, 1), (5, 1, 2)] {
            let s = make_homocyclic(p, n, m).unwrap();
            let size = s.size_of("G").unwrap();
            let add = |a, b| s.apply("add", &[a, b]).unwrap();
            let zero = s.constant("0").unwrap();
            for a in 0..size {
                assert_eq!(add(a, zero), a);
                assert_eq!(add(a, s.apply("neg", &[a]).unwrap()), zero);
                for b in 0..size {
                    assert_eq!(add(a, b), add(b, a));
                    for c in 0..size {
                        assert_eq!(add(add(a, b), c), add(a, add(b, c)));
                    }
                }
            }
        }
    }
}
