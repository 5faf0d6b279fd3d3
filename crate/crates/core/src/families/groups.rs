//! Small finite groups as multiplication tables.

use std::collections::HashMap;
use std::sync::Arc;

use crate::logic::{Element, FiniteStructure, Signature};

use super::FamilyError;

/// A finite group with elements `0..order`; the identity is not necessarily 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroup {
    name: String,
    order: usize,
    mul: Vec<u32>,
    inv: Vec<u32>,
    identity: u32,
}

impl FiniteGroup {
    /// Closes the given permutations (images of `0..degree`) under composition.
    /// Element 0 is the identity; `a * b` applies `b` first, then `a`.
    pub fn from_permutations(name: &str, generators: &[Vec<usize>]) -> Self {
        let degree = generators.first().map_or(0, Vec::len);
        let id: Vec<usize> = (0..degree).collect();
        let mut elems = vec![id.clone()];
        let mut index: HashMap<Vec<usize>, u32> = HashMap::from([(id, 0)]);
        let mut frontier = 0;
        while frontier < elems.len() {
            let e = elems[frontier].clone();
            frontier += 1;
            for g in generators {
                let prod: Vec<usize> = (0..degree).map(|i| g[e[i]]).collect();
                if !index.contains_key(&prod) {
                    index.insert(prod.clone(), elems.len() as u32);
                    elems.push(prod);
                }
            }
        }
        let order = elems.len();
        let mut mul = vec![0u32; order * order];
        for (a, pa) in elems.iter().enumerate() {
            for (b, pb) in elems.iter().enumerate() {
                let prod: Vec<usize> = (0..degree).map(|i| pa[pb[i]]).collect();
                mul[a * order + b] = index[&prod];
            }
        }
        let inv = (0..order)
            .map(|a| (0..order as u32).find(|&b| mul[a * order + b as usize] == 0).unwrap())
            .collect();
        FiniteGroup {
            name: name.to_string(),
            order,
            mul,
            inv,
            identity: 0,
        }
    }

    pub fn cyclic(k: usize) -> Self {
        let gen: Vec<usize> = (0..k).map(|i| (i + 1) % k).collect();
        FiniteGroup::from_permutations(&format!("C{k}"), &[gen])
    }

    pub fn symmetric3() -> Self {
        FiniteGroup::from_permutations("S3", &[vec![1, 0, 2], vec![1, 2, 0]])
    }

    pub fn symmetric4() -> Self {
        FiniteGroup::from_permutations("S4", &[vec![1, 0, 2, 3], vec![1, 2, 3, 0]])
    }

    pub fn alternating4() -> Self {
        FiniteGroup::from_permutations("A4", &[vec![1, 2, 0, 3], vec![1, 0, 3, 2]])
    }

    pub fn alternating5() -> Self {
        FiniteGroup::from_permutations("A5", &[vec![1, 2, 0, 3, 4], vec![1, 2, 3, 4, 0]])
    }

    /// PSL(2,7) acting on the projective line over F_7 (point 7 is infinity),
    /// generated by z -> z + 1 and z -> -1/z.
    pub fn psl27() -> Self {
        let inv7 = |z: usize| (1..7).find(|&w| z * w % 7 == 1).unwrap();
        let shift: Vec<usize> = (0..8).map(|z| if z == 7 { 7 } else { (z + 1) % 7 }).collect();
        let flip: Vec<usize> = (0..8)
            .map(|z| match z {
                0 => 7,
                7 => 0,
                z => (7 - inv7(z)) % 7,
            })
            .collect();
        FiniteGroup::from_permutations("PSL(2,7)", &[shift, flip])
    }

    /// Built-in groups: `C<k>`, `S3`, `S4`, `A4`, `A5`, `PSL27`.
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "S3" => Some(Self::symmetric3()),
            "S4" => Some(Self::symmetric4()),
            "A4" => Some(Self::alternating4()),
            "A5" => Some(Self::alternating5()),
            "PSL27" | "PSL(2,7)" => Some(Self::psl27()),
            other => {
                let k: usize = other.strip_prefix('C')?.parse().ok()?;
                (1..=4096).contains(&k).then(|| Self::cyclic(k))
            }
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["C<k>", "S3", "S4", "A4", "A5", "PSL27"]
    }

    /// Reads group tables from a structure with (`mul`, `inv`, `e`) or (`add`, `neg`, `0`).
    pub fn from_structure(m: &FiniteStructure) -> Result<Self, FamilyError> {
        let sig = m.signature();
        let (mul, inv, e) = [("mul", "inv", "e"), ("add", "neg", "0")]
            .into_iter()
            .find(|(a, b, c)| {
                sig.function(a).is_some() && sig.function(b).is_some() && sig.constant(c).is_some()
            })
            .ok_or_else(|| {
                FamilyError::InvalidParameter(
                    "structure lacks group symbols (mul, inv, e) or (add, neg, 0)".into(),
                )
            })?;
        let (_, fs) = sig.function(mul).unwrap();
        let (_, is) = sig.function(inv).unwrap();
        let sort = fs.result_sort;
        if fs.arg_sorts != [sort, sort] || is.arg_sorts != [sort] || is.result_sort != sort {
            return Err(FamilyError::InvalidParameter("group symbols are mis-sorted".into()));
        }
        let order = m.size(sort) as usize;
        let mut mt = vec![0u32; order * order];
        for a in 0..order {
            for b in 0..order {
                mt[a * order + b] = m.apply(mul, &[a as Element, b as Element]).unwrap();
            }
        }
        let it: Vec<u32> = (0..order).map(|a| m.apply(inv, &[a as Element]).unwrap()).collect();
        let g = FiniteGroup {
            name: "structure".into(),
            order,
            mul: mt,
            inv: it,
            identity: m.constant(e).unwrap(),
        };
        g.check_axioms()?;
        Ok(g)
    }

    pub fn check_axioms(&self) -> Result<(), FamilyError> {
        let n = self.order as u32;
        for a in 0..n {
            if self.mul(a, self.identity) != a || self.mul(self.identity, a) != a {
                return Err(FamilyError::InvalidParameter("identity law fails".into()));
            }
            if self.mul(a, self.inv(a)) != self.identity {
                return Err(FamilyError::InvalidParameter("inverse law fails".into()));
            }
            for b in 0..n {
                for c in 0..n {
                    if self.mul(self.mul(a, b), c) != self.mul(a, self.mul(b, c)) {
                        return Err(FamilyError::InvalidParameter("associativity fails".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_structure(&self) -> FiniteStructure {
        let sig = Arc::new(
            Signature::builder()
                .sort("G")
                .function("mul", &["G", "G"], "G")
                .function("inv", &["G"], "G")
                .constant("e", "G")
                .build()
                .expect("fixed signature"),
        );
        let n = self.order;
        FiniteStructure::builder(sig, vec![n as u32])
            .function_rows(
                "mul",
                (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| {
                    vec![a as u32, b as u32, self.mul[a * n + b]]
                }).collect::<Vec<_>>(),
            )
            .function_rows(
                "inv",
                (0..n).map(|a| vec![a as u32, self.inv[a]]).collect::<Vec<_>>(),
            )
            .constant("e", self.identity)
            .build()
            .expect("group tables are consistent")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> u32 {
        self.identity
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        self.mul[a as usize * self.order + b as usize]
    }

    #[inline]
    pub fn inv(&self, a: u32) -> u32 {
        self.inv[a as usize]
    }

    pub fn pow(&self, a: u32, k: i64) -> u32 {
        let base = if k < 0 { self.inv(a) } else { a };
        let mut out = self.identity;
        for _ in 0..k.unsigned_abs() {
            out = self.mul(out, base);
        }
        out
    }

    pub fn element_order(&self, a: u32) -> usize {
        let mut x = a;
        let mut k = 1;
        while x != self.identity {
            x = self.mul(x, a);
            k += 1;
        }
        k
    }

    pub fn conjugate(&self, a: u32, by: u32) -> u32 {
        self.mul(self.mul(by, a), self.inv(by))
    }
}
