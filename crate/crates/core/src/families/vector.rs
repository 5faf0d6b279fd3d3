//! Finite vector spaces F_q^dim as two-sorted structures.
//!
//! Sorts `F` and `V`; functions `fadd`, `fmul`, `fneg`, `vadd`, `vneg`,
//! `smul`; constants `0f`, `1f`, `0v`; and for each `n <= dim` an `n`-ary
//! relation `theta<n>` holding exactly of linearly independent tuples.
//! The vector with coordinates `c` has id `sum c[i] * q^i`.

use std::sync::Arc;

use crate::logic::{Element, FiniteStructure, Signature};

use super::field::FiniteField;
use super::FamilyError;

pub const MAX_VECTORS: u32 = 1024;
pub const MAX_DIM: u32 = 6;
/// θ relations up to this many cells are tabulated; wider ones are computed.
const THETA_TABLE_CELLS: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct VectorSpace {
    field: Arc<FiniteField>,
    dim: u32,
    size: u32,
}

impl VectorSpace {
    pub fn new(q: u32, dim: u32) -> Result<Self, FamilyError> {
        let field = Arc::new(FiniteField::new(q)?);
        if dim > MAX_DIM {
            return Err(FamilyError::InvalidParameter(format!(
                "dimension {dim} exceeds {MAX_DIM}"
            )));
        }
        let size = (q as u64).pow(dim);
        if size > MAX_VECTORS as u64 {
            return Err(FamilyError::TooLarge(format!(
                "{q}^{dim} vectors exceeds the limit of {MAX_VECTORS}"
            )));
        }
        Ok(VectorSpace {
            field,
            dim,
            size: size as u32,
        })
    }

    pub fn field(&self) -> &FiniteField {
        &self.field
    }

    pub fn q(&self) -> u32 {
        self.field.q()
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn coords(&self, v: Element) -> Vec<u8> {
        let q = self.q();
        let mut v = v;
        (0..self.dim)
            .map(|_| {
                let c = v % q;
                v /= q;
                c as u8
            })
            .collect()
    }

    pub fn id(&self, coords: &[u8]) -> Element {
        coords
            .iter()
            .rev()
            .fold(0, |acc, &c| acc * self.q() + c as Element)
    }

    /// The i-th standard basis vector, 0-based.
    pub fn basis(&self, i: u32) -> Element {
        self.q().pow(i)
    }

    pub fn add(&self, a: Element, b: Element) -> Element {
        let (ca, cb) = (self.coords(a), self.coords(b));
        let s: Vec<u8> = ca.iter().zip(&cb).map(|(&x, &y)| self.field.add(x, y)).collect();
        self.id(&s)
    }

    pub fn scale(&self, c: u8, v: Element) -> Element {
        let s: Vec<u8> = self.coords(v).iter().map(|&x| self.field.mul(c, x)).collect();
        self.id(&s)
    }

    pub fn neg(&self, v: Element) -> Element {
        let s: Vec<u8> = self.coords(v).iter().map(|&x| self.field.neg(x)).collect();
        self.id(&s)
    }

    pub fn rank(&self, vectors: &[Element]) -> usize {
        let rows: Vec<Vec<u8>> = vectors.iter().map(|&v| self.coords(v)).collect();
        self.field.rank(&rows)
    }

    pub fn structure(&self) -> FiniteStructure {
        let q = self.q();
        let mut sb = Signature::builder()
            .sort("F")
            .sort("V")
            .function("fadd", &["F", "F"], "F")
            .function("fmul", &["F", "F"], "F")
            .function("fneg", &["F"], "F")
            .function("vadd", &["V", "V"], "V")
            .function("vneg", &["V"], "V")
            .function("smul", &["F", "V"], "V")
            .constant("0f", "F")
            .constant("1f", "F")
            .constant("0v", "V");
        let theta_sorts: Vec<Vec<&str>> = (1..=self.dim).map(|n| vec!["V"; n as usize]).collect();
        for (n, sorts) in theta_sorts.iter().enumerate() {
            sb = sb.relation(&format!("theta{}", n + 1), sorts);
        }
        let sig = Arc::new(sb.build().expect("fixed signature"));

        let f = self.field.clone();
        let (f1, f2, f3) = (f.clone(), f.clone(), f.clone());
        let (s1, s2, s3) = (self.clone(), self.clone(), self.clone());
        let mut b = FiniteStructure::builder(sig, vec![q, self.size])
            .function_fn("fadd", move |a| f1.add(a[0] as u8, a[1] as u8) as Element)
            .function_fn("fmul", move |a| f2.mul(a[0] as u8, a[1] as u8) as Element)
            .function_fn("fneg", move |a| f3.neg(a[0] as u8) as Element)
            .function_fn("vadd", move |a| s1.add(a[0], a[1]))
            .function_fn("vneg", move |a| s2.neg(a[0]))
            .function_fn("smul", move |a| s3.scale(a[0] as u8, a[1]))
            .constant("0f", 0)
            .constant("1f", 1)
            .constant("0v", 0);
        for n in 1..=self.dim {
            let name = format!("theta{n}");
            let cells = (self.size as u64).saturating_pow(n);
            let space = self.clone();
            if n <= 4 && cells <= THETA_TABLE_CELLS {
                b = b.relation_tuples(&name, self.independent_tuples(n as usize));
            } else {
                b = b.relation_fn(&name, move |args| space.rank(args) == args.len());
            }
        }
        b.build().expect("vector space tables are consistent")
    }

    /// All linearly independent n-tuples, built by extending independent prefixes.
    pub fn independent_tuples(&self, n: usize) -> Vec<Vec<Element>> {
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(n);
        let mut span = vec![false; self.size as usize];
        span[0] = true;
        self.extend(n, &mut prefix, &mut span, &mut out);
        out
    }

    fn extend(&self, n: usize, prefix: &mut Vec<Element>, span: &mut [bool], out: &mut Vec<Vec<Element>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for v in 0..self.size {
            if span[v as usize] {
                continue;
            }
            let before: Vec<usize> = (0..span.len()).filter(|&i| span[i]).collect();
            let mut added = Vec::new();
            for c in 1..self.q() {
                let cv = self.scale(c as u8, v);
                for &w in &before {
                    let s = self.add(w as Element, cv) as usize;
                    if !span[s] {
                        span[s] = true;
                        added.push(s);
                    }
                }
            }
            prefix.push(v);
            self.extend(n, prefix, span, out);
            prefix.pop();
            for s in added {
                span[s] = false;
            }
        }
    }
}

/// The structure of F_q^dim with its field sort.
pub fn make_vector_space(q: u32, dim: u32) -> Result<FiniteStructure, FamilyError> {
    Ok(VectorSpace::new(q, dim)?.structure())
}
