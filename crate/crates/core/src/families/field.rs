//! Small finite fields GF(q), q in {2, 3, 4, 5, 7, 8, 9}, as lookup tables.
//!
//! An element of GF(p^k) is a polynomial of degree < k over GF(p), encoded by
//! its coefficients in base p (constant term least significant).

use super::FamilyError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteField {
    q: u32,
    p: u32,
    k: u32,
    add: Vec<u8>,
    mul: Vec<u8>,
    neg: Vec<u8>,
    inv: Vec<u8>,
}

/// Monic irreducible modulus, low coefficients first (leading 1 omitted).
fn modulus(q: u32) -> Option<(u32, Vec<u32>)> {
    Some(match q {
        2 | 3 | 5 | 7 => (q, vec![]),
        4 => (2, vec![1, 1]),    // x^2 + x + 1
        8 => (2, vec![1, 1, 0]), // x^3 + x + 1
        9 => (3, vec![1, 0]),    // x^2 + 1
        _ => return None,
    })
}

impl FiniteField {
    pub fn new(q: u32) -> Result<Self, FamilyError> {
        let (p, low) = modulus(q).ok_or_else(|| {
            FamilyError::InvalidParameter(format!(
                "q = {q} is not a supported prime power (2, 3, 4, 5, 7, 8, 9)"
            ))
        })?;
        let k = low.len().max(1) as u32;
        let digits = |mut a: u32| -> Vec<u32> {
            (0..k)
                .map(|_| {
                    let d = a % p;
                    a /= p;
                    d
                })
                .collect()
        };
        let encode = |d: &[u32]| d.iter().rev().fold(0, |acc, &x| acc * p + x);
        let qs = q as usize;
        let mut add = vec![0u8; qs * qs];
        let mut mul = vec![0u8; qs * qs];
        for a in 0..q {
            let da = digits(a);
            for b in 0..q {
                let db = digits(b);
                let s: Vec<u32> = da.iter().zip(&db).map(|(x, y)| (x + y) % p).collect();
                add[(a * q + b) as usize] = encode(&s) as u8;
                // schoolbook product, then reduce by x^k = -(low)
                let mut prod = vec![0u32; 2 * k as usize];
                for (i, x) in da.iter().enumerate() {
                    for (j, y) in db.iter().enumerate() {
                        prod[i + j] = (prod[i + j] + x * y) % p;
                    }
                }
                if k > 1 {
                    for deg in (k as usize..prod.len()).rev() {
                        let c = prod[deg];
                        if c == 0 {
                            continue;
                        }
                        prod[deg] = 0;
                        for (i, &m) in low.iter().enumerate() {
                            let t = deg - k as usize + i;
                            prod[t] = (prod[t] + (p - c) * m) % p;
                        }
                    }
                }
                mul[(a * q + b) as usize] = encode(&prod[..k as usize]) as u8;
            }
        }
        let mut neg = vec![0u8; qs];
        let mut inv = vec![0u8; qs];
        for a in 0..q {
            for b in 0..q {
                if add[(a * q + b) as usize] == 0 {
                    neg[a as usize] = b as u8;
                }
                if mul[(a * q + b) as usize] == 1 {
                    inv[a as usize] = b as u8;
                }
            }
        }
        Ok(FiniteField {
            q,
            p,
            k,
            add,
            mul,
            neg,
            inv,
        })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn characteristic(&self) -> u32 {
        self.p
    }

    pub fn degree(&self) -> u32 {
        self.k
    }

    #[inline]
    pub fn add(&self, a: u8, b: u8) -> u8 {
        self.add[a as usize * self.q as usize + b as usize]
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        self.mul[a as usize * self.q as usize + b as usize]
    }

    #[inline]
    pub fn neg(&self, a: u8) -> u8 {
        self.neg[a as usize]
    }

    #[inline]
    pub fn sub(&self, a: u8, b: u8) -> u8 {
        self.add(a, self.neg(b))
    }

    /// Multiplicative inverse; `inv(0)` is 0.
    #[inline]
    pub fn inv(&self, a: u8) -> u8 {
        self.inv[a as usize]
    }

    /// Rank of the matrix whose rows are `rows`, by Gaussian elimination.
    pub fn rank(&self, rows: &[Vec<u8>]) -> usize {
        let mut m: Vec<Vec<u8>> = rows.to_vec();
        let cols = m.first().map_or(0, Vec::len);
        let mut rank = 0;
        for c in 0..cols {
            let Some(pivot) = (rank..m.len()).find(|&r| m[r][c] != 0) else {
                continue;
            };
            m.swap(rank, pivot);
            let inv = self.inv(m[rank][c]);
            for x in m[rank].iter_mut() {
                *x = self.mul(*x, inv);
            }
            for r in 0..m.len() {
                if r != rank && m[r][c] != 0 {
                    let f = m[r][c];
                    for j in 0..cols {
                        let t = self.mul(f, m[rank][j]);
                        m[r][j] = self.sub(m[r][j], t);
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// A basis of the solution space of `A x = 0`, where `a` lists the rows.
    pub fn kernel(&self, a: &[Vec<u8>], cols: usize) -> Vec<Vec<u8>> {
        let mut m: Vec<Vec<u8>> = a.to_vec();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for c in 0..cols {
            let Some(pivot) = (rank..m.len()).find(|&r| m[r][c] != 0) else {
                continue;
            };
            m.swap(rank, pivot);
            let inv = self.inv(m[rank][c]);
            for x in m[rank].iter_mut() {
                *x = self.mul(*x, inv);
            }
            for r in 0..m.len() {
                if r != rank && m[r][c] != 0 {
                    let f = m[r][c];
                    for j in 0..cols {
                        let t = self.mul(f, m[rank][j]);
                        m[r][j] = self.sub(m[r][j], t);
                    }
                }
            }
            pivots.push(c);
            rank += 1;
        }
        let mut basis = Vec::new();
        for free in (0..cols).filter(|c| !pivots.contains(c)) {
            let mut v = vec![0u8; cols];
            v[free] = 1;
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = self.neg(m[r][free]);
            }
            basis.push(v);
        }
        basis
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_axioms() {
        for q in [2, 3, 4, 5, 7, 8, 9] {
            let f = FiniteField::new(q).unwrap();
            let q = q as u8;
            for a in 0..q {
                assert_eq!(f.add(a, 0), a);
                assert_eq!(f.mul(a, 1), a);
                assert_eq!(f.add(a, f.neg(a)), 0);
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a)), 1, "q={q} a={a}");
                }
                for b in 0..q {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in 0..q {
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                        assert_eq!(f.mul(a, f.mul(b, c)), f.mul(f.mul(a, b), c));
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_non_prime_powers() {
        for q in [0, 1, 6, 10, 11, 16] {
            assert!(FiniteField::new(q).is_err());
        }
    }

    #[test]
    fn rank_and_kernel() {
        let f = FiniteField::new(2).unwrap();
        let rows = vec![vec![1, 0, 0], vec![0, 1, 0], vec![1, 1, 0]];
        assert_eq!(f.rank(&rows), 2);
        let k = f.kernel(&rows, 3);
        assert_eq!(k, vec![vec![0, 0, 1]]);
        assert_eq!(f.rank(&[vec![0, 0]]), 0);
    }
}
