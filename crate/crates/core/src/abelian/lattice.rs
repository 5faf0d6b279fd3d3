//! Diagonalization of integer matrices by unimodular row and column
//! operations. Unimodular integer matrices stay invertible over every
//! localization Z_(p), so one diagonal form serves all primes.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};

pub(crate) struct Diagonal {
    /// Nonzero diagonal entries, in pivot order.
    pub diag: Vec<BigInt>,
    /// Row transform: `u * a * v` is diagonal.
    pub u: Vec<Vec<BigInt>>,
}

pub(crate) fn diagonalize(a: &[Vec<BigInt>], cols: usize) -> Diagonal {
    let rows = a.len();
    let mut m: Vec<Vec<BigInt>> = a.to_vec();
    let mut u: Vec<Vec<BigInt>> = (0..rows)
        .map(|i| (0..rows).map(|j| BigInt::from((i == j) as i32)).collect())
        .collect();
    let mut diag = Vec::new();
    let mut t = 0;
    while t < rows.min(cols) {
        let Some((pi, pj)) = smallest(&m, t, t) else { break };
        m.swap(t, pi);
        u.swap(t, pi);
        for row in m.iter_mut() {
            row.swap(t, pj);
        }
        loop {
            let mut dirty = false;
            for i in t + 1..rows {
                if m[i][t].is_zero() {
                    continue;
                }
                let q = m[i][t].div_floor(&m[t][t]);
                for j in t..cols {
                    let d = &q * &m[t][j];
                    m[i][j] -= d;
                }
                for j in 0..rows {
                    let d = &q * &u[t][j];
                    u[i][j] -= d;
                }
                dirty |= !m[i][t].is_zero();
            }
            for j in t + 1..cols {
                if m[t][j].is_zero() {
                    continue;
                }
                let q = m[t][j].div_floor(&m[t][t]);
                for row in m.iter_mut() {
                    let d = &q * &row[t];
                    row[j] -= d;
                }
                dirty |= !m[t][j].is_zero();
            }
            if !dirty {
                break;
            }
            // a remainder is now smaller than the pivot: bring it in
            let (pi, pj) = smallest_in_cross(&m, t, cols);
            m.swap(t, pi);
            u.swap(t, pi);
            for row in m.iter_mut() {
                row.swap(t, pj);
            }
        }
        diag.push(m[t][t].clone());
        t += 1;
    }
    Diagonal { diag, u }
}

fn smallest(m: &[Vec<BigInt>], r0: usize, c0: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (i, row) in m.iter().enumerate().skip(r0) {
        for (j, v) in row.iter().enumerate().skip(c0) {
            if !v.is_zero() && best.map_or(true, |(bi, bj)| v.abs() < m[bi][bj].abs()) {
                best = Some((i, j));
            }
        }
    }
    best
}

fn smallest_in_cross(m: &[Vec<BigInt>], t: usize, cols: usize) -> (usize, usize) {
    let mut best = (t, t);
    let better = |v: &BigInt, b: (usize, usize)| !v.is_zero() && v.abs() < m[b.0][b.1].abs();
    for i in t + 1..m.len() {
        if better(&m[i][t], best) {
            best = (i, t);
        }
    }
    for j in t + 1..cols {
        if better(&m[t][j], best) {
            best = (t, j);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[i64]]) -> Vec<Vec<BigInt>> {
        rows.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect()
    }

    fn mul(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
        let inner = b.len();
        let cols = b.first().map_or(0, Vec::len);
        a.iter()
            .map(|row| {
                (0..cols)
                    .map(|j| (0..inner).map(|k| &row[k] * &b[k][j]).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn determinant_is_preserved() {
        let a = mat(&[&[2, 4, 4], &[-6, 6, 12], &[10, -4, -16]]);
        let d = diagonalize(&a, 3);
        let prod: BigInt = d.diag.iter().product();
        assert_eq!(prod.abs(), BigInt::from(144));
    }

    #[test]
    fn row_transform_kills_dependent_rows() {
        let a = mat(&[&[1, 1], &[1, 33], &[2, 2]]);
        let d = diagonalize(&a, 2);
        assert_eq!(d.diag.len(), 2);
        let prod: BigInt = d.diag.iter().product();
        assert_eq!(prod.abs(), BigInt::from(32));
        let ua = mul(&d.u, &a);
        assert!(ua[2].iter().all(Zero::is_zero));
    }

    #[test]
    fn empty_and_zero_matrices() {
        assert!(diagonalize(&[], 2).diag.is_empty());
        let d = diagonalize(&mat(&[&[0, 0]]), 2);
        assert!(d.diag.is_empty());
        assert_eq!(d.u.len(), 1);
    }
}
