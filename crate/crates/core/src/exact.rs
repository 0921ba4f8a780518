//! Exact linear solving over the rationals with fraction-free elimination.
//!
//! Rows are scaled to integers up front; each elimination step forms
//! `p * row_i - a * row_pivot` and divides out the row content, so no
//! intermediate fractions appear.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::poly::Rational;

/// Outcome of an exact solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub values: Vec<Rational>,
    pub pivot_cols: Vec<usize>,
    pub free_cols: Vec<usize>,
}

/// The system has no solution; `row` is the original index of a row that
/// reduced to `0 = nonzero`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inconsistent {
    pub row: usize,
}

fn integer_row(coeffs: &[Rational], rhs: &Rational) -> Vec<BigInt> {
    let mut l = BigInt::one();
    for c in coeffs.iter().chain(std::iter::once(rhs)) {
        l = l.lcm(c.denom());
    }
    coeffs
        .iter()
        .chain(std::iter::once(rhs))
        .map(|c| c.numer() * (&l / c.denom()))
        .collect()
}

fn normalize(row: &mut [BigInt]) {
    let mut g = BigInt::zero();
    for v in row.iter() {
        if !v.is_zero() {
            g = g.gcd(v);
            if g.is_one() {
                return;
            }
        }
    }
    if !g.is_zero() && !g.is_one() {
        for v in row.iter_mut() {
            *v = &*v / &g;
        }
    }
}

/// Solves `a x = b` exactly. Free columns receive `free_value(col)`.
pub fn solve<F>(
    a: &[Vec<Rational>],
    b: &[Rational],
    ncols: usize,
    free_value: F,
) -> Result<ExactSolution, Inconsistent>
where
    F: Fn(usize) -> Rational,
{
    assert_eq!(a.len(), b.len());
    let mut rows: Vec<Vec<BigInt>> = a
        .iter()
        .zip(b)
        .map(|(r, rhs)| {
            assert_eq!(r.len(), ncols);
            integer_row(r, rhs)
        })
        .collect();
    let mut origin: Vec<usize> = (0..rows.len()).collect();
    for r in rows.iter_mut() {
        normalize(r);
    }

    let mut pivot_cols = Vec::new();
    let mut next = 0;
    for col in 0..ncols {
        if next == rows.len() {
            break;
        }
        let Some(found) = (next..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(next, found);
        origin.swap(next, found);
        let pivot_row = rows[next].clone();
        let p = &pivot_row[col];
        for (i, row) in rows.iter_mut().enumerate() {
            if i == next || row[col].is_zero() {
                continue;
            }
            let factor = row[col].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v = &*v * p - &factor * pv;
            }
            normalize(row);
        }
        pivot_cols.push(col);
        next += 1;
    }

    if let Some(bad) = (next..rows.len()).find(|&r| !rows[r][ncols].is_zero()) {
        return Err(Inconsistent { row: origin[bad] });
    }

    let free_cols: Vec<usize> = (0..ncols).filter(|c| !pivot_cols.contains(c)).collect();
    let mut values = vec![Rational::zero(); ncols];
    for &c in &free_cols {
        values[c] = free_value(c);
    }
    for (k, &c) in pivot_cols.iter().enumerate() {
        let row = &rows[k];
        let mut acc = Rational::from_integer(row[ncols].clone());
        for &f in &free_cols {
            if !row[f].is_zero() && !values[f].is_zero() {
                acc -= Rational::from_integer(row[f].clone()) * &values[f];
            }
        }
        let mut piv = row[c].clone();
        if piv.is_negative() {
            piv = -piv;
            acc = -acc;
        }
        values[c] = acc / Rational::from_integer(piv);
    }
    Ok(ExactSolution {
        values,
        pivot_cols,
        free_cols,
    })
}
