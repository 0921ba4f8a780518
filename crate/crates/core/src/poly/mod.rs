//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Every coordinate expression in the crate (vector fields, connection
//! coefficients, projections, Lyapunov candidates) is a [`Poly`]. Terms are
//! kept in a `BTreeMap` keyed by [`MultiIndex`] under graded lexicographic
//! order, so iteration and printing are deterministic.

mod matrix;
mod parse;

pub use matrix::PolyMatrix;
pub use parse::{parse_poly, parse_poly_with_cap, ParseError, ParseErrorKind};

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact coefficient type.
pub type Rational = BigRational;

/// Largest total degree a parsed or explicitly capped product may reach.
pub const DEFAULT_DEGREE_CAP: u32 = 24;

/// Shorthand for building a rational from an integer pair.
pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Converts a rational to the nearest `f64` (NaN if it cannot be represented).
pub fn rat_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("variable index {index} out of range for {nvars} variables")]
    IndexOutOfRange { index: usize, nvars: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("total degree {degree} exceeds the degree cap {cap}")]
    DegreeCap { degree: u32, cap: u32 },
}

/// Exponent vector of a monomial, one entry per variable.
///
/// Ordered graded-lexicographically: total degree first, then the exponent
/// vectors compared lexicographically (so `x1^2 > x1*x2 > x2^2 > x1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(nvars: usize) -> Self {
        MultiIndex(vec![0; nvars])
    }

    pub fn unit(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn product(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.len(), other.len());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Lowers the exponent of variable `i` by one, if it is positive.
    pub fn lowered(&self, i: usize) -> Option<MultiIndex> {
        if self.0[i] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[i] -= 1;
        Some(MultiIndex(e))
    }

    /// Pads with zero exponents up to `nvars` entries.
    pub fn embed(&self, nvars: usize) -> MultiIndex {
        assert!(nvars >= self.len(), "cannot embed into fewer variables");
        let mut e = self.0.clone();
        e.resize(nvars, 0);
        MultiIndex(e)
    }

    /// All exponent vectors of exactly total degree `d`, ascending grlex.
    pub fn of_degree(nvars: usize, d: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; nvars];
        fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if pos + 1 == cur.len() {
                cur[pos] = left;
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for e in 0..=left {
                cur[pos] = e;
                rec(pos + 1, left - e, cur, out);
            }
        }
        if nvars == 0 {
            if d == 0 {
                out.push(MultiIndex(Vec::new()));
            }
            return out;
        }
        rec(0, d, &mut cur, &mut out);
        out.sort();
        out
    }

    /// All exponent vectors with total degree in `lo..=hi`, ascending grlex.
    pub fn in_degree_range(nvars: usize, lo: u32, hi: u32) -> Vec<MultiIndex> {
        (lo..=hi).flat_map(|d| MultiIndex::of_degree(nvars, d)).collect()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact multivariate polynomial over the rationals.
///
/// Zero coefficients are never stored, so structural equality is polynomial
/// equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<MultiIndex, Rational>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(nvars: usize) -> Self {
        Poly::constant(nvars, Rational::one())
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(MultiIndex::zero(nvars), c);
        }
        p
    }

    pub fn from_int(nvars: usize, c: i64) -> Self {
        Poly::constant(nvars, Rational::from_integer(BigInt::from(c)))
    }

    /// The coordinate function `x_i` (0-based).
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable {i} out of range for {nvars} variables");
        Poly::monomial(MultiIndex::unit(nvars, i), Rational::one())
    }

    pub fn monomial(index: MultiIndex, coeff: Rational) -> Self {
        let mut p = Poly::zero(index.len());
        if !coeff.is_zero() {
            p.terms.insert(index, coeff);
        }
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, merging
    /// duplicates and dropping zeros.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (MultiIndex, Rational)>,
    {
        let mut p = Poly::zero(nvars);
        for (idx, c) in terms {
            assert_eq!(idx.len(), nvars, "multi-index length mismatch");
            p.add_term(idx, c);
        }
        p
    }

    fn add_term(&mut self, idx: MultiIndex, c: Rational) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(idx) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|k| k.is_zero())
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, idx: &MultiIndex) -> Rational {
        self.terms.get(idx).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn constant_term(&self) -> Rational {
        self.coeff(&MultiIndex::zero(self.nvars))
    }

    /// Terms in ascending graded-lexicographic order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&MultiIndex, &Rational)> {
        self.terms.iter()
    }

    /// Total degree; zero for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().next_back().map_or(0, |k| k.degree())
    }

    /// Lowest total degree among the stored terms, `None` for zero.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().next().map(|k| k.degree())
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }

    /// Product that refuses to exceed `cap` in total degree.
    pub fn checked_mul(&self, other: &Poly, cap: u32) -> Result<Poly, PolyError> {
        if !self.is_zero() && !other.is_zero() {
            let degree = self.degree() + other.degree();
            if degree > cap {
                return Err(PolyError::DegreeCap { degree, cap });
            }
        }
        Ok(self * other)
    }

    pub fn checked_pow(&self, e: u32, cap: u32) -> Result<Poly, PolyError> {
        if !self.is_zero() {
            let degree = self.degree().saturating_mul(e);
            if degree > cap {
                return Err(PolyError::DegreeCap { degree, cap });
            }
        }
        Ok(self.pow(e))
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::one(self.nvars);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Exact partial derivative with respect to variable `i` (0-based).
    pub fn differentiate(&self, i: usize) -> Result<Poly, PolyError> {
        if i >= self.nvars {
            return Err(PolyError::IndexOutOfRange {
                index: i,
                nvars: self.nvars,
            });
        }
        let mut out = Poly::zero(self.nvars);
        for (k, c) in &self.terms {
            if let Some(lower) = k.lowered(i) {
                let factor = Rational::from_integer(BigInt::from(k.get(i)));
                out.add_term(lower, c * factor);
            }
        }
        Ok(out)
    }

    /// Partial derivative for an index already known to be valid.
    pub(crate) fn d(&self, i: usize) -> Poly {
        self.differentiate(i).expect("variable index in range")
    }

    /// All first partial derivatives, in variable order.
    pub fn gradient(&self) -> Vec<Poly> {
        (0..self.nvars).map(|i| self.d(i)).collect()
    }

    /// Floating-point evaluation by summing terms; not exact.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::LengthMismatch {
                expected: self.nvars,
                got: point.len(),
            });
        }
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (k, c) in &self.terms {
            let mut t = rat_to_f64(c);
            for (x, &e) in point.iter().zip(k.exponents()) {
                if e > 0 {
                    t *= x.powi(e as i32);
                }
            }
            sum += t;
        }
        sum
    }

    /// Exact evaluation at a rational point.
    pub fn evaluate_exact(&self, point: &[Rational]) -> Result<Rational, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::LengthMismatch {
                expected: self.nvars,
                got: point.len(),
            });
        }
        let mut sum = Rational::zero();
        for (k, c) in &self.terms {
            let mut t = c.clone();
            for (x, &e) in point.iter().zip(k.exponents()) {
                if e > 0 {
                    t *= num_traits::pow(x.clone(), e as usize);
                }
            }
            sum += t;
        }
        Ok(sum)
    }

    /// Drops every term of total degree above `max_degree`.
    pub fn truncate(&self, max_degree: u32) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| k.degree() <= max_degree)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Reinterprets the polynomial in `nvars >= self.nvars()` variables; the
    /// existing variables keep their positions.
    pub fn embed(&self, nvars: usize) -> Poly {
        Poly {
            nvars,
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (k.embed(nvars), v.clone()))
                .collect(),
        }
    }

    /// Renders with the supplied variable names, highest grlex term first.
    pub fn format_with(&self, names: &[&str]) -> String {
        assert_eq!(names.len(), self.nvars, "one name per variable");
        if self.is_zero() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (n, (k, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if n == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let mut factors: Vec<String> = Vec::new();
            for (i, &e) in k.exponents().iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(names[i].to_string()),
                    _ => factors.push(format!("{}^{}", names[i], e)),
                }
            }
            if factors.is_empty() || !mag.is_one() {
                factors.insert(0, mag.to_string());
            }
            out.push_str(&factors.join("*"));
        }
        out
    }

    pub fn default_names(nvars: usize) -> Vec<String> {
        (1..=nvars).map(|i| format!("x{i}")).collect()
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = Poly::default_names(self.nvars);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        f.write_str(&self.format_with(&refs))
    }
}

impl Add<&Poly> for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&Poly> for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&Poly> for Poly {
    fn add_assign(&mut self, rhs: &Poly) {
        assert_eq!(self.nvars, rhs.nvars, "variable count mismatch");
        for (k, c) in &rhs.terms {
            self.add_term(k.clone(), c.clone());
        }
    }
}

impl SubAssign<&Poly> for Poly {
    fn sub_assign(&mut self, rhs: &Poly) {
        assert_eq!(self.nvars, rhs.nvars, "variable count mismatch");
        for (k, c) in &rhs.terms {
            self.add_term(k.clone(), -c.clone());
        }
    }
}

impl Mul<&Poly> for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        assert_eq!(self.nvars, rhs.nvars, "variable count mismatch");
        let mut out = Poly::zero(self.nvars);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                out.add_term(ka.product(kb), ca * cb);
            }
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(k, v)| (k.clone(), -v)).collect(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<Poly> for Poly {
            type Output = Poly;
            fn $m(self, rhs: Poly) -> Poly {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Poly> for Poly {
            type Output = Poly;
            fn $m(self, rhs: &Poly) -> Poly {
                (&self).$m(rhs)
            }
        }
        impl $tr<Poly> for &Poly {
            type Output = Poly;
            fn $m(self, rhs: Poly) -> Poly {
                self.$m(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        -&self
    }
}

/// Evaluates each component of a polynomial vector.
pub fn eval_vec(v: &[Poly], point: &[f64]) -> Vec<f64> {
    v.iter().map(|p| p.eval_unchecked(point)).collect()
}

/// `sum_i a_i * b_i` for polynomial vectors of equal length.
pub fn dot(a: &[Poly], b: &[Poly]) -> Poly {
    assert_eq!(a.len(), b.len());
    let nvars = a.first().map_or(0, Poly::nvars);
    a.iter()
        .zip(b)
        .fold(Poly::zero(nvars), |acc, (x, y)| acc + x * y)
}
