//! Distributions, complement projections, and the Ehresmann connection of
//! the coordinate fibration `(x1..xm) -> (x1..xn)`.
//!
//! The vertical bundle is always `span{d/dx_{n+1}, .., d/dx_m}`; a connection
//! is given by coefficients `gamma[p][q]` so that the horizontal frame is
//! `h_q = d/dx_q + sum_p gamma[p][q] d/dx_p`. Indices are 0-based in code.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::CheckGrid;
use crate::numeric::{self, RANK_TOL};
use crate::poly::{Poly, PolyMatrix};

/// Central-difference step for derivatives of numeric projections.
pub const FD_STEP: f64 = 1e-4;

/// Column vector fields spanning a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    dim: usize,
    fields: Vec<Vec<Poly>>,
}

impl Frame {
    pub fn new(dim: usize, fields: Vec<Vec<Poly>>) -> Result<Frame> {
        for (j, f) in fields.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::Shape(format!(
                    "field {} has {} components, expected {}",
                    j + 1,
                    f.len(),
                    dim
                )));
            }
            if let Some(p) = f.iter().find(|p| p.nvars() != dim) {
                return Err(Error::Shape(format!(
                    "field {} uses {} variables, expected {}",
                    j + 1,
                    p.nvars(),
                    dim
                )));
            }
        }
        Ok(Frame { dim, fields })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn fields(&self) -> &[Vec<Poly>] {
        &self.fields
    }

    /// The fields as columns of a `dim x len` matrix.
    pub fn matrix(&self) -> PolyMatrix {
        PolyMatrix::from_columns(self.dim, self.dim, &self.fields).expect("validated frame")
    }

    /// Fails unless the numeric rank equals the number of fields at every
    /// grid point.
    pub fn check_rank(&self, grid: &CheckGrid) -> Result<()> {
        let mat = self.matrix();
        for pt in grid.points() {
            let r = numeric::rank(&mat.eval(pt), RANK_TOL);
            if r != self.len() {
                return Err(Error::RankDeficient {
                    rank: r,
                    expected: self.len(),
                    point: pt.clone(),
                });
            }
        }
        Ok(())
    }
}

/// The control distribution `C`, spanned by the control fields, with its
/// rank verified on the grid.
pub fn control_distribution(sys: &crate::sysmodel::ControlAffineSystem, grid: &CheckGrid) -> Result<Frame> {
    let frame = Frame::new(sys.m(), sys.control_fields().to_vec())?;
    frame.check_rank(grid)?;
    Ok(frame)
}

/// Projection onto the complement `D` along `C`.
#[derive(Debug, Clone, PartialEq)]
pub enum ComplementProjection {
    /// Exact polynomial `(m - r) x m` matrix.
    Symbolic(PolyMatrix),
    /// Evaluated pointwise by inverting `[C|D]` numerically.
    Numeric(NumericProjection),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericProjection {
    basis: PolyMatrix,
    r: usize,
}

impl NumericProjection {
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.basis.rows();
        let inv = self
            .basis
            .eval(x)
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN));
        inv.rows(self.r, m - self.r).into_owned()
    }
}

impl ComplementProjection {
    pub fn rows(&self) -> usize {
        match self {
            ComplementProjection::Symbolic(p) => p.rows(),
            ComplementProjection::Numeric(n) => n.basis.rows() - n.r,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ComplementProjection::Symbolic(p) => p.cols(),
            ComplementProjection::Numeric(n) => n.basis.rows(),
        }
    }

    pub fn symbolic(&self) -> Option<&PolyMatrix> {
        match self {
            ComplementProjection::Symbolic(p) => Some(p),
            ComplementProjection::Numeric(_) => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        self.symbolic().is_some()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            ComplementProjection::Symbolic(p) => p.eval(x),
            ComplementProjection::Numeric(n) => n.eval(x),
        }
    }

    /// `d P_D / dx_i` at `x` for every `i`; exact derivatives on the symbolic
    /// path, central differences otherwise.
    pub fn partials(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        match self {
            ComplementProjection::Symbolic(p) => {
                (0..p.cols()).map(|i| p.differentiate(i).eval(x)).collect()
            }
            ComplementProjection::Numeric(n) => (0..x.len())
                .map(|i| {
                    let mut hi = x.to_vec();
                    let mut lo = x.to_vec();
                    hi[i] += FD_STEP;
                    lo[i] -= FD_STEP;
                    (n.eval(&hi) - n.eval(&lo)) / (2.0 * FD_STEP)
                })
                .collect(),
        }
    }
}

/// Picks (or validates) a complement frame `D` and builds `P_D`.
///
/// Without a user frame, coordinate fields `d/dx_i` are tried in index order
/// and kept when they raise the rank at every grid point; the result must
/// have a nonzero constant determinant. A user frame only has to be
/// nonsingular on the grid; if its determinant is not constant the
/// projection falls back to pointwise evaluation.
pub fn complement_and_projection(
    c: &Frame,
    user_d: Option<&Frame>,
    grid: &CheckGrid,
) -> Result<(Frame, ComplementProjection)> {
    let m = c.dim();
    let r = c.len();
    let d = match user_d {
        Some(d) => {
            if d.dim() != m || d.len() + r != m {
                return Err(Error::Shape(format!(
                    "complement frame must have {} fields of dimension {}",
                    m - r,
                    m
                )));
            }
            d.clone()
        }
        None => auto_complement(c, grid)?,
    };
    let mut cols = c.fields().to_vec();
    cols.extend(d.fields().iter().cloned());
    let basis = PolyMatrix::from_columns(m, m, &cols)?;
    for pt in grid.points() {
        if numeric::rank(&basis.eval(pt), RANK_TOL) < m {
            return Err(Error::SingularComplement { point: pt.clone() });
        }
    }
    match basis.constant_det_inverse()? {
        Some(inv) => {
            let rows: Vec<usize> = (r..m).collect();
            let all: Vec<usize> = (0..m).collect();
            Ok((d, ComplementProjection::Symbolic(inv.select(&rows, &all))))
        }
        None if user_d.is_some() => Ok((d, ComplementProjection::Numeric(NumericProjection { basis, r }))),
        None => Err(Error::NoComplement),
    }
}

fn auto_complement(c: &Frame, grid: &CheckGrid) -> Result<Frame> {
    let m = c.dim();
    let mut cols: Vec<Vec<Poly>> = c.fields().to_vec();
    let mut chosen = Vec::new();
    for i in 0..m {
        if cols.len() == m {
            break;
        }
        let e: Vec<Poly> = (0..m)
            .map(|k| if k == i { Poly::one(m) } else { Poly::zero(m) })
            .collect();
        let mut trial = cols.clone();
        trial.push(e.clone());
        let mat = PolyMatrix::from_columns(m, m, &trial)?;
        let extends = grid
            .points()
            .iter()
            .all(|pt| numeric::rank(&mat.eval(pt), RANK_TOL) == trial.len());
        if extends {
            cols = trial;
            chosen.push(e);
        }
    }
    if cols.len() != m {
        return Err(Error::NoComplement);
    }
    Frame::new(m, chosen)
}

/// Validates a user-supplied `P_D`: it must annihilate `C` exactly and, when
/// a complement frame is also given, restrict to the identity on it.
pub fn user_projection(c: &Frame, d: Option<&Frame>, p_d: PolyMatrix) -> Result<ComplementProjection> {
    let m = c.dim();
    if p_d.cols() != m || p_d.rows() + c.len() != m || p_d.nvars() != m {
        return Err(Error::Shape(format!(
            "P_D must be {}x{}, got {}x{}",
            m - c.len(),
            m,
            p_d.rows(),
            p_d.cols()
        )));
    }
    if !p_d.mul(&c.matrix())?.is_zero() {
        return Err(Error::Invalid("P_D does not annihilate the control distribution".into()));
    }
    if let Some(d) = d {
        if !p_d.mul(&d.matrix())?.is_identity() {
            return Err(Error::Invalid("P_D is not the identity on the complement frame".into()));
        }
    }
    Ok(ComplementProjection::Symbolic(p_d))
}

/// Index of a curvature component `F^l_{q1 q2}` with `q1 < q2` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CurvatureIndex {
    pub l: usize,
    pub q1: usize,
    pub q2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EhresmannConnection {
    m: usize,
    n: usize,
    /// `gamma[p - n][q]`
    gamma: Vec<Vec<Poly>>,
}

impl EhresmannConnection {
    /// `gamma` has one row per vertical coordinate `x_{n+1}..x_m`, each with
    /// `n` entries.
    pub fn new(m: usize, n: usize, gamma: Vec<Vec<Poly>>) -> Result<Self> {
        if n == 0 || n >= m {
            return Err(Error::Invalid(format!(
                "fibration needs 0 < n < m, got n = {n}, m = {m}"
            )));
        }
        if gamma.len() != m - n {
            return Err(Error::Shape(format!(
                "connection needs {} rows, got {}",
                m - n,
                gamma.len()
            )));
        }
        for (k, row) in gamma.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "connection row {} has {} entries, expected {}",
                    k + 1,
                    row.len(),
                    n
                )));
            }
            if row.iter().any(|p| p.nvars() != m) {
                return Err(Error::Shape("connection entries must use m variables".into()));
            }
        }
        Ok(EhresmannConnection { m, n, gamma })
    }

    pub fn zero(m: usize, n: usize) -> Result<Self> {
        EhresmannConnection::new(m, n, vec![vec![Poly::zero(m); n]; m.saturating_sub(n)])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `Gamma^p_q` for vertical `p` in `n..m` and base `q` in `0..n`.
    pub fn gamma(&self, p: usize, q: usize) -> &Poly {
        &self.gamma[p - self.n][q]
    }

    pub fn rows(&self) -> &[Vec<Poly>] {
        &self.gamma
    }

    /// `P_VM`: identity on top, the `Gamma` block below (`m x n`).
    pub fn p_vm(&self) -> PolyMatrix {
        let mut out = PolyMatrix::zeros(self.m, self.n, self.m);
        for q in 0..self.n {
            out.set(q, q, Poly::one(self.m));
            for p in self.n..self.m {
                out.set(p, q, self.gamma(p, q).clone());
            }
        }
        out
    }

    /// Lifts a base vector field `w(y)` to the horizontal field on `M`.
    pub fn horizontal_lift(&self, w: &[Poly]) -> Result<Vec<Poly>> {
        if w.len() != self.n || w.iter().any(|p| p.nvars() != self.n) {
            return Err(Error::Shape(format!(
                "base field must have {} components in {} variables",
                self.n, self.n
            )));
        }
        let w: Vec<Poly> = w.iter().map(|p| p.embed(self.m)).collect();
        let mut out = w.clone();
        for p in self.n..self.m {
            let mut acc = Poly::zero(self.m);
            for (q, wq) in w.iter().enumerate() {
                acc += &(self.gamma(p, q) * wq);
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Horizontal frame fields `h_q`.
    pub fn horizontal_frame(&self) -> Vec<Vec<Poly>> {
        (0..self.n)
            .map(|q| {
                (0..self.m)
                    .map(|i| {
                        if i < self.n {
                            if i == q {
                                Poly::one(self.m)
                            } else {
                                Poly::zero(self.m)
                            }
                        } else {
                            self.gamma(i, q).clone()
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Connection one-forms `dx_p - sum_q Gamma^p_q dx_q`, spanning ann(HM).
    pub fn vertical_forms(&self) -> Vec<Vec<Poly>> {
        (self.n..self.m)
            .map(|p| {
                (0..self.m)
                    .map(|i| {
                        if i < self.n {
                            -self.gamma(p, i)
                        } else if i == p {
                            Poly::one(self.m)
                        } else {
                            Poly::zero(self.m)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Curvature components
    /// `F^l_{q1 q2} = d_{q2} G^l_{q1} - d_{q1} G^l_{q2}
    ///   + sum_{l1} (G^{l1}_{q2} d_{l1} G^l_{q1} - G^{l1}_{q1} d_{l1} G^l_{q2})`
    /// for every vertical `l` and `q1 < q2`. Empty when `n = 1`.
    pub fn curvature_components(&self) -> BTreeMap<CurvatureIndex, Poly> {
        let mut out = BTreeMap::new();
        for l in self.n..self.m {
            for q1 in 0..self.n {
                for q2 in q1 + 1..self.n {
                    let g1 = self.gamma(l, q1);
                    let g2 = self.gamma(l, q2);
                    let mut f = g1.d(q2) - g2.d(q1);
                    for l1 in self.n..self.m {
                        f += &(self.gamma(l1, q2) * g1.d(l1));
                        f -= &(self.gamma(l1, q1) * g2.d(l1));
                    }
                    out.insert(CurvatureIndex { l, q1, q2 }, f);
                }
            }
        }
        out
    }
}

/// Identity reindexing `dx_i -> d/dx_i`.
pub fn sharp(omega: &[Poly]) -> Vec<Poly> {
    omega.to_vec()
}

/// Identity reindexing `d/dx_i -> dx_i`; inverse of [`sharp`].
pub fn flat(v: &[Poly]) -> Vec<Poly> {
    v.to_vec()
}

/// Exterior derivative of a function, as a covector of partials.
pub fn differential(f: &Poly) -> Vec<Poly> {
    f.gradient()
}
