use nalgebra::DMatrix;

use super::{Poly, Rational};
use crate::error::{Error, Result};

/// Dense matrix of polynomials sharing one variable count.
///
/// Zero-row matrices are allowed; they represent empty projections such as
/// the complement projection of a fully actuated system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    nvars: usize,
    entries: Vec<Poly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            nvars,
            entries: vec![Poly::zero(nvars); rows * cols],
        }
    }

    pub fn identity(n: usize, nvars: usize) -> Self {
        let mut m = PolyMatrix::zeros(n, n, nvars);
        for i in 0..n {
            m.set(i, i, Poly::one(nvars));
        }
        m
    }

    pub fn from_rows(nvars: usize, cols: usize, rows: Vec<Vec<Poly>>) -> Result<Self> {
        let nrows = rows.len();
        let mut entries = Vec::with_capacity(nrows * cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    row.len(),
                    cols
                )));
            }
            for p in row {
                if p.nvars() != nvars {
                    return Err(Error::Shape(format!(
                        "entry in row {} uses {} variables, expected {}",
                        i + 1,
                        p.nvars(),
                        nvars
                    )));
                }
                entries.push(p);
            }
        }
        Ok(PolyMatrix {
            rows: nrows,
            cols,
            nvars,
            entries,
        })
    }

    /// Builds a `rows x columns.len()` matrix from column vectors.
    pub fn from_columns(nvars: usize, rows: usize, columns: &[Vec<Poly>]) -> Result<Self> {
        let mut m = PolyMatrix::zeros(rows, columns.len(), nvars);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::Shape(format!(
                    "column {} has {} entries, expected {}",
                    j + 1,
                    col.len(),
                    rows
                )));
            }
            for (i, p) in col.iter().enumerate() {
                if p.nvars() != nvars {
                    return Err(Error::Shape(format!(
                        "entry ({}, {}) uses {} variables, expected {}",
                        i + 1,
                        j + 1,
                        p.nvars(),
                        nvars
                    )));
                }
                m.set(i, j, p.clone());
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, i: usize, j: usize) -> &Poly {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Poly) {
        assert_eq!(p.nvars(), self.nvars, "variable count mismatch");
        self.entries[i * self.cols + j] = p;
    }

    pub fn row(&self, i: usize) -> &[Poly] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Poly> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn transpose(&self) -> PolyMatrix {
        let mut t = PolyMatrix::zeros(self.cols, self.rows, self.nvars);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn mul(&self, other: &PolyMatrix) -> Result<PolyMatrix> {
        if self.cols != other.rows || self.nvars != other.nvars {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = PolyMatrix::zeros(self.rows, other.cols, self.nvars);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Poly::zero(self.nvars);
                for k in 0..self.cols {
                    let a = self.get(i, k);
                    let b = other.get(k, j);
                    if !a.is_zero() && !b.is_zero() {
                        acc += &(a * b);
                    }
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[Poly]) -> Result<Vec<Poly>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "vector of length {} does not match {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| super::dot(self.row(i), v))
            .map(|p| if self.cols == 0 { Poly::zero(self.nvars) } else { p })
            .collect())
    }

    pub fn scale(&self, c: &Rational) -> PolyMatrix {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            nvars: self.nvars,
            entries: self.entries.iter().map(|p| p.scale(c)).collect(),
        }
    }

    pub fn differentiate(&self, var: usize) -> PolyMatrix {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            nvars: self.nvars,
            entries: self.entries.iter().map(|p| p.d(var)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Poly::is_zero)
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (0..self.cols).all(|j| {
                    let e = self.get(i, j);
                    if i == j {
                        *e == Poly::one(self.nvars)
                    } else {
                        e.is_zero()
                    }
                })
            })
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(Poly::is_constant)
    }

    pub fn eval(&self, point: &[f64]) -> DMatrix<f64> {
        assert_eq!(point.len(), self.nvars, "point dimension mismatch");
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).eval_unchecked(point)
        })
    }

    /// Sub-matrix with the given rows and columns.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> PolyMatrix {
        let mut out = PolyMatrix::zeros(rows.len(), cols.len(), self.nvars);
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out.set(a, b, self.get(i, j).clone());
            }
        }
        out
    }

    /// Exact determinant by cofactor expansion along the first row.
    pub fn determinant(&self) -> Result<Poly> {
        if self.rows != self.cols {
            return Err(Error::Shape(format!(
                "determinant of non-square {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let all: Vec<usize> = (0..self.rows).collect();
        Ok(self.det_of(&all, &all))
    }

    fn det_of(&self, rows: &[usize], cols: &[usize]) -> Poly {
        match rows.len() {
            0 => Poly::one(self.nvars),
            1 => self.get(rows[0], cols[0]).clone(),
            2 => {
                self.get(rows[0], cols[0]) * self.get(rows[1], cols[1])
                    - self.get(rows[0], cols[1]) * self.get(rows[1], cols[0])
            }
            _ => {
                let mut acc = Poly::zero(self.nvars);
                let sub_rows = &rows[1..];
                for (k, &c) in cols.iter().enumerate() {
                    let e = self.get(rows[0], c);
                    if e.is_zero() {
                        continue;
                    }
                    let sub_cols: Vec<usize> =
                        cols.iter().copied().filter(|&x| x != c).collect();
                    let term = e * self.det_of(sub_rows, &sub_cols);
                    if k % 2 == 0 {
                        acc += &term;
                    } else {
                        acc -= &term;
                    }
                }
                acc
            }
        }
    }

    /// Classical adjugate, so that `A * adj(A) = det(A) * I`.
    pub fn adjugate(&self) -> Result<PolyMatrix> {
        if self.rows != self.cols {
            return Err(Error::Shape(format!(
                "adjugate of non-square {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut adj = PolyMatrix::zeros(n, n, self.nvars);
        if n == 1 {
            adj.set(0, 0, Poly::one(self.nvars));
            return Ok(adj);
        }
        for i in 0..n {
            for j in 0..n {
                let rows: Vec<usize> = (0..n).filter(|&r| r != i).collect();
                let cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
                let minor = self.det_of(&rows, &cols);
                let cof = if (i + j) % 2 == 0 { minor } else { -minor };
                adj.set(j, i, cof);
            }
        }
        Ok(adj)
    }

    /// Polynomial inverse, available when the determinant is a nonzero
    /// constant.
    pub fn constant_det_inverse(&self) -> Result<Option<PolyMatrix>> {
        let det = self.determinant()?;
        if det.is_zero() || !det.is_constant() {
            return Ok(None);
        }
        let inv_det = num_traits::Inv::inv(det.constant_term());
        Ok(Some(self.adjugate()?.scale(&inv_det)))
    }

    /// Renders every entry with the given variable names, row by row.
    pub fn format_rows(&self, names: &[&str]) -> Vec<Vec<String>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|p| p.format_with(names)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_poly;

    fn pm(rows: &[&[&str]], vars: &[&str]) -> PolyMatrix {
        let cols = rows.first().map_or(0, |r| r.len());
        PolyMatrix::from_rows(
            vars.len(),
            cols,
            rows.iter()
                .map(|r| r.iter().map(|s| parse_poly(s, vars).unwrap()).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn determinant_and_inverse() {
        let v = ["x1", "x2"];
        let m = pm(&[&["1", "0"], &["x1", "1"]], &v);
        assert_eq!(m.determinant().unwrap(), Poly::one(2));
        let inv = m.constant_det_inverse().unwrap().unwrap();
        assert!(m.mul(&inv).unwrap().is_identity());
        assert_eq!(inv, pm(&[&["1", "0"], &["-x1", "1"]], &v));

        let singular = pm(&[&["1", "x1"], &["0", "0"]], &v);
        assert!(singular.constant_det_inverse().unwrap().is_none());
        let nonconst = pm(&[&["x1", "0"], &["0", "1"]], &v);
        assert!(nonconst.constant_det_inverse().unwrap().is_none());
    }

    #[test]
    fn adjugate_identity_3x3() {
        let v = ["x1", "x2", "x3"];
        let m = pm(
            &[&["x1", "1", "0"], &["x2", "x3", "2"], &["1", "0", "x1*x2"]],
            &v,
        );
        let det = m.determinant().unwrap();
        let prod = m.mul(&m.adjugate().unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { det.clone() } else { Poly::zero(3) };
                assert_eq!(*prod.get(i, j), expect);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let v = ["x1"];
        let a = pm(&[&["1", "x1"]], &v);
        assert!(a.mul(&a).is_err());
        assert!(a.determinant().is_err());
        assert!(PolyMatrix::from_rows(1, 2, vec![vec![Poly::one(1)]]).is_err());
    }

    #[test]
    fn empty_rows() {
        let e = PolyMatrix::zeros(0, 2, 2);
        assert_eq!(e.eval(&[0.0, 0.0]).nrows(), 0);
        assert!(e.apply(&[Poly::one(2), Poly::one(2)]).unwrap().is_empty());
    }
}
