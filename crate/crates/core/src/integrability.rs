//! The first-order PDE system for the lifted function `V`, its hypothesis
//! checks (flatness, conditions A and B, pointwise consistency), the symbol
//! dimensions with the Cartan test, and the curvature map.
//!
//! Unknown: `V(x)` on `R^m`. The system is
//! `P_D (grad V - X) = 0` (one row per complement direction) and
//! `P_VM^T grad V = 0` (one row per base direction).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{self, Inconsistent};
use crate::geometry::{ComplementProjection, EhresmannConnection, Frame};
use crate::grid::CheckGrid;
use crate::numeric::{self, RANK_TOL};
use crate::poly::{self, Poly, PolyMatrix, Rational};
use crate::problem::LiftProblem;

/// Threshold for conditions evaluated by finite differences.
pub const NUMERIC_CONDITION_TOL: f64 = 1e-6;
/// Random bases tried after coordinate permutations in the Cartan test.
pub const RANDOM_BASIS_ATTEMPTS: usize = 20;
/// Coordinate permutations are enumerated only up to this dimension.
pub const MAX_PERMUTATION_DIM: usize = 7;
const BASIS_SEED: u64 = 0x5eed_ba5e;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSystem {
    p_d: ComplementProjection,
    p_vm: PolyMatrix,
    x: Vec<Poly>,
}

impl ResidualSystem {
    pub fn new(p_d: ComplementProjection, p_vm: PolyMatrix, x: Vec<Poly>) -> Result<Self> {
        let m = x.len();
        if p_d.cols() != m || p_vm.rows() != m || p_vm.nvars() != m || p_vm.cols() >= m {
            return Err(Error::Shape(format!(
                "residual system needs P_D with {m} columns and P_VM with {m} rows"
            )));
        }
        if x.iter().any(|p| p.nvars() != m) {
            return Err(Error::Shape(format!("target field must use {m} variables")));
        }
        Ok(ResidualSystem { p_d, p_vm, x })
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }

    /// Number of complement rows, `m - r`.
    pub fn codim(&self) -> usize {
        self.p_d.rows()
    }

    pub fn n(&self) -> usize {
        self.p_vm.cols()
    }

    pub fn p_d(&self) -> &ComplementProjection {
        &self.p_d
    }

    pub fn p_vm(&self) -> &PolyMatrix {
        &self.p_vm
    }

    pub fn x(&self) -> &[Poly] {
        &self.x
    }

    fn symbolic_p_d(&self, what: &'static str) -> Result<&PolyMatrix> {
        self.p_d.symbolic().ok_or(Error::NeedsSymbolicProjection(what))
    }

    /// Pointwise linear system `M v = b` for the first-order jet `v = grad V`.
    pub fn jet_system(&self, x: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.m();
        let pd = self.p_d.eval(x);
        let pvm = self.p_vm.eval(x);
        let xv = DVector::from_vec(poly::eval_vec(&self.x, x));
        let rhs_d = &pd * &xv;
        let k = pd.nrows();
        let n = pvm.ncols();
        let mut mat = DMatrix::zeros(k + n, m);
        mat.view_mut((0, 0), (k, m)).copy_from(&pd);
        mat.view_mut((k, 0), (n, m)).copy_from(&pvm.transpose());
        let mut b = DVector::zeros(k + n);
        b.rows_mut(0, k).copy_from(&rhs_d);
        (mat, b)
    }

    /// Exact counterpart of [`ResidualSystem::jet_system`] at a rational point.
    pub fn jet_system_exact(&self, x: &[Rational]) -> Result<(Vec<Vec<Rational>>, Vec<Rational>)> {
        let pd = self.symbolic_p_d("exact jet systems")?;
        let m = self.m();
        let xv = self
            .x
            .iter()
            .map(|p| p.evaluate_exact(x))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for a in 0..pd.rows() {
            let row = (0..m)
                .map(|i| pd.get(a, i).evaluate_exact(x))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let b = row.iter().zip(&xv).map(|(p, xi)| p * xi).sum();
            rows.push(row);
            rhs.push(b);
        }
        for q in 0..self.n() {
            let row = (0..m)
                .map(|i| self.p_vm.get(i, q).evaluate_exact(x))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            rows.push(row);
            rhs.push(Rational::from_integer(0.into()));
        }
        Ok((rows, rhs))
    }
}

/// `(P_D (grad V - X), P_VM^T grad V)` as exact polynomials.
pub fn residual_psi(rs: &ResidualSystem, v: &Poly) -> Result<(Vec<Poly>, Vec<Poly>)> {
    let m = rs.m();
    if v.nvars() != m {
        return Err(Error::Shape(format!("V must use {m} variables, got {}", v.nvars())));
    }
    let pd = rs.symbolic_p_d("the residual map")?;
    let grad = v.gradient();
    let diff: Vec<Poly> = grad.iter().zip(&rs.x).map(|(g, x)| g - x).collect();
    let first = pd.apply(&diff)?;
    let second = rs.p_vm.transpose().apply(&grad)?;
    Ok((first, second))
}

/// Values of the first prolongation at a point, given a 2-jet.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongedResidual {
    /// Order-0 complement rows, one per `a`.
    pub d0: Vec<f64>,
    /// Order-0 base rows, one per `q`.
    pub vm0: Vec<f64>,
    /// `d1[a][i]`: total `x_i` derivative of complement row `a`.
    pub d1: Vec<Vec<f64>>,
    /// `vm1[q][i]`: total `x_i` derivative of base row `q`.
    pub vm1: Vec<Vec<f64>>,
}

impl ProlongedResidual {
    pub fn max_abs(&self) -> f64 {
        self.d0
            .iter()
            .chain(&self.vm0)
            .chain(self.d1.iter().flatten())
            .chain(self.vm1.iter().flatten())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

fn check_symmetric(v2: &DMatrix<f64>) -> Result<()> {
    let scale = v2.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..v2.nrows() {
        for j in i + 1..v2.ncols() {
            if (v2[(i, j)] - v2[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::AsymmetricJet { i: i + 1, j: j + 1 });
            }
        }
    }
    Ok(())
}

/// Evaluates the prolonged system at `(x, v1, v2)` where `v1[i] = V_i` and
/// `v2[(i, j)] = V_[i,j]`.
pub fn prolonged_residual(
    rs: &ResidualSystem,
    x: &[f64],
    v1: &[f64],
    v2: &DMatrix<f64>,
) -> Result<ProlongedResidual> {
    let m = rs.m();
    if x.len() != m || v1.len() != m || v2.nrows() != m || v2.ncols() != m {
        return Err(Error::Shape(format!("2-jet must be over {m} coordinates")));
    }
    check_symmetric(v2)?;
    let pd = rs.p_d.eval(x);
    let dpd = rs.p_d.partials(x);
    let pvm = rs.p_vm.eval(x);
    let dpvm: Vec<DMatrix<f64>> = (0..m).map(|i| rs.p_vm.differentiate(i).eval(x)).collect();
    let xv = poly::eval_vec(&rs.x, x);
    // dx[i1][i] = d X^{i1} / d x_i
    let dx: Vec<Vec<f64>> = rs.x.iter().map(|p| poly::eval_vec(&p.gradient(), x)).collect();
    let k = pd.nrows();
    let n = pvm.ncols();

    let d0 = (0..k)
        .map(|a| (0..m).map(|i| pd[(a, i)] * (v1[i] - xv[i])).sum())
        .collect();
    let vm0 = (0..n)
        .map(|q| (0..m).map(|i| pvm[(i, q)] * v1[i]).sum())
        .collect();
    let d1 = (0..k)
        .map(|a| {
            (0..m)
                .map(|i| {
                    (0..m)
                        .map(|i1| {
                            dpd[i][(a, i1)] * (v1[i1] - xv[i1])
                                + pd[(a, i1)] * (v2[(i, i1)] - dx[i1][i])
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let vm1 = (0..n)
        .map(|q| {
            (0..m)
                .map(|i| {
                    (0..m)
                        .map(|i1| dpvm[i][(i1, q)] * v1[i1] + pvm[(i1, q)] * v2[(i, i1)])
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(ProlongedResidual { d0, vm0, d1, vm1 })
}

/// One nonzero curvature component, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureEntry {
    pub l: usize,
    pub q1: usize,
    pub q2: usize,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessReport {
    pub flat: bool,
    pub nonzero: Vec<CurvatureEntry>,
}

pub fn check_flatness(conn: &EhresmannConnection, names: &[&str]) -> FlatnessReport {
    let nonzero: Vec<CurvatureEntry> = conn
        .curvature_components()
        .into_iter()
        .filter(|(_, f)| !f.is_zero())
        .map(|(idx, f)| CurvatureEntry {
            l: idx.l + 1,
            q1: idx.q1 + 1,
            q2: idx.q2 + 1,
            value: f.format_with(names),
        })
        .collect();
    FlatnessReport {
        flat: nonzero.is_empty(),
        nonzero,
    }
}

/// `A_{i1}^{a1 a2} = sum_i (P^{a1}_i d_i P^{a2}_{i1} - P^{a2}_i d_i P^{a1}_{i1})`.
pub fn condition_a_entry(p_d: &PolyMatrix, a1: usize, a2: usize, i1: usize) -> Poly {
    let m = p_d.cols();
    let mut acc = Poly::zero(p_d.nvars());
    for i in 0..m {
        acc += &(p_d.get(a1, i) * &p_d.get(a2, i1).d(i));
        acc -= &(p_d.get(a2, i) * &p_d.get(a1, i1).d(i));
    }
    acc
}

/// `B^{a1 a2} = sum_{i, i1} (P^{a2}_i P^{a1}_{i1} - P^{a1}_i P^{a2}_{i1}) d_i X^{i1}`.
pub fn condition_b_entry(p_d: &PolyMatrix, x: &[Poly], a1: usize, a2: usize) -> Poly {
    let m = p_d.cols();
    let mut acc = Poly::zero(p_d.nvars());
    for i in 0..m {
        for (i1, xi1) in x.iter().enumerate() {
            let coeff = p_d.get(a2, i) * p_d.get(a1, i1) - p_d.get(a1, i) * p_d.get(a2, i1);
            if !coeff.is_zero() {
                acc += &(coeff * xi1.d(i));
            }
        }
    }
    acc
}

/// Index `(a1, a2, i1)` with `a1 < a2`, 0-based.
pub type AIndex = (usize, usize, usize);

/// Every `A_{i1}^{a1 a2}` with `a1 < a2`.
pub fn condition_a(p_d: &PolyMatrix) -> Vec<(AIndex, Poly)> {
    let k = p_d.rows();
    let mut out = Vec::new();
    for a1 in 0..k {
        for a2 in a1 + 1..k {
            for i1 in 0..p_d.cols() {
                out.push(((a1, a2, i1), condition_a_entry(p_d, a1, a2, i1)));
            }
        }
    }
    out
}

/// Every `B^{a1 a2}` with `a1 < a2`.
pub fn condition_b(p_d: &PolyMatrix, x: &[Poly]) -> Vec<((usize, usize), Poly)> {
    let k = p_d.rows();
    let mut out = Vec::new();
    for a1 in 0..k {
        for a2 in a1 + 1..k {
            out.push(((a1, a2), condition_b_entry(p_d, x, a1, a2)));
        }
    }
    out
}

struct PointwiseData {
    pd: DMatrix<f64>,
    dpd: Vec<DMatrix<f64>>,
    xv: Vec<f64>,
    dx: Vec<Vec<f64>>,
}

impl PointwiseData {
    fn new(rs: &ResidualSystem, x: &[f64]) -> Self {
        PointwiseData {
            pd: rs.p_d.eval(x),
            dpd: rs.p_d.partials(x),
            xv: poly::eval_vec(&rs.x, x),
            dx: rs.x.iter().map(|p| poly::eval_vec(&p.gradient(), x)).collect(),
        }
    }

    fn a(&self, a1: usize, a2: usize, i1: usize) -> f64 {
        (0..self.pd.ncols())
            .map(|i| self.pd[(a1, i)] * self.dpd[i][(a2, i1)] - self.pd[(a2, i)] * self.dpd[i][(a1, i1)])
            .sum()
    }

    fn b(&self, a1: usize, a2: usize) -> f64 {
        let m = self.pd.ncols();
        let mut acc = 0.0;
        for i in 0..m {
            for i1 in 0..m {
                let c = self.pd[(a2, i)] * self.pd[(a1, i1)] - self.pd[(a1, i)] * self.pd[(a2, i1)];
                acc += c * self.dx[i1][i];
            }
        }
        acc
    }
}

/// One nonzero entry of condition A (with `i1`) or B (without), 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub a1: usize,
    pub a2: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i1: Option<usize>,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub holds: bool,
    /// False when evaluated by finite differences on the grid.
    pub exact: bool,
    pub nonzero: Vec<ConditionEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_on_grid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_point: Option<Vec<f64>>,
}

impl ConditionReport {
    fn exact(nonzero: Vec<ConditionEntry>) -> Self {
        ConditionReport {
            holds: nonzero.is_empty(),
            exact: true,
            nonzero,
            max_abs_on_grid: None,
            witness_point: None,
        }
    }

    fn numeric<F>(grid: &CheckGrid, rs: &ResidualSystem, entries: F) -> Self
    where
        F: Fn(&PointwiseData) -> Vec<(usize, usize, Option<usize>, f64)>,
    {
        let mut worst = 0.0f64;
        let mut witness = None;
        let mut nonzero = Vec::new();
        for pt in grid.points() {
            let data = PointwiseData::new(rs, pt);
            for (a1, a2, i1, v) in entries(&data) {
                if v.abs() > worst {
                    worst = v.abs();
                    witness = Some(pt.clone());
                }
                if v.abs() > NUMERIC_CONDITION_TOL
                    && !nonzero
                        .iter()
                        .any(|e: &ConditionEntry| e.a1 == a1 + 1 && e.a2 == a2 + 1 && e.i1 == i1.map(|i| i + 1))
                {
                    nonzero.push(ConditionEntry {
                        a1: a1 + 1,
                        a2: a2 + 1,
                        i1: i1.map(|i| i + 1),
                        value: format!("{v:e} at {pt:?}"),
                    });
                }
            }
        }
        ConditionReport {
            holds: worst <= NUMERIC_CONDITION_TOL,
            exact: false,
            nonzero,
            max_abs_on_grid: Some(worst),
            witness_point: if worst > NUMERIC_CONDITION_TOL { witness } else { None },
        }
    }
}

/// Condition A, exactly when `P_D` is symbolic, otherwise on the grid.
pub fn check_condition_a(rs: &ResidualSystem, grid: &CheckGrid, names: &[&str]) -> ConditionReport {
    match rs.p_d.symbolic() {
        Some(pd) => ConditionReport::exact(
            condition_a(pd)
                .into_iter()
                .filter(|(_, p)| !p.is_zero())
                .map(|((a1, a2, i1), p)| ConditionEntry {
                    a1: a1 + 1,
                    a2: a2 + 1,
                    i1: Some(i1 + 1),
                    value: p.format_with(names),
                })
                .collect(),
        ),
        None => ConditionReport::numeric(grid, rs, |d| {
            let k = d.pd.nrows();
            let m = d.pd.ncols();
            let mut out = Vec::new();
            for a1 in 0..k {
                for a2 in a1 + 1..k {
                    for i1 in 0..m {
                        out.push((a1, a2, Some(i1), d.a(a1, a2, i1)));
                    }
                }
            }
            out
        }),
    }
}

/// Condition B, exactly when `P_D` is symbolic, otherwise on the grid.
pub fn check_condition_b(rs: &ResidualSystem, grid: &CheckGrid, names: &[&str]) -> ConditionReport {
    match rs.p_d.symbolic() {
        Some(pd) => ConditionReport::exact(
            condition_b(pd, &rs.x)
                .into_iter()
                .filter(|(_, p)| !p.is_zero())
                .map(|((a1, a2), p)| ConditionEntry {
                    a1: a1 + 1,
                    a2: a2 + 1,
                    i1: None,
                    value: p.format_with(names),
                })
                .collect(),
        ),
        None => ConditionReport::numeric(grid, rs, |d| {
            let k = d.pd.nrows();
            let mut out = Vec::new();
            for a1 in 0..k {
                for a2 in a1 + 1..k {
                    out.push((a1, a2, None, d.b(a1, a2)));
                }
            }
            out
        }),
    }
}

/// Solvability of the first-order jet equations at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointConsistency {
    pub point: Vec<f64>,
    pub consistent: bool,
    pub rank: usize,
    pub augmented_rank: usize,
    /// l1 norm of the least-squares residual.
    pub gap: f64,
    /// Least-norm least-squares jet.
    pub jet: Vec<f64>,
}

pub fn consistency_at(rs: &ResidualSystem, x: &[f64]) -> PointConsistency {
    let (mat, b) = rs.jet_system(x);
    let aug = numeric::hstack(&mat, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()));
    let rank = numeric::rank(&mat, RANK_TOL);
    let augmented_rank = numeric::rank(&aug, RANK_TOL);
    let (sol, res) = numeric::least_norm_solve(&mat, &b, RANK_TOL);
    PointConsistency {
        point: x.to_vec(),
        consistent: rank == augmented_rank,
        rank,
        augmented_rank,
        gap: res.iter().map(|v| v.abs()).sum(),
        jet: sol.iter().copied().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub points_checked: usize,
    pub inconsistent_points: usize,
    pub worst_point: Vec<f64>,
    pub worst_gap: f64,
}

pub fn pointwise_consistency(rs: &ResidualSystem, grid: &CheckGrid) -> ConsistencyReport {
    let mut report = ConsistencyReport {
        consistent: true,
        points_checked: 0,
        inconsistent_points: 0,
        worst_point: vec![0.0; rs.m()],
        worst_gap: 0.0,
    };
    let mut have_worst = false;
    for pt in grid.points() {
        let c = consistency_at(rs, pt);
        report.points_checked += 1;
        if !c.consistent {
            report.consistent = false;
            report.inconsistent_points += 1;
        }
        if !have_worst || c.gap > report.worst_gap {
            report.worst_gap = c.gap;
            report.worst_point = pt.clone();
            have_worst = true;
        }
    }
    report
}

/// Solves the jet equations exactly at a rational point; free components
/// take `free_value(i)`.
pub fn exact_jet_at<F>(rs: &ResidualSystem, x: &[Rational], free_value: F) -> Result<std::result::Result<Vec<Rational>, Inconsistent>>
where
    F: Fn(usize) -> Rational,
{
    let (rows, rhs) = rs.jet_system_exact(x)?;
    Ok(exact::solve(&rows, &rhs, rs.m(), free_value).map(|s| s.values))
}

/// How a quasi-regular basis was found.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    /// Coordinate covectors in this (1-based) order.
    Permutation(Vec<usize>),
    /// Seeded random basis; rows are the basis covectors.
    Random { attempt: usize, rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolReport {
    pub point: Vec<f64>,
    pub dim_g1: usize,
    pub dim_g2: usize,
    pub quasi_regular: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisChoice>,
}

/// Basis (as columns) of the intersection of two column spans.
pub fn intersection_basis(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    if a.ncols() == 0 || b.ncols() == 0 {
        return DMatrix::zeros(m, 0);
    }
    let ns = numeric::null_space(&numeric::hstack(a, &(-b)), RANK_TOL);
    let raw = a * ns.rows(0, a.ncols());
    numeric::column_space(&raw, RANK_TOL)
}

/// Rows spanning the annihilator of the column span of `a` (`m` columns).
fn annihilator_rows(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::identity(m, m);
    }
    numeric::null_space(&a.transpose(), RANK_TOL).transpose()
}

/// `dim(S^2 E ∩ S^2 F)` for subspaces given by spanning columns, computed
/// as the nullity of `Omega -> (Q_E Omega, Q_F Omega)` on symmetric
/// matrices, where `Q_E`, `Q_F` span the annihilators.
pub fn sym2_intersection_dim(e: &DMatrix<f64>, f: &DMatrix<f64>) -> usize {
    let m = e.nrows();
    let qe = annihilator_rows(e);
    let qf = annihilator_rows(f);
    let q = numeric::vstack(&qe, &qf);
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    if q.nrows() == 0 {
        return pairs.len();
    }
    let mut map = DMatrix::zeros(q.nrows() * m, pairs.len());
    for (c, &(i, j)) in pairs.iter().enumerate() {
        let mut omega = DMatrix::zeros(m, m);
        omega[(i, j)] = 1.0;
        omega[(j, i)] = 1.0;
        let image = &q * omega;
        for (k, v) in image.iter().enumerate() {
            map[(k, c)] = *v;
        }
    }
    pairs.len() - numeric::rank(&map, RANK_TOL)
}

/// `dim G1 + sum_{j=1}^{m-1} dim(G1 ∩ span{b_{j+1}, .., b_m})` for the basis
/// given as rows of `basis`.
pub fn cartan_sum(g1: &DMatrix<f64>, basis: &DMatrix<f64>) -> usize {
    let m = basis.nrows();
    let mut total = g1.ncols();
    for j in 1..m {
        let tail = basis.rows(j, m - j).transpose();
        total += numeric::intersection_dim(g1, &tail, RANK_TOL);
    }
    total
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Searches coordinate permutations, then seeded random bases, for one in
/// which the Cartan identity `dim G2 = cartan_sum` holds.
pub fn find_quasi_regular(g1: &DMatrix<f64>, dim_g2: usize) -> Option<BasisChoice> {
    let m = g1.nrows();
    if m <= MAX_PERMUTATION_DIM {
        let mut perm: Vec<usize> = (0..m).collect();
        loop {
            let basis = DMatrix::from_fn(m, m, |r, c| if perm[r] == c { 1.0 } else { 0.0 });
            if cartan_sum(g1, &basis) == dim_g2 {
                return Some(BasisChoice::Permutation(perm.iter().map(|p| p + 1).collect()));
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(BASIS_SEED);
    for attempt in 1..=RANDOM_BASIS_ATTEMPTS {
        let basis = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        if numeric::rank(&basis, RANK_TOL) < m {
            continue;
        }
        if cartan_sum(g1, &basis) == dim_g2 {
            let rows = (0..m).map(|r| basis.row(r).iter().copied().collect()).collect();
            return Some(BasisChoice::Random { attempt, rows });
        }
    }
    None
}

/// Symbol dimensions at `x`: `E* = span C(x)`, `F* = ann(H_x M)`,
/// `G1 = E* ∩ F*`, `G2 = S^2 E* ∩ S^2 F*`.
pub fn symbol_dims(c: &Frame, conn: &EhresmannConnection, x: &[f64]) -> SymbolReport {
    let m = c.dim();
    let e = if c.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        numeric::column_space(&c.matrix().eval(x), RANK_TOL)
    };
    let f = numeric::null_space(&conn.p_vm().eval(x).transpose(), RANK_TOL);
    let g1 = intersection_basis(&e, &f);
    let dim_g2 = sym2_intersection_dim(&e, &f);
    let basis = find_quasi_regular(&g1, dim_g2);
    SymbolReport {
        point: x.to_vec(),
        dim_g1: g1.ncols(),
        dim_g2,
        quasi_regular: basis.is_some(),
        basis,
    }
}

/// Values of the curvature map: `g[(a1, a2)]` for `a1 < a2` and
/// `h[(q1, q2)]` for `q1 < q2` (0-based keys).
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMapValue {
    pub g: Vec<((usize, usize), f64)>,
    pub h: Vec<((usize, usize), f64)>,
}

impl CurvatureMapValue {
    pub fn max_abs(&self) -> f64 {
        self.g
            .iter()
            .chain(&self.h)
            .fold(0.0, |acc, (_, v)| acc.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }
}

fn h_coefficient(pvm: &DMatrix<f64>, dpvm: &[DMatrix<f64>], q1: usize, q2: usize, i1: usize) -> f64 {
    (0..pvm.nrows())
        .map(|i| pvm[(i, q2)] * dpvm[i][(i1, q1)] - pvm[(i, q1)] * dpvm[i][(i1, q2)])
        .sum()
}

fn jet_tolerance(mat: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let scale = mat.iter().chain(b.iter()).fold(1.0f64, |acc, v| acc.max(v.abs()));
    1e-8 * scale
}

/// Closed-form curvature map at `(x, v1)`:
/// `G = sum_{i1} A_{i1}(V_{i1} - X^{i1}) + B` and
/// `H_{q1 q2} = sum_{i1} (sum_i P^i_{q2} d_i P^{i1}_{q1} - P^i_{q1} d_i P^{i1}_{q2}) V_{i1}`.
pub fn curvature_map_eval(rs: &ResidualSystem, x: &[f64], v1: &[f64]) -> Result<CurvatureMapValue> {
    let m = rs.m();
    if x.len() != m || v1.len() != m {
        return Err(Error::Shape(format!("jet must be over {m} coordinates")));
    }
    let (mat, b) = rs.jet_system(x);
    let res = &mat * DVector::from_column_slice(v1) - &b;
    let worst = res.amax();
    if worst > jet_tolerance(&mat, &b) {
        return Err(Error::InconsistentJet {
            point: x.to_vec(),
            residual: worst,
        });
    }
    let data = PointwiseData::new(rs, x);
    let k = rs.codim();
    let mut g = Vec::new();
    for a1 in 0..k {
        for a2 in a1 + 1..k {
            let mut val = data.b(a1, a2);
            for i1 in 0..m {
                val += data.a(a1, a2, i1) * (v1[i1] - data.xv[i1]);
            }
            g.push(((a1, a2), val));
        }
    }
    let pvm = rs.p_vm.eval(x);
    let dpvm: Vec<DMatrix<f64>> = (0..m).map(|i| rs.p_vm.differentiate(i).eval(x)).collect();
    let n = rs.n();
    let mut h = Vec::new();
    for q1 in 0..n {
        for q2 in q1 + 1..n {
            let val = (0..m).map(|i1| h_coefficient(&pvm, &dpvm, q1, q2, i1) * v1[i1]).sum();
            h.push(((q1, q2), val));
        }
    }
    Ok(CurvatureMapValue { g, h })
}

/// The same map from the prolonged system before substitution:
/// `G = sum_i P^{a1}_i D_i Psi^{a2} - P^{a2}_i D_i Psi^{a1}` and
/// `H = sum_i P^i_{q2} D_i Psi_{q1} - P^i_{q1} D_i Psi_{q2}`, where the
/// second-order terms cancel for any symmetric `v2`.
pub fn curvature_map_from_prolongation(
    rs: &ResidualSystem,
    x: &[f64],
    v1: &[f64],
    v2: &DMatrix<f64>,
) -> Result<CurvatureMapValue> {
    let pr = prolonged_residual(rs, x, v1, v2)?;
    let pd = rs.p_d.eval(x);
    let pvm = rs.p_vm.eval(x);
    let m = rs.m();
    let k = rs.codim();
    let n = rs.n();
    let mut g = Vec::new();
    for a1 in 0..k {
        for a2 in a1 + 1..k {
            let val = (0..m)
                .map(|i| pd[(a1, i)] * pr.d1[a2][i] - pd[(a2, i)] * pr.d1[a1][i])
                .sum();
            g.push(((a1, a2), val));
        }
    }
    let mut h = Vec::new();
    for q1 in 0..n {
        for q2 in q1 + 1..n {
            let val = (0..m)
                .map(|i| pvm[(i, q2)] * pr.vm1[q1][i] - pvm[(i, q1)] * pr.vm1[q2][i])
                .sum();
            h.push(((q1, q2), val));
        }
    }
    Ok(CurvatureMapValue { g, h })
}

/// Exact polynomial coefficients of the closed-form curvature map, for
/// evaluation in rational arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMap {
    x: Vec<Poly>,
    g_pairs: Vec<(usize, usize)>,
    a: Vec<Vec<Poly>>,
    b: Vec<Poly>,
    h_pairs: Vec<(usize, usize)>,
    h: Vec<Vec<Poly>>,
}

/// Exact curvature map values, keyed as in [`CurvatureMapValue`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCurvatureMapValue {
    pub g: Vec<((usize, usize), Rational)>,
    pub h: Vec<((usize, usize), Rational)>,
}

impl ExactCurvatureMapValue {
    pub fn is_zero(&self) -> bool {
        self.g.iter().chain(&self.h).all(|(_, v)| num_traits::Zero::is_zero(v))
    }
}

impl CurvatureMap {
    pub fn new(rs: &ResidualSystem) -> Result<Self> {
        let pd = rs.symbolic_p_d("the exact curvature map")?;
        let m = rs.m();
        let k = rs.codim();
        let n = rs.n();
        let mut g_pairs = Vec::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for a1 in 0..k {
            for a2 in a1 + 1..k {
                g_pairs.push((a1, a2));
                a.push((0..m).map(|i1| condition_a_entry(pd, a1, a2, i1)).collect());
                b.push(condition_b_entry(pd, &rs.x, a1, a2));
            }
        }
        let pvm = &rs.p_vm;
        let mut h_pairs = Vec::new();
        let mut h = Vec::new();
        for q1 in 0..n {
            for q2 in q1 + 1..n {
                h_pairs.push((q1, q2));
                h.push(
                    (0..m)
                        .map(|i1| {
                            let mut acc = Poly::zero(m);
                            for i in 0..m {
                                acc += &(pvm.get(i, q2) * &pvm.get(i1, q1).d(i));
                                acc -= &(pvm.get(i, q1) * &pvm.get(i1, q2).d(i));
                            }
                            acc
                        })
                        .collect(),
                );
            }
        }
        Ok(CurvatureMap {
            x: rs.x.clone(),
            g_pairs,
            a,
            b,
            h_pairs,
            h,
        })
    }

    /// Evaluates at a rational point and jet. Consistency of the jet is the
    /// caller's responsibility.
    pub fn eval_exact(&self, x: &[Rational], v1: &[Rational]) -> Result<ExactCurvatureMapValue> {
        let xv = self
            .x
            .iter()
            .map(|p| p.evaluate_exact(x))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut g = Vec::new();
        for ((pair, a_row), b) in self.g_pairs.iter().zip(&self.a).zip(&self.b) {
            let mut val = b.evaluate_exact(x)?;
            for (i1, a) in a_row.iter().enumerate() {
                if !a.is_zero() {
                    val += a.evaluate_exact(x)? * (&v1[i1] - &xv[i1]);
                }
            }
            g.push((*pair, val));
        }
        let mut h = Vec::new();
        for (pair, row) in self.h_pairs.iter().zip(&self.h) {
            let mut val = Rational::from_integer(0.into());
            for (i1, c) in row.iter().enumerate() {
                if !c.is_zero() {
                    val += c.evaluate_exact(x)? * &v1[i1];
                }
            }
            h.push((*pair, val));
        }
        Ok(ExactCurvatureMapValue { g, h })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedCondition {
    Flatness,
    ConditionA,
    ConditionB,
    Consistency,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Liftable,
    NotLiftable { reasons: Vec<FailedCondition> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub flatness: FlatnessReport,
    pub condition_a: ConditionReport,
    pub condition_b: ConditionReport,
    pub consistency: ConsistencyReport,
    pub symbol: SymbolReport,
    /// True when A and B were only checked numerically.
    pub numeric_only: bool,
    pub verdict: Verdict,
}

impl IntegrabilityReport {
    pub fn is_liftable(&self) -> bool {
        self.verdict == Verdict::Liftable
    }
}

/// Runs every hypothesis check; the symbol is evaluated at the origin and
/// reported but does not enter the verdict.
pub fn full_check(problem: &LiftProblem) -> IntegrabilityReport {
    let names = problem.names();
    let rs = &problem.residual;
    let flatness = check_flatness(&problem.connection, &names);
    let condition_a = check_condition_a(rs, &problem.grid, &names);
    let condition_b = check_condition_b(rs, &problem.grid, &names);
    let consistency = pointwise_consistency(rs, &problem.grid);
    let symbol = symbol_dims(&problem.c_frame, &problem.connection, &vec![0.0; problem.m()]);
    let mut reasons = Vec::new();
    if !flatness.flat {
        reasons.push(FailedCondition::Flatness);
    }
    if !condition_a.holds {
        reasons.push(FailedCondition::ConditionA);
    }
    if !condition_b.holds {
        reasons.push(FailedCondition::ConditionB);
    }
    if !consistency.consistent {
        reasons.push(FailedCondition::Consistency);
    }
    let verdict = if reasons.is_empty() {
        Verdict::Liftable
    } else {
        Verdict::NotLiftable { reasons }
    };
    IntegrabilityReport {
        numeric_only: !(condition_a.exact && condition_b.exact),
        flatness,
        condition_a,
        condition_b,
        consistency,
        symbol,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{parse_poly, rat};

    fn p3(s: &str) -> Poly {
        parse_poly(s, &["x1", "x2", "x3"]).unwrap()
    }

    fn p2(s: &str) -> Poly {
        parse_poly(s, &["x1", "x2"]).unwrap()
    }

    fn pd_from(rows: &[&[&str]], nvars: usize) -> PolyMatrix {
        let names = ["x1", "x2", "x3"];
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|s| parse_poly(s, &names[..nvars]).unwrap()).collect())
            .collect();
        PolyMatrix::from_rows(nvars, nvars, rows).unwrap()
    }

    fn ps_rs() -> ResidualSystem {
        let pd = pd_from(&[&["0", "1"]], 2);
        let pvm = PolyMatrix::from_rows(2, 1, vec![vec![p2("1")], vec![p2("0")]]).unwrap();
        ResidualSystem::new(ComplementProjection::Symbolic(pd), pvm, vec![p2("-2*x1"), p2("x2")]).unwrap()
    }

    fn di_rs() -> ResidualSystem {
        let pd = pd_from(&[&["1", "0"]], 2);
        let pvm = PolyMatrix::from_rows(2, 1, vec![vec![p2("1")], vec![p2("0")]]).unwrap();
        ResidualSystem::new(ComplementProjection::Symbolic(pd), pvm, vec![p2("-2*x1 - x2"), p2("0")]).unwrap()
    }

    fn fa_rs() -> ResidualSystem {
        let pd = PolyMatrix::zeros(0, 2, 2);
        let pvm = PolyMatrix::from_rows(2, 1, vec![vec![p2("1")], vec![p2("0")]]).unwrap();
        ResidualSystem::new(ComplementProjection::Symbolic(pd), pvm, vec![p2("-2*x1"), p2("-x2")]).unwrap()
    }

    #[test]
    fn residual_examples() {
        let rs = ps_rs();
        let (a, q) = residual_psi(&rs, &p2("1/2*x2^2")).unwrap();
        assert!(a.iter().chain(&q).all(Poly::is_zero));
        let (a, q) = residual_psi(&rs, &Poly::zero(2)).unwrap();
        assert_eq!(a, vec![p2("-x2")]);
        assert!(q[0].is_zero());
        let (a, _) = residual_psi(&fa_rs(), &p2("x1*x2")).unwrap();
        assert!(a.is_empty());
        assert!(residual_psi(&rs, &p3("x3")).is_err());
    }

    #[test]
    fn prolonged_examples() {
        let rs = ps_rs();
        let v2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let pr = prolonged_residual(&rs, &[1.0, 1.0], &[0.0, 1.0], &v2).unwrap();
        assert_eq!(pr.max_abs(), 0.0);
        let zero = DMatrix::zeros(2, 2);
        let pr = prolonged_residual(&rs, &[1.0, 0.0], &[0.0, 0.0], &zero).unwrap();
        assert_eq!(pr.d0, vec![0.0]);
        let pr = prolonged_residual(&rs, &[1.0, 1.0], &[0.0, 0.0], &zero).unwrap();
        assert_eq!(pr.d0, vec![-1.0]);
        let pr = prolonged_residual(&fa_rs(), &[1.0, 1.0], &[0.0, 0.0], &zero).unwrap();
        assert!(pr.d0.is_empty() && pr.d1.is_empty());
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            prolonged_residual(&rs, &[0.0, 0.0], &[0.0, 0.0], &asym),
            Err(Error::AsymmetricJet { i: 1, j: 2 })
        );
    }

    #[test]
    fn condition_examples() {
        let pd = pd_from(&[&["1", "0", "0"], &["0", "1", "x1"]], 3);
        let a = condition_a(&pd);
        for ((a1, a2, i1), v) in &a {
            let expect = if (*a1, *a2, *i1) == (0, 1, 2) { p3("1") } else { Poly::zero(3) };
            assert_eq!(v, &expect, "A entry {a1} {a2} {i1}");
        }
        let pd = pd_from(&[&["1", "0", "0"], &["0", "1", "0"]], 3);
        assert!(condition_a(&pd).iter().all(|(_, v)| v.is_zero()));
        let b = condition_b(&pd, &[p3("x2"), p3("0"), p3("0")]);
        assert_eq!(b, vec![((0, 1), p3("1"))]);
        let b = condition_b(&pd, &[p3("3"), p3("-1"), p3("0")]);
        assert!(b[0].1.is_zero());
        let single = pd_from(&[&["x2", "x1*x3", "1"]], 3);
        assert!(condition_a(&single).is_empty());
    }

    /// Direct term-by-term enumeration of the double sums.
    fn b_oracle(pd: &PolyMatrix, x: &[Poly], a1: usize, a2: usize) -> Poly {
        let m = pd.cols();
        let mut acc = Poly::zero(m);
        for i in 0..m {
            for i1 in 0..m {
                let t1 = pd.get(a2, i).clone() * pd.get(a1, i1).clone() * x[i1].differentiate(i).unwrap();
                let t2 = pd.get(a1, i).clone() * pd.get(a2, i1).clone() * x[i1].differentiate(i).unwrap();
                acc = acc + t1 - t2;
            }
        }
        acc
    }

    #[test]
    fn condition_b_matches_enumeration() {
        let pd = pd_from(&[&["1", "x3", "0"], &["x2", "1", "x1^2"]], 3);
        let x = [p3("x1*x2 - x3"), p3("x3^2"), p3("2*x1 + x2*x3")];
        assert_eq!(condition_b_entry(&pd, &x, 0, 1), b_oracle(&pd, &x, 0, 1));
    }

    #[test]
    fn numeric_conditions_track_exact_ones() {
        let pd = pd_from(&[&["1", "0", "0"], &["0", "1", "x1"]], 3);
        let pvm = PolyMatrix::from_rows(
            3,
            2,
            vec![vec![p3("1"), p3("0")], vec![p3("0"), p3("1")], vec![p3("0"), p3("0")]],
        )
        .unwrap();
        let x = vec![p3("x2"), p3("0"), p3("0")];
        let rs = ResidualSystem::new(ComplementProjection::Symbolic(pd.clone()), pvm, x).unwrap();
        let grid = CheckGrid::lattice(3, 3);
        let names = ["x1", "x2", "x3"];
        let a = check_condition_a(&rs, &grid, &names);
        assert!(!a.holds && a.exact);
        assert_eq!(a.nonzero.len(), 1);
        assert_eq!((a.nonzero[0].a1, a.nonzero[0].a2, a.nonzero[0].i1), (1, 2, Some(3)));
        let b = check_condition_b(&rs, &grid, &names);
        assert_eq!(b.nonzero[0].value, "1");

        // pointwise evaluation agrees with the exact polynomials
        let data = PointwiseData::new(&rs, &[0.3, -0.2, 0.7]);
        assert!((data.a(0, 1, 2) - 1.0).abs() < 1e-12);
        assert!((data.b(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn consistency_examples() {
        let c = consistency_at(&ps_rs(), &[1.0, 1.0]);
        assert!(c.consistent);
        assert!((c.jet[0]).abs() < 1e-12 && (c.jet[1] - 1.0).abs() < 1e-12);
        let c = consistency_at(&di_rs(), &[1.0, 0.0]);
        assert!(!c.consistent);
        assert!((c.gap - 2.0).abs() < 1e-9);
        assert!(consistency_at(&di_rs(), &[0.0, 0.0]).consistent);
        let grid = CheckGrid::lattice(2, 3);
        assert!(pointwise_consistency(&fa_rs(), &grid).consistent);
        let rep = pointwise_consistency(&di_rs(), &grid);
        assert!(!rep.consistent);
        assert!((rep.worst_gap - 3.0).abs() < 1e-9);
    }

    #[test]
    fn exact_jets() {
        let rs = ps_rs();
        let jet = exact_jet_at(&rs, &[rat(1, 2), rat(-3, 1)], |_| rat(7, 1)).unwrap().unwrap();
        assert_eq!(jet, vec![rat(0, 1), rat(-3, 1)]);
        let rs = di_rs();
        assert!(exact_jet_at(&rs, &[rat(1, 1), rat(0, 1)], |_| rat(0, 1)).unwrap().is_err());
    }

    fn coord_frame(m: usize, idx: &[usize]) -> Frame {
        let fields = idx
            .iter()
            .map(|&k| (0..m).map(|i| if i == k { Poly::one(m) } else { Poly::zero(m) }).collect())
            .collect();
        Frame::new(m, fields).unwrap()
    }

    #[test]
    fn symbol_examples() {
        let conn = EhresmannConnection::zero(2, 1).unwrap();
        let s = symbol_dims(&coord_frame(2, &[0]), &conn, &[0.0, 0.0]);
        assert_eq!((s.dim_g1, s.dim_g2, s.quasi_regular), (0, 0, true));
        let s = symbol_dims(&coord_frame(2, &[0, 1]), &conn, &[0.0, 0.0]);
        assert_eq!((s.dim_g1, s.dim_g2, s.quasi_regular), (1, 1, true));
        assert_eq!(s.basis, Some(BasisChoice::Permutation(vec![2, 1])));
        let s = symbol_dims(&coord_frame(2, &[]), &conn, &[0.0, 0.0]);
        assert_eq!((s.dim_g1, s.dim_g2), (0, 0));
    }

    #[test]
    fn cartan_sum_identity_order_fails_for_fa() {
        let g1 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(cartan_sum(&g1, &DMatrix::identity(2, 2)), 2);
    }

    #[test]
    fn permutations_enumerate_all() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 24);
        assert_eq!(p, vec![3, 2, 1, 0]);
    }

    #[test]
    fn curvature_map_examples() {
        let rs = ps_rs();
        let k = curvature_map_eval(&rs, &[1.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!(k.is_zero());
        assert!(matches!(
            curvature_map_eval(&rs, &[1.0, 1.0], &[0.0, 0.0]),
            Err(Error::InconsistentJet { .. })
        ));

        // B example: jet V = X pointwise satisfies the complement rows
        let pd = pd_from(&[&["1", "0", "0"], &["0", "1", "0"]], 3);
        let pvm = PolyMatrix::from_rows(3, 1, vec![vec![p3("0")], vec![p3("0")], vec![p3("1")]]).unwrap();
        let x = vec![p3("x2"), p3("0"), p3("0")];
        let rs = ResidualSystem::new(ComplementProjection::Symbolic(pd), pvm, x).unwrap();
        let pt = [0.5, 0.25, -1.0];
        let k = curvature_map_eval(&rs, &pt, &[0.25, 0.0, 0.0]).unwrap();
        assert_eq!(k.g, vec![((0, 1), 1.0)]);
        let v2 = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, -1.0, 0.5, 0.0, 0.5, 3.0]);
        let mid = curvature_map_from_prolongation(&rs, &pt, &[0.25, 0.0, 0.0], &v2).unwrap();
        assert!((mid.g[0].1 - 1.0).abs() < 1e-12);
        let exact = CurvatureMap::new(&rs)
            .unwrap()
            .eval_exact(&[rat(1, 2), rat(1, 4), rat(-1, 1)], &[rat(1, 4), rat(0, 1), rat(0, 1)])
            .unwrap();
        assert_eq!(exact.g, vec![((0, 1), rat(1, 1))]);
    }

    #[test]
    fn h_matches_curvature() {
        // EX-CURV connection: H_{12} = F^3_{12} V_3 = -V_3
        let conn = EhresmannConnection::new(3, 2, vec![vec![p3("0"), p3("x1")]]).unwrap();
        let pd = PolyMatrix::zeros(0, 3, 3);
        let rs = ResidualSystem::new(ComplementProjection::Symbolic(pd), conn.p_vm(), vec![Poly::zero(3); 3]).unwrap();
        // jets must satisfy P_VM^T v = 0: v1 = 0, v2 + x1 v3 = 0
        let pt = [0.5, -0.3, 0.2];
        let v1 = [0.0, -0.5 * 2.0, 2.0];
        let k = curvature_map_eval(&rs, &pt, &v1).unwrap();
        assert_eq!(k.h, vec![((0, 1), -2.0)]);
        let mid = curvature_map_from_prolongation(&rs, &pt, &v1, &DMatrix::identity(3, 3)).unwrap();
        assert!((mid.h[0].1 + 2.0).abs() < 1e-12);
        let report = check_flatness(&conn, &["x1", "x2", "x3"]);
        assert!(!report.flat);
        assert_eq!(report.nonzero[0].value, "-1");
        assert!(check_flatness(&EhresmannConnection::zero(3, 2).unwrap(), &["x1", "x2", "x3"]).flat);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn small_poly(nvars: usize) -> impl Strategy<Value = Poly> {
            proptest::collection::vec((0u32..3, 0u32..3, 0u32..2, -3i64..4), 0..4).prop_map(move |terms| {
                let mut p = Poly::zero(nvars);
                for (e1, e2, e3, c) in terms {
                    let exps = [e1, e2, e3][..nvars].to_vec();
                    p += &Poly::monomial(crate::poly::MultiIndex::new(exps), rat(c, 1));
                }
                p
            })
        }

        fn matrix3(rows: usize) -> impl Strategy<Value = PolyMatrix> {
            proptest::collection::vec(small_poly(3), rows * 3).prop_map(move |entries| {
                let rows = entries.chunks(3).map(|c| c.to_vec()).collect();
                PolyMatrix::from_rows(3, 3, rows).unwrap()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn a_and_b_are_antisymmetric(pd in matrix3(2), x in proptest::collection::vec(small_poly(3), 3)) {
                for i1 in 0..3 {
                    prop_assert_eq!(condition_a_entry(&pd, 0, 1, i1), -condition_a_entry(&pd, 1, 0, i1));
                    prop_assert!(condition_a_entry(&pd, 0, 0, i1).is_zero());
                }
                prop_assert_eq!(condition_b_entry(&pd, &x, 0, 1), -condition_b_entry(&pd, &x, 1, 0));
            }

            #[test]
            fn solutions_have_vanishing_prolongation(
                c1 in -3i64..4, c2 in -3i64..4, c3 in -3i64..4,
                x1 in -1.0f64..1.0, x2 in -1.0f64..1.0
            ) {
                // V = c1 x2^2 + c2 x2^3 + c3 x2^4 solves the EX-FA base rows;
                // take X so that the complement rows vanish as well
                let v = p2(&format!("{c1}*x2^2 + {c2}*x2^3 + {c3}*x2^4"));
                let pd = pd_from(&[&["0", "1"]], 2);
                let pvm = PolyMatrix::from_rows(2, 1, vec![vec![p2("1")], vec![p2("0")]]).unwrap();
                let grad = v.gradient();
                let rs = ResidualSystem::new(ComplementProjection::Symbolic(pd), pvm, grad.clone()).unwrap();
                let (a, q) = residual_psi(&rs, &v).unwrap();
                prop_assert!(a.iter().chain(&q).all(Poly::is_zero));
                let pt = [x1, x2];
                let v1 = poly::eval_vec(&grad, &pt);
                let v2 = DMatrix::from_fn(2, 2, |i, j| grad[i].d(j).evaluate(&pt).unwrap());
                let pr = prolonged_residual(&rs, &pt, &v1, &v2).unwrap();
                prop_assert!(pr.max_abs() < 1e-12);
            }

            #[test]
            fn nested_subspaces_have_symmetric_square_count(seed in 0u64..1000, m in 1usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let e_dim = rng.random_range(0..=m);
                let f_dim = rng.random_range(0..=e_dim);
                let e = DMatrix::from_fn(m, e_dim, |_, _| rng.random_range(-1.0..1.0));
                let mix = DMatrix::from_fn(e_dim, f_dim, |_, _| rng.random_range(-1.0..1.0));
                let f = &e * mix;
                let s = numeric::rank(&f, RANK_TOL);
                prop_assert_eq!(sym2_intersection_dim(&e, &f), s * (s + 1) / 2);
                let g1 = intersection_basis(&e, &f);
                prop_assert_eq!(g1.ncols(), s);
                prop_assert!(find_quasi_regular(&g1, s * (s + 1) / 2).is_some());
            }
        }
    }
}
