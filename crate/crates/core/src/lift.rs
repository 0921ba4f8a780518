//! Taylor-coefficient construction of `V` and assembly of `V* = phi^* Vtilde + V`.
//!
//! Every residual block is linear in `V`, so the coefficients of the
//! residual up to degree `K - 1` are an exact rational linear system in the
//! coefficients of `V` of degrees `2..=K`. Constant and linear terms of `V`
//! are pinned to zero.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact;
use crate::integrability::{self, ResidualSystem};
use crate::poly::{MultiIndex, Poly, PolyError, Rational, DEFAULT_DEGREE_CAP};
use crate::sysmodel::{hessian_at_origin, HESSIAN_TOL};

pub const DEFAULT_ORDER: u32 = 6;
/// Sphere radii on which `V*` is sampled.
pub const SPHERE_RADII: [f64; 3] = [0.1, 0.5, 1.0];
/// Minimum number of sampled directions per sphere.
pub const MIN_DIRECTIONS: usize = 64;
const DIRECTION_SEED: u64 = 0xd1ec_7105;

/// How free coefficients are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// `1/2` on free `x_p^2` for vertical `p`, zero elsewhere.
    VerticalQuadratic,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Complement,
    Base,
}

/// Origin of one equation: the coefficient of `monomial` in residual
/// component `component` (0-based) of `block`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquationLabel {
    pub block: Block,
    pub component: usize,
    pub monomial: MultiIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftSystem {
    pub order: u32,
    pub m: usize,
    /// Vertical coordinates start here.
    pub n: usize,
    pub unknowns: Vec<MultiIndex>,
    pub rows: Vec<Vec<Rational>>,
    pub rhs: Vec<Rational>,
    pub labels: Vec<EquationLabel>,
}

fn is_vertical_square(k: &MultiIndex, n: usize) -> bool {
    k.degree() == 2 && (n..k.len()).any(|p| k.get(p) == 2)
}

/// Unknown ordering: every monomial of degree `2..=K` in grlex order,
/// with the vertical squares moved to the end so elimination leaves them
/// free whenever possible.
fn unknown_order(m: usize, n: usize, order: u32) -> Vec<MultiIndex> {
    if order < 2 {
        return Vec::new();
    }
    let all = MultiIndex::in_degree_range(m, 2, order);
    let (squares, rest): (Vec<_>, Vec<_>) = all.into_iter().partition(|k| is_vertical_square(k, n));
    rest.into_iter().chain(squares).collect()
}

fn residual_linear_part(rs: &ResidualSystem, v: &Poly) -> Result<(Vec<Poly>, Vec<Poly>)> {
    let pd = rs
        .p_d()
        .symbolic()
        .ok_or(Error::NeedsSymbolicProjection("Taylor lifting"))?;
    let grad = v.gradient();
    Ok((pd.apply(&grad)?, rs.p_vm().transpose().apply(&grad)?))
}

/// Builds the coefficient system for the update `dV` solving
/// `Psi(base + dV) = 0` up to degree `K - 1`. With `base = 0` this is the
/// system for `V` itself.
pub fn assemble_update_system(rs: &ResidualSystem, base: &Poly, order: u32) -> Result<LiftSystem> {
    let m = rs.m();
    let n = rs.n();
    let pd = rs
        .p_d()
        .symbolic()
        .ok_or(Error::NeedsSymbolicProjection("Taylor lifting"))?;
    let coeff_degree = (0..pd.rows())
        .flat_map(|a| pd.row(a).iter().map(Poly::degree))
        .chain((0..m).flat_map(|i| (0..n).map(move |q| (i, q))).map(|(i, q)| rs.p_vm().get(i, q).degree()))
        .max()
        .unwrap_or(0);
    let worst = order.saturating_sub(1).saturating_add(coeff_degree);
    if order > DEFAULT_DEGREE_CAP || worst > DEFAULT_DEGREE_CAP {
        return Err(PolyError::DegreeCap {
            degree: worst.max(order),
            cap: DEFAULT_DEGREE_CAP,
        }
        .into());
    }
    let unknowns = unknown_order(m, n, order);
    let top = order.saturating_sub(1);
    let eq_monomials = if order == 0 {
        Vec::new()
    } else {
        MultiIndex::in_degree_range(m, 0, top)
    };
    let (res_d, res_b) = integrability::residual_psi(rs, base)?;

    let columns: Vec<(Vec<Poly>, Vec<Poly>)> = unknowns
        .iter()
        .map(|k| {
            let mono = Poly::monomial(k.clone(), Rational::one());
            let (d, b) = residual_linear_part(rs, &mono)?;
            Ok((
                d.iter().map(|p| p.truncate(top)).collect(),
                b.iter().map(|p| p.truncate(top)).collect(),
            ))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut labels = Vec::new();
    let blocks = [(Block::Complement, &res_d), (Block::Base, &res_b)];
    for (block, residual) in blocks {
        for (component, r) in residual.iter().enumerate() {
            for nu in &eq_monomials {
                let row: Vec<Rational> = columns
                    .iter()
                    .map(|(d, b)| match block {
                        Block::Complement => d[component].coeff(nu),
                        Block::Base => b[component].coeff(nu),
                    })
                    .collect();
                let target = -r.coeff(nu);
                if row.iter().all(Zero::is_zero) && target.is_zero() {
                    continue;
                }
                rows.push(row);
                rhs.push(target);
                labels.push(EquationLabel {
                    block,
                    component,
                    monomial: nu.clone(),
                });
            }
        }
    }
    Ok(LiftSystem {
        order,
        m,
        n,
        unknowns,
        rows,
        rhs,
        labels,
    })
}

pub fn assemble_lift_system(rs: &ResidualSystem, order: u32) -> Result<LiftSystem> {
    assemble_update_system(rs, &Poly::zero(rs.m()), order)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JetSolution {
    pub order: u32,
    /// Nonzero coefficients only.
    pub coeffs: BTreeMap<MultiIndex, Rational>,
    /// Coefficients left free by the constraints.
    pub free: Vec<MultiIndex>,
    /// Free coefficients given a nonzero seed.
    pub seeded: Vec<MultiIndex>,
    pub forced: usize,
    /// Residual coefficients are exactly zero up to this degree.
    pub residual_degree_checked: u32,
    pub v: Poly,
}

pub fn solve_jets(system: &LiftSystem, policy: SeedPolicy) -> Result<JetSolution> {
    let unknowns = &system.unknowns;
    let n = system.n;
    let seed = |c: usize| -> Rational {
        match policy {
            SeedPolicy::VerticalQuadratic if is_vertical_square(&unknowns[c], n) => Rational::new(1.into(), 2.into()),
            _ => Rational::zero(),
        }
    };
    let sol = exact::solve(&system.rows, &system.rhs, unknowns.len(), seed).map_err(|bad| {
        let label = &system.labels[bad.row];
        let block = match label.block {
            Block::Complement => "complement",
            Block::Base => "base",
        };
        Error::Infeasible(format!(
            "{block} row {} has no solution at monomial degree {} (exponents {:?})",
            label.component + 1,
            label.monomial.degree(),
            label.monomial.exponents()
        ))
    })?;
    let m = system.m;
    let coeffs: BTreeMap<MultiIndex, Rational> = unknowns
        .iter()
        .zip(&sol.values)
        .filter(|(_, c)| !c.is_zero())
        .map(|(k, c)| (k.clone(), c.clone()))
        .collect();
    let free: Vec<MultiIndex> = sol.free_cols.iter().map(|&c| unknowns[c].clone()).collect();
    let seeded = sol
        .free_cols
        .iter()
        .filter(|&&c| !sol.values[c].is_zero())
        .map(|&c| unknowns[c].clone())
        .collect();
    let v = Poly::from_terms(m, coeffs.iter().map(|(k, c)| (k.clone(), c.clone())));
    Ok(JetSolution {
        order: system.order,
        coeffs,
        free,
        seeded,
        forced: sol.pivot_cols.len(),
        residual_degree_checked: system.order.saturating_sub(1),
        v,
    })
}

/// Re-checks that every residual block of `V` vanishes through degree `K - 1`.
pub fn verify_jet(rs: &ResidualSystem, jet: &JetSolution) -> Result<()> {
    let (d, b) = integrability::residual_psi(rs, &jet.v)?;
    let top = jet.residual_degree_checked;
    for (i, p) in d.iter().chain(&b).enumerate() {
        let t = p.truncate(top);
        if !t.is_zero() {
            return Err(Error::Infeasible(format!(
                "residual component {} keeps low-degree terms {t}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Solves, seeds and re-verifies in one step.
pub fn lift(rs: &ResidualSystem, order: u32, policy: SeedPolicy) -> Result<JetSolution> {
    let system = assemble_lift_system(rs, order)?;
    let jet = solve_jets(&system, policy)?;
    verify_jet(rs, &jet)?;
    Ok(jet)
}

/// Definiteness diagnostics for `V*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Definiteness {
    pub positive_definite: bool,
    pub hessian_eigenvalues: Vec<f64>,
    pub directions_sampled: usize,
    pub min_sphere_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VStar {
    pub v: Poly,
    pub definiteness: Definiteness,
}

/// Unit directions: the signed coordinate axes first, then evenly spaced
/// angles in the plane or seeded random directions in higher dimension.
pub fn sample_directions(m: usize, min_count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..m {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; m];
            d[i] = s;
            out.push(d);
        }
    }
    let extra = min_count.saturating_sub(out.len());
    match m {
        0 | 1 => {}
        2 => {
            for k in 0..extra {
                let th = 2.0 * PI * (k as f64 + 0.5) / extra as f64;
                out.push(vec![th.cos(), th.sin()]);
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
            for _ in 0..extra {
                out.push(unit_vector(&mut rng, m));
            }
        }
    }
    out
}

/// Uniform direction on the unit sphere by rejection from the cube.
fn unit_vector(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn sign_normalized(mut v: Vec<f64>) -> Vec<f64> {
    let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

pub fn definiteness(v: &Poly) -> Result<Definiteness> {
    let m = v.nvars();
    let hess = hessian_at_origin(v);
    let eig = hess.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let hessian_eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let directions = sample_directions(m, MIN_DIRECTIONS);
    let mut min_val = f64::INFINITY;
    let mut witness = None;
    for &r in &SPHERE_RADII {
        for d in &directions {
            let pt: Vec<f64> = d.iter().map(|x| r * x).collect();
            let val = v.evaluate(&pt)?;
            if val < min_val {
                min_val = val;
            }
            if !(val > 0.0) && witness.is_none() {
                witness = Some((d.clone(), r));
            }
        }
    }
    let hessian_ok = hessian_eigenvalues.first().is_none_or(|&e| e > HESSIAN_TOL);
    if !hessian_ok && witness.is_none() {
        let col = eig.eigenvectors.column(order[0]);
        witness = Some((sign_normalized(col.iter().copied().collect()), 0.0));
    }
    if m == 0 {
        min_val = 0.0;
    }
    Ok(Definiteness {
        positive_definite: hessian_ok && witness.is_none(),
        hessian_eigenvalues,
        directions_sampled: directions.len(),
        min_sphere_value: min_val,
        witness_radius: witness.as_ref().map(|w| w.1).filter(|&r| r > 0.0),
        witness_direction: witness.map(|w| w.0),
    })
}

pub fn assemble_vstar(pullback_vtilde: &Poly, jet: &JetSolution) -> Result<VStar> {
    if pullback_vtilde.nvars() != jet.v.nvars() {
        return Err(Error::Shape("V and the pulled-back CLF live in different spaces".into()));
    }
    let v = pullback_vtilde + &jet.v;
    let definiteness = definiteness(&v)?;
    Ok(VStar { v, definiteness })
}
