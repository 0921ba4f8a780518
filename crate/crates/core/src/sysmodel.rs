//! Control-affine systems, the quotient morphism in adapted coordinates, and
//! the data derived from a stabilizing quotient feedback.
//!
//! The base map is always the coordinate projection `(x1..xm) -> (x1..xn)`;
//! the input map is `v = varphi(x) + beta(x) u`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{self, EhresmannConnection};
use crate::grid::CheckGrid;
use crate::numeric;
use crate::ode;
use crate::poly::{self, MultiIndex, Poly, PolyMatrix, Rational};

/// Eigenvalue floor for positive definiteness of Hessians at the origin.
pub const HESSIAN_TOL: f64 = 1e-9;

/// `xdot = f0(x) + sum_j u_j f_j(x)` on `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAffineSystem {
    m: usize,
    f0: Vec<Poly>,
    f: Vec<Vec<Poly>>,
}

impl ControlAffineSystem {
    pub fn new(f0: Vec<Poly>, f: Vec<Vec<Poly>>) -> Result<Self> {
        let m = f0.len();
        check_field("drift", &f0, m, m)?;
        for (j, col) in f.iter().enumerate() {
            check_field(&format!("control field {}", j + 1), col, m, m)?;
        }
        Ok(ControlAffineSystem { m, f0, f })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.f.len()
    }

    pub fn drift(&self) -> &[Poly] {
        &self.f0
    }

    pub fn control_fields(&self) -> &[Vec<Poly>] {
        &self.f
    }

    /// `m x r` matrix whose columns are the control fields.
    pub fn control_matrix(&self) -> PolyMatrix {
        PolyMatrix::from_columns(self.m, self.m, &self.f).expect("validated fields")
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = poly::eval_vec(&self.f0, x);
        for (col, uj) in self.f.iter().zip(u) {
            for (o, p) in out.iter_mut().zip(col) {
                *o += uj * p.eval_unchecked(x);
            }
        }
        out
    }
}

fn check_field(what: &str, v: &[Poly], len: usize, nvars: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::Shape(format!(
            "{what} has {} components, expected {len}",
            v.len()
        )));
    }
    if v.iter().any(|p| p.nvars() != nvars) {
        return Err(Error::Shape(format!("{what} must use {nvars} variables")));
    }
    Ok(())
}

/// `ydot = g0(y) + sum_k v_k g_k(y)` on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientSystem {
    n: usize,
    g0: Vec<Poly>,
    g: Vec<Vec<Poly>>,
}

impl QuotientSystem {
    pub fn new(g0: Vec<Poly>, g: Vec<Vec<Poly>>) -> Result<Self> {
        let n = g0.len();
        check_field("quotient drift", &g0, n, n)?;
        for (k, col) in g.iter().enumerate() {
            check_field(&format!("quotient control field {}", k + 1), col, n, n)?;
        }
        Ok(QuotientSystem { n, g0, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.g.len()
    }

    pub fn drift(&self) -> &[Poly] {
        &self.g0
    }

    pub fn control_fields(&self) -> &[Vec<Poly>] {
        &self.g
    }

    /// `g0 + sum_k g_k * v_k` for polynomial inputs in the same variables.
    pub fn closed_loop(&self, v: &[Poly]) -> Vec<Poly> {
        let mut out = self.g0.clone();
        for (col, vk) in self.g.iter().zip(v) {
            for (o, gk) in out.iter_mut().zip(col) {
                *o += &(gk * vk);
            }
        }
        out
    }

    pub fn eval(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = poly::eval_vec(&self.g0, y);
        for (col, vk) in self.g.iter().zip(v) {
            for (o, p) in out.iter_mut().zip(col) {
                *o += vk * p.eval_unchecked(y);
            }
        }
        out
    }
}

/// Input part of the bundle morphism: `v = varphi(x) + beta(x) u`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientMorphism {
    n: usize,
    varphi: Vec<Poly>,
    /// `s` rows of `r` entries.
    beta: Vec<Vec<Poly>>,
}

impl QuotientMorphism {
    pub fn new(n: usize, varphi: Vec<Poly>, beta: Vec<Vec<Poly>>) -> Result<Self> {
        if beta.len() != varphi.len() {
            return Err(Error::Shape(format!(
                "beta has {} rows but varphi has {} entries",
                beta.len(),
                varphi.len()
            )));
        }
        let r = beta.first().map_or(0, Vec::len);
        if beta.iter().any(|row| row.len() != r) {
            return Err(Error::Shape("beta rows differ in length".into()));
        }
        Ok(QuotientMorphism { n, varphi, beta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn varphi(&self) -> &[Poly] {
        &self.varphi
    }

    pub fn beta(&self) -> &[Vec<Poly>] {
        &self.beta
    }

    pub fn eval_input(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.varphi
            .iter()
            .zip(&self.beta)
            .map(|(phi, row)| {
                phi.eval_unchecked(x)
                    + row
                        .iter()
                        .zip(u)
                        .map(|(b, uj)| b.eval_unchecked(x) * uj)
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Quotient residuals `R_q(x, u)`, polynomials in `m + r` variables
/// (states first, then inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientResiduals {
    pub residuals: Vec<Poly>,
}

impl QuotientResiduals {
    pub fn is_zero(&self) -> bool {
        self.residuals.iter().all(Poly::is_zero)
    }

    /// First nonzero `(component, monomial, coefficient)`, 0-based component.
    pub fn witness(&self) -> Option<(usize, MultiIndex, Rational)> {
        self.residuals.iter().enumerate().find_map(|(q, p)| {
            p.terms()
                .next_back()
                .map(|(k, c)| (q, k.clone(), c.clone()))
        })
    }

    /// Converts a nonzero residual into an error naming the offending term.
    pub fn ensure_zero(&self, names: &[&str]) -> Result<()> {
        match self.witness() {
            None => Ok(()),
            Some((q, k, c)) => Err(Error::QuotientMismatch {
                component: q + 1,
                monomial: Poly::monomial(k, Rational::from_integer(1.into())).format_with(names),
                coeff: c.to_string(),
            }),
        }
    }
}

fn check_quotient_shapes(
    sys: &ControlAffineSystem,
    qsys: &QuotientSystem,
    morph: &QuotientMorphism,
) -> Result<()> {
    if qsys.n() >= sys.m() || morph.n() != qsys.n() {
        return Err(Error::Invalid(format!(
            "quotient dimension {} must be below state dimension {}",
            qsys.n(),
            sys.m()
        )));
    }
    if morph.varphi().len() != qsys.s() {
        return Err(Error::Shape(format!(
            "varphi has {} entries, expected s = {}",
            morph.varphi().len(),
            qsys.s()
        )));
    }
    if morph.beta().iter().any(|row| row.len() != sys.r()) {
        return Err(Error::Shape(format!("beta must be {}x{}", qsys.s(), sys.r())));
    }
    let m = sys.m();
    let bad = morph
        .varphi()
        .iter()
        .chain(morph.beta().iter().flatten())
        .any(|p| p.nvars() != m);
    if bad {
        return Err(Error::Shape(format!("varphi and beta must use {m} variables")));
    }
    Ok(())
}

/// Computes
/// `R_q = f0^q + sum_j u_j f_j^q - g0^q(x) - sum_k g_k^q(x) (varphi^k + sum_j u_j beta^k_j)`
/// for `q < n`. The quotient is valid iff every residual is identically zero.
pub fn verify_quotient(
    sys: &ControlAffineSystem,
    qsys: &QuotientSystem,
    morph: &QuotientMorphism,
) -> Result<QuotientResiduals> {
    check_quotient_shapes(sys, qsys, morph)?;
    let m = sys.m();
    let r = sys.r();
    let nv = m + r;
    let u: Vec<Poly> = (0..r).map(|j| Poly::var(nv, m + j)).collect();
    let v: Vec<Poly> = morph
        .varphi()
        .iter()
        .zip(morph.beta())
        .map(|(phi, row)| {
            row.iter()
                .zip(&u)
                .fold(phi.embed(nv), |acc, (b, uj)| acc + b.embed(nv) * uj)
        })
        .collect();
    let residuals = (0..qsys.n())
        .map(|q| {
            let mut lhs = sys.drift()[q].embed(nv);
            for (col, uj) in sys.control_fields().iter().zip(&u) {
                lhs += &(col[q].embed(nv) * uj);
            }
            let mut rhs = qsys.drift()[q].embed(nv);
            for (col, vk) in qsys.control_fields().iter().zip(&v) {
                rhs += &(col[q].embed(nv) * vk);
            }
            lhs - rhs
        })
        .collect();
    Ok(QuotientResiduals { residuals })
}

/// `phi^* Vtilde`: substitutes `y_q = x_q` and embeds into `m` variables.
pub fn pullback_clf(vtilde: &Poly, m: usize) -> Poly {
    vtilde.embed(m)
}

/// `W = sum_q dVtilde/dy_q (g0^q + sum_k g_k^q alpha^k)`.
pub fn quotient_closed_loop_w(qsys: &QuotientSystem, vtilde: &Poly, alpha: &[Poly]) -> Result<Poly> {
    if alpha.len() != qsys.s() || vtilde.nvars() != qsys.n() || alpha.iter().any(|a| a.nvars() != qsys.n()) {
        return Err(Error::Shape(format!(
            "quotient feedback needs {} entries in {} variables",
            qsys.s(),
            qsys.n()
        )));
    }
    let field = qsys.closed_loop(alpha);
    Ok(poly::dot(&vtilde.gradient(), &field))
}

/// Exact Hessian at the origin, as floats.
pub fn hessian_at_origin(v: &Poly) -> DMatrix<f64> {
    let n = v.nvars();
    DMatrix::from_fn(n, n, |i, j| poly::rat_to_f64(&v.d(i).d(j).constant_term()))
}

/// Quotient control Lyapunov data, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientClf {
    vtilde: Poly,
    alpha: Vec<Poly>,
    w: Poly,
}

impl QuotientClf {
    /// Checks `Vtilde(0) = 0`, a positive definite Hessian at 0, `W(0) = 0`,
    /// and `W < 0` on the punctured grid (which must live in `R^n`).
    pub fn new(qsys: &QuotientSystem, vtilde: Poly, alpha: Vec<Poly>, grid: &CheckGrid) -> Result<Self> {
        let w = quotient_closed_loop_w(qsys, &vtilde, &alpha)?;
        if !vtilde.constant_term().is_zero_value() {
            return Err(Error::Equilibrium("quotient CLF must vanish at the origin".into()));
        }
        let eig = numeric::symmetric_eigenvalues(&hessian_at_origin(&vtilde));
        if eig.first().is_some_and(|&e| e <= HESSIAN_TOL) {
            return Err(Error::Invalid(format!(
                "quotient CLF Hessian at the origin is not positive definite (eigenvalues {eig:?})"
            )));
        }
        if !w.constant_term().is_zero_value() {
            return Err(Error::ClfRejected {
                point: vec![0.0; qsys.n()],
                w_value: poly::rat_to_f64(&w.constant_term()),
            });
        }
        for pt in grid.punctured() {
            let val = w.evaluate(pt)?;
            if !(val < 0.0) {
                return Err(Error::ClfRejected {
                    point: pt.clone(),
                    w_value: val,
                });
            }
        }
        Ok(QuotientClf { vtilde, alpha, w })
    }

    pub fn vtilde(&self) -> &Poly {
        &self.vtilde
    }

    pub fn alpha(&self) -> &[Poly] {
        &self.alpha
    }

    pub fn w(&self) -> &Poly {
        &self.w
    }
}

trait ZeroValue {
    fn is_zero_value(&self) -> bool;
}

impl ZeroValue for Rational {
    fn is_zero_value(&self) -> bool {
        num_traits::Zero::is_zero(self)
    }
}

/// The `V`-independent part of the target dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetData {
    /// `X = Hor(g0 + g alpha) - sharp(d phi^* Vtilde) - f0`
    pub x: Vec<Poly>,
    pub pullback_vtilde: Poly,
}

pub fn build_target_x(
    sys: &ControlAffineSystem,
    qsys: &QuotientSystem,
    conn: &EhresmannConnection,
    clf: &QuotientClf,
) -> Result<TargetData> {
    if conn.m() != sys.m() || conn.n() != qsys.n() {
        return Err(Error::Shape("connection dimensions do not match the systems".into()));
    }
    let m = sys.m();
    let lifted = conn.horizontal_lift(&qsys.closed_loop(clf.alpha()))?;
    let pullback = pullback_clf(clf.vtilde(), m);
    let grad = geometry::sharp(&geometry::differential(&pullback));
    let x: Vec<Poly> = lifted
        .iter()
        .zip(&grad)
        .zip(sys.drift())
        .map(|((h, g), f)| h - g - f)
        .collect();
    if let Some(i) = x.iter().position(|p| !p.constant_term().is_zero_value()) {
        return Err(Error::Equilibrium(format!(
            "target field component {} is {} at the origin; place both equilibria at 0",
            i + 1,
            x[i].constant_term()
        )));
    }
    Ok(TargetData {
        x,
        pullback_vtilde: pullback,
    })
}

/// Largest mismatches seen while pushing an open-loop trajectory through
/// the quotient map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryProjectionCheck {
    /// `|d/dt x[..n] - G(x[..n], psi(x, u))|` over all samples.
    pub max_rate_mismatch: f64,
    /// `|y(t) - x[..n](t)|` with `y` integrated from the quotient dynamics.
    pub max_state_deviation: f64,
}

/// Integrates the original system under the open-loop input `control(t)`
/// alongside the quotient system driven by `psi(x(t), u(t))`, and compares
/// the projected states and rates at every step.
pub fn check_projected_trajectory<U>(
    sys: &ControlAffineSystem,
    qsys: &QuotientSystem,
    morph: &QuotientMorphism,
    control: U,
    x0: &[f64],
    h: f64,
    horizon: f64,
) -> Result<TrajectoryProjectionCheck>
where
    U: Fn(f64) -> Vec<f64>,
{
    let m = sys.m();
    let n = qsys.n();
    let mut z0 = x0.to_vec();
    z0.extend_from_slice(&x0[..n]);
    let rhs = |t: f64, z: &[f64]| -> Vec<f64> {
        let (x, y) = z.split_at(m);
        let u = control(t);
        let mut dz = sys.eval(x, &u);
        dz.extend(qsys.eval(y, &morph.eval_input(x, &u)));
        dz
    };
    let sol = ode::integrate(rhs, &z0, h, horizon)?;
    let mut out = TrajectoryProjectionCheck {
        max_rate_mismatch: 0.0,
        max_state_deviation: 0.0,
    };
    for (t, z) in sol.times.iter().zip(&sol.states) {
        let (x, y) = z.split_at(m);
        let u = control(*t);
        let xdot = sys.eval(x, &u);
        let ydot = qsys.eval(&x[..n], &morph.eval_input(x, &u));
        for q in 0..n {
            out.max_rate_mismatch = out.max_rate_mismatch.max((xdot[q] - ydot[q]).abs());
            out.max_state_deviation = out.max_state_deviation.max((y[q] - x[q]).abs());
        }
    }
    Ok(out)
}
