//! Feedback from the target field, closed-loop simulation and Lyapunov
//! decrease checks.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::CheckGrid;
use crate::numeric::{self, RANK_TOL};
use crate::ode;
use crate::poly::{self, Poly, PolyMatrix};
use crate::sysmodel::ControlAffineSystem;

/// Pointwise residual bound for `F(x) u(x) = rhs(x)`.
pub const FEEDBACK_TOL: f64 = 1e-8;
/// Below this value of `V*` the trajectory is treated as converged.
pub const CONVERGED_VSTAR: f64 = 1e-12;

/// `X - grad V`, the part of the target field the controls must produce.
pub fn target_rhs(x: &[Poly], v: &Poly) -> Vec<Poly> {
    x.iter().zip(v.gradient()).map(|(xi, g)| xi - &g).collect()
}

/// `X + f0 - grad V`.
pub fn target_field(sys: &ControlAffineSystem, x: &[Poly], v: &Poly) -> Vec<Poly> {
    target_rhs(x, v)
        .iter()
        .zip(sys.drift())
        .map(|(r, f)| r + f)
        .collect()
}

/// `sum_i dV/dx_i field_i`.
pub fn lie_derivative(v: &Poly, field: &[Poly]) -> Poly {
    poly::dot(&v.gradient(), field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Try an exact polynomial inverse first.
    Auto,
    PointwiseOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSolution {
    control: PolyMatrix,
    rhs: Vec<Poly>,
    /// Exact feedback, when one was found.
    pub symbolic: Option<Vec<Poly>>,
    /// Rows of `F` whose square block was inverted (0-based).
    pub symbolic_rows: Option<Vec<usize>>,
    /// Worst `|F u - rhs|` over the grid.
    pub residual_norm: f64,
    pub worst_point: Vec<f64>,
}

impl FeedbackSolution {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match &self.symbolic {
            Some(u) => poly::eval_vec(u, x),
            None => {
                let f = self.control.eval(x);
                let b = DVector::from_vec(poly::eval_vec(&self.rhs, x));
                numeric::least_norm_solve(&f, &b, RANK_TOL).0.iter().copied().collect()
            }
        }
    }

    /// Euclidean norm of `F(x) u(x) - rhs(x)`.
    pub fn residual_at(&self, x: &[f64]) -> f64 {
        let f = self.control.eval(x);
        let u = DVector::from_vec(self.eval(x));
        let b = DVector::from_vec(poly::eval_vec(&self.rhs, x));
        (f * u - b).norm()
    }

    pub fn r(&self) -> usize {
        self.control.cols()
    }
}

fn subsets(m: usize, r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![Vec::new()];
    }
    if r > m {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..r).rev().find(|&i| idx[i] < m - r + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn symbolic_feedback(control: &PolyMatrix, rhs: &[Poly]) -> Result<Option<(Vec<Poly>, Vec<usize>)>> {
    let m = control.rows();
    let r = control.cols();
    let all: Vec<usize> = (0..r).collect();
    for rows in subsets(m, r) {
        let block = control.select(&rows, &all);
        let Some(inv) = block.constant_det_inverse()? else {
            continue;
        };
        let sub_rhs: Vec<Poly> = rows.iter().map(|&i| rhs[i].clone()).collect();
        let u = inv.apply(&sub_rhs)?;
        let image = control.apply(&u)?;
        if image.iter().zip(rhs).all(|(a, b)| a == b) {
            return Ok(Some((u, rows)));
        }
    }
    Ok(None)
}

/// Solves `F(x) u = rhs(x)` for the feedback `u`.
pub fn solve_feedback(
    sys: &ControlAffineSystem,
    rhs: &[Poly],
    grid: &CheckGrid,
    mode: FeedbackMode,
) -> Result<FeedbackSolution> {
    let m = sys.m();
    if rhs.len() != m || rhs.iter().any(|p| p.nvars() != m) {
        return Err(Error::Shape(format!("feedback target must have {m} components in {m} variables")));
    }
    let control = sys.control_matrix();
    let found = match mode {
        FeedbackMode::Auto if sys.r() > 0 => symbolic_feedback(&control, rhs)?,
        _ => None,
    };
    let (symbolic, symbolic_rows) = match found {
        Some((u, rows)) => (Some(u), Some(rows)),
        None => (None, None),
    };
    let mut sol = FeedbackSolution {
        control,
        rhs: rhs.to_vec(),
        symbolic,
        symbolic_rows,
        residual_norm: 0.0,
        worst_point: vec![0.0; m],
    };
    for pt in grid.points() {
        let res = sol.residual_at(pt);
        if !(res <= sol.residual_norm) {
            sol.residual_norm = res;
            sol.worst_point = pt.clone();
        }
    }
    if !(sol.residual_norm <= FEEDBACK_TOL) {
        return Err(Error::FeedbackResidual {
            point: sol.worst_point.clone(),
            residual: sol.residual_norm,
        });
    }
    Ok(sol)
}

/// `f0 + sum_j u_j f_j` under a solved feedback.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    sys: &'a ControlAffineSystem,
    feedback: &'a FeedbackSolution,
}

pub fn closed_loop_field<'a>(sys: &'a ControlAffineSystem, feedback: &'a FeedbackSolution) -> ClosedLoop<'a> {
    ClosedLoop { sys, feedback }
}

impl ClosedLoop<'_> {
    pub fn control(&self, x: &[f64]) -> Vec<f64> {
        self.feedback.eval(x)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.sys.eval(x, &self.control(x))
    }

    /// The closed loop as exact polynomials, when the feedback is symbolic.
    pub fn symbolic_field(&self) -> Option<Vec<Poly>> {
        let u = self.feedback.symbolic.as_ref()?;
        let mut out = self.sys.drift().to_vec();
        for (col, uj) in self.sys.control_fields().iter().zip(u) {
            for (o, f) in out.iter_mut().zip(col) {
                *o += &(f * uj);
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub vstar: Vec<f64>,
    pub h: f64,
    pub horizon: f64,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn final_norm(&self) -> f64 {
        self.final_state().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Writes `t,x1..xm,u1..ur,Vstar` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let m = self.states.first().map_or(0, Vec::len);
        let r = self.controls.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("x{i}")));
        header.extend((1..=r).map(|j| format!("u{j}")));
        header.push("Vstar".into());
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![format!("{:.16e}", self.times[k])];
            row.extend(self.states[k].iter().map(|v| format!("{v:.16e}")));
            row.extend(self.controls[k].iter().map(|v| format!("{v:.16e}")));
            row.push(format!("{:.16e}", self.vstar[k]));
            w.write_record(&row)?;
        }
        w.flush()
    }
}

pub fn simulate_rk4(cl: &ClosedLoop<'_>, vstar: &Poly, x0: &[f64], h: f64, horizon: f64) -> Result<TrajectoryRecord> {
    let m = cl.sys.m();
    if x0.len() != m {
        return Err(Error::Shape(format!("initial state needs {m} components")));
    }
    let sol = ode::integrate(|_, x| cl.eval(x), x0, h, horizon)?;
    let controls = sol.states.iter().map(|x| cl.control(x)).collect();
    let vstar = sol
        .states
        .iter()
        .map(|x| vstar.evaluate(x))
        .collect::<std::result::Result<_, _>>()?;
    Ok(TrajectoryRecord {
        times: sol.times,
        states: sol.states,
        controls,
        vstar,
        h,
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecreaseReport {
    pub passed: bool,
    pub trajectory_decreasing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_violation_step: Option<usize>,
    pub derivative_negative_on_grid: bool,
    /// Largest `dV* . field` over the punctured grid.
    pub max_grid_derivative: f64,
    pub worst_grid_point: Vec<f64>,
}

/// Checks that `V*` strictly decreases along the recorded trajectory until
/// it falls below [`CONVERGED_VSTAR`], and that `dV* . field < 0` on the
/// grid away from the origin.
pub fn verify_lyapunov_decrease<F>(traj: &TrajectoryRecord, vstar: &Poly, field: F, grid: &CheckGrid) -> Result<DecreaseReport>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let first_violation_step = traj
        .vstar
        .windows(2)
        .position(|w| w[0] > CONVERGED_VSTAR && !(w[1] < w[0]));
    let grad = vstar.gradient();
    let mut max_d = f64::NEG_INFINITY;
    let mut worst = vec![0.0; vstar.nvars()];
    for pt in grid.punctured() {
        let g = poly::eval_vec(&grad, pt);
        let f = field(pt);
        let d: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
        if !(d <= max_d) {
            max_d = d;
            worst = pt.clone();
        }
    }
    if max_d == f64::NEG_INFINITY {
        max_d = 0.0;
    }
    let derivative_negative_on_grid = max_d < 0.0 || grid.punctured().next().is_none();
    let trajectory_decreasing = first_violation_step.is_none();
    Ok(DecreaseReport {
        passed: trajectory_decreasing && derivative_negative_on_grid,
        trajectory_decreasing,
        first_violation_step,
        derivative_negative_on_grid,
        max_grid_derivative: max_d,
        worst_grid_point: worst,
    })
}

/// True when a symbolic closed loop equals the target field exactly.
pub fn matches_target(cl: &ClosedLoop<'_>, target: &[Poly]) -> bool {
    cl.symbolic_field()
        .is_some_and(|f| f.iter().zip(target).all(|(a, b)| (a - b).is_zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_poly;

    fn p2(s: &str) -> Poly {
        parse_poly(s, &["x1", "x2"]).unwrap()
    }

    fn ps_sys() -> ControlAffineSystem {
        ControlAffineSystem::new(vec![p2("0"), p2("-x2")], vec![vec![p2("1"), p2("0")]]).unwrap()
    }

    fn fa_sys() -> ControlAffineSystem {
        ControlAffineSystem::new(
            vec![p2("0"), p2("0")],
            vec![vec![p2("1"), p2("0")], vec![p2("0"), p2("1")]],
        )
        .unwrap()
    }

    fn grid() -> CheckGrid {
        CheckGrid::lattice(2, 3)
    }

    #[test]
    fn ps_feedback_and_closed_loop() {
        let sys = ps_sys();
        let x = [p2("-2*x1"), p2("x2")];
        let v = p2("1/2*x2^2");
        let rhs = target_rhs(&x, &v);
        assert_eq!(rhs, vec![p2("-2*x1"), p2("0")]);
        let fb = solve_feedback(&sys, &rhs, &grid(), FeedbackMode::Auto).unwrap();
        assert_eq!(fb.symbolic, Some(vec![p2("-2*x1")]));
        let cl = closed_loop_field(&sys, &fb);
        let target = target_field(&sys, &x, &v);
        assert_eq!(cl.symbolic_field().unwrap(), vec![p2("-2*x1"), p2("-x2")]);
        assert!(matches_target(&cl, &target));
        let vstar = p2("1/2*x1^2 + 1/2*x2^2");
        assert_eq!(lie_derivative(&vstar, &target), p2("-2*x1^2 - x2^2"));
    }

    #[test]
    fn fa_feedback() {
        let sys = fa_sys();
        let rhs = target_rhs(&[p2("-2*x1"), p2("-x2")], &Poly::zero(2));
        let fb = solve_feedback(&sys, &rhs, &grid(), FeedbackMode::Auto).unwrap();
        assert_eq!(fb.symbolic, Some(vec![p2("-2*x1"), p2("-x2")]));
        let pointwise = solve_feedback(&sys, &rhs, &grid(), FeedbackMode::PointwiseOnly).unwrap();
        assert!(pointwise.symbolic.is_none());
        let u = pointwise.eval(&[0.5, -0.25]);
        assert!((u[0] + 1.0).abs() < 1e-12 && (u[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rhs_outside_range_is_rejected() {
        let sys = ps_sys();
        let err = solve_feedback(&sys, &[p2("0"), p2("x2")], &grid(), FeedbackMode::Auto).unwrap_err();
        assert!(matches!(err, Error::FeedbackResidual { .. }));
    }

    #[test]
    fn zero_feedback_leaves_drift() {
        let sys = ps_sys();
        let fb = solve_feedback(&sys, &[p2("0"), p2("0")], &grid(), FeedbackMode::Auto).unwrap();
        let cl = closed_loop_field(&sys, &fb);
        assert_eq!(cl.eval(&[0.3, 0.7]), vec![0.0, -0.7]);
    }

    #[test]
    fn ps_simulation_converges_and_decreases() {
        let sys = ps_sys();
        let fb = solve_feedback(&sys, &[p2("-2*x1"), p2("0")], &grid(), FeedbackMode::Auto).unwrap();
        let cl = closed_loop_field(&sys, &fb);
        let vstar = p2("1/2*x1^2 + 1/2*x2^2");
        let traj = simulate_rk4(&cl, &vstar, &[1.0, 1.0], 0.01, 10.0).unwrap();
        assert_eq!(traj.times.len(), 1001);
        assert!(traj.final_norm() <= 1e-3);
        let end = traj.final_state();
        assert!((end[0] - (-20.0f64).exp()).abs() < 1e-9);
        assert!((end[1] - (-10.0f64).exp()).abs() < 1e-9);
        let rep = verify_lyapunov_decrease(&traj, &vstar, |x| cl.eval(x), &grid()).unwrap();
        assert!(rep.passed);
        assert!((rep.max_grid_derivative + 1.0).abs() < 1e-12);

        let still = simulate_rk4(&cl, &vstar, &[0.0, 0.0], 0.01, 1.0).unwrap();
        assert!(still.states.iter().all(|s| s == &vec![0.0, 0.0]));
    }

    #[test]
    fn constant_field_fails_decrease() {
        let vstar = p2("x1^2 + x2^2");
        let traj = TrajectoryRecord {
            times: vec![0.0, 0.1, 0.2],
            states: vec![vec![1.0, 0.0]; 3],
            controls: vec![vec![]; 3],
            vstar: vec![1.0; 3],
            h: 0.1,
            horizon: 0.2,
        };
        let rep = verify_lyapunov_decrease(&traj, &vstar, |_| vec![0.0, 0.0], &grid()).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.first_violation_step, Some(0));
        assert!(!rep.derivative_negative_on_grid);
    }

    #[test]
    fn csv_layout() {
        let traj = TrajectoryRecord {
            times: vec![0.0, 0.5],
            states: vec![vec![1.0, 2.0], vec![0.5, 0.25]],
            controls: vec![vec![-2.0], vec![-1.0]],
            vstar: vec![2.5, 0.15625],
            h: 0.5,
            horizon: 0.5,
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,u1,Vstar");
        assert_eq!(
            lines[1],
            "0.0000000000000000e0,1.0000000000000000e0,2.0000000000000000e0,-2.0000000000000000e0,2.5000000000000000e0"
        );
        let parsed: Vec<f64> = lines[2].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed, vec![0.5, 0.5, 0.25, -1.0, 0.15625]);
    }

    #[test]
    fn subset_enumeration() {
        assert_eq!(subsets(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(subsets(2, 0), vec![Vec::<usize>::new()]);
        assert_eq!(subsets(4, 2).len(), 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn least_norm_is_minimal(
                x1 in -1.0f64..1.0, x2 in -1.0f64..1.0, x3 in -1.0f64..1.0,
                t in -1.0f64..1.0
            ) {
                // m = 3, r = 3 with a rank-2 control matrix
                let p = |s: &str| parse_poly(s, &["x1", "x2", "x3"]).unwrap();
                let sys = ControlAffineSystem::new(
                    vec![p("0"), p("0"), p("0")],
                    vec![
                        vec![p("1"), p("0"), p("0")],
                        vec![p("0"), p("1"), p("0")],
                        vec![p("1"), p("1"), p("0")],
                    ],
                )
                .unwrap();
                let rhs = vec![p("x1 + x2"), p("x3 - x1"), p("0")];
                let g = CheckGrid::lattice(3, 3);
                let fb = solve_feedback(&sys, &rhs, &g, FeedbackMode::Auto).unwrap();
                prop_assert!(fb.symbolic.is_none());
                let pt = [x1, x2, x3];
                let u = fb.eval(&pt);
                prop_assert!(fb.residual_at(&pt) < 1e-10);
                // null space of F is spanned by (1, 1, -1)
                let perturbed: Vec<f64> = u.iter().zip([1.0, 1.0, -1.0]).map(|(a, b)| a + t * b).collect();
                let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
                prop_assert!(norm(&perturbed) >= norm(&u) - 1e-12);
                let dot: f64 = u.iter().zip([1.0, 1.0, -1.0]).map(|(a, b)| a * b).sum();
                prop_assert!(dot.abs() < 1e-10);
            }
        }
    }
}
