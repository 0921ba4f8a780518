//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any
//! failure.

use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::Instant;

use liftlyap::report::VerdictKind;
use liftlyap::run::{run, Command, RunOptions};
use liftlyap::spec::load_spec;
use liftlyap_core::integrability::{self, condition_a_entry, condition_b_entry, CurvatureMap};
use liftlyap_core::ode;
use liftlyap_core::poly::{parse_poly, rat, rat_to_f64, MultiIndex, Poly, PolyMatrix, Rational};
use liftlyap_core::problem::LiftProblem;
use liftlyap_core::{lift, synth, sysmodel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn problem(name: &str) -> LiftProblem {
    let spec = load_spec(&fixture(name)).expect("fixture loads");
    LiftProblem::new(spec.to_input().expect("fixture parses")).expect("fixture is a valid problem")
}

fn exit_code(command: &str, name: &str) -> i32 {
    let out = Process::new(env!("CARGO_BIN_EXE_liftlyap"))
        .args([command, "--spec"])
        .arg(fixture(name))
        .output()
        .expect("binary runs");
    out.status.code().unwrap_or(-1)
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn p(text: &str, vars: &[&str]) -> Poly {
    parse_poly(text, vars).expect("literal parses")
}

fn end_to_end_ps() -> Check {
    let xs = ["x1", "x2"];
    let pr = problem("ex_ps.json");
    let jet = lift::lift(&pr.residual, 6, lift::SeedPolicy::VerticalQuadratic).map_err(|e| e.to_string())?;
    let half = MultiIndex::new(vec![0, 2]);
    ensure(jet.coeffs.len() == 1, format!("V has {} nonzero coefficients", jet.coeffs.len()))?;
    ensure(jet.coeffs.get(&half) == Some(&rat(1, 2)), format!("V = {}", jet.v.format_with(&xs)))?;

    let vstar = lift::assemble_vstar(&pr.target.pullback_vtilde, &jet).map_err(|e| e.to_string())?;
    let rhs = synth::target_rhs(&pr.target.x, &jet.v);
    let fb = synth::solve_feedback(&pr.system, &rhs, &pr.grid, synth::FeedbackMode::Auto).map_err(|e| e.to_string())?;
    let u = fb.symbolic.clone().ok_or("feedback is not symbolic")?;
    ensure(u == vec![p("-2*x1", &xs)], format!("u = {}", u[0].format_with(&xs)))?;
    let cl = synth::closed_loop_field(&pr.system, &fb);
    let field = cl.symbolic_field().ok_or("closed loop is not symbolic")?;
    let dv = synth::lie_derivative(&vstar.v, &field);
    ensure(dv == p("-2*x1^2 - x2^2", &xs), format!("dV*/dt = {}", dv.format_with(&xs)))?;

    let traj = synth::simulate_rk4(&cl, &vstar.v, &[1.0, 1.0], 0.01, 10.0).map_err(|e| e.to_string())?;
    let norm = traj.final_norm();
    ensure(norm <= 1e-3, format!("|x(T)| = {norm:e}"))?;
    ensure(
        traj.vstar.windows(2).all(|w| w[1] < w[0]),
        "V* samples are not strictly decreasing",
    )?;

    let spec = load_spec(&fixture("ex_ps.json")).map_err(|e| e.to_string())?;
    let out = run(Command::Report, &spec, &RunOptions::default());
    let kind = out.report.verdict.as_ref().map(|v| v.kind);
    ensure(kind == Some(VerdictKind::LiftableAndVerified), format!("verdict {kind:?}"))?;
    let code = exit_code("report", "ex_ps.json");
    ensure(code == 0, format!("exit code {code}"))?;
    Ok(format!("V = x2^2/2, u = -2*x1, |x(10)| = {norm:.2e}"))
}

fn negative_di() -> Check {
    let pr = problem("ex_di.json");
    let c = integrability::consistency_at(&pr.residual, &[1.0, 0.0]);
    ensure(!c.consistent, "jet equations consistent at (1, 0)")?;
    ensure((c.gap - 2.0).abs() <= 1e-9, format!("gap {}", c.gap))?;
    let spec = load_spec(&fixture("ex_di.json")).map_err(|e| e.to_string())?;
    let out = run(Command::Report, &spec, &RunOptions::default());
    ensure(out.report.lift.is_none(), "a lift was attempted")?;
    ensure(out.exit_code == 2, format!("pipeline exit {}", out.exit_code))?;
    let code = exit_code("report", "ex_di.json");
    ensure(code == 2, format!("exit code {code}"))?;
    Ok(format!("gap at (1, 0) = {}, exit 2", c.gap))
}

fn negative_curv() -> Check {
    let spec = load_spec(&fixture("ex_curv.json")).map_err(|e| e.to_string())?;
    let input = spec.to_input().map_err(|e| e.to_string())?;
    let flat = integrability::check_flatness(&input.connection, &["x1", "x2", "x3"]);
    ensure(!flat.flat, "connection reported flat")?;
    let comps = input.connection.curvature_components();
    let f312 = comps
        .iter()
        .find(|(k, _)| k.l == 2 && k.q1 == 0 && k.q2 == 1)
        .map(|(_, v)| v.clone())
        .ok_or("F^3_12 missing")?;
    ensure(f312 == Poly::from_int(3, -1), format!("F^3_12 = {}", f312.format_with(&["x1", "x2", "x3"])))?;
    let code = exit_code("integrability", "ex_curv.json");
    ensure(code == 2, format!("exit code {code}"))?;
    Ok("F^3_12 = -1, exit 2".into())
}

fn condition_values() -> Check {
    let xs = ["x1", "x2", "x3"];
    let rows = |r: [[&str; 3]; 2]| {
        PolyMatrix::from_rows(3, 3, r.iter().map(|row| row.iter().map(|t| p(t, &xs)).collect()).collect())
            .expect("2x3 matrix")
    };
    let pd1 = rows([["1", "0", "0"], ["0", "1", "x1"]]);
    let a = condition_a_entry(&pd1, 0, 1, 2);
    ensure(a == Poly::one(3), format!("A_3^12 = {}", a.format_with(&xs)))?;
    let pd2 = rows([["1", "0", "0"], ["0", "1", "0"]]);
    let x = vec![p("x2", &xs), Poly::zero(3), Poly::zero(3)];
    let b = condition_b_entry(&pd2, &x, 0, 1);
    ensure(b == Poly::one(3), format!("B^12 = {}", b.format_with(&xs)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let m = rng.random_range(2..=5usize);
        let k = rng.random_range(2..=m);
        let pd = PolyMatrix::from_rows(
            m,
            m,
            (0..k)
                .map(|_| (0..m).map(|_| Poly::from_int(m, rng.random_range(-5..=5))).collect())
                .collect(),
        )
        .expect("constant matrix");
        for (idx, v) in integrability::condition_a(&pd) {
            ensure(v.is_zero(), format!("constant P_D gives A{idx:?} = {v:?}"))?;
        }
    }
    for name in ["ex_ps.json", "ex_fa.json", "ex_di.json"] {
        let pr = problem(name);
        let pd = pr.residual.p_d().symbolic().ok_or("fixture projection is not symbolic")?;
        ensure(integrability::condition_a(pd).iter().all(|(_, v)| v.is_zero()), format!("{name}: A != 0"))?;
        ensure(
            integrability::condition_b(pd, pr.residual.x()).iter().all(|(_, v)| v.is_zero()),
            format!("{name}: B != 0"),
        )?;
    }
    Ok("A_3^12 = 1, B^12 = 1, constant P_D gives A = 0".into())
}

fn random_rational(rng: &mut ChaCha8Rng, den: i64) -> Rational {
    rat(rng.random_range(-den..=den), den)
}

fn curvature_map_vanishes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut evaluated = 0;
    for name in ["ex_ps.json", "ex_fa.json"] {
        let pr = problem(name);
        let rs = &pr.residual;
        let m = rs.m();
        let map = CurvatureMap::new(rs).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let x: Vec<Rational> = (0..m).map(|_| random_rational(&mut rng, 16)).collect();
            let xf: Vec<f64> = x.iter().map(rat_to_f64).collect();
            for _ in 0..100 {
                let free: Vec<Rational> = (0..m).map(|_| random_rational(&mut rng, 8)).collect();
                let jet = integrability::exact_jet_at(rs, &x, |i| free[i].clone())
                    .map_err(|e| e.to_string())?
                    .map_err(|_| format!("{name}: jet equations inconsistent at {xf:?}"))?;
                let exact = map.eval_exact(&x, &jet).map_err(|e| e.to_string())?;
                ensure(exact.is_zero(), format!("{name}: exact kappa nonzero at {xf:?}"))?;
                let v1: Vec<f64> = jet.iter().map(rat_to_f64).collect();
                let val = integrability::curvature_map_eval(rs, &xf, &v1).map_err(|e| e.to_string())?;
                ensure(val.max_abs() == 0.0, format!("{name}: kappa = {:e} at {xf:?}", val.max_abs()))?;
                evaluated += 1;
            }
        }
    }
    Ok(format!("{evaluated} consistent jets, kappa = 0 exactly"))
}

fn random_nested(rng: &mut ChaCha8Rng, m: usize, s: usize, e_dim: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let e = DMatrix::from_fn(m, e_dim, |_, _| rng.random_range(-1.0..1.0));
    let mix = DMatrix::from_fn(e_dim, s, |_, _| rng.random_range(-1.0..1.0));
    let f = &e * mix;
    (e, f)
}

fn cartan_count() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut permutations = 0;
    for trial in 0..50 {
        let m = rng.random_range(1..=5usize);
        let e_dim = rng.random_range(1..=m);
        let s = rng.random_range(1..=e_dim);
        let (e, f) = random_nested(&mut rng, m, s, e_dim);
        let dim = integrability::sym2_intersection_dim(&e, &f);
        ensure(
            dim == s * (s + 1) / 2,
            format!("trial {trial}: m={m} s={s}: dim {dim} != {}", s * (s + 1) / 2),
        )?;
        let g1 = integrability::intersection_basis(&e, &f);
        ensure(g1.ncols() == s, format!("trial {trial}: dim G1 {} != {s}", g1.ncols()))?;
        match integrability::find_quasi_regular(&g1, dim) {
            Some(integrability::BasisChoice::Permutation(_)) => permutations += 1,
            Some(_) => {}
            None => return Err(format!("trial {trial}: no quasi-regular basis")),
        }
    }
    Ok(format!("50 nested pairs, {permutations} coordinate permutations"))
}

fn quotient_trajectories() -> Check {
    let pr = problem("ex_ps.json");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let control = move |t: f64| vec![coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)];
        let x0 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let check = sysmodel::check_projected_trajectory(&pr.system, &pr.quotient, &pr.morphism, control, &x0, 1e-3, 2.0)
            .map_err(|e| e.to_string())?;
        worst = worst.max(check.max_rate_mismatch).max(check.max_state_deviation);
    }
    ensure(worst <= 1e-6, format!("worst deviation {worst:e}"))?;
    Ok(format!("10 open-loop inputs, worst deviation {worst:.2e}"))
}

fn random_poly(rng: &mut ChaCha8Rng, m: usize) -> Poly {
    let terms: Vec<(MultiIndex, Rational)> = (0..6)
        .map(|_| {
            let idx = MultiIndex::new((0..m).map(|_| rng.random_range(0..=3)).collect());
            (idx, rat(rng.random_range(-9..=9), rng.random_range(1..=4)))
        })
        .collect();
    Poly::from_terms(m, terms)
}

fn numerics_hygiene() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let m = rng.random_range(1..=3usize);
        let f = random_poly(&mut rng, m);
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        for i in 0..m {
            let d = f.differentiate(i).map_err(|e| e.to_string())?.evaluate(&x).map_err(|e| e.to_string())?;
            let h = 1e-5;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f.evaluate(&xp).unwrap() - f.evaluate(&xm).unwrap()) / (2.0 * h);
            let rel = (fd - d).abs() / d.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-7, format!("finite-difference mismatch {worst:e}"))?;

    let err = |h: f64| {
        let sol = ode::integrate(|_, x: &[f64]| vec![-x[0]], &[1.0], h, 1.0).expect("integrates");
        (sol.states.last().unwrap()[0] - (-1.0f64).exp()).abs()
    };
    let ratio = err(0.1) / err(0.05);
    ensure((12.0..=20.0).contains(&ratio), format!("RK4 ratio {ratio}"))?;
    Ok(format!("FD rel error {worst:.1e}, RK4 ratio {ratio:.2}"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("end-to-end planar shift", end_to_end_ps),
        ("double integrator is not liftable", negative_di),
        ("curved connection is not liftable", negative_curv),
        ("condition A/B unit values", condition_values),
        ("curvature map vanishes on consistent jets", curvature_map_vanishes),
        ("nested subspace symbol count", cartan_count),
        ("projected trajectories follow the quotient", quotient_trajectories),
        ("numerics hygiene", numerics_hygiene),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = f();
        let ms = start.elapsed().as_millis();
        match res {
            Ok(detail) => println!("PASS {} {name}: {detail} ({ms} ms)", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} ({ms} ms)", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
