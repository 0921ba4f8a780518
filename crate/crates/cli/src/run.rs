//! The staged pipeline behind every subcommand.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use liftlyap_core::integrability::{self, FailedCondition, IntegrabilityReport};
use liftlyap_core::lift::{self, SeedPolicy, DEFAULT_ORDER};
use liftlyap_core::poly::{rat, MultiIndex, Poly};
use liftlyap_core::problem::LiftProblem;
use liftlyap_core::synth::{self, FeedbackMode, TrajectoryRecord};
use liftlyap_core::{sysmodel, Error};
use serde_json::json;

use crate::report::{
    Coefficient, EffectiveOptions, FeedbackSummary, LiftSummary, QuotientSummary, Report, SimulationSummary,
    SpecEcho, Stage, VerdictKind, VerdictReport,
};
use crate::spec::{load_spec, ProblemSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_LIFTABLE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

pub const DEFAULT_H: f64 = 0.01;
pub const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    Validate,
    Quotient,
    Integrability,
    Lift,
    Synthesize,
    Simulate,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Quotient => "quotient",
            Command::Integrability => "integrability",
            Command::Lift => "lift",
            Command::Synthesize => "synthesize",
            Command::Simulate => "simulate",
            Command::Report => "report",
        }
    }
}

/// Command-line overrides of the options stored in the problem file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub order: Option<u32>,
    pub grid: Option<usize>,
    pub h: Option<f64>,
    pub horizon: Option<f64>,
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub exit_code: i32,
    pub trajectories: Vec<TrajectoryRecord>,
}

struct Pipeline {
    command: Command,
    report: Report,
    trajectories: Vec<TrajectoryRecord>,
}

impl Pipeline {
    fn finish(self, exit_code: i32) -> Outcome {
        Outcome {
            report: self.report,
            exit_code,
            trajectories: self.trajectories,
        }
    }

    fn fail_input(mut self, err: impl std::fmt::Display) -> Outcome {
        self.report.error = Some(err.to_string());
        self.finish(EXIT_INPUT)
    }

    fn not_liftable(mut self, reason: &str, stage: Stage, witness: serde_json::Value) -> Outcome {
        self.report.verdict = Some(VerdictReport {
            kind: VerdictKind::NotLiftable,
            reason: Some(reason.to_string()),
            stage: Some(stage),
            witness: Some(witness),
        });
        self.finish(EXIT_NOT_LIFTABLE)
    }

    fn validation_failed(mut self, reason: String, stage: Stage, witness: serde_json::Value) -> Outcome {
        self.report.verdict = Some(VerdictReport {
            kind: VerdictKind::LiftedButValidationFailed,
            reason: Some(reason),
            stage: Some(stage),
            witness: Some(witness),
        });
        self.finish(EXIT_VALIDATION)
    }

    fn verified(mut self) -> Outcome {
        self.report.verdict = Some(VerdictReport {
            kind: VerdictKind::LiftableAndVerified,
            reason: None,
            stage: None,
            witness: None,
        });
        self.finish(EXIT_OK)
    }

    /// Marks `stage` complete; true when the command stops here.
    fn done(&mut self, stage: Stage, last: Command) -> bool {
        self.report.completed_stage = Some(stage);
        self.command <= last
    }
}

fn monomial_name(k: &MultiIndex, names: &[&str]) -> String {
    Poly::monomial(k.clone(), rat(1, 1)).format_with(names)
}

fn fmt_all(v: &[Poly], names: &[&str]) -> Vec<String> {
    v.iter().map(|p| p.format_with(names)).collect()
}

fn integrability_witness(rep: &IntegrabilityReport, reason: FailedCondition) -> serde_json::Value {
    match reason {
        FailedCondition::Flatness => json!(rep.flatness.nonzero.first()),
        FailedCondition::ConditionA => match rep.condition_a.witness_point.as_ref() {
            Some(p) => json!({ "entry": rep.condition_a.nonzero.first(), "point": p }),
            None => json!(rep.condition_a.nonzero.first()),
        },
        FailedCondition::ConditionB => match rep.condition_b.witness_point.as_ref() {
            Some(p) => json!({ "entry": rep.condition_b.nonzero.first(), "point": p }),
            None => json!(rep.condition_b.nonzero.first()),
        },
        FailedCondition::Consistency => json!({
            "point": rep.consistency.worst_point,
            "gap": rep.consistency.worst_gap,
        }),
    }
}

fn reason_name(reason: FailedCondition) -> &'static str {
    match reason {
        FailedCondition::Flatness => "flatness",
        FailedCondition::ConditionA => "condition_a",
        FailedCondition::ConditionB => "condition_b",
        FailedCondition::Consistency => "consistency",
    }
}

pub fn run_path(command: Command, path: &Path, opts: &RunOptions) -> Outcome {
    match load_spec(path) {
        Ok(spec) => run(command, &spec, opts),
        Err(e) => {
            let mut report = Report::new(command.name());
            report.error = Some(e.to_string());
            Outcome {
                report,
                exit_code: EXIT_INPUT,
                trajectories: Vec::new(),
            }
        }
    }
}

pub fn run(command: Command, spec: &ProblemSpec, opts: &RunOptions) -> Outcome {
    let mut p = Pipeline {
        command,
        report: Report::new(command.name()),
        trajectories: Vec::new(),
    };
    let m = spec.dims.m;
    let effective = EffectiveOptions {
        order: opts.order.or(spec.options.order).unwrap_or(DEFAULT_ORDER),
        grid: opts
            .grid
            .or(spec.options.grid)
            .unwrap_or(liftlyap_core::grid::DEFAULT_POINTS_PER_AXIS),
        h: opts.h.or(spec.options.h).unwrap_or(DEFAULT_H),
        horizon: opts.horizon.or(spec.options.horizon).unwrap_or(DEFAULT_HORIZON),
        initial_states: spec.options.initial_states.clone().unwrap_or_else(|| vec![vec![1.0; m]]),
    };
    p.report.spec = Some(SpecEcho {
        name: spec.name.clone(),
        dims: spec.dims.clone(),
        states: spec.states.clone(),
        quotient_states: spec.quotient_states.clone(),
        options: effective.clone(),
    });

    // load
    let mut input = match spec.to_input() {
        Ok(i) => i,
        Err(e) => return p.fail_input(e),
    };
    if effective.grid < 2 {
        return p.fail_input("grid needs at least 2 points per axis");
    }
    if let Err(e) = liftlyap_core::ode::step_count(effective.h, effective.horizon) {
        return p.fail_input(e);
    }
    input.points_per_axis = effective.grid;
    if p.done(Stage::Load, Command::Validate) {
        return p.finish(EXIT_OK);
    }

    // quotient
    let names: Vec<&str> = spec.states.iter().map(String::as_str).collect();
    let input_names: Vec<String> = if spec.inputs.is_empty() {
        (1..=spec.dims.r).map(|j| format!("u{j}")).collect()
    } else {
        spec.inputs.clone()
    };
    let mut xu_names = names.clone();
    xu_names.extend(input_names.iter().map(String::as_str));
    let residuals = match sysmodel::verify_quotient(&input.system, &input.quotient, &input.morphism) {
        Ok(r) => r,
        Err(e) => return p.fail_input(e),
    };
    let mismatch = residuals.ensure_zero(&xu_names).err();
    p.report.quotient = Some(QuotientSummary {
        valid: mismatch.is_none(),
        residuals: fmt_all(&residuals.residuals, &xu_names),
        witness: mismatch.as_ref().map(ToString::to_string),
    });
    if let Some(e) = mismatch {
        return p.fail_input(e);
    }
    if p.done(Stage::Quotient, Command::Quotient) {
        return p.finish(EXIT_OK);
    }

    // loader-level checks: CLF, ranks, complement, equilibria
    let problem = match LiftProblem::new(input) {
        Ok(pr) => pr,
        Err(e) => return p.fail_input(e),
    };
    p.report.completed_stage = Some(Stage::Problem);

    // integrability
    let integ = integrability::full_check(&problem);
    let failed = match &integ.verdict {
        integrability::Verdict::Liftable => None,
        integrability::Verdict::NotLiftable { reasons } => Some(reasons[0]),
    };
    p.report.integrability = Some(integ.clone());
    if let Some(reason) = failed {
        let reasons: Vec<&str> = match &integ.verdict {
            integrability::Verdict::NotLiftable { reasons } => reasons.iter().map(|r| reason_name(*r)).collect(),
            integrability::Verdict::Liftable => Vec::new(),
        };
        let witness = integrability_witness(&integ, reason);
        return p.not_liftable(&reasons.join(", "), Stage::Integrability, witness);
    }
    if p.done(Stage::Integrability, Command::Integrability) {
        return p.finish(EXIT_OK);
    }

    // lift
    let jet = match lift::lift(&problem.residual, effective.order, SeedPolicy::VerticalQuadratic) {
        Ok(j) => j,
        Err(Error::Infeasible(msg)) => {
            return p.not_liftable("lift_infeasible", Stage::Lift, json!({ "equation": msg }));
        }
        Err(e) => return p.fail_input(e),
    };
    let vstar = match lift::assemble_vstar(&problem.target.pullback_vtilde, &jet) {
        Ok(v) => v,
        Err(e) => return p.fail_input(e),
    };
    p.report.lift = Some(LiftSummary {
        order: jet.order,
        v: jet.v.format_with(&names),
        coefficients: jet
            .coeffs
            .iter()
            .map(|(k, c)| Coefficient {
                monomial: monomial_name(k, &names),
                exponents: k.exponents().to_vec(),
                value: c.to_string(),
            })
            .collect(),
        free: jet.free.iter().map(|k| monomial_name(k, &names)).collect(),
        seeded: jet.seeded.iter().map(|k| monomial_name(k, &names)).collect(),
        forced: jet.forced,
        residual_degree_checked: jet.residual_degree_checked,
        vstar: vstar.v.format_with(&names),
        definiteness: vstar.definiteness.clone(),
    });
    if !vstar.definiteness.positive_definite {
        let d = &vstar.definiteness;
        return p.not_liftable(
            "definiteness",
            Stage::Lift,
            json!({ "direction": d.witness_direction, "radius": d.witness_radius }),
        );
    }
    if p.done(Stage::Lift, Command::Lift) {
        return p.finish(EXIT_OK);
    }

    // synthesize
    let rhs = synth::target_rhs(&problem.target.x, &jet.v);
    let target = synth::target_field(&problem.system, &problem.target.x, &jet.v);
    let fb = match synth::solve_feedback(&problem.system, &rhs, &problem.grid, FeedbackMode::Auto) {
        Ok(f) => f,
        Err(e @ Error::FeedbackResidual { .. }) => {
            let witness = match &e {
                Error::FeedbackResidual { point, residual } => json!({ "point": point, "residual": residual }),
                _ => unreachable!(),
            };
            return p.validation_failed(e.to_string(), Stage::Synthesize, witness);
        }
        Err(e) => return p.fail_input(e),
    };
    let cl = synth::closed_loop_field(&problem.system, &fb);
    let derivative = synth::lie_derivative(&vstar.v, &target);
    let empty = TrajectoryRecord {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        vstar: Vec::new(),
        h: effective.h,
        horizon: effective.horizon,
    };
    let grid_check = match synth::verify_lyapunov_decrease(&empty, &vstar.v, |x| cl.eval(x), &problem.grid) {
        Ok(r) => r,
        Err(e) => return p.fail_input(e),
    };
    let closed_loop = cl.symbolic_field();
    let matches_target = closed_loop.as_ref().map(|_| synth::matches_target(&cl, &target));
    p.report.feedback = Some(FeedbackSummary {
        mode: if fb.symbolic.is_some() { "symbolic" } else { "pointwise" }.to_string(),
        u: fb.symbolic.as_ref().map(|u| fmt_all(u, &names)),
        closed_loop: closed_loop.as_ref().map(|f| fmt_all(f, &names)),
        matches_target,
        target_field: fmt_all(&target, &names),
        vstar_derivative: derivative.format_with(&names),
        residual_norm: fb.residual_norm,
        worst_residual_point: fb.worst_point.clone(),
        max_grid_derivative: grid_check.max_grid_derivative,
        worst_grid_point: grid_check.worst_grid_point.clone(),
    });
    if matches_target == Some(false) {
        return p.validation_failed(
            "closed loop differs from the target field".into(),
            Stage::Synthesize,
            json!(null),
        );
    }
    if !grid_check.derivative_negative_on_grid {
        return p.validation_failed(
            "dV*/dt is not negative on the grid".into(),
            Stage::Synthesize,
            json!({ "point": grid_check.worst_grid_point, "value": grid_check.max_grid_derivative }),
        );
    }
    if p.done(Stage::Synthesize, Command::Synthesize) {
        return p.verified();
    }

    // simulate
    if let Some(dir) = &opts.trajectories {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return p.fail_input(format!("cannot create {}: {e}", dir.display()));
        }
    }
    for (k, x0) in effective.initial_states.iter().enumerate() {
        let traj = match synth::simulate_rk4(&cl, &vstar.v, x0, effective.h, effective.horizon) {
            Ok(t) => t,
            Err(e @ Error::Diverged { .. }) => {
                return p.validation_failed(e.to_string(), Stage::Simulate, json!({ "x0": x0 }));
            }
            Err(e) => return p.fail_input(e),
        };
        let decrease = match synth::verify_lyapunov_decrease(&traj, &vstar.v, |x| cl.eval(x), &problem.grid) {
            Ok(d) => d,
            Err(e) => return p.fail_input(e),
        };
        let csv = match &opts.trajectories {
            Some(dir) => {
                let path = dir.join(format!("trajectory_{}.csv", k + 1));
                let written = File::create(&path).and_then(|f| traj.write_csv(BufWriter::new(f)));
                if let Err(e) = written {
                    return p.fail_input(format!("cannot write {}: {e}", path.display()));
                }
                Some(path.display().to_string())
            }
            None => None,
        };
        let passed = decrease.passed;
        let step = decrease.first_violation_step;
        p.report.simulations.push(SimulationSummary {
            x0: x0.clone(),
            steps: traj.times.len().saturating_sub(1),
            h: traj.h,
            horizon: traj.horizon,
            final_state: traj.final_state().to_vec(),
            final_norm: traj.final_norm(),
            final_vstar: traj.vstar.last().copied().unwrap_or(0.0),
            decrease,
            csv,
        });
        p.trajectories.push(traj);
        if !passed {
            return p.validation_failed(
                "V* does not decrease along the simulated trajectory".into(),
                Stage::Simulate,
                json!({ "x0": x0, "step": step }),
            );
        }
    }
    p.report.completed_stage = Some(Stage::Simulate);
    p.verified()
}
