//! Machine-readable report and its human summary.

use liftlyap_core::integrability::IntegrabilityReport;
use liftlyap_core::lift::Definiteness;
use liftlyap_core::synth::DecreaseReport;
use serde::Serialize;

use crate::spec::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Quotient,
    Problem,
    Integrability,
    Lift,
    Synthesize,
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveOptions {
    pub order: u32,
    pub grid: usize,
    pub h: f64,
    pub horizon: f64,
    pub initial_states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecEcho {
    pub name: String,
    pub dims: Dims,
    pub states: Vec<String>,
    pub quotient_states: Vec<String>,
    pub options: EffectiveOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotientSummary {
    pub valid: bool,
    /// `R_q(x, u)` for each quotient coordinate.
    pub residuals: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub monomial: String,
    pub exponents: Vec<u32>,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftSummary {
    pub order: u32,
    pub v: String,
    pub coefficients: Vec<Coefficient>,
    pub free: Vec<String>,
    pub seeded: Vec<String>,
    pub forced: usize,
    pub residual_degree_checked: u32,
    pub vstar: String,
    pub definiteness: Definiteness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackSummary {
    /// `symbolic` or `pointwise`.
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_loop: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches_target: Option<bool>,
    pub target_field: Vec<String>,
    /// Lie derivative of `V*` along the target field.
    pub vstar_derivative: String,
    pub residual_norm: f64,
    pub worst_residual_point: Vec<f64>,
    pub max_grid_derivative: f64,
    pub worst_grid_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub x0: Vec<f64>,
    pub steps: usize,
    pub h: f64,
    pub horizon: f64,
    pub final_state: Vec<f64>,
    pub final_norm: f64,
    pub final_vstar: f64,
    pub decrease: DecreaseReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictKind {
    LiftableAndVerified,
    NotLiftable,
    LiftedButValidationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictReport {
    pub kind: VerdictKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quotient: Option<QuotientSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrability: Option<IntegrabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lift: Option<LiftSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub simulations: Vec<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completed_stage: Option<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            spec: None,
            quotient: None,
            integrability: None,
            lift: None,
            feedback: None,
            simulations: Vec::new(),
            completed_stage: None,
            verdict: None,
            error: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// A few lines for a terminal.
    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        if let Some(spec) = &self.spec {
            let name = if spec.name.is_empty() { "problem" } else { &spec.name };
            let d = &spec.dims;
            lines.push(format!("{name}: m={} n={} r={} s={}", d.m, d.n, d.r, d.s));
        }
        if let Some(q) = &self.quotient {
            lines.push(format!("quotient: {}", if q.valid { "ok" } else { "mismatch" }));
        }
        if let Some(i) = &self.integrability {
            let mark = |b: bool| if b { "ok" } else { "FAIL" };
            lines.push(format!(
                "integrability: flat {}, A {}, B {}, consistent {}; symbol dims ({}, {}){}",
                mark(i.flatness.flat),
                mark(i.condition_a.holds),
                mark(i.condition_b.holds),
                mark(i.consistency.consistent),
                i.symbol.dim_g1,
                i.symbol.dim_g2,
                if i.numeric_only { " [numeric, not exact]" } else { "" }
            ));
        }
        if let Some(l) = &self.lift {
            lines.push(format!("V = {}   V* = {}", l.v, l.vstar));
        }
        if let Some(f) = &self.feedback {
            match &f.u {
                Some(u) => lines.push(format!("u = ({})", u.join(", "))),
                None => lines.push(format!("u: pointwise least-norm (residual {:e})", f.residual_norm)),
            }
            lines.push(format!("dV*/dt along target = {}", f.vstar_derivative));
        }
        for s in &self.simulations {
            lines.push(format!(
                "simulation from {:?}: |x(T)| = {:e}, decrease {}",
                s.x0,
                s.final_norm,
                if s.decrease.passed { "ok" } else { "FAIL" }
            ));
        }
        if let Some(e) = &self.error {
            lines.push(format!("error: {e}"));
        }
        match &self.verdict {
            Some(v) => {
                let kind = serde_json::to_value(v.kind).expect("serializable");
                let mut line = format!("verdict: {}", kind.as_str().unwrap_or_default());
                if let Some(r) = &v.reason {
                    line.push_str(&format!(" ({r})"));
                }
                lines.push(line);
            }
            None => {
                if let Some(stage) = self.completed_stage {
                    let s = serde_json::to_value(stage).expect("serializable");
                    lines.push(format!("completed stage: {}", s.as_str().unwrap_or_default()));
                }
            }
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
