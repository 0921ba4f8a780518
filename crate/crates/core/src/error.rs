use thiserror::Error;

use crate::poly::{ParseError, PolyError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("distribution has rank {rank} < {expected} at {point:?}")]
    RankDeficient {
        rank: usize,
        expected: usize,
        point: Vec<f64>,
    },
    #[error("no coordinate complement with constant determinant found; supply a D frame")]
    NoComplement,
    #[error("[C|D] is singular at {point:?}")]
    SingularComplement { point: Vec<f64> },
    #[error("a symbolic complement projection is required for {0}")]
    NeedsSymbolicProjection(&'static str),
    #[error("quotient residual {component} has nonzero monomial {monomial} with coefficient {coeff}")]
    QuotientMismatch {
        component: usize,
        monomial: String,
        coeff: String,
    },
    #[error("quotient closed loop is not negative definite: W = {w_value} at {point:?}")]
    ClfRejected { point: Vec<f64>, w_value: f64 },
    #[error("equilibrium mismatch: {0}")]
    Equilibrium(String),
    #[error("jet equations are inconsistent ({0})")]
    Infeasible(String),
    #[error("first-order jet is inconsistent at {point:?} (residual {residual:e})")]
    InconsistentJet { point: Vec<f64>, residual: f64 },
    #[error("second-order jet is not symmetric at ({i}, {j})")]
    AsymmetricJet { i: usize, j: usize },
    #[error("feedback residual {residual:e} exceeds tolerance at {point:?}")]
    FeedbackResidual { point: Vec<f64>, residual: f64 },
    #[error("state norm {norm:e} exceeded the divergence guard at t = {time}")]
    Diverged { time: f64, norm: f64 },
}
