//! A fully validated lifting problem: both systems, the quotient morphism,
//! the connection, the quotient CLF and the derived residual system.

use crate::error::{Error, Result};
use crate::geometry::{self, ComplementProjection, EhresmannConnection, Frame};
use crate::grid::{CheckGrid, DEFAULT_POINTS_PER_AXIS};
use crate::integrability::ResidualSystem;
use crate::poly::{Poly, PolyMatrix};
use crate::sysmodel::{
    self, ControlAffineSystem, QuotientClf, QuotientMorphism, QuotientSystem, TargetData,
};

/// Raw ingredients, before any cross-checking.
#[derive(Debug, Clone)]
pub struct ProblemInput {
    pub system: ControlAffineSystem,
    pub quotient: QuotientSystem,
    pub morphism: QuotientMorphism,
    pub connection: EhresmannConnection,
    pub vtilde: Poly,
    pub alpha: Vec<Poly>,
    pub d_frame: Option<Frame>,
    pub p_d: Option<PolyMatrix>,
    pub state_names: Vec<String>,
    pub points_per_axis: usize,
}

impl ProblemInput {
    pub fn new(
        system: ControlAffineSystem,
        quotient: QuotientSystem,
        morphism: QuotientMorphism,
        connection: EhresmannConnection,
        vtilde: Poly,
        alpha: Vec<Poly>,
    ) -> Self {
        let state_names = Poly::default_names(system.m());
        ProblemInput {
            system,
            quotient,
            morphism,
            connection,
            vtilde,
            alpha,
            d_frame: None,
            p_d: None,
            state_names,
            points_per_axis: DEFAULT_POINTS_PER_AXIS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiftProblem {
    pub system: ControlAffineSystem,
    pub quotient: QuotientSystem,
    pub morphism: QuotientMorphism,
    pub connection: EhresmannConnection,
    pub clf: QuotientClf,
    pub c_frame: Frame,
    pub d_frame: Option<Frame>,
    pub target: TargetData,
    pub residual: ResidualSystem,
    /// Sample points in `R^m`.
    pub grid: CheckGrid,
    /// Sample points in `R^n`.
    pub quotient_grid: CheckGrid,
    pub state_names: Vec<String>,
}

impl LiftProblem {
    /// Runs every loader-level check: the quotient identity, the CLF on the
    /// quotient, the rank of the control distribution, the complement
    /// projection, and equilibrium compatibility of the target field.
    pub fn new(input: ProblemInput) -> Result<Self> {
        let ProblemInput {
            system,
            quotient,
            morphism,
            connection,
            vtilde,
            alpha,
            d_frame,
            p_d,
            state_names,
            points_per_axis,
        } = input;
        let m = system.m();
        let n = quotient.n();
        if state_names.len() != m {
            return Err(Error::Shape(format!("{} state names for {m} states", state_names.len())));
        }
        if connection.m() != m || connection.n() != n {
            return Err(Error::Shape(format!(
                "connection is for a {}->{} fibration, systems are {m}->{n}",
                connection.m(),
                connection.n()
            )));
        }
        let names: Vec<&str> = state_names.iter().map(String::as_str).collect();
        let mut input_names = names.clone();
        let extra: Vec<String> = (1..=system.r()).map(|j| format!("u{j}")).collect();
        input_names.extend(extra.iter().map(String::as_str));
        sysmodel::verify_quotient(&system, &quotient, &morphism)?.ensure_zero(&input_names)?;

        let grid = CheckGrid::lattice(m, points_per_axis);
        let quotient_grid = CheckGrid::lattice(n, points_per_axis);
        let clf = QuotientClf::new(&quotient, vtilde, alpha, &quotient_grid)?;
        let c_frame = geometry::control_distribution(&system, &grid)?;
        let (d_frame, projection) = match (d_frame, p_d) {
            (d, Some(p)) => {
                let proj = geometry::user_projection(&c_frame, d.as_ref(), p)?;
                (d, proj)
            }
            (d, None) => {
                let (d, proj) = geometry::complement_and_projection(&c_frame, d.as_ref(), &grid)?;
                (Some(d), proj)
            }
        };
        let target = sysmodel::build_target_x(&system, &quotient, &connection, &clf)?;
        let residual = ResidualSystem::new(projection, connection.p_vm(), target.x.clone())?;
        Ok(LiftProblem {
            system,
            quotient,
            morphism,
            connection,
            clf,
            c_frame,
            d_frame,
            target,
            residual,
            grid,
            quotient_grid,
            state_names,
        })
    }

    pub fn m(&self) -> usize {
        self.system.m()
    }

    pub fn n(&self) -> usize {
        self.quotient.n()
    }

    pub fn names(&self) -> Vec<&str> {
        self.state_names.iter().map(String::as_str).collect()
    }

    pub fn projection(&self) -> &ComplementProjection {
        self.residual.p_d()
    }
}
