//! Problem files: JSON documents with polynomial strings.

use std::path::Path;

use liftlyap_core::geometry::{EhresmannConnection, Frame};
use liftlyap_core::poly::{parse_poly, Poly, PolyMatrix};
use liftlyap_core::problem::ProblemInput;
use liftlyap_core::sysmodel::{ControlAffineSystem, QuotientMorphism, QuotientSystem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {source}")]
    Parse {
        field: String,
        source: liftlyap_core::poly::ParseError,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] liftlyap_core::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub s: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<Vec<f64>>>,
}

/// The file as written; every polynomial is still a string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default)]
    pub name: String,
    pub dims: Dims,
    pub states: Vec<String>,
    #[serde(default)]
    pub inputs: Vec<String>,
    pub quotient_states: Vec<String>,
    #[serde(default)]
    pub quotient_inputs: Vec<String>,
    pub f0: Vec<String>,
    /// Control fields, one list of `m` components per input.
    pub f: Vec<Vec<String>>,
    pub g0: Vec<String>,
    pub g: Vec<Vec<String>>,
    pub varphi: Vec<String>,
    /// `s` rows of `r` entries.
    pub beta: Vec<Vec<String>>,
    /// `m - n` rows of `n` entries; zero when omitted.
    #[serde(default)]
    pub gamma: Option<Vec<Vec<String>>>,
    pub vtilde: String,
    pub alpha: Vec<String>,
    #[serde(default)]
    pub d_frame: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub p_d: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub options: SpecOptions,
}

pub fn load_spec(path: &Path) -> Result<ProblemSpec, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let spec: ProblemSpec = serde_json::from_str(&text)?;
    spec.to_input()?;
    Ok(spec)
}

fn poly(field: &str, text: &str, names: &[&str]) -> Result<Poly, SpecError> {
    parse_poly(text, names).map_err(|source| SpecError::Parse {
        field: field.to_string(),
        source,
    })
}

fn poly_vec(field: &str, items: &[String], len: usize, names: &[&str]) -> Result<Vec<Poly>, SpecError> {
    if items.len() != len {
        return Err(SpecError::Shape(format!(
            "{field} has {} entries, expected {len}",
            items.len()
        )));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, t)| poly(&format!("{field}[{}]", i + 1), t, names))
        .collect()
}

fn poly_rows(
    field: &str,
    rows: &[Vec<String>],
    nrows: usize,
    ncols: usize,
    names: &[&str],
) -> Result<Vec<Vec<Poly>>, SpecError> {
    if rows.len() != nrows {
        return Err(SpecError::Shape(format!(
            "{field} has {} rows, expected {nrows}",
            rows.len()
        )));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != ncols {
                return Err(SpecError::Shape(format!(
                    "{field} row {} has {} entries, expected {ncols}",
                    i + 1,
                    row.len()
                )));
            }
            row.iter()
                .enumerate()
                .map(|(j, t)| poly(&format!("{field}[{}][{}]", i + 1, j + 1), t, names))
                .collect()
        })
        .collect()
}

fn check_names(field: &str, names: &[String], expected: usize) -> Result<(), SpecError> {
    if names.len() != expected {
        return Err(SpecError::Shape(format!(
            "{field} lists {} names, expected {expected}",
            names.len()
        )));
    }
    for (i, a) in names.iter().enumerate() {
        let ok = a.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && a.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !ok {
            return Err(SpecError::Invalid(format!("{field}: {a:?} is not an identifier")));
        }
        if names[..i].contains(a) {
            return Err(SpecError::Invalid(format!("{field}: {a:?} declared twice")));
        }
    }
    Ok(())
}

impl ProblemSpec {
    /// Parses and cross-validates every field.
    pub fn to_input(&self) -> Result<ProblemInput, SpecError> {
        let Dims { m, n, r, s } = self.dims;
        if n == 0 || n >= m {
            return Err(SpecError::Invalid(format!(
                "quotient dimension n = {n} must satisfy 0 < n < m = {m}"
            )));
        }
        check_names("states", &self.states, m)?;
        check_names("quotient_states", &self.quotient_states, n)?;
        if !self.inputs.is_empty() {
            check_names("inputs", &self.inputs, r)?;
        }
        if !self.quotient_inputs.is_empty() {
            check_names("quotient_inputs", &self.quotient_inputs, s)?;
        }
        let xs: Vec<&str> = self.states.iter().map(String::as_str).collect();
        let ys: Vec<&str> = self.quotient_states.iter().map(String::as_str).collect();

        let f0 = poly_vec("f0", &self.f0, m, &xs)?;
        let f = poly_rows("f", &self.f, r, m, &xs)?;
        let g0 = poly_vec("g0", &self.g0, n, &ys)?;
        let g = poly_rows("g", &self.g, s, n, &ys)?;
        let varphi = poly_vec("varphi", &self.varphi, s, &xs)?;
        let beta = poly_rows("beta", &self.beta, s, r, &xs)?;
        let gamma = match &self.gamma {
            Some(rows) => poly_rows("gamma", rows, m - n, n, &xs)?,
            None => vec![vec![Poly::zero(m); n]; m - n],
        };
        let vtilde = poly("vtilde", &self.vtilde, &ys)?;
        let alpha = poly_vec("alpha", &self.alpha, s, &ys)?;

        let system = ControlAffineSystem::new(f0, f)?;
        let quotient = QuotientSystem::new(g0, g)?;
        let morphism = QuotientMorphism::new(n, varphi, beta)?;
        let connection = EhresmannConnection::new(m, n, gamma)?;
        let mut input = ProblemInput::new(system, quotient, morphism, connection, vtilde, alpha);
        input.state_names = self.states.clone();
        if let Some(rows) = &self.d_frame {
            if r > m {
                return Err(SpecError::Shape("more inputs than states".into()));
            }
            input.d_frame = Some(Frame::new(m, poly_rows("d_frame", rows, m - r, m, &xs)?)?);
        }
        if let Some(rows) = &self.p_d {
            if r > m {
                return Err(SpecError::Shape("more inputs than states".into()));
            }
            let rows = poly_rows("p_d", rows, m - r, m, &xs)?;
            input.p_d = Some(PolyMatrix::from_rows(m, m, rows)?);
        }
        if let Some(k) = self.options.grid {
            input.points_per_axis = k;
        }
        if let Some(states) = &self.options.initial_states {
            if let Some(bad) = states.iter().position(|x| x.len() != m) {
                return Err(SpecError::Shape(format!(
                    "initial state {} has {} components, expected {m}",
                    bad + 1,
                    states[bad].len()
                )));
            }
        }
        Ok(input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planar() -> ProblemSpec {
        serde_json::from_str(
            r#"{
                "dims": { "m": 2, "n": 1, "r": 1, "s": 1 },
                "states": ["x1", "x2"],
                "quotient_states": ["y"],
                "f0": ["0", "-x2"],
                "f": [["1", "0"]],
                "g0": ["0"],
                "g": [["1"]],
                "varphi": ["0"],
                "beta": [["1"]],
                "vtilde": "1/2*y^2",
                "alpha": ["-y"]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn parses_minimal_problem() {
        let input = planar().to_input().unwrap();
        assert_eq!(input.system.m(), 2);
        assert_eq!(input.state_names, vec!["x1", "x2"]);
        assert!(input.connection.rows()[0][0].is_zero());
    }

    #[test]
    fn parse_errors_name_the_field() {
        let mut spec = planar();
        spec.g[0][0] = "1 +".into();
        match spec.to_input() {
            Err(SpecError::Parse { field, .. }) => assert_eq!(field, "g[1][1]"),
            other => panic!("{other:?}"),
        }
        let mut spec = planar();
        spec.vtilde = "x1^2".into();
        assert!(matches!(spec.to_input(), Err(SpecError::Parse { field, .. }) if field == "vtilde"));
    }

    #[test]
    fn rejects_bad_names_and_shapes() {
        let mut spec = planar();
        spec.states = vec!["x1".into(), "x1".into()];
        assert!(matches!(spec.to_input(), Err(SpecError::Invalid(_))));
        let mut spec = planar();
        spec.states = vec!["x1".into(), "2x".into()];
        assert!(matches!(spec.to_input(), Err(SpecError::Invalid(_))));
        let mut spec = planar();
        spec.gamma = Some(vec![vec!["0".into(), "0".into()]]);
        assert!(matches!(spec.to_input(), Err(SpecError::Shape(_))));
        let mut spec = planar();
        spec.options.initial_states = Some(vec![vec![1.0]]);
        assert!(matches!(spec.to_input(), Err(SpecError::Shape(_))));
    }

    #[test]
    fn options_grid_reaches_the_input() {
        let mut spec = planar();
        spec.options.grid = Some(7);
        assert_eq!(spec.to_input().unwrap().points_per_axis, 7);
    }
}
