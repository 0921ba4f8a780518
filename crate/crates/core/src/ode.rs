//! Classical fixed-step fourth-order Runge-Kutta integration.

use crate::error::{Error, Result};

/// States whose Euclidean norm exceeds this abort the integration.
pub const DIVERGENCE_GUARD: f64 = 1e6;

pub fn rk4_step<F>(f: &F, t: f64, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let shift = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(a, b)| a + s * b).collect()
    };
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &shift(x, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &shift(x, &k2, 0.5 * h));
    let k4 = f(t + h, &shift(x, &k3, h));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Sampled solution, including the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Number of fixed steps covering `horizon`.
pub fn step_count(h: f64, horizon: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Invalid(format!("step size must be positive, got {h}")));
    }
    if !(horizon >= h) || !horizon.is_finite() {
        return Err(Error::Invalid(format!(
            "horizon {horizon} must be at least the step size {h}"
        )));
    }
    Ok((horizon / h).round() as usize)
}

pub fn integrate<F>(f: F, x0: &[f64], h: f64, horizon: f64) -> Result<Integration>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let steps = step_count(h, horizon)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    for k in 0..steps {
        let t = k as f64 * h;
        x = rk4_step(&f, t, &x, h);
        let t_next = (k + 1) as f64 * h;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= DIVERGENCE_GUARD) {
            return Err(Error::Diverged { time: t_next, norm });
        }
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(Integration { times, states })
}
