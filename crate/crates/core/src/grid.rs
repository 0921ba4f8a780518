//! Sample lattices used for constant-rank and definiteness sanity checks.

use serde::Serialize;

/// Default number of lattice points per axis.
pub const DEFAULT_POINTS_PER_AXIS: usize = 3;

/// A finite set of sample points in a box around the origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckGrid {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl CheckGrid {
    /// `per_axis^dim` lattice over `[-1, 1]^dim`, plus the origin when the
    /// lattice does not already contain it.
    pub fn lattice(dim: usize, per_axis: usize) -> Self {
        CheckGrid::lattice_scaled(dim, per_axis, 1.0)
    }

    pub fn lattice_scaled(dim: usize, per_axis: usize, half_width: f64) -> Self {
        let axis: Vec<f64> = match per_axis {
            0 => Vec::new(),
            1 => vec![0.0],
            k => (0..k)
                .map(|i| half_width * (-1.0 + 2.0 * i as f64 / (k - 1) as f64))
                .collect(),
        };
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for _ in 0..dim {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        let origin = vec![0.0; dim];
        if !points.contains(&origin) {
            points.push(origin);
        }
        CheckGrid { dim, points }
    }

    pub fn from_points(dim: usize, points: Vec<Vec<f64>>) -> Self {
        assert!(points.iter().all(|p| p.len() == dim));
        CheckGrid { dim, points }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Grid points other than the origin.
    pub fn punctured(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.points.iter().filter(|p| p.iter().any(|&x| x != 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lattice_contains_origin_once() {
        let g = CheckGrid::lattice(2, 3);
        assert_eq!(g.points().len(), 9);
        assert_eq!(g.punctured().count(), 8);
        let even = CheckGrid::lattice(2, 2);
        assert_eq!(even.points().len(), 5);
        assert_eq!(even.points().last().unwrap(), &vec![0.0, 0.0]);
    }
}
