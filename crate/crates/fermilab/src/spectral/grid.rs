use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform periodic lattice on `[-L, L)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub points: usize,
    pub extent: f64,
}

impl Grid {
    pub fn new(dim: usize, points: usize, extent: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Structural("grid dimension must be positive".into()));
        }
        if points == 0 || points % 2 != 0 {
            return Err(Error::Structural(format!(
                "points per axis must be even and positive, got {points}"
            )));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::Structural(format!("extent must be positive, got {extent}")));
        }
        Ok(Grid { dim, points, extent })
    }

    pub fn line(points: usize, extent: f64) -> Result<Self> {
        Grid::new(1, points, extent)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.points as f64
    }

    pub fn dual_spacing(&self) -> f64 {
        PI / self.extent
    }

    /// Highest representable angular frequency.
    pub fn nyquist(&self) -> f64 {
        PI / self.spacing()
    }

    /// Number of samples of a rank-`rank` field.
    pub fn len(&self, rank: usize) -> usize {
        self.points.pow((rank * self.dim) as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Axis coordinates `x_i = -L + i h`.
    pub fn positions(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points).map(|i| -self.extent + i as f64 * h).collect()
    }

    /// Signed lattice index of FFT slot `i`.
    pub fn signed_index(&self, i: usize) -> i64 {
        let n = self.points as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT slot of signed lattice index `m`, wrapping periodically.
    pub fn slot(&self, m: i64) -> usize {
        m.rem_euclid(self.points as i64) as usize
    }

    /// Angular frequencies in FFT order.
    pub fn frequencies(&self) -> Vec<f64> {
        let dk = self.dual_spacing();
        (0..self.points).map(|i| self.signed_index(i) as f64 * dk).collect()
    }

    /// Frequencies sorted increasingly (centered at zero).
    pub fn centered_frequencies(&self) -> Vec<f64> {
        let dk = self.dual_spacing();
        let n = self.points as i64;
        (-n / 2..n / 2).map(|m| m as f64 * dk).collect()
    }

    /// Index of the grid point nearest to `x` after periodic wrapping.
    pub fn nearest_index(&self, x: f64) -> usize {
        let h = self.spacing();
        let u = ((x + self.extent) / h).round() as i64;
        u.rem_euclid(self.points as i64) as usize
    }

    /// Periodic minimum-image representative of `x` in `[-L, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let p = 2.0 * self.extent;
        (x + self.extent).rem_euclid(p) - self.extent
    }

    /// Whether `q` lies on the dual lattice to within `tol` of a lattice step.
    pub fn on_dual_lattice(&self, q: f64, tol: f64) -> bool {
        let r = q / self.dual_spacing();
        (r - r.round()).abs() < tol
    }
}
