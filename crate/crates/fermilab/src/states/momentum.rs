use serde::Serialize;

use super::density::{DensityMatrix, OrbitalSet};
use crate::spectral::{transform_values, AxisFft, Direction, Grid};
use crate::{Error, Result, C64};

/// Momentum distribution on the rescaled velocity lattice `v = nu k`.
#[derive(Clone, Debug, Serialize)]
pub struct MomentumDensity {
    pub nu: f64,
    /// Velocities in increasing order.
    pub velocities: Vec<f64>,
    /// Density values, so that `sum values * spacing = 1`.
    pub values: Vec<f64>,
    pub spacing: f64,
}

impl MomentumDensity {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing
    }

    pub fn moment(&self, p: i32) -> f64 {
        self.velocities.iter().zip(&self.values).map(|(v, r)| v.powi(p) * r).sum::<f64>() * self.spacing
    }

    /// `int rho^power dv`.
    pub fn power_integral(&self, power: f64) -> f64 {
        self.values.iter().map(|r| r.max(0.0).powf(power)).sum::<f64>() * self.spacing
    }
}

/// Populations `<e_k, gamma e_k>` of the torus plane waves, in FFT order.
pub fn populations(set: &OrbitalSet) -> Result<Vec<f64>> {
    let grid = set.grid;
    if grid.dim != 1 {
        return Err(Error::Structural("momentum populations are tabulated in one dimension".into()));
    }
    let plan = AxisFft::new(grid.points);
    let dk = grid.dual_spacing();
    let inv_n = 1.0 / set.particle_count as f64;
    let mut p = vec![0.0; grid.points];
    for (phi, a) in set.orbitals.iter().zip(&set.weights) {
        let mut f = phi.clone();
        transform_values(&grid, &mut f, Direction::Forward, &plan);
        for (pk, z) in p.iter_mut().zip(f.iter()) {
            *pk += a * inv_n * dk * z.norm_sqr();
        }
    }
    Ok(p)
}

/// Populations from a one-particle kernel.
pub fn kernel_populations(gamma: &DensityMatrix) -> Result<Vec<f64>> {
    let grid = gamma.grid;
    if gamma.rank != 1 || grid.dim != 1 {
        return Err(Error::Arity("momentum populations need a one-dimensional rank-1 kernel".into()));
    }
    let n = grid.points;
    let xs = grid.positions();
    let h = grid.spacing();
    let w = h * h / (2.0 * grid.extent);
    Ok(grid
        .frequencies()
        .iter()
        .map(|&k| {
            let e: Vec<C64> = xs.iter().map(|&x| C64::from_polar(1.0, k * x)).collect();
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                let mut row = C64::new(0.0, 0.0);
                for j in 0..n {
                    row += gamma.kernel[[i, j]] * e[j];
                }
                acc += e[i].conj() * row;
            }
            acc.re * w
        })
        .collect())
}

fn assemble(grid: &Grid, pops: &[f64], nu: f64) -> MomentumDensity {
    let dk = grid.dual_spacing();
    let n = grid.points as i64;
    let spacing = nu * dk;
    let (velocities, values) = (-n / 2..n / 2).map(|m| (m as f64 * spacing, pops[grid.slot(m)] / spacing)).unzip();
    MomentumDensity { nu, velocities, values, spacing }
}

/// Momentum density of `W_{N,nu}`: `rho_nu(v) = int W_{N,nu}(x, v) dx`.
pub fn momentum_density(set: &OrbitalSet, nu: f64) -> Result<MomentumDensity> {
    if !(nu > 0.0) {
        return Err(Error::Structural(format!("scale must be positive, got {nu}")));
    }
    Ok(assemble(&set.grid, &populations(set)?, nu))
}

pub fn kernel_momentum_density(gamma: &DensityMatrix, nu: f64) -> Result<MomentumDensity> {
    if !(nu > 0.0) {
        return Err(Error::Structural(format!("scale must be positive, got {nu}")));
    }
    Ok(assemble(&gamma.grid, &kernel_populations(gamma)?, nu))
}

/// `Tr(-Delta gamma)` for the one-particle matrix.
pub fn kinetic_trace(set: &OrbitalSet) -> Result<f64> {
    let p = populations(set)?;
    Ok(set.grid.frequencies().iter().zip(&p).map(|(k, pk)| k * k * pk).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::families::{gaussian_packet, plane_wave_shell, random_slater};
    use std::f64::consts::PI;

    #[test]
    fn plane_wave_density_is_flat_on_the_shell() {
        let grid = Grid::line(64, PI).unwrap();
        let set = plane_wave_shell(&grid, 1.0, 17).unwrap();
        let eps = 1.0 / 17.0;
        let md = momentum_density(&set, eps).unwrap();
        assert!((md.mass() - 1.0).abs() < 1e-12);
        for (v, r) in md.velocities.iter().zip(&md.values) {
            if v.abs() <= 8.0 * eps + 1e-12 {
                assert!((r - 1.0).abs() < 1e-10);
            } else {
                assert!(r.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_momentum_variance() {
        let grid = Grid::line(256, 16.0).unwrap();
        let s = 1.3;
        let phi = gaussian_packet(&grid, 0.0, s, 0.0, 1.0);
        let set = OrbitalSet::slater(grid, vec![phi]).unwrap();
        let md = momentum_density(&set, 1.0).unwrap();
        assert!((md.moment(2) - 1.0 / (2.0 * s * s)).abs() < 1e-10);
        assert!(md.values.iter().all(|&r| r >= -1e-12));
    }

    #[test]
    fn mass_is_scale_independent() {
        let grid = Grid::line(64, 6.0).unwrap();
        let set = random_slater(&grid, 5, 1.0, 2).unwrap();
        let eps = 0.2;
        for nu in [eps / 4.0, eps, 4.0 * eps] {
            assert!((momentum_density(&set, nu).unwrap().mass() - 1.0).abs() < 1e-8);
        }
        let a = populations(&set).unwrap();
        let b = kernel_populations(&set.gamma1().unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
