use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use super::hartree::mean_potential;
use crate::spectral::{AxisFft, Grid, Potential};
use crate::{Result, C64};

/// Precomputed operators of the Hartree-Fock generator on a grid.
pub(crate) struct FockContext {
    grid: Grid,
    epsilon: f64,
    kinetic: DMatrix<C64>,
    table: Option<Vec<f64>>,
    coeffs: Option<Vec<f64>>,
    plan: AxisFft,
}

impl FockContext {
    pub(crate) fn new(grid: &Grid, potential: &Potential, epsilon: f64) -> Result<Self> {
        let n = grid.points;
        let ks = grid.frequencies();
        let row: Vec<C64> = (0..n)
            .map(|d| {
                ks.iter()
                    .enumerate()
                    .map(|(m, k)| C64::from_polar(k * k / n as f64, 2.0 * std::f64::consts::PI * (m * d) as f64 / n as f64))
                    .sum::<C64>()
            })
            .collect();
        let kinetic = DMatrix::from_fn(n, n, |i, j| row[(i + n - j) % n] * (0.5 * epsilon * epsilon));
        let (table, coeffs) = if potential.is_zero() {
            (None, None)
        } else {
            (Some(potential.separation_table(grid)?), Some(potential.lattice_coeffs(grid)?))
        };
        Ok(FockContext { grid: *grid, epsilon, kinetic, table, coeffs, plan: AxisFft::new(n) })
    }

    /// Generator `-(eps^2/2) Delta + U * rho - X` for the operator `omega`.
    fn hamiltonian(&self, omega: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.grid.points;
        let mut h = self.kinetic.clone();
        if let (Some(table), Some(coeffs)) = (&self.table, &self.coeffs) {
            let hs = self.grid.spacing();
            let rho: Vec<f64> = (0..n).map(|i| omega[(i, i)].re / hs).collect();
            let v = mean_potential(&self.grid, coeffs, &rho, &self.plan);
            for i in 0..n {
                h[(i, i)] += v[i];
                for j in 0..n {
                    h[(i, j)] -= omega[(i, j)] * table[(i + n - j) % n];
                }
            }
        }
        h
    }

    fn propagator(&self, h: DMatrix<C64>, dt: f64) -> DMatrix<C64> {
        let herm = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        let q = &eig.eigenvectors;
        let theta = dt / self.epsilon;
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -theta * l)));
        q * d * q.adjoint()
    }
}

/// One exponential-midpoint step `omega -> e^{-i H_m dt/eps} omega e^{i H_m dt/eps}`
/// with `H_m` evaluated self-consistently at the midpoint state.
pub(crate) fn fock_step(ctx: &FockContext, omega: &Array2<C64>, dt: f64) -> Result<Array2<C64>> {
    let n = omega.nrows();
    let w0 = DMatrix::from_fn(n, n, |i, j| omega[[i, j]]);
    let mut next = w0.clone();
    for _ in 0..8 {
        let mid = (&w0 + &next) * C64::new(0.5, 0.0);
        let u = ctx.propagator(ctx.hamiltonian(&mid), dt);
        let candidate = &u * &w0 * u.adjoint();
        let change = (&candidate - &next).iter().map(|z| z.norm()).fold(0.0, f64::max);
        next = candidate;
        if change < 1e-14 {
            break;
        }
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| next[(i, j)]))
}

#[cfg(test)]
mod tests {
    use super::super::hartree::{evolve_meanfield, MeanFieldModel, Propagation};
    use crate::spectral::{Grid, Potential};
    use crate::states::families::hermite_functions;
    use crate::states::OrbitalSet;

    #[test]
    fn free_fock_agrees_with_hartree() {
        let grid = Grid::line(64, 8.0).unwrap();
        let set = OrbitalSet::slater(grid, hermite_functions(&grid, 2, 1.0, 0.3)).unwrap();
        let prop = Propagation::new(0.2, 0.01);
        let a = evolve_meanfield(&set, MeanFieldModel::Hartree, &Potential::zero(), 0.5, prop).unwrap();
        let b = evolve_meanfield(&set, MeanFieldModel::HartreeFock, &Potential::zero(), 0.5, prop).unwrap();
        let ka = a.last().gamma1().unwrap().kernel;
        let kb = b.last().gamma1().unwrap().kernel;
        let err = ka.iter().zip(kb.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn fock_preserves_trace_and_pauli_bound() {
        let grid = Grid::line(64, 8.0).unwrap();
        let set = OrbitalSet::slater(grid, hermite_functions(&grid, 3, 1.0, 0.0)).unwrap();
        let pot = Potential::gaussian(1.0, 1.0);
        let t = evolve_meanfield(&set, MeanFieldModel::HartreeFock, &pot, 0.5, Propagation::new(0.3, 0.01).every(10)).unwrap();
        let obs = t.observables().unwrap();
        for (o, s) in obs.iter().zip(&t.states) {
            assert!((o.trace - 1.0).abs() < 1e-10);
            assert!(s.pauli_max() <= 1.0 / 3.0 + 1e-9);
            assert!((o.energy - obs[0].energy).abs() < 1e-5);
        }
    }
}
