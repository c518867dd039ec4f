use ndarray::{Array2, ArrayD, IxDyn, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spectral::Grid;
use crate::states::{DensityMatrix, OrbitalSet};
use crate::{Error, Result, C64};

/// Largest number of tensor-grid entries `points^N` a wavefunction may hold.
pub const NBODY_BUDGET: usize = 1 << 22;

/// Antisymmetric or product wavefunction of `N` particles on `grid^N` (`d = 1`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NBodyWavefunction {
    pub grid: Grid,
    pub particles: usize,
    pub epsilon: f64,
    /// Weight of each unordered pair interaction.
    pub coupling: f64,
    pub values: ArrayD<C64>,
}

pub(crate) fn check_capacity(grid: &Grid, particles: usize) -> Result<()> {
    if grid.dim != 1 {
        return Err(Error::Arity("N-body propagation is implemented in one dimension".into()));
    }
    if particles == 0 {
        return Err(Error::Arity("at least one particle is required".into()));
    }
    let entries = (grid.points as f64).powi(particles as i32);
    if entries > NBODY_BUDGET as f64 {
        return Err(Error::Capacity(format!(
            "{}^{} = {entries:.3e} grid entries exceed the budget of {NBODY_BUDGET}",
            grid.points, particles
        )));
    }
    Ok(())
}

/// Parallel visit of every entry of a standard-layout array with its multi-index.
pub(crate) fn par_indexed(arr: &mut ArrayD<C64>, f: impl Fn(&[usize], &mut C64) + Sync) {
    let shape = arr.shape().to_vec();
    let slice = arr.as_slice_mut().expect("standard layout");
    slice.par_iter_mut().enumerate().for_each(|(flat, z)| {
        let mut idx = vec![0usize; shape.len()];
        let mut r = flat;
        for j in (0..shape.len()).rev() {
            idx[j] = r % shape[j];
            r /= shape[j];
        }
        f(&idx, z);
    });
}

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if rest.is_empty() {
            out.push((prefix.clone(), sign));
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            rec(prefix, rest, if i % 2 == 0 { sign } else { -sign }, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), 1.0, &mut out);
    out
}

impl NBodyWavefunction {
    pub fn new(grid: Grid, particles: usize, epsilon: f64, coupling: f64, values: ArrayD<C64>) -> Result<Self> {
        check_capacity(&grid, particles)?;
        let want = vec![grid.points; particles];
        if values.shape() != want.as_slice() {
            return Err(Error::Structural(format!("wavefunction shape {:?}, expected {:?}", values.shape(), want)));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Precondition(format!("epsilon = {epsilon} must be positive")));
        }
        let psi = NBodyWavefunction { grid, particles, epsilon, coupling, values };
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Precondition(format!("wavefunction norm {norm} differs from one")));
        }
        Ok(psi)
    }

    /// `(N!)^{-1/2} det[phi_j(x_k)]` with the default coupling `1/N`.
    pub fn slater(set: &OrbitalSet, epsilon: f64) -> Result<Self> {
        Self::slater_with_coupling(set, epsilon, 1.0 / set.len() as f64)
    }

    pub fn slater_with_coupling(set: &OrbitalSet, epsilon: f64, coupling: f64) -> Result<Self> {
        if !set.is_pure() || set.particle_count != set.len() {
            return Err(Error::Precondition("a Slater wavefunction needs N orbitals with unit occupation".into()));
        }
        let n = set.len();
        check_capacity(&set.grid, n)?;
        let perms = permutations(n);
        let norm = 1.0 / (1..=n).map(|k| k as f64).product::<f64>().sqrt();
        let orbs: Vec<&[C64]> = set.orbitals.iter().map(|o| o.as_slice().expect("contiguous orbital")).collect();
        let mut values = ArrayD::zeros(IxDyn(&vec![set.grid.points; n]));
        par_indexed(&mut values, |idx, v| {
            let mut acc = C64::new(0.0, 0.0);
            for (p, s) in &perms {
                let mut term = C64::new(*s, 0.0);
                for (k, &j) in p.iter().enumerate() {
                    term *= orbs[j][idx[k]];
                }
                acc += term;
            }
            *v = acc * norm;
        });
        NBodyWavefunction::new(set.grid, n, epsilon, coupling, values)
    }

    /// Symmetric-free product `phi_1(x_1) .. phi_N(x_N)`, the non-fermionic control.
    pub fn product(set: &OrbitalSet, epsilon: f64, coupling: f64) -> Result<Self> {
        let n = set.len();
        check_capacity(&set.grid, n)?;
        let orbs: Vec<&[C64]> = set.orbitals.iter().map(|o| o.as_slice().expect("contiguous orbital")).collect();
        let mut values = ArrayD::zeros(IxDyn(&vec![set.grid.points; n]));
        par_indexed(&mut values, |idx, v| {
            *v = (0..n).map(|k| orbs[k][idx[k]]).product();
        });
        NBodyWavefunction::new(set.grid, n, epsilon, coupling, values)
    }

    pub fn norm(&self) -> f64 {
        let cell = self.grid.spacing().powi(self.particles as i32);
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell).sqrt()
    }

    /// `max |psi(.. x_i .. x_j ..) + psi(.. x_j .. x_i ..)|` over all transpositions.
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.particles {
            for j in i + 1..self.particles {
                let mut axes: Vec<usize> = (0..self.particles).collect();
                axes.swap(i, j);
                let swapped = self.values.view().permuted_axes(IxDyn(&axes));
                let d = Zip::from(&self.values).and(&swapped).fold(0.0f64, |m, a, b| m.max((a + b).norm()));
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Largest eigenvalue of the one-particle marginal.
    pub fn pauli_max(&self) -> Result<f64> {
        Ok(*nbody_marginal(self, 1)?.eigenvalues().last().unwrap_or(&0.0))
    }
}

/// Normalized `k`-particle marginal `int psi(x, z) conj(psi(y, z)) dz`.
pub fn nbody_marginal(psi: &NBodyWavefunction, k: usize) -> Result<DensityMatrix> {
    if k == 0 || k > psi.particles {
        return Err(Error::Arity(format!("marginal rank {k} outside 1..={}", psi.particles)));
    }
    if k > 2 {
        return Err(Error::Arity("grid marginals are tabulated for k <= 2".into()));
    }
    let n = psi.grid.points;
    let rows = n.pow(k as u32);
    let cols = n.pow((psi.particles - k) as u32);
    let m = Array2::from_shape_vec((rows, cols), psi.values.iter().copied().collect()).expect("tensor reshape");
    let adj = m.t().mapv(|z| z.conj());
    let cell = psi.grid.spacing().powi((psi.particles - k) as i32);
    let gamma = m.dot(&adj).mapv(|z| z * cell);
    DensityMatrix::from_matrix(psi.grid, k, &gamma)
}
