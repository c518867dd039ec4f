use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::spectral::linalg::{hermitian_eigenvalues, hermitian_function};
use crate::spectral::Grid;
use crate::{Error, Result, C64};

/// Entries allowed in a dense kernel before allocation is refused.
pub const KERNEL_BUDGET: usize = 1 << 24;

/// Weighted orthonormal orbitals representing `omega = (1/N) sum_j a_j |phi_j><phi_j|`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitalSet {
    pub grid: Grid,
    pub orbitals: Vec<ArrayD<C64>>,
    pub weights: Vec<f64>,
    pub particle_count: usize,
}

fn orbital_shape(grid: &Grid) -> Vec<usize> {
    vec![grid.points; grid.dim]
}

impl OrbitalSet {
    /// Builds a set from orbitals and occupations `a_j in [0, 1]` with `sum a_j = N`.
    pub fn new(grid: Grid, orbitals: Vec<ArrayD<C64>>, weights: Vec<f64>) -> Result<Self> {
        if orbitals.len() != weights.len() || orbitals.is_empty() {
            return Err(Error::Structural("need one weight per orbital and at least one orbital".into()));
        }
        let shape = orbital_shape(&grid);
        if let Some(bad) = orbitals.iter().find(|o| o.shape() != shape.as_slice()) {
            return Err(Error::Structural(format!("orbital shape {:?} does not match grid {:?}", bad.shape(), shape)));
        }
        if let Some(a) = weights.iter().find(|a| !(-1e-12..=1.0 + 1e-12).contains(*a)) {
            return Err(Error::PauliBound(format!("occupation {a} outside [0, 1]")));
        }
        let total: f64 = weights.iter().sum();
        let n = total.round();
        if n < 1.0 || (total - n).abs() > 1e-9 {
            return Err(Error::Structural(format!("occupations must sum to a positive integer, got {total}")));
        }
        let set = OrbitalSet { grid, orbitals, weights, particle_count: n as usize };
        let defect = set.orthonormality_defect();
        if defect > 1e-10 {
            return Err(Error::Structural(format!("orbitals not orthonormal (defect {defect:.3e})")));
        }
        Ok(set)
    }

    /// Pure Slater determinant: every occupation equals one.
    pub fn slater(grid: Grid, orbitals: Vec<ArrayD<C64>>) -> Result<Self> {
        let w = vec![1.0; orbitals.len()];
        OrbitalSet::new(grid, orbitals, w)
    }

    /// Set without the orthonormality check (used for propagated orbitals).
    pub fn unchecked(grid: Grid, orbitals: Vec<ArrayD<C64>>, weights: Vec<f64>, particle_count: usize) -> Self {
        OrbitalSet { grid, orbitals, weights, particle_count }
    }

    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    pub fn is_pure(&self) -> bool {
        self.weights.iter().all(|&a| (a - 1.0).abs() < 1e-12)
    }

    /// Discrete inner products `<phi_i, phi_j>`.
    pub fn gram(&self) -> Array2<C64> {
        let dv = self.grid.cell_volume();
        let m = self.orbitals.len();
        Array2::from_shape_fn((m, m), |(i, j)| {
            self.orbitals[i].iter().zip(self.orbitals[j].iter()).map(|(a, b)| a.conj() * b).sum::<C64>() * dv
        })
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.gram();
        g.indexed_iter()
            .map(|((i, j), z)| (z - if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).norm())
            .fold(0.0, f64::max)
    }

    /// Position density `rho(x) = (1/N) sum_j a_j |phi_j(x)|^2`, normalized to one.
    pub fn density(&self) -> ArrayD<f64> {
        let inv_n = 1.0 / self.particle_count as f64;
        let mut rho = ArrayD::<f64>::zeros(IxDyn(&orbital_shape(&self.grid)));
        for (phi, a) in self.orbitals.iter().zip(&self.weights) {
            rho.zip_mut_with(phi, |r, z| *r += a * inv_n * z.norm_sqr());
        }
        rho
    }

    /// Trace `sum_j a_j / N` of the one-particle matrix.
    pub fn trace(&self) -> f64 {
        let dv = self.grid.cell_volume();
        self.orbitals
            .iter()
            .zip(&self.weights)
            .map(|(p, a)| a * p.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv)
            .sum::<f64>()
            / self.particle_count as f64
    }

    /// Kernel `gamma(x, y) = (1/N) sum_j a_j phi_j(x) conj(phi_j(y))`.
    pub fn gamma1(&self) -> Result<DensityMatrix> {
        let m = self.grid.len(1);
        check_budget(m * m)?;
        let inv_n = 1.0 / self.particle_count as f64;
        let mut g = Array2::<C64>::zeros((m, m));
        for (phi, a) in self.orbitals.iter().zip(&self.weights) {
            let v: Vec<C64> = phi.iter().copied().collect();
            for i in 0..m {
                let vi = v[i] * (a * inv_n);
                for j in 0..m {
                    g[[i, j]] += vi * v[j].conj();
                }
            }
        }
        DensityMatrix::from_matrix(self.grid, 1, &g)
    }

    /// Largest occupation of the one-particle matrix, computed from the orbital
    /// Gram structure: `max_j a_j / N` after orthogonalization.
    pub fn pauli_max(&self) -> f64 {
        let g = self.gram();
        let inv_n = 1.0 / self.particle_count as f64;
        // eigenvalues of W^{1/2} G W^{1/2} coincide with those of gamma1
        let s: Vec<f64> = self.weights.iter().map(|a| (a * inv_n).sqrt()).collect();
        let m = Array2::from_shape_fn(g.dim(), |(i, j)| g[[i, j]] * s[i] * s[j]);
        *hermitian_eigenvalues(&m).last().unwrap_or(&0.0)
    }
}

pub(crate) fn check_budget(entries: usize) -> Result<()> {
    if entries > KERNEL_BUDGET {
        return Err(Error::MemoryGuard(format!("{entries} kernel entries exceed the budget of {KERNEL_BUDGET}")));
    }
    Ok(())
}

/// Discretized kernel `gamma(x_1..x_k; y_1..y_k)` of a `k`-particle density matrix.
/// Axes are ordered `[x_1, .., x_k, y_1, .., y_k]`, each of dimension `d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub grid: Grid,
    pub rank: usize,
    pub kernel: ArrayD<C64>,
    pub trace_normalized: bool,
}

impl DensityMatrix {
    pub fn new(grid: Grid, rank: usize, kernel: ArrayD<C64>) -> Result<Self> {
        let want = vec![grid.points; 2 * rank * grid.dim];
        if kernel.shape() != want.as_slice() {
            return Err(Error::Structural(format!("kernel shape {:?}, expected {:?}", kernel.shape(), want)));
        }
        let mut dm = DensityMatrix { grid, rank, kernel, trace_normalized: false };
        dm.trace_normalized = (dm.trace().re - 1.0).abs() < 1e-8;
        Ok(dm)
    }

    /// Kernel from a square matrix indexed by flattened `(x; y)` multi-indices.
    pub fn from_matrix(grid: Grid, rank: usize, m: &Array2<C64>) -> Result<Self> {
        let shape = vec![grid.points; 2 * rank * grid.dim];
        let kernel = ArrayD::from_shape_vec(IxDyn(&shape), m.iter().copied().collect())
            .map_err(|e| Error::Structural(e.to_string()))?;
        DensityMatrix::new(grid, rank, kernel)
    }

    /// Side `n^{kd}` of the flattened kernel matrix.
    pub fn side(&self) -> usize {
        self.grid.len(self.rank)
    }

    /// Kernel values as a square matrix (no quadrature weight).
    pub fn kernel_matrix(&self) -> Array2<C64> {
        let s = self.side();
        Array2::from_shape_vec((s, s), self.kernel.iter().copied().collect()).expect("kernel is square")
    }

    /// Matrix of the operator on the grid, including the cell weight `h^{kd}`.
    pub fn operator(&self) -> Array2<C64> {
        let w = self.grid.cell_volume().powi(self.rank as i32);
        self.kernel_matrix().mapv(|z| z * w)
    }

    pub fn trace(&self) -> C64 {
        let s = self.side();
        let flat = self.kernel.as_slice().expect("standard layout");
        let w = self.grid.cell_volume().powi(self.rank as i32);
        (0..s).map(|i| flat[i * s + i]).sum::<C64>() * w
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let m = self.kernel_matrix();
        let s = self.side();
        let mut worst = 0.0f64;
        for i in 0..s {
            for j in i..s {
                worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// Spectrum of the operator, increasing.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.operator())
    }

    /// Diagonal `gamma(x; x)` as a field over `grid^k`.
    pub fn diagonal(&self) -> ArrayD<f64> {
        let s = self.side();
        let m = self.kernel_matrix();
        let shape = vec![self.grid.points; self.rank * self.grid.dim];
        ArrayD::from_shape_vec(IxDyn(&shape), (0..s).map(|i| m[[i, i]].re).collect()).expect("diagonal shape")
    }

    /// Maximal defect of `gamma(x1,x2;y1,y2) = gamma(x2,x1;y2,y1)` (rank two, `d = 1`).
    pub fn exchange_symmetry_defect(&self) -> Result<f64> {
        if self.rank != 2 || self.grid.dim != 1 {
            return Err(Error::Arity("exchange symmetry is defined for rank-2 kernels in one dimension".into()));
        }
        let swapped = self.kernel.view().permuted_axes(IxDyn(&[1, 0, 3, 2]));
        Ok(self.kernel.iter().zip(swapped.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Checks the Pauli bound `gamma <= 1/N` on the spectrum.
    pub fn check_pauli(&self, n: usize, tol: f64) -> Result<f64> {
        let top = *self.eigenvalues().last().unwrap_or(&0.0);
        if top > 1.0 / n as f64 + tol {
            return Err(Error::PauliBound(format!("largest eigenvalue {top:.6e} exceeds 1/{n}")));
        }
        Ok(top)
    }
}

/// Symmetric (Lowdin) orthonormalization of linearly independent functions.
pub fn lowdin(grid: &Grid, funcs: &[ArrayD<C64>]) -> Vec<ArrayD<C64>> {
    let dv = grid.cell_volume();
    let m = funcs.len();
    let s = Array2::from_shape_fn((m, m), |(i, j)| {
        funcs[i].iter().zip(funcs[j].iter()).map(|(a, b)| a.conj() * b).sum::<C64>() * dv
    });
    let t = hermitian_function(&s, |l| l.powf(-0.5));
    (0..m)
        .map(|j| {
            let mut out = ArrayD::<C64>::zeros(funcs[0].raw_dim());
            for (i, f) in funcs.iter().enumerate() {
                let c = t[[i, j]];
                out.zip_mut_with(f, |o, v| *o += c * v);
            }
            out
        })
        .collect()
}

/// Modified Gram-Schmidt orthonormalization in the discrete inner product.
pub fn gram_schmidt(grid: &Grid, funcs: &[ArrayD<C64>]) -> Vec<ArrayD<C64>> {
    let dv = grid.cell_volume();
    let mut out: Vec<ArrayD<C64>> = Vec::with_capacity(funcs.len());
    for f in funcs {
        let mut v = f.clone();
        for _ in 0..2 {
            for q in &out {
                let c = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum::<C64>() * dv;
                v.zip_mut_with(q, |x, y| *x -= c * y);
            }
        }
        let norm = (v.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv).sqrt();
        v.mapv_inplace(|z| z / norm);
        out.push(v);
    }
    out
}
