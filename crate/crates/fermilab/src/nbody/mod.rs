//! Exact few-body Schrodinger propagation on tensor grids, reduced density
//! matrices and residuals of the Fourier-side N-body and hierarchy equations.

mod dynamics;
mod residual;
mod wavefunction;

pub use dynamics::{evolve_nbody, nbody_dt_max, NBodyTrajectory};
pub use residual::{
    bbgky_consistency, default_etas, wigner_equation_residual, BbgkyOptions, NBodyResidualOptions, Prefactor,
    SliceResidual,
};
pub use wavefunction::{nbody_marginal, NBodyWavefunction, NBODY_BUDGET};
