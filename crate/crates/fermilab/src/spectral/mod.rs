//! Grids, unitary lattice Fourier transforms, Gaussian kernels and pair potentials.

mod field;
mod grid;
pub mod linalg;
mod potential;
pub mod quad;

pub use field::{
    convolve, fourier_pair, gaussian_kernel, spectral_derivative, spectral_shift, transform_values, AxisFft,
    Direction, Field, Space,
};
pub use grid::Grid;
pub use potential::{potential_norms, Potential, PotentialKind, DEFAULT_M_MAX};
