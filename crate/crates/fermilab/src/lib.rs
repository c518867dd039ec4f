//! Numerical laboratory for the mean-field and semiclassical limit of weakly
//! interacting fermions.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`] grids, unitary discrete Fourier transforms, Gaussian kernels
//!   and pair potentials with their moment norms;
//! * [`states`] Slater determinants, quasifree marginals and the example families;
//! * [`transforms`] Wigner, Husimi and the Fourier-side function `mu`;
//! * [`meanfield`] Hartree, Hartree-Fock and Vlasov propagation;
//! * [`nbody`] exact few-body Schrodinger propagation and hierarchy residuals;
//! * [`hierarchy`] the Duhamel expansion operators and closed-form bounds;
//! * [`appendix`] kinetic, Lieb-Thirring and displacement checks;
//! * [`harness`] configuration, fits, reports, checkpoints and experiments.

pub mod appendix;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod meanfield;
pub mod nbody;
pub mod spectral;
pub mod states;
pub mod transforms;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
