mod fock;
mod hartree;
mod residual;
mod vlasov;

pub use hartree::{
    dt_max, evolve_meanfield, hartree_energy, kernel_energy, mean_potential, orbital_density, potential_sup,
    MeanFieldModel, MeanFieldObservables, MeanFieldState, MeanFieldTrajectory, Propagation,
};
pub use residual::{hartree_mu_residual, MuResidualOptions, ResidualReport};
pub(crate) use residual::uniform_spacing;
pub use vlasov::{evolve_vlasov, VlasovGrid, VlasovState, VlasovTrajectory};
