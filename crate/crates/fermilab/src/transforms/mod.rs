mod husimi;
mod mu;
mod phase;
mod residual;

pub use husimi::{coherent_husimi, coherent_overlap, husimi, smooth_phase};
pub use mu::{
    marginal_via_mu, mu_from_density, mu_from_wigner, mu_transform, restrict, wigner_from_mu, MuFunction, MuInput,
    MuOutput, MuSlices,
};
pub use phase::{
    boundary_fraction, inverse_wigner, marginal, upper_band_fraction, wigner, wigner_tol, PhaseField, PhaseGrid,
    PhaseKind, WignerFunction, RESOLUTION_TOL,
};
pub use residual::free_wigner_residual;
