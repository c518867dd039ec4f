//! Free flow, collision operators, iterated Duhamel pairings and the closed-form
//! bounds of the hierarchy expansion.

mod bounds;
mod duhamel;
mod norms;
mod observable;

pub use bounds::{
    bound_verification, closed_form_bounds, continuous_rule, kappa2_scan, kappa_t, simplex_nodes, time_horizon, BoundConfig,
    BoundGrid, BoundParameters, BoundReport, BoundSample, ClosedFormBounds,
};
pub use duhamel::{duhamel_pair, require_tail_bound, DuhamelOptions, DuhamelReport, DuhamelTerm, MuFamily, NBodyFamily, Weighting};
pub use norms::{
    alpha_norm, gaussian_alpha_norm, gaussian_moment, observable_c0, GaussianLemmaFit, NormQuadrature, LEMMA_ALPHA_MAX,
    LEMMA_DELTAS, LEMMA_KAPPAS,
};
pub use observable::{sine_kernel, BaseFn, BaseObservable, Collision, FourierObservable};
