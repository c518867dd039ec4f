//! Fermionic states: orbital sets, density matrices, quasifree marginals, the
//! example families and their exchange-term pairings.

mod density;
pub mod exchange;
pub mod families;
mod marginals;
mod momentum;

pub use density::{gram_schmidt, lowdin, DensityMatrix, OrbitalSet, KERNEL_BUDGET};
pub use exchange::{exchange_pairing, factorization_defect, ExchangeObservable, LatticeFamily};
pub use families::Family;
pub use marginals::{exchange_kernel, quasifree_marginal, slater_marginals};
pub use momentum::{
    kernel_momentum_density, kernel_populations, kinetic_trace, momentum_density, populations, MomentumDensity,
};
