//! Brute-force computation of the theoretical quantities on finite
//! instances: the ρ_λ functional and its derived GAP/Γ/Λ family, the minimum
//! supervision ratio, semi-supervised Monge Rademacher complexity, discrete
//! Wasserstein distance, and the primal/dual robustness check.
//!
//! Everything here is exact enumeration or Monte Carlo on enumerated sample
//! spaces; instance sizes are capped so subset enumeration and the coupling
//! programs stay exact at desk scale.

mod instance;
mod rademacher;
mod transport;

pub use instance::{gap_gamma_lambda, msr, rho_lambda, FiniteInstance, GapGammaLambda, MsrQuery};
pub use rademacher::{
    classical_rademacher, dist_free_bound_check, ssm_rademacher, BoundCheck, RademacherEstimate,
};
pub use transport::{discrete_wasserstein, dual_objective, duality_check, DualityReport};
