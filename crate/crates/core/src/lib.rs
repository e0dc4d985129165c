//! Semi-supervised distributionally robust learning.
//!
//! The training objective is the dual semi-supervised adversarial risk: the
//! adversarial loss on labeled points plus a softmin over candidate labels of
//! the adversarial loss on unlabeled points. The softmin's inverse
//! temperature λ trades optimism (negative λ trusts low-loss labels) against
//! pessimism (positive λ hedges toward high-loss labels), and the dual
//! parameter γ prices the adversary's transportation budget. Pseudo-labeling,
//! EM-style soft self-training, fully supervised robust training, and
//! hard-label min/max training all fall out as exact parameter settings.
//!
//! Modules:
//! - [`softmin`]: the λ-softmin, its weight vector, entropy, and a grid
//!   oracle for the entropy-regularized variational form.
//! - [`models`]: logistic and MLP classifiers with analytic gradients in
//!   parameters and features, and the squared-L2 transport cost.
//! - [`adversary`]: the inner maximization defining the adversarial loss,
//!   and the projected-gradient evaluation attack.
//! - [`trainer`]: the SSAR risk/gradient, mini-batch SGD with all mode
//!   specializations, hard-label training, the theoretical step size, and
//!   convexity diagnostics.
//! - [`theory`]: brute-force computation of the analysis quantities on
//!   finite instances (ρ_λ, GAP/Γ/Λ, MSR, SSM Rademacher complexity,
//!   discrete Wasserstein distance, duality checks).

pub mod adversary;
pub mod error;
pub mod models;
pub mod numeric;
pub mod softmin;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
