//! Matrix-free hyper-differential sensitivity analysis with a
//! likelihood-informed subspace.
//!
//! Given a solve `z*` of `min_z J(z; θ̄)`, the indices
//! `Sᵢ = ‖P H⁻¹ B eᵢ‖_{W_z}` measure how strongly each auxiliary parameter
//! `θᵢ` moves the solution within the subspace `P` where the data dominate
//! the regularization. Only Hessian-vector products are required.
//!
//! - [`linops`]: operator contract, metric products, CG, B-orthonormalization.
//! - [`problem`]: the inverse problem contract and a dense quadratic model.
//! - [`lis`]: randomized generalized eigensolver for `(H_M, H_R + H_R̃)`.
//! - [`updates`]: a-posteriori updates that make a suboptimal `z*` stationary.
//! - [`sensitivity`]: indices, truncation sweeps and update diagnostics.
//! - [`optim`]: trust-region Newton-CG.
//! - [`verify`]: dense oracle checks.

mod error;
pub mod linops;
pub mod lis;
pub mod optim;
pub mod problem;
pub mod sensitivity;
pub mod updates;
pub mod verify;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
