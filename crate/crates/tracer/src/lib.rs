//! Coupled Darcy flow and tracer transport on the unit square, posed as an
//! inversion for the nodal log-permeability `κ`.
//!
//! Pressure solves `−∇·(e^κ∇p) = 0` with Dirichlet data on `x = 0` and
//! `x = 1` and no flux on the other two sides. The tracer obeys
//! `∂c/∂t − ∇·(η∇c) + ∇·(−e^κ∇p c) = g` from `c = 0`, discretized with
//! bilinear elements and implicit Euler. Auxiliary parameters perturb both
//! Dirichlet profiles, the 16 injection sources and `η`.

pub mod band;
pub mod config;
pub mod data;
pub mod forms;
pub mod mesh;
pub mod model;
pub mod params;
pub mod problem;
pub mod verify;

pub use config::{Bump, HessianMode, KappaField, SensorLayout, TracerConfig, TransportBoundary};
pub use data::{add_noise, clean_observations, generate_data, DataBundle};
pub use mesh::Mesh;
pub use model::{Discretization, Observations, State};
pub use params::AuxLayout;
pub use problem::{BandInverse, BandOperator, Fault, TracerLinearization, TracerProblem};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
