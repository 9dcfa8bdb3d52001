//! Likelihood approximations for q-state Potts random fields on regular 2D
//! lattices.
//!
//! The central piece is the recursive conditional decomposition: a lattice is
//! split into a conditionally independent coding class and a remainder, the
//! class contributes an exact conditional factor, and the remainder is treated
//! as a Potts field with a decayed interaction `alpha * beta`. The recursion
//! stops at a small terminal lattice whose normalizing constant is computed
//! exactly.
//!
//! Alongside it the crate carries the baselines needed to judge it (exact
//! likelihood on small lattices, pseudo-likelihood, thermodynamic
//! integration), random-walk Metropolis samplers, a hidden-field Gaussian
//! mixture, and a replicate harness for simulation studies.

pub mod error;
pub mod experiments;
pub mod hmrf;
pub mod inference;
pub mod io;
pub mod lattice;
pub mod likelihood;
pub mod potts;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{DecompositionPlan, LabelField, LatticeGeometry, Order, SiteIndex};
pub use likelihood::{Backend, ModelParams, PreparedLikelihood, RcodaConfig, TdiTable};
pub use potts::PottsModel;
