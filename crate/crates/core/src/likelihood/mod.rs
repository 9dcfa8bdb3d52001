//! Log-likelihood approximations for the interaction strength of an observed
//! Potts field.
//!
//! Every backend exists in two forms: a direct evaluator that walks the field
//! (the functions re-exported here), and a [`PreparedLikelihood`] that
//! compiles the field once into neighbour-count profiles so repeated
//! evaluations inside a sampler cost O(distinct profiles) rather than O(N).

mod backend;
mod conditional;
mod rcoda;
mod tdi;

pub use backend::{Backend, BoundBackend, PreparedLikelihood};
pub use conditional::{conditional_block_loglik, pseudo_loglik, site_log_conditional, ProfileSum};
pub use rcoda::{
    rcoda_loglik, rcoda_loglik_first, rcoda_loglik_second, ModelParams, RcodaConfig,
    SecondOrderVariant, TerminalMode,
};
pub use tdi::{build_tdi_table, default_tdi_grid, tdi_loglik, TdiSettings, TdiTable};
