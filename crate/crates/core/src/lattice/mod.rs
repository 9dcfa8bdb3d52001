//! Lattice geometry, label fields and the recursive coding decomposition.

mod field;
mod geometry;
mod plan;

pub use field::LabelField;
pub use geometry::{Boundary, LatticeGeometry, Order, SiteIndex};
pub use plan::{
    build_plan, build_plan_first_order, build_plan_second_order, default_depth, max_depth, Block,
    CrossBlock, DecompositionPlan, Level, Terminal,
};
