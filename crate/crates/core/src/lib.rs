//! Worst-case optimal control of partially observed finite systems.
//!
//! Uncertainty is modelled by sets rather than distributions: disturbances
//! and measurement noise take values in known finite sets, and a strategy is
//! judged by its worst-case cost over every history the sets allow. The
//! crate provides
//!
//! * set-valued primitives (Hausdorff distances, conditional ranges,
//!   Lipschitz and inverse-Lipschitz constants of finite maps),
//! * finite system models in state-space and input-output form with a
//!   conditional-range filter,
//! * dynamic programs over raw memories, information states and approximate
//!   information states, with computable suboptimality bounds,
//! * quantization-based approximate information states whose error bounds
//!   are certified both by formula and by exhaustive measurement,
//! * two grid-world benchmarks (a wall-defense game and a pursuit-evasion
//!   game), and
//! * a tabular data-driven pipeline that estimates conditional ranges from
//!   logged trajectories and plans against them.

pub mod corpus;
pub mod datadriven;
pub mod dp;
pub mod envs;
pub mod error;
pub mod metric;
pub mod model;
pub mod point;
pub mod quantize;
pub mod ranges;
pub mod set;

pub use error::{Error, Result};
pub use metric::Metric;
pub use point::Point;
pub use set::{FinitePointSet, FiniteRelation};
