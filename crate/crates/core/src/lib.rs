//! Foundational-pose based computational design of tool-wielding
//! multi-finger robotic hands.
//!
//! The pipeline samples hand designs with an RRT over a bounded design
//! space, keeps only designs that can reach all foundational poses under
//! static equilibrium, plans tool-wielding paths for each kept design by
//! treating the tool-hand system as a parallel mechanism, and scores the
//! results on nine pose/metric combinations including a Pareto front.

pub mod error;
pub mod evaluate;
pub mod geom;
pub mod contact;
pub mod mechanics;
pub mod model;
pub mod planner;
pub mod sampler;
pub mod seed;
pub mod solve;

pub use error::{FphandError, Result};
