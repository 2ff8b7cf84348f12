//! Offline precomputation, FMT* search and multi-leg plan assembly.

pub mod chain;
pub mod data;
pub mod fmt;

pub use chain::{chain_waypoints, merge_junction, smooth_plan, BurnRecord, Plan, PlanError};
pub use data::{precompute, PrecomputedGraphData};
pub use fmt::{fmt_plan, LegPlan, PlanningContext};
