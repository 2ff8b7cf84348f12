//! Fuel-optimal, actively-safe spacecraft rendezvous planning under
//! Clohessy-Wiltshire-Hill relative dynamics.

pub mod allocation;
pub mod bench;
pub mod cwh;
pub mod geometry;
pub mod lp;
pub mod planner;
pub mod reach;
pub mod report;
pub mod safety;
pub mod scenario;
pub mod smoothing;
pub mod socp;
pub mod sampling;
pub mod steering;
