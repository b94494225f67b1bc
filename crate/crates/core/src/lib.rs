// Validation uses `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod decision;
pub mod dynamics;
pub mod graph;
pub mod metrics;
pub mod planner;
pub mod plume;
pub mod sim;
pub mod smc;
pub mod trace;
