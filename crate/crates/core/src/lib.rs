//! Deterministic 2-D closed-loop driving simulator with a rule-based
//! chain-of-thought expert, a dataset emitter and open/closed-loop metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ahead;
pub mod config;
pub mod control;
pub mod cot;
pub mod dataset;
pub mod hazards;
pub mod kinematics;
pub mod metrics;
pub mod par;
pub mod sim;
pub mod waypoints;
pub mod world;
