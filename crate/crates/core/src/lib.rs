//! Scenario-to-structured-conditions pipeline.
//!
//! A scenario starts as text (either the `.scn` DSL or a free-text prompt run
//! through [`gateway`]), becomes per-agent trajectories ([`kernel`]), a vector
//! HD map fitted to those trajectories ([`hdmap`]), BEV rasters ([`bev`]),
//! lane polylines recovered from the rasters and projected into cameras
//! ([`post`]), and finally a multi-view [`conditioner::ConditionBundle`].

pub mod bev;
pub mod conditioner;
pub mod dsl;
pub mod gateway;
pub mod geom;
pub mod hdmap;
pub mod io;
pub mod kernel;
pub mod post;
pub mod seed;
