//! Biped step-adaptation expert, behavioral cloning and evaluation harness.

pub mod cli;
pub mod config;
pub mod dcm;
pub mod eval;
pub mod expert;
pub mod net;
pub mod pipeline;
pub mod plant;
pub mod rollout;
pub mod stepqp;
