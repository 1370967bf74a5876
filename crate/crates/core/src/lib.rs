//! Deterministic FaaS platform simulator with pluggable tracing, fault
//! injection and fault-observability classification.

pub mod classify;
pub mod cli;
pub mod config;
pub mod evidence;
pub mod faults;
pub mod harness;
pub mod model;
pub mod platform;
pub mod trace;
