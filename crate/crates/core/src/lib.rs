//! Multi-level time-stepped simulation with a conservative parallel runtime,
//! communication-driven entity migration and a road-traffic model.

pub mod error;
pub mod harness;
pub mod kernel;
pub mod migration;
pub mod models;
pub mod multilevel;
pub mod pads;
pub mod traffic;

pub use error::{Result, SimError};
