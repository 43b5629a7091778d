//! Discrete-time network-slicing simulator with a proactive closed-loop
//! autoscaler.

pub mod closed_loop;
pub mod error;
pub mod estimation;
pub mod forecast;
pub mod kpi;
pub mod model;
pub mod scaling;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
