//! Synthetic traffic, the flow-level environment and the episode driver.

pub mod env;
pub mod metrics;
pub mod runner;
pub mod traffic;
