//! Two-agent reward shaping with switching controls.
//!
//! A controller learns the task while a shaper decides, state by state,
//! whether to add a potential-based shaping reward and which potential to use.

pub mod agents;
pub mod config;
pub mod env;
pub mod error;
pub mod nn;
pub mod novelty;
pub mod oracle;
pub mod shaping;

pub use error::{Result, RosaError};
