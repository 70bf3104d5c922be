//! Answer engine that searches a generation budget for broad, factual
//! long-form responses.
//!
//! The pipeline samples several structured plans for a query (global
//! exploration), retrieves supporting documents per plan aspect under a
//! fixed budget, drafts one response per plan and iteratively edits it
//! (local exploitation), then picks the best candidate with a trained
//! reward head. Self-training dataset builders and a coverage/factuality
//! metric close the loop.

pub mod backends;
pub mod config;
pub mod error;
pub mod metric;
pub mod orchestrator;
pub mod planner;
pub mod retrieval;
pub mod reward;
pub mod selftrain;

mod hash;

pub use config::EngineConfig;
pub use error::{Error, Result};
