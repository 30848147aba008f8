//! Online attribute learning for interactive object exploration.
//!
//! A robot answers queries such as "is this object soft and empty?" by
//! choosing exploratory behaviors, observing thresholded classifier
//! outputs, and reporting an answer. Each query becomes a small POMDP whose
//! observation model comes from cross-validated classifier confusion
//! matrices and whose reward can be shaped toward actions the robot knows
//! little about.

pub mod agents;
pub mod dataset;
pub mod domain;
pub mod error;
pub mod harness;
pub mod itrs;
pub mod perception;
pub mod pomdp;
pub mod seeding;
pub mod solver;

pub use error::{Error, Result};
