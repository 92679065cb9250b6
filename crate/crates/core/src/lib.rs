//! Joint semantic role labeling and semantic proto-role labeling over a shared recurrent
//! encoder.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod layers;
pub mod linalg;
pub mod model;
pub mod parallel;
pub mod predict;
pub mod sprl;
pub mod synthetic;
pub mod taggers;
pub mod training;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
