//! Multi-source graph encoders for short-text classification, trained with
//! instance-level and cluster-level contrastive objectives stacked under a
//! cross-entropy head.

pub mod contrastive;
pub mod corpus;
pub mod error;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
