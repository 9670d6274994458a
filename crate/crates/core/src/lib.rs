//! Unsupervised inference of the political leaning of social-media users.

pub mod baselines;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod groundtruth;
pub mod ideology;
pub mod io;
pub mod pipeline;
pub mod prediction;
pub mod projection;
pub mod rng;

pub use error::{Error, Result};
