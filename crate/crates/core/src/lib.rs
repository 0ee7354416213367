//! Language-conditioned 6-DoF grasp diffusion with learned negative-prompt
//! guidance, at desk scale.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod net;
pub mod prop1;
pub mod rng;
pub mod scene;
pub mod schedule;
pub mod sampler;
pub mod se3;
pub mod train;

pub use error::{Error, Result};
