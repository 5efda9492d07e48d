//! Anisotropic spiking network simulation with a pooling readout and
//! regression-based trajectory learning.

pub mod config;
pub mod connectome;
pub mod error;
pub mod neurocore;
pub mod pipeline;
pub mod protocol;
pub mod readout;
pub mod stats;
pub mod trajectories;

pub use config::{NetworkConfig, NetworkKind};
pub use error::{Error, Result};
