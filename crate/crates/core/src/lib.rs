//! Simulation and weighted sum-rate optimization for multi-subarray
//! frequency-diverse reconfigurable intelligent surfaces.

pub mod active;
pub mod array;
pub mod channel;
pub mod config;
pub mod delay;
pub mod error;
pub mod export;
pub mod freq;
pub mod joint;
pub mod pattern;
pub mod rate;
pub mod scenario;
pub mod solve;
pub mod sweep;

pub use array::{ArrayLayout, ArrayShape, PolarPosition};
pub use channel::{ChannelSet, PathLossModel};
pub use config::{SystemConfig, User};
pub use error::{Error, Result};
pub use rate::{MmseAux, Scene, SolutionState};
