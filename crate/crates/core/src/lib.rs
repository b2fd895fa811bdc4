//! Geometric multibody dynamics of a flapping-wing vehicle on
//! `R^3 x SO(3)^4`, with hover-orbit search and receding-horizon control.

pub mod aero;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod lie;
pub mod morphology;
pub mod optimization;
pub mod simulation;
pub mod validation;

pub use error::{Error, Result};
