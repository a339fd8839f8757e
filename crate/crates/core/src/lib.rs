//! Abstraction-based controller synthesis with funnel-based refinement.
//!
//! A low-dimensional reference model is abstracted into a finite transition
//! system on a uniform grid, a symbolic controller is synthesized by solving
//! a safety or reachability game, and the symbolic controller is refined for
//! the full-order system through a Lyapunov funnel that bounds the tracking
//! error between the two.

pub mod abstraction;
pub mod affine;
mod codec;
pub mod funnel;
pub mod games;
pub mod error;
pub mod grid;
pub mod interval;
pub mod models;
pub mod polynomial;
pub mod reach;
pub mod refine;
pub mod scalar;
pub mod scenario;
pub mod simulate;

pub use error::{Error, Result};
pub use interval::{Interval, IntervalBox};
