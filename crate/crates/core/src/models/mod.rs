//! Built-in concrete/abstract model pairs.

pub mod integrator;
pub mod ship;

use crate::funnel::ErrorSystem;
use crate::reach::{Decomposition, VectorField};

/// A concrete model, its continuous abstraction, and the error dynamics
/// between them.
pub trait Model: Sync {
    type Concrete: VectorField;
    type Abstract: Decomposition;
    type Errors: ErrorSystem;

    fn concrete(&self) -> &Self::Concrete;
    fn decomposition(&self) -> &Self::Abstract;
    fn abstract_field(&self) -> &dyn VectorField;
    fn error_system(&self) -> &Self::Errors;
}
