//! Double integrator `ṗ = v, v̇ = u + w` tracking the single integrator
//! `p̂̇ = û + ŵ`, with `π(p̂, û) = (p̂, û)`.
//!
//! Error `e = (p − p̂, v − û)`: `ė₁ = e₂ − ŵ`, `ė₂ = u + w`.

use super::Model;
use crate::affine::AffineMap;
use crate::funnel::ErrorSystem;
use crate::interval::Interval;
use crate::polynomial::Arities;
use crate::reach::{build_decomposition, JacobianBounds, JacobianDecomposition, VectorField};
use crate::scalar::Scalar;

pub struct DoubleIntegrator;

impl VectorField for DoubleIntegrator {
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn dim_w(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], u: &[f64], w: &[f64], dx: &mut [f64]) {
        dx[0] = x[1];
        dx[1] = u[0] + w[0];
    }
}

pub struct SingleIntegrator;

impl VectorField for SingleIntegrator {
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn dim_w(&self) -> usize {
        1
    }
    fn eval(&self, _x: &[f64], u: &[f64], w: &[f64], dx: &mut [f64]) {
        dx[0] = u[0] + w[0];
    }
    fn translation_invariant_dims(&self) -> Vec<usize> {
        vec![0]
    }
}

pub type IntegratorJacobian = fn(&[Interval], &[f64], &[Interval], &mut JacobianBounds);

fn integrator_jacobian(_r: &[Interval], _u: &[f64], _w: &[Interval], jac: &mut JacobianBounds) {
    jac.dx[0] = Interval::point(0.0);
    jac.dw[0] = Interval::point(1.0);
}

pub struct IntegratorErrors {
    pi: AffineMap,
}

impl ErrorSystem for IntegratorErrors {
    fn arities(&self) -> Arities {
        Arities { t: 1, e: 2, xhat: 1, uhat: 1, w: 1, what: 1 }
    }
    fn n_u(&self) -> usize {
        1
    }
    fn drift<S: Scalar>(&self, e: &[S], _xhat: &[S], _uhat: &[S], w: &[S], what: &[S]) -> Vec<S> {
        vec![e[1].clone() - what[0].clone(), w[0].clone()]
    }
    fn input_gain<S: Scalar>(&self, _e: &[S], _xhat: &[S], _uhat: &[S], _w: &[S]) -> Vec<Vec<S>> {
        vec![vec![S::cst(0.0)], vec![S::cst(1.0)]]
    }
    fn affine_map(&self) -> &AffineMap {
        &self.pi
    }
}

pub struct Integrator {
    decomposition: JacobianDecomposition<SingleIntegrator, IntegratorJacobian>,
    errors: IntegratorErrors,
}

impl Integrator {
    pub fn new() -> Self {
        Integrator {
            decomposition: build_decomposition(SingleIntegrator, integrator_jacobian as IntegratorJacobian),
            errors: IntegratorErrors { pi: AffineMap::identity_stacking(1, 1) },
        }
    }
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::new()
    }
}

impl Model for Integrator {
    type Concrete = DoubleIntegrator;
    type Abstract = JacobianDecomposition<SingleIntegrator, IntegratorJacobian>;
    type Errors = IntegratorErrors;

    fn concrete(&self) -> &DoubleIntegrator {
        &DoubleIntegrator
    }
    fn decomposition(&self) -> &Self::Abstract {
        &self.decomposition
    }
    fn abstract_field(&self) -> &dyn VectorField {
        self.decomposition.field()
    }
    fn error_system(&self) -> &IntegratorErrors {
        &self.errors
    }
}
