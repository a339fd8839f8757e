//! Surface vessel: 3-DOF maneuvering model tracked through a kinematic
//! abstraction.
//!
//! Concrete state `x = (η, ν)` with pose `η = (N, E, ψ)` and body velocities
//! `ν = (u, v, r)`:
//!
//! ```text
//! η̇ = R(ψ) ν + v_c
//! M ν̇ + C(ν) ν + D ν = τ + R(ψ)ᵀ τ_wind
//! ```
//!
//! The abstraction `η̂̇ = R(ψ̂) ν̂ + v̂_c` takes the body velocity as input,
//! `π(η̂, ν̂) = (η̂, ν̂)`, and the error is expressed in the abstract body
//! frame, `e = (R(ψ̂)ᵀ (η − η̂), ν − ν̂)`. With `ψ = ψ̂ + e₃` and `ν̂` held
//! constant between sampling instants this gives
//!
//! ```text
//! ė_p = (ν̂₃ + v̂_c3) S e_p + R(e₃)(e_v + ν̂) − ν̂ + R(ψ̂)ᵀ (v_c − v̂_c)
//! ė_v = M⁻¹ (τ + R(ψ̂ + e₃)ᵀ τ_wind − C(ν) ν − D ν),   ν = e_v + ν̂
//! ```
//!
//! with `S = [0 1 0; −1 0 0; 0 0 0]` from differentiating `R(ψ̂)ᵀ`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::affine::AffineMap;
use crate::funnel::ErrorSystem;
use crate::interval::Interval;
use crate::polynomial::{Arities, PolynomialMap};
use crate::reach::{build_decomposition, JacobianBounds, JacobianDecomposition, VectorField};
use crate::scalar::Scalar;

pub type Mat3 = [[f64; 3]; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShipParams {
    /// Inertia including added mass.
    pub m: Mat3,
    /// Linear damping.
    pub d: Mat3,
    /// `C(ν) = ν₁ · coriolis`.
    pub coriolis: Mat3,
}

impl ShipParams {
    /// A 1:30 scale model of a platform supply vessel.
    pub fn supply_vessel() -> Self {
        ShipParams {
            m: [[87.4, 0.0, 0.0], [0.0, 98.3, 2.48], [0.0, 2.48, 22.2]],
            d: [[6.58, 0.0, 0.0], [0.0, 37.7, 2.66], [0.0, 2.66, 19.3]],
            coriolis: [[0.0, 0.0, 0.0], [0.0, 0.0, 98.3], [0.0, 0.0, 2.48]],
        }
    }

    pub fn m_inv(&self) -> Mat3 {
        let m = Matrix3::from_fn(|i, j| self.m[i][j]);
        let inv = m.try_inverse().expect("inertia matrix must be invertible");
        std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)]))
    }
}

pub fn rotation(psi: f64) -> Mat3 {
    let (s, c) = psi.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// `R(ψ) v`.
fn rotate<S: Scalar>(psi: &S, v: [S; 3]) -> [S; 3] {
    let (s, c) = (psi.sin(), psi.cos());
    let [a, b, z] = v;
    [c.clone() * a.clone() - s.clone() * b.clone(), s * a + c * b, z]
}

/// `R(ψ)ᵀ v`.
fn rotate_t<S: Scalar>(psi: &S, v: [S; 3]) -> [S; 3] {
    let (s, c) = (psi.sin(), psi.cos());
    let [a, b, z] = v;
    [c.clone() * a.clone() + s.clone() * b.clone(), c * b - s * a, z]
}

fn mat_vec<S: Scalar>(m: &Mat3, v: &[S; 3]) -> [S; 3] {
    std::array::from_fn(|i| {
        let mut acc = S::cst(0.0);
        for j in 0..3 {
            if m[i][j] != 0.0 {
                acc = acc + v[j].scale(m[i][j]);
            }
        }
        acc
    })
}

/// `C(ν) ν + D ν`.
fn hydro<S: Scalar>(p: &ShipParams, nu: &[S; 3]) -> [S; 3] {
    let c = mat_vec(&p.coriolis, nu);
    let d = mat_vec(&p.d, nu);
    std::array::from_fn(|i| nu[0].clone() * c[i].clone() + d[i].clone())
}

/// `[R(ψ)ν + v_c; M⁻¹(τ + R(ψ)ᵀτ_wind − C(ν)ν − Dν)]`.
pub fn ship_dynamics<S: Scalar>(p: &ShipParams, m_inv: &Mat3, x: &[S], tau: &[S], w: &[S]) -> [S; 6] {
    let psi = x[2].clone();
    let nu = [x[3].clone(), x[4].clone(), x[5].clone()];
    let eta_dot = rotate(&psi, nu.clone());
    let wind = rotate_t(&psi, [w[3].clone(), w[4].clone(), w[5].clone()]);
    let h = hydro(p, &nu);
    let force: [S; 3] = std::array::from_fn(|i| tau[i].clone() + wind[i].clone() - h[i].clone());
    let acc = mat_vec(m_inv, &force);
    let [a, b, c] = eta_dot;
    let [d, e, f] = acc;
    [a + w[0].clone(), b + w[1].clone(), c + w[2].clone(), d, e, f]
}

/// `R(ψ̂)ν̂ + v̂_c`.
pub fn ship_kinematics<S: Scalar>(xhat: &[S], uhat: &[S], what: &[S]) -> [S; 3] {
    let v = rotate(&xhat[2], [uhat[0].clone(), uhat[1].clone(), uhat[2].clone()]);
    let [a, b, c] = v;
    [a + what[0].clone(), b + what[1].clone(), c + what[2].clone()]
}

pub struct ShipDynamics {
    pub params: ShipParams,
    m_inv: Mat3,
}

impl ShipDynamics {
    pub fn new(params: ShipParams) -> Self {
        let m_inv = params.m_inv();
        ShipDynamics { params, m_inv }
    }
}

impl VectorField for ShipDynamics {
    fn dim_x(&self) -> usize {
        6
    }
    fn dim_u(&self) -> usize {
        3
    }
    fn dim_w(&self) -> usize {
        6
    }
    fn eval(&self, x: &[f64], u: &[f64], w: &[f64], dx: &mut [f64]) {
        dx.copy_from_slice(&ship_dynamics(&self.params, &self.m_inv, x, u, w));
    }
}

pub struct ShipKinematics;

impl VectorField for ShipKinematics {
    fn dim_x(&self) -> usize {
        3
    }
    fn dim_u(&self) -> usize {
        3
    }
    fn dim_w(&self) -> usize {
        3
    }
    fn eval(&self, x: &[f64], u: &[f64], w: &[f64], dx: &mut [f64]) {
        dx.copy_from_slice(&ship_kinematics(x, u, w));
    }
    fn translation_invariant_dims(&self) -> Vec<usize> {
        vec![0, 1]
    }
}

pub type KinematicsJacobian = fn(&[Interval], &[f64], &[Interval], &mut JacobianBounds);

/// Only the heading column of `∂f/∂x̂` is non-zero; `∂f/∂ŵ = I`.
fn kinematics_jacobian(region: &[Interval], u: &[f64], _w: &[Interval], jac: &mut JacobianBounds) {
    let (s, c) = (region[2].sin(), region[2].cos());
    jac.dx.iter_mut().for_each(|v| *v = Interval::point(0.0));
    jac.dx[2] = s.scale(-u[0]) + c.scale(-u[1]);
    jac.dx[3 + 2] = c.scale(u[0]) + s.scale(-u[1]);
    jac.dw.iter_mut().for_each(|v| *v = Interval::point(0.0));
    for i in 0..3 {
        jac.dw[i * 3 + i] = Interval::point(1.0);
    }
}

pub fn kinematics_decomposition() -> JacobianDecomposition<ShipKinematics, KinematicsJacobian> {
    build_decomposition(ShipKinematics, kinematics_jacobian as KinematicsJacobian)
}

pub struct ShipErrorSystem {
    pub params: ShipParams,
    m_inv: Mat3,
    pi: AffineMap,
}

impl ShipErrorSystem {
    pub fn new(params: ShipParams) -> Self {
        let m_inv = params.m_inv();
        ShipErrorSystem { params, m_inv, pi: AffineMap::identity_stacking(3, 3) }
    }
}

impl ErrorSystem for ShipErrorSystem {
    fn arities(&self) -> Arities {
        Arities { t: 1, e: 6, xhat: 3, uhat: 3, w: 6, what: 3 }
    }

    fn n_u(&self) -> usize {
        3
    }

    fn drift<S: Scalar>(&self, e: &[S], xhat: &[S], uhat: &[S], w: &[S], what: &[S]) -> Vec<S> {
        let omega = uhat[2].clone() + what[2].clone();
        let nu = [e[3].clone() + uhat[0].clone(), e[4].clone() + uhat[1].clone(), e[5].clone() + uhat[2].clone()];
        let r = rotate(&e[2], nu.clone());
        let current = rotate_t(&xhat[2], [w[0].clone() - what[0].clone(), w[1].clone() - what[1].clone(), w[2].clone() - what[2].clone()]);
        let psi = xhat[2].clone() + e[2].clone();
        let wind = rotate_t(&psi, [w[3].clone(), w[4].clone(), w[5].clone()]);
        let h = hydro(&self.params, &nu);
        let force: [S; 3] = std::array::from_fn(|i| wind[i].clone() - h[i].clone());
        let acc = mat_vec(&self.m_inv, &force);
        let [r0, r1, r2] = r;
        let [c0, c1, c2] = current;
        let [a0, a1, a2] = acc;
        vec![
            omega.clone() * e[1].clone() + r0 - uhat[0].clone() + c0,
            -(omega * e[0].clone()) + r1 - uhat[1].clone() + c1,
            r2 - uhat[2].clone() + c2,
            a0,
            a1,
            a2,
        ]
    }

    fn input_gain<S: Scalar>(&self, _e: &[S], _xhat: &[S], _uhat: &[S], _w: &[S]) -> Vec<Vec<S>> {
        (0..6).map(|i| (0..3).map(|j| S::cst(if i < 3 { 0.0 } else { self.m_inv[i - 3][j] })).collect()).collect()
    }

    fn affine_map(&self) -> &AffineMap {
        &self.pi
    }

    fn transform(&self, xhat: &[f64]) -> Option<Vec<Vec<f64>>> {
        let r = rotation(xhat[2]);
        Some(
            (0..6)
                .map(|i| {
                    (0..6)
                        .map(|j| match (i < 3, j < 3) {
                            (true, true) => r[j][i],
                            (false, false) if i == j => 1.0,
                            _ => 0.0,
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// A body-frame offset `(e₁, e₂)` rotated by any heading stays within
    /// the disc of radius `|(r₁, r₂)|`.
    fn untransformed_bound(&self, r: &[f64]) -> Vec<f64> {
        let h = r[0].hypot(r[1]);
        let mut out = r.to_vec();
        out[0] = h;
        out[1] = h;
        out
    }

    /// `C(ν̂)ν̂ + Dν̂`: holds the abstract velocity at zero error.
    fn feedforward(&self) -> Option<PolynomialMap> {
        let a = Arities { t: 1, e: 6, xhat: 3, uhat: 3, w: 0, what: 0 };
        let off = a.uhat_offset();
        let mut p = PolynomialMap::zero(a, 3);
        for i in 0..3 {
            for j in 0..3 {
                let mut exps = vec![0; a.total()];
                exps[off + j] = 1;
                p.add_term(i, self.params.d[i][j], exps.clone());
                exps[off] += 1;
                p.add_term(i, self.params.coriolis[i][j], exps);
            }
        }
        Some(p)
    }
}

pub struct Ship {
    concrete: ShipDynamics,
    decomposition: JacobianDecomposition<ShipKinematics, KinematicsJacobian>,
    errors: ShipErrorSystem,
}

impl Ship {
    pub fn new(params: ShipParams) -> Self {
        Ship { concrete: ShipDynamics::new(params.clone()), decomposition: kinematics_decomposition(), errors: ShipErrorSystem::new(params) }
    }
}

impl Model for Ship {
    type Concrete = ShipDynamics;
    type Abstract = JacobianDecomposition<ShipKinematics, KinematicsJacobian>;
    type Errors = ShipErrorSystem;

    fn concrete(&self) -> &ShipDynamics {
        &self.concrete
    }
    fn decomposition(&self) -> &Self::Abstract {
        &self.decomposition
    }
    fn abstract_field(&self) -> &dyn VectorField {
        self.decomposition.field()
    }
    fn error_system(&self) -> &ShipErrorSystem {
        &self.errors
    }
}
