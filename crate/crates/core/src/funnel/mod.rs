//! Tracking-error certificates between a concrete model and its continuous
//! abstraction.
//!
//! The error `e = φ(x̂)(x − π(x̂, û))` evolves as `ė = f_e + g_e u` between
//! sampling instants and jumps by `−J Δû` when the abstract input changes.
//! A certificate `(V, κ, γ)` bounds the error inside the funnel
//! `F(t) = {e | V(t, e) ≤ γ}`; the checks here verify its conditions
//! numerically with three-valued verdicts.

mod bnb;
mod candidate;
mod check;
mod epsilon;
pub mod linalg;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::affine::AffineMap;
use crate::error::{Error, Result};
use crate::interval::IntervalBox;
use crate::polynomial::{Arities, PolynomialMap};
use crate::scalar::Scalar;

pub use candidate::{linearize, lyap_candidate, CandidateReport, CandidateSettings, GammaTrial};
pub use check::{check_decrease, check_initial_containment, check_jump, CheckSettings};
pub use epsilon::{compute_epsilon, EpsilonSettings};

/// Error dynamics `ė = f_e(e, x̂, û, w, ŵ) + g_e(e, x̂, û, w) u` between
/// sampling instants.
pub trait ErrorSystem: Sync {
    /// Group sizes with `t = 1` and `e = n_x`.
    fn arities(&self) -> Arities;
    fn n_u(&self) -> usize;
    fn drift<S: Scalar>(&self, e: &[S], xhat: &[S], uhat: &[S], w: &[S], what: &[S]) -> Vec<S>;
    /// `n_x × n_u`.
    fn input_gain<S: Scalar>(&self, e: &[S], xhat: &[S], uhat: &[S], w: &[S]) -> Vec<Vec<S>>;
    fn affine_map(&self) -> &AffineMap;

    /// The state transform `φ(x̂)` applied to `x − π(x̂, û)`, if any.
    fn transform(&self, _xhat: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }

    /// Componentwise bound on `x − π(x̂, û)` when `|e_i| ≤ r_i`, for any
    /// `x̂` in the domain.
    fn untransformed_bound(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }

    /// `J` with `e⁺ = e⁻ − J Δû` at a sampling instant.
    fn jump_matrix(&self) -> Vec<Vec<f64>> {
        self.affine_map().input_block()
    }

    /// Input term in `(x̂, û)` added to the linear feedback, e.g. to cancel
    /// the nominal forces along the abstract trajectory.
    fn feedforward(&self) -> Option<PolynomialMap> {
        None
    }
}

/// `φ(x̂)·(x − π(x̂, û))`, or `x − π(x̂, û)` without a transform.
pub fn error_state<E: ErrorSystem + ?Sized>(x: &[f64], xhat: &[f64], uhat: &[f64], es: &E) -> Vec<f64> {
    let p = es.affine_map().apply(xhat, uhat);
    let d: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - b).collect();
    match es.transform(xhat) {
        None => d,
        Some(phi) => phi.iter().map(|row| row.iter().zip(&d).map(|(a, b)| a * b).sum()).collect(),
    }
}

/// Inverse of [`error_state`]: `x = π(x̂, û) + φ(x̂)⁻¹ e`.
pub fn state_from_error<E: ErrorSystem + ?Sized>(e: &[f64], xhat: &[f64], uhat: &[f64], es: &E) -> Result<Vec<f64>> {
    let p = es.affine_map().apply(xhat, uhat);
    let d = match es.transform(xhat) {
        None => e.to_vec(),
        Some(phi) => {
            let n = phi.len();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| phi[i][j]);
            let inv = m.try_inverse().ok_or_else(|| Error::InvalidSettings("state transform is singular".into()))?;
            (inv * nalgebra::DVector::from_column_slice(e)).iter().copied().collect()
        }
    };
    Ok(p.iter().zip(&d).map(|(a, b)| a + b).collect())
}

/// Closed-loop error derivative `f_e + g_e κ` at flat variables
/// `[t, e, x̂, û, w, ŵ]`.
pub fn closed_loop<E: ErrorSystem + ?Sized, S: Scalar>(es: &E, kappa: &PolynomialMap, vars: &[S]) -> Vec<S> {
    let a = es.arities();
    let e = &vars[a.e_offset()..a.xhat_offset()];
    let xhat = &vars[a.xhat_offset()..a.uhat_offset()];
    let uhat = &vars[a.uhat_offset()..a.w_offset()];
    let w = &vars[a.w_offset()..a.what_offset()];
    let what = &vars[a.what_offset()..a.total()];
    let mut de = es.drift(e, xhat, uhat, w, what);
    let g = es.input_gain(e, xhat, uhat, w);
    let u = kappa.eval(&vars[..a.w_offset()]);
    for (i, row) in g.iter().enumerate() {
        for (gij, uj) in row.iter().zip(&u) {
            de[i] = de[i].clone() + gij.clone() * uj.clone();
        }
    }
    de
}

/// Sets over which the certificate conditions are required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunnelDomains {
    pub xhat: IntervalBox,
    pub uhat: IntervalBox,
    pub delta_uhat: IntervalBox,
    pub w: IntervalBox,
    pub what: IntervalBox,
}

pub const CERTIFICATE_SCHEMA: u32 = 1;

/// Storage function `V(t, e)`, feedback `κ(t, e, x̂, û)` and level `γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunnelCertificate {
    pub schema_version: u32,
    pub gamma: f64,
    pub ts: f64,
    pub e0: IntervalBox,
    /// `J` with `e⁺ = e⁻ − J Δû`, `n_x × n̂_u`.
    pub jump_matrix: Vec<Vec<f64>>,
    pub domains: FunnelDomains,
    pub v: PolynomialMap,
    pub kappa: PolynomialMap,
}

impl FunnelCertificate {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CERTIFICATE_SCHEMA {
            return Err(Error::Format(format!("certificate schema {} (expected {CERTIFICATE_SCHEMA})", self.schema_version)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidSettings(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::InvalidSettings(format!("sampling period must be positive, got {}", self.ts)));
        }
        let a = self.v.arities();
        if self.v.output_dim() != 1 {
            return Err(Error::Format("V must be scalar".into()));
        }
        if a.t != 1 || a.xhat + a.uhat + a.w + a.what != 0 {
            return Err(Error::Format("V must depend on (t, e) only".into()));
        }
        let k = self.kappa.arities();
        if k.t != 1 || k.e != a.e || k.w + k.what != 0 {
            return Err(Error::Format("kappa must depend on (t, e, x̂, û) only".into()));
        }
        if self.e0.dim() != a.e {
            return Err(Error::DimensionMismatch { expected: a.e, found: self.e0.dim() });
        }
        if self.jump_matrix.len() != a.e || self.jump_matrix.iter().any(|r| r.len() != self.domains.delta_uhat.dim()) {
            return Err(Error::Format("jump matrix shape does not match n_x × n̂_u".into()));
        }
        let d = &self.domains;
        for (name, b) in [("xhat", &d.xhat), ("uhat", &d.uhat), ("delta_uhat", &d.delta_uhat), ("w", &d.w), ("what", &d.what)] {
            if !b.is_bounded() {
                return Err(Error::InvalidSettings(format!("domain {name} must be bounded")));
            }
        }
        if d.xhat.dim() != k.xhat || d.uhat.dim() != k.uhat {
            return Err(Error::Format("domain dimensions do not match kappa".into()));
        }
        Ok(())
    }

    /// Checks that the certificate matches the arities of an error system.
    pub fn check_against<E: ErrorSystem + ?Sized>(&self, es: &E) -> Result<()> {
        self.validate()?;
        let a = es.arities();
        let k = self.kappa.arities();
        if self.kappa.output_dim() != es.n_u() || k.e != a.e || k.xhat != a.xhat || k.uhat != a.uhat {
            return Err(Error::Format("certificate does not match the error system".into()));
        }
        if self.domains.w.dim() != a.w || self.domains.what.dim() != a.what {
            return Err(Error::Format("disturbance domains do not match the error system".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: FunnelCertificate = toml::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Full variable layout used by the checks: `[t, e, x̂, û, w, ŵ]`.
    pub fn arities(&self) -> Arities {
        let k = self.kappa.arities();
        Arities { t: 1, e: k.e, xhat: k.xhat, uhat: k.uhat, w: self.domains.w.dim(), what: self.domains.what.dim() }
    }

    pub fn v_at(&self, t: f64, e: &[f64]) -> f64 {
        let mut vars = Vec::with_capacity(e.len() + 1);
        vars.push(t);
        vars.extend_from_slice(e);
        self.v.eval_scalar(&vars)
    }

    /// `κ(t, e, x̂, û)`.
    pub fn kappa_at(&self, t: f64, e: &[f64], xhat: &[f64], uhat: &[f64]) -> Vec<f64> {
        let mut vars = Vec::with_capacity(1 + e.len() + xhat.len() + uhat.len());
        vars.push(t);
        vars.extend_from_slice(e);
        vars.extend_from_slice(xhat);
        vars.extend_from_slice(uhat);
        self.kappa.eval(&vars)
    }
}

/// Outcome of a numerical certificate check.
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Verified { boxes: usize },
    /// `witness` is a flat variable vector for which the condition fails,
    /// `value` the offending quantity evaluated there.
    Falsified { witness: Vec<f64>, value: f64 },
    Inconclusive { boxes: usize, unresolved: usize, samples: usize, worst_sample: f64 },
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified { .. })
    }

    pub fn is_falsified(&self) -> bool {
        matches!(self, Verdict::Falsified { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Verified { .. } => "verified",
            Verdict::Falsified { .. } => "falsified",
            Verdict::Inconclusive { .. } => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Verified { boxes } => write!(f, "verified ({boxes} boxes)"),
            Verdict::Falsified { witness, value } => write!(f, "falsified at {witness:?} (value {value})"),
            Verdict::Inconclusive { boxes, unresolved, samples, worst_sample } => {
                write!(f, "inconclusive ({boxes} boxes, {unresolved} unresolved, {samples} samples, worst sample {worst_sample})")
            }
        }
    }
}
