//! Interval over-approximation of finite-time reachable sets through
//! continuous-time mixed-monotonicity.
//!
//! A decomposition function `d(x, x̄, u, w, w̄)` is built from interval bounds
//! on the Jacobians of the vector field. Integrating the embedding system
//! `ẋ_lo = d(x_lo, x_hi, u, W.lo, W.hi)`, `ẋ_hi = d(x_hi, x_lo, u, W.hi, W.lo)`
//! yields a box containing every trajectory from the initial box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalBox};

/// Continuous-time dynamics `ẋ = f(x, u, w)`.
pub trait VectorField: Sync {
    fn dim_x(&self) -> usize;
    fn dim_u(&self) -> usize;
    fn dim_w(&self) -> usize;
    fn eval(&self, x: &[f64], u: &[f64], w: &[f64], dx: &mut [f64]);

    /// State coordinates the field does not depend on. Reachable sets are
    /// equivariant under translations along these coordinates.
    fn translation_invariant_dims(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// Interval enclosures of `∂f/∂x` (`n × n`) and `∂f/∂w` (`n × m`), row-major.
#[derive(Clone, Debug)]
pub struct JacobianBounds {
    pub n: usize,
    pub m: usize,
    pub dx: Vec<Interval>,
    pub dw: Vec<Interval>,
    region: Vec<Interval>,
    wregion: Vec<Interval>,
    z: Vec<f64>,
    omega: Vec<f64>,
    f: Vec<f64>,
}

impl JacobianBounds {
    pub fn new(n: usize, m: usize) -> Self {
        JacobianBounds {
            n,
            m,
            dx: vec![Interval::point(0.0); n * n],
            dw: vec![Interval::point(0.0); n * m],
            region: vec![Interval::point(0.0); n],
            wregion: vec![Interval::point(0.0); m],
            z: vec![0.0; n],
            omega: vec![0.0; m],
            f: vec![0.0; n],
        }
    }

    pub fn dx(&self, i: usize, j: usize) -> Interval {
        self.dx[i * self.n + j]
    }

    pub fn dw(&self, i: usize, k: usize) -> Interval {
        self.dw[i * self.m + k]
    }

    fn check(&self) -> Result<()> {
        if let Some(p) = self.dx.iter().position(|v| v.is_nan()) {
            return Err(Error::JacobianNaN { row: p / self.n, col: p % self.n });
        }
        if let Some(p) = self.dw.iter().position(|v| v.is_nan()) {
            return Err(Error::JacobianNaN { row: p / self.m.max(1), col: self.n + p % self.m.max(1) });
        }
        Ok(())
    }
}

/// Fixed-step settings for one sampling period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachSettings {
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub inflation: Vec<f64>,
}

fn default_steps() -> usize {
    50
}

impl ReachSettings {
    pub fn new(horizon: f64, steps: usize, inflation: Vec<f64>) -> Result<Self> {
        let s = ReachSettings { horizon, steps, inflation };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidSettings(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidSettings("steps must be at least 1".into()));
        }
        if self.inflation.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidSettings("inflation must be non-negative".into()));
        }
        Ok(())
    }

    fn inflation_at(&self, i: usize) -> f64 {
        self.inflation.get(i).copied().unwrap_or(0.0)
    }
}

/// A mixed-monotone decomposition of a vector field.
pub trait Decomposition: Sync {
    fn dim_x(&self) -> usize;
    fn dim_u(&self) -> usize;
    fn dim_w(&self) -> usize;

    /// See [`VectorField::translation_invariant_dims`].
    fn translation_invariant_dims(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Evaluates `d(x, x̄, u, w, w̄)` with Jacobian bounds `jac` valid on the
    /// box spanned by the arguments.
    fn eval_with(&self, jac: &mut JacobianBounds, x: &[f64], xbar: &[f64], u: &[f64], w: &[f64], wbar: &[f64], out: &mut [f64]);

    /// Fills `jac` with bounds valid over `region × wregion`.
    fn jacobian(&self, region: &[Interval], u: &[f64], wregion: &[Interval], jac: &mut JacobianBounds) -> Result<()>;

    /// `d(x, x̄, u, w, w̄)` with Jacobian bounds taken over the box spanned by
    /// the arguments.
    fn eval(&self, x: &[f64], xbar: &[f64], u: &[f64], w: &[f64], wbar: &[f64]) -> Result<Vec<f64>> {
        let mut jac = JacobianBounds::new(self.dim_x(), self.dim_w());
        let region: Vec<Interval> = x.iter().zip(xbar).map(|(a, b)| Interval::spanning(*a, *b)).collect();
        let wregion: Vec<Interval> = w.iter().zip(wbar).map(|(a, b)| Interval::spanning(*a, *b)).collect();
        self.jacobian(&region, u, &wregion, &mut jac)?;
        let mut out = vec![0.0; self.dim_x()];
        self.eval_with(&mut jac, x, xbar, u, w, wbar, &mut out);
        Ok(out)
    }
}

/// Jacobian-bound decomposition: arguments with sign-stable partial
/// derivatives are routed to the same-side or opposite-side bound, and
/// sign-indefinite entries contribute an additive term `-J_lo (x_j - x̄_j)`.
pub struct JacobianDecomposition<F, J> {
    field: F,
    jac: J,
}

pub fn build_decomposition<F, J>(field: F, jac_bounds: J) -> JacobianDecomposition<F, J>
where
    F: VectorField,
    J: Fn(&[Interval], &[f64], &[Interval], &mut JacobianBounds) + Sync,
{
    JacobianDecomposition { field, jac: jac_bounds }
}

impl<F, J> JacobianDecomposition<F, J> {
    pub fn field(&self) -> &F {
        &self.field
    }
}

impl<F, J> Decomposition for JacobianDecomposition<F, J>
where
    F: VectorField,
    J: Fn(&[Interval], &[f64], &[Interval], &mut JacobianBounds) + Sync,
{
    fn dim_x(&self) -> usize {
        self.field.dim_x()
    }
    fn dim_u(&self) -> usize {
        self.field.dim_u()
    }
    fn dim_w(&self) -> usize {
        self.field.dim_w()
    }
    fn translation_invariant_dims(&self) -> Vec<usize> {
        self.field.translation_invariant_dims()
    }

    fn jacobian(&self, region: &[Interval], u: &[f64], wregion: &[Interval], jac: &mut JacobianBounds) -> Result<()> {
        (self.jac)(region, u, wregion, jac);
        jac.check()
    }

    fn eval_with(&self, jac: &mut JacobianBounds, x: &[f64], xbar: &[f64], u: &[f64], w: &[f64], wbar: &[f64], out: &mut [f64]) {
        let n = jac.n;
        let m = jac.m;
        for i in 0..n {
            let mut extra = 0.0;
            for j in 0..n {
                let b = jac.dx[i * n + j];
                jac.z[j] = if j == i || b.lo >= 0.0 {
                    x[j]
                } else if b.hi <= 0.0 {
                    xbar[j]
                } else {
                    extra += -b.lo * (x[j] - xbar[j]);
                    x[j]
                };
            }
            for k in 0..m {
                let b = jac.dw[i * m + k];
                jac.omega[k] = if b.lo >= 0.0 {
                    w[k]
                } else if b.hi <= 0.0 {
                    wbar[k]
                } else {
                    extra += -b.lo * (w[k] - wbar[k]);
                    w[k]
                };
            }
            self.field.eval(&jac.z, u, &jac.omega, &mut jac.f);
            out[i] = jac.f[i] + extra;
        }
    }
}

/// Reusable buffers for [`embed_integrate_with`].
pub struct EmbedScratch {
    jac: JacobianBounds,
    state: Vec<f64>,
    stage: Vec<f64>,
    k: [Vec<f64>; 4],
    wlo: Vec<f64>,
    whi: Vec<f64>,
}

impl EmbedScratch {
    pub fn new(n: usize, m: usize) -> Self {
        EmbedScratch {
            jac: JacobianBounds::new(n, m),
            state: vec![0.0; 2 * n],
            stage: vec![0.0; 2 * n],
            k: [vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n]],
            wlo: vec![0.0; m],
            whi: vec![0.0; m],
        }
    }
}

fn embedding_rhs<D: Decomposition + ?Sized>(d: &D, s: &[f64], u: &[f64], wlo: &[f64], whi: &[f64], jac: &mut JacobianBounds, out: &mut [f64]) -> Result<()> {
    let n = d.dim_x();
    let (lo, hi) = s.split_at(n);
    for j in 0..n {
        jac.region[j] = Interval::spanning(lo[j], hi[j]);
    }
    for k in 0..jac.m {
        jac.wregion[k] = Interval::spanning(wlo[k], whi[k]);
    }
    let region = std::mem::take(&mut jac.region);
    let wregion = std::mem::take(&mut jac.wregion);
    let res = d.jacobian(&region, u, &wregion, jac);
    jac.region = region;
    jac.wregion = wregion;
    res?;
    let (olo, ohi) = out.split_at_mut(n);
    d.eval_with(jac, lo, hi, u, wlo, whi, olo);
    d.eval_with(jac, hi, lo, u, whi, wlo, ohi);
    Ok(())
}

/// Integrates the embedding system over one horizon from `x0` with constant
/// input `u` and disturbances in `w`, returning the inflated final box.
pub fn embed_integrate<D: Decomposition + ?Sized>(d: &D, x0: &IntervalBox, u: &[f64], w: &IntervalBox, settings: &ReachSettings) -> Result<IntervalBox> {
    let mut scratch = EmbedScratch::new(d.dim_x(), d.dim_w());
    embed_integrate_with(d, x0, u, w, settings, &mut scratch)
}

pub fn embed_integrate_with<D: Decomposition + ?Sized>(
    d: &D,
    x0: &IntervalBox,
    u: &[f64],
    w: &IntervalBox,
    settings: &ReachSettings,
    scratch: &mut EmbedScratch,
) -> Result<IntervalBox> {
    let n = d.dim_x();
    if x0.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x0.dim() });
    }
    if u.len() != d.dim_u() {
        return Err(Error::DimensionMismatch { expected: d.dim_u(), found: u.len() });
    }
    if w.dim() != d.dim_w() {
        return Err(Error::DimensionMismatch { expected: d.dim_w(), found: w.dim() });
    }
    settings.validate()?;
    let EmbedScratch { jac, state, stage, k, wlo, whi } = scratch;
    state[..n].copy_from_slice(x0.lo());
    state[n..].copy_from_slice(x0.hi());
    wlo.copy_from_slice(w.lo());
    whi.copy_from_slice(w.hi());
    let h = settings.horizon / settings.steps as f64;
    for _ in 0..settings.steps {
        embedding_rhs(d, state, u, wlo, whi, jac, &mut k[0])?;
        for (i, s) in stage.iter_mut().enumerate() {
            *s = state[i] + 0.5 * h * k[0][i];
        }
        embedding_rhs(d, stage, u, wlo, whi, jac, &mut k[1])?;
        for (i, s) in stage.iter_mut().enumerate() {
            *s = state[i] + 0.5 * h * k[1][i];
        }
        embedding_rhs(d, stage, u, wlo, whi, jac, &mut k[2])?;
        for (i, s) in stage.iter_mut().enumerate() {
            *s = state[i] + h * k[2][i];
        }
        embedding_rhs(d, stage, u, wlo, whi, jac, &mut k[3])?;
        for (i, s) in state.iter_mut().enumerate() {
            *s += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIntegration);
        }
    }
    let lo: Vec<f64> = (0..n).map(|i| state[i].min(state[n + i]) - settings.inflation_at(i)).collect();
    let hi: Vec<f64> = (0..n).map(|i| state[i].max(state[n + i]) + settings.inflation_at(i)).collect();
    IntervalBox::new(lo, hi)
}

/// Classical RK4 step of `ẋ = f(x, u, w)` with `u`, `w` held constant.
pub fn rk4_step<F: VectorField + ?Sized>(f: &F, x: &mut [f64], u: &[f64], w: &[f64], h: f64) {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f.eval(x, u, w, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f.eval(&tmp, u, w, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f.eval(&tmp, u, w, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f.eval(&tmp, u, w, &mut k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Linear {
        a: Vec<Vec<f64>>,
    }

    impl VectorField for Linear {
        fn dim_x(&self) -> usize {
            self.a.len()
        }
        fn dim_u(&self) -> usize {
            0
        }
        fn dim_w(&self) -> usize {
            1
        }
        fn eval(&self, x: &[f64], _u: &[f64], _w: &[f64], dx: &mut [f64]) {
            for (i, row) in self.a.iter().enumerate() {
                dx[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
            }
        }
    }

    fn linear_decomposition(a: Vec<Vec<f64>>) -> impl Decomposition {
        let n = a.len();
        let entries: Vec<Interval> = a.iter().flatten().map(|v| Interval::point(*v)).collect();
        build_decomposition(Linear { a }, move |_x: &[Interval], _u: &[f64], _w: &[Interval], j: &mut JacobianBounds| {
            j.dx[..n * n].copy_from_slice(&entries);
        })
    }

    struct Integrator;

    impl VectorField for Integrator {
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
    }

    fn integrator_decomposition() -> impl Decomposition {
        build_decomposition(Integrator, |_x: &[Interval], _u: &[f64], _w: &[Interval], j: &mut JacobianBounds| {
            j.dx[0] = Interval::point(0.0);
            j.dw[0] = Interval::point(1.0);
        })
    }

    #[test]
    fn stationary_field_keeps_box() {
        let d = linear_decomposition(vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let x0 = IntervalBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let w = IntervalBox::point(&[0.0]).unwrap();
        let settings = ReachSettings::new(3.0, 50, vec![]).unwrap();
        assert_eq!(embed_integrate(&d, &x0, &[], &w, &settings).unwrap(), x0);
    }

    #[test]
    fn linear_flow_is_enclosed() {
        // ẋ1 = x2, ẋ2 = -x1: exact flow is a rotation
        let d = linear_decomposition(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let x0 = IntervalBox::new(vec![0.9, -0.1], vec![1.1, 0.1]).unwrap();
        let w = IntervalBox::point(&[0.0]).unwrap();
        let r = embed_integrate(&d, &x0, &[], &w, &ReachSettings::new(0.5, 50, vec![]).unwrap()).unwrap();
        let t: f64 = 0.5;
        for k in 0..4 {
            let x = x0.corner(k);
            let y = [x[0] * t.cos() + x[1] * t.sin(), -x[0] * t.sin() + x[1] * t.cos()];
            assert!(r.contains_point(&y), "{y:?} not in {r}");
        }
    }

    #[test]
    fn integrator_translates_exactly() {
        let d = integrator_decomposition();
        let x0 = IntervalBox::new(vec![0.0], vec![0.2]).unwrap();
        let w = IntervalBox::point(&[0.0]).unwrap();
        let r = embed_integrate(&d, &x0, &[0.1], &w, &ReachSettings::new(3.0, 50, vec![]).unwrap()).unwrap();
        assert!((r.lo()[0] - 0.3).abs() < 1e-12);
        assert!((r.hi()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn integrator_disturbance_widens_box() {
        let d = integrator_decomposition();
        let x0 = IntervalBox::new(vec![0.0], vec![0.2]).unwrap();
        let w = IntervalBox::new(vec![-0.01], vec![0.01]).unwrap();
        let r = embed_integrate(&d, &x0, &[0.1], &w, &ReachSettings::new(3.0, 50, vec![0.001]).unwrap()).unwrap();
        assert!((r.lo()[0] - (0.3 - 0.03 - 0.001)).abs() < 1e-12);
        assert!((r.hi()[0] - (0.5 + 0.03 + 0.001)).abs() < 1e-12);
    }

    #[test]
    fn linear_decomposition_is_consistent_on_the_diagonal() {
        let a = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        let d = linear_decomposition(a);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let out = d.eval(&x, &x, &[], &[0.0], &[0.0]).unwrap();
            assert_eq!(out, vec![x[1], 0.0]);
        }
    }

    #[test]
    fn sign_indefinite_entries_are_bloated_soundly() {
        // rotation field ẋ = [-x2; x1] has off-diagonal entries of fixed sign;
        // use J bounds [-1, 1] on all entries to exercise the indefinite branch
        struct Rot;
        impl VectorField for Rot {
            fn dim_x(&self) -> usize {
                2
            }
            fn dim_u(&self) -> usize {
                0
            }
            fn dim_w(&self) -> usize {
                0
            }
            fn eval(&self, x: &[f64], _u: &[f64], _w: &[f64], dx: &mut [f64]) {
                dx[0] = -x[1];
                dx[1] = x[0];
            }
        }
        let d = build_decomposition(Rot, |_x: &[Interval], _u: &[f64], _w: &[Interval], j: &mut JacobianBounds| {
            for v in j.dx.iter_mut() {
                *v = Interval::new(-1.0, 1.0);
            }
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let lo = [rng.gen_range(-2.0..1.0), rng.gen_range(-2.0..1.0)];
            let hi = [lo[0] + rng.gen_range(0.0..1.0), lo[1] + rng.gen_range(0.0..1.0)];
            let dl = d.eval(&lo, &hi, &[], &[], &[]).unwrap();
            let dh = d.eval(&hi, &lo, &[], &[], &[]).unwrap();
            // any point on face i must have its derivative bracketed
            for i in 0..2 {
                for _ in 0..20 {
                    let mut y = [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])];
                    y[i] = lo[i];
                    let f = if i == 0 { -y[1] } else { y[0] };
                    assert!(dl[i] <= f + 1e-12);
                    y[i] = hi[i];
                    let f = if i == 0 { -y[1] } else { y[0] };
                    assert!(dh[i] >= f - 1e-12);
                }
            }
        }
    }

    #[test]
    fn nan_jacobian_is_reported() {
        let d = build_decomposition(Integrator, |_x: &[Interval], _u: &[f64], _w: &[Interval], j: &mut JacobianBounds| {
            j.dx[0] = Interval { lo: f64::NAN, hi: 0.0 };
        });
        assert!(matches!(d.eval(&[0.0], &[1.0], &[0.0], &[0.0], &[0.0]), Err(Error::JacobianNaN { .. })));
    }

    #[test]
    fn settings_validation() {
        assert!(ReachSettings::new(0.0, 50, vec![]).is_err());
        assert!(ReachSettings::new(1.0, 0, vec![]).is_err());
        assert!(ReachSettings::new(1.0, 1, vec![-1.0]).is_err());
    }
}
