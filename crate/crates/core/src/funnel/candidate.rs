//! Candidate certificates from an LQR design on the linearized error
//! dynamics, with the level `γ` chosen by numerical verification.

use nalgebra::DMatrix;

use super::check::{check_decrease, check_initial_containment, check_jump, CheckSettings};
use super::linalg::{is_hurwitz, lqr, lyapunov};
use super::{closed_loop, ErrorSystem, FunnelCertificate, FunnelDomains, Verdict, CERTIFICATE_SCHEMA};
use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalBox};
use crate::polynomial::{Arities, PolynomialMap};
use crate::scalar::{Dual, Scalar};

#[derive(Clone, Debug)]
pub struct CandidateSettings {
    /// Diagonal LQR state weights, one per error coordinate.
    pub q_weights: Vec<f64>,
    /// Diagonal LQR input weights.
    pub r_weights: Vec<f64>,
    /// Linearization point.
    pub xhat0: Vec<f64>,
    pub uhat0: Vec<f64>,
    pub e0: IntervalBox,
    /// Decay rate `α` imposed on the Lyapunov function of the linearized
    /// closed loop, `V̇ ≤ −2αV`; `None` uses half the slowest closed-loop rate.
    pub decay: Option<f64>,
    /// Fraction of the level by which the funnel shrinks over one period;
    /// `V = eᵀQe + (ργ/T_s) t`.
    pub shrink: f64,
    pub growth: f64,
    pub max_trials: usize,
    pub bisect_steps: usize,
    pub accept_inconclusive: bool,
    pub check: CheckSettings,
}

impl CandidateSettings {
    pub fn new(n: usize, m: usize, xhat0: Vec<f64>, uhat0: Vec<f64>, e0: IntervalBox) -> Self {
        CandidateSettings {
            q_weights: vec![1.0; n],
            r_weights: vec![1.0; m],
            xhat0,
            uhat0,
            e0,
            decay: None,
            shrink: 0.5,
            growth: 1.25,
            max_trials: 24,
            bisect_steps: 4,
            accept_inconclusive: false,
            check: CheckSettings::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GammaTrial {
    pub gamma: f64,
    pub decrease: Verdict,
}

#[derive(Clone, Debug)]
pub struct CandidateReport {
    pub certificate: FunnelCertificate,
    pub gain: Vec<Vec<f64>>,
    pub riccati: Vec<Vec<f64>>,
    pub lyapunov: Vec<Vec<f64>>,
    pub decrease: Verdict,
    pub jump: Verdict,
    pub initial: Verdict,
    pub trials: Vec<GammaTrial>,
}

impl CandidateReport {
    pub fn is_verified(&self) -> bool {
        self.decrease.is_verified() && self.jump.is_verified() && self.initial.is_verified()
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn kappa_arities(a: &Arities) -> Arities {
    Arities { t: 1, e: a.e, xhat: a.xhat, uhat: a.uhat, w: 0, what: 0 }
}

fn feedforward<E: ErrorSystem + ?Sized>(es: &E) -> Result<PolynomialMap> {
    let ka = kappa_arities(&es.arities());
    match es.feedforward() {
        Some(p) => p.embed(ka),
        None => Ok(PolynomialMap::zero(ka, es.n_u())),
    }
}

/// `(A, B)` of the error dynamics under the feedforward alone, at `e = 0`
/// with zero disturbances.
pub fn linearize<E: ErrorSystem + ?Sized>(es: &E, xhat0: &[f64], uhat0: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = es.arities();
    if xhat0.len() != a.xhat || uhat0.len() != a.uhat {
        return Err(Error::DimensionMismatch { expected: a.xhat + a.uhat, found: xhat0.len() + uhat0.len() });
    }
    let n = a.e;
    let ff = feedforward(es)?;
    let mut vars = vec![Dual::cst(0.0)];
    vars.extend((0..n).map(|j| Dual::var(Interval::point(0.0), j, n)));
    vars.extend(xhat0.iter().chain(uhat0).map(|v| Dual::cst(*v)));
    vars.extend((0..a.w + a.what).map(|_| Dual::cst(0.0)));
    let de = closed_loop(es, &ff, &vars);
    let mut am = DMatrix::zeros(n, n);
    for (i, d) in de.iter().enumerate() {
        for (j, g) in d.g.iter().enumerate() {
            am[(i, j)] = g.mid();
        }
    }
    let zero = vec![0.0; n];
    let g = es.input_gain::<f64>(&zero, xhat0, uhat0, &vec![0.0; a.w]);
    let mut bm = DMatrix::zeros(n, es.n_u());
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            bm[(i, j)] = *v;
        }
    }
    if am.iter().chain(bm.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteIntegration);
    }
    Ok((am, bm))
}

/// Quadratic `V = eᵀQe + βt` with `Q` from a Lyapunov equation of the LQR
/// closed loop, `κ = K e + feedforward`, and the smallest `γ` found for
/// which the decrease condition is verified.
///
/// Levels are scanned geometrically upward from the smallest one that
/// satisfies the jump and initial conditions; the first verified level is
/// then refined downward by bisection. With `accept_inconclusive`, the
/// smallest level not falsified is accepted when none is verified.
pub fn lyap_candidate<E: ErrorSystem + ?Sized>(es: &E, domains: &FunnelDomains, ts: f64, settings: &CandidateSettings) -> Result<CandidateReport> {
    let a = es.arities();
    let n = a.e;
    let m = es.n_u();
    if settings.q_weights.len() != n || settings.r_weights.len() != m || settings.e0.dim() != n {
        return Err(Error::InvalidSettings("weights or E0 do not match the error system".into()));
    }
    if !(settings.shrink >= 0.0 && settings.shrink < 1.0) || !(settings.growth > 1.0) {
        return Err(Error::InvalidSettings("shrink must lie in [0, 1) and growth exceed 1".into()));
    }
    let (am, bm) = linearize(es, &settings.xhat0, &settings.uhat0)?;
    let qm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(settings.q_weights.clone()));
    let rm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(settings.r_weights.clone()));
    let (k, p) = lqr(&am, &bm, &qm, &rm)?;
    let acl = &am + &bm * &k;
    let alpha = match settings.decay {
        Some(a) => a,
        None => 0.5 * acl.complex_eigenvalues().iter().map(|l| -l.re).fold(f64::INFINITY, f64::min),
    };
    let shifted = &acl + DMatrix::identity(n, n) * alpha;
    if !(alpha >= 0.0) || !is_hurwitz(&shifted) {
        return Err(Error::InvalidSettings(format!("decay rate {alpha} exceeds the closed-loop rate")));
    }
    let ql = lyapunov(&shifted, &(&qm + k.transpose() * &rm * &k))?;
    let ql_rows = rows(&ql);

    let ka = kappa_arities(&a);
    let kappa = PolynomialMap::linear_in_e(ka, &rows(&k)).plus(&feedforward(es)?)?;
    let jump = es.jump_matrix();

    // |JΔ|_Q over the vertices of ΔÛ
    let dq = &domains.delta_uhat;
    let mut jq: f64 = 0.0;
    for mask in 0..(1usize << dq.dim()) {
        let d = dq.corner(mask);
        let jd: Vec<f64> = jump.iter().map(|r| r.iter().zip(&d).map(|(x, y)| x * y).sum()).collect();
        let v = nalgebra::DVector::from_vec(jd);
        jq = jq.max((v.transpose() * &ql * &v)[(0, 0)].max(0.0).sqrt());
    }
    let mut init: f64 = 0.0;
    for mask in 0..(1usize << n) {
        let e = nalgebra::DVector::from_vec(settings.e0.corner(mask));
        init = init.max((e.transpose() * &ql * &e)[(0, 0)]);
    }
    let rho = settings.shrink;
    let jump_floor = if rho > 0.0 { jq * jq / (1.0 - (1.0 - rho).sqrt()).powi(2) } else if jq > 0.0 { f64::INFINITY } else { 0.0 };
    let gamma_lo = jump_floor.max(init).max(f64::MIN_POSITIVE) * (1.0 + 1e-9);
    if !gamma_lo.is_finite() {
        return Err(Error::NoCertifiedLevel("jumps cannot be absorbed without shrinkage".into()));
    }

    let cert_at = |gamma: f64| FunnelCertificate {
        schema_version: CERTIFICATE_SCHEMA,
        gamma,
        ts,
        e0: settings.e0.clone(),
        jump_matrix: jump.clone(),
        domains: domains.clone(),
        v: PolynomialMap::quadratic(Arities { t: 1, e: n, xhat: 0, uhat: 0, w: 0, what: 0 }, &ql_rows, rho * gamma / ts, 0.0),
        kappa: kappa.clone(),
    };

    let mut trials = Vec::new();
    let mut below = None;
    let mut verified: Option<(f64, Verdict)> = None;
    let mut fallback: Option<(f64, Verdict)> = None;
    for i in 0..settings.max_trials {
        let gamma = gamma_lo * settings.growth.powi(i as i32);
        let verdict = check_decrease(&cert_at(gamma), es, &settings.check)?;
        trials.push(GammaTrial { gamma, decrease: verdict.clone() });
        if verdict.is_verified() {
            verified = Some((gamma, verdict));
            break;
        }
        if !verdict.is_falsified() && fallback.is_none() {
            fallback = Some((gamma, verdict));
        }
        below = Some(gamma);
    }
    if let (Some((mut hi, mut hv)), Some(mut lo)) = (verified.clone(), below) {
        for _ in 0..settings.bisect_steps {
            let mid = 0.5 * (lo + hi);
            let verdict = check_decrease(&cert_at(mid), es, &settings.check)?;
            trials.push(GammaTrial { gamma: mid, decrease: verdict.clone() });
            if verdict.is_verified() {
                hi = mid;
                hv = verdict;
            } else {
                lo = mid;
            }
        }
        verified = Some((hi, hv));
    }
    let (gamma, decrease) = match (verified, fallback) {
        (Some(v), _) => v,
        (None, Some(f)) if settings.accept_inconclusive => f,
        _ => return Err(Error::NoCertifiedLevel(format!("{} levels tried", trials.len()))),
    };
    let certificate = cert_at(gamma);
    let jump_v = check_jump(&certificate, &settings.check)?;
    let initial = check_initial_containment(&certificate, &settings.check)?;
    Ok(CandidateReport { certificate, gain: rows(&k), riccati: rows(&p), lyapunov: ql_rows, decrease, jump: jump_v, initial, trials })
}
