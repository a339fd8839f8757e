//! Numerical checks of the certificate conditions: initial containment,
//! decrease on the level set, and the jump condition.
//!
//! Each check combines falsification by sampling with interval bisection.
//! Interval bounds intersect the natural extension with the mean-value form
//! built from interval gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bnb::{self, Classify};
use super::epsilon::{compute_epsilon, EpsilonSettings};
use super::{closed_loop, ErrorSystem, FunnelCertificate, Verdict};
use crate::error::Result;
use crate::interval::{Interval, IntervalBox};
use crate::polynomial::PolynomialMap;
use crate::scalar::{Dual, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSettings {
    /// Decrease is required as `V̇ ≤ −tolerance`.
    pub tolerance: f64,
    pub max_boxes: usize,
    /// Smallest box width, relative to the root box, per dimension.
    pub min_width: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings { tolerance: 0.0, max_boxes: 200_000, min_width: 1.0 / 1024.0, samples: 20_000, seed: 0 }
    }
}

/// `V = eᵀ Q e + β t + c` with `Q` positive definite.
#[derive(Clone, Debug)]
pub(crate) struct QuadraticParts {
    pub q: nalgebra::DMatrix<f64>,
    pub beta: f64,
    pub c: f64,
}

impl QuadraticParts {
    pub fn norm_q(&self, v: &[f64]) -> f64 {
        let x = nalgebra::DVector::from_column_slice(v);
        (x.transpose() * &self.q * &x)[(0, 0)].max(0.0).sqrt()
    }
}

pub(crate) fn quadratic_parts(v: &PolynomialMap) -> Option<QuadraticParts> {
    let a = v.arities();
    if v.output_dim() != 1 || a.t != 1 {
        return None;
    }
    let n = a.e;
    let mut q = nalgebra::DMatrix::zeros(n, n);
    let (mut beta, mut c) = (0.0, 0.0);
    for m in v.terms(0) {
        if m.exps[a.e + 1..].iter().any(|k| *k != 0) {
            return None;
        }
        let dt = m.exps[0];
        let es: Vec<(usize, u32)> = m.exps[1..=n].iter().enumerate().filter(|(_, k)| **k > 0).map(|(i, k)| (i, *k)).collect();
        let de: u32 = es.iter().map(|(_, k)| k).sum();
        match (dt, de) {
            (0, 0) => c += m.coeff,
            (1, 0) => beta += m.coeff,
            (0, 2) => {
                if es.len() == 1 {
                    q[(es[0].0, es[0].0)] += m.coeff;
                } else {
                    q[(es[0].0, es[1].0)] += 0.5 * m.coeff;
                    q[(es[1].0, es[0].0)] += 0.5 * m.coeff;
                }
            }
            _ => return None,
        }
    }
    q.clone().cholesky()?;
    Some(QuadraticParts { q, beta, c })
}

/// Range of `f` over `b`: natural extension intersected with the mean-value
/// form; also returns interval gradient enclosures.
pub(crate) fn enclose(f: impl Fn(&[Dual]) -> Dual, b: &[Interval]) -> (Interval, Vec<Interval>) {
    let n = b.len();
    let seeded: Vec<Dual> = b
        .iter()
        .enumerate()
        .map(|(i, iv)| if iv.width() > 0.0 { Dual::var(*iv, i, n) } else { Dual::cst(iv.lo) })
        .collect();
    let r = f(&seeded);
    let grad = if r.g.is_empty() { vec![Interval::point(0.0); n] } else { r.g };
    let center: Vec<Dual> = b.iter().map(|iv| Dual::cst(iv.mid())).collect();
    let mut mv = f(&center).v;
    for (i, iv) in b.iter().enumerate() {
        if iv.width() > 0.0 {
            let c = iv.mid();
            mv = mv + grad[i] * Interval::new(iv.lo - c, iv.hi - c);
        }
    }
    let range = r.v.intersect(&mv).unwrap_or(r.v);
    (range, grad)
}

fn v_of<S: Scalar>(cert: &FunnelCertificate, vars: &[S]) -> S {
    cert.v.eval_scalar(&vars[..cert.v.arities().total()])
}

fn box_vec(b: &IntervalBox) -> Vec<Interval> {
    b.intervals()
}

/// `V(0, e) ≤ γ` on `E0`.
pub fn check_initial_containment(cert: &FunnelCertificate, settings: &CheckSettings) -> Result<Verdict> {
    cert.validate()?;
    let n = cert.e0.dim();
    let at0 = |e: &[f64]| cert.v_at(0.0, e);
    // convex quadratic: the maximum over a box is attained at a vertex
    if let Some(qp) = quadratic_parts(&cert.v) {
        if n <= 20 {
            let (mut worst, mut arg) = (f64::NEG_INFINITY, Vec::new());
            for mask in 0..(1usize << n) {
                let e = cert.e0.corner(mask);
                let v = at0(&e);
                if v > worst {
                    worst = v;
                    arg = e;
                }
            }
            let _ = qp;
            return Ok(if worst <= cert.gamma { Verdict::Verified { boxes: 1 << n } } else { Verdict::Falsified { witness: arg, value: worst } });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut worst = f64::NEG_INFINITY;
    let mut samples = 0;
    let corners = if n <= 12 { 1usize << n } else { 0 };
    for mask in 0..corners {
        let e = cert.e0.corner(mask);
        samples += 1;
        let v = at0(&e);
        worst = worst.max(v);
        if v > cert.gamma {
            return Ok(Verdict::Falsified { witness: e, value: v });
        }
    }
    for _ in 0..settings.samples {
        let e: Vec<f64> = (0..n).map(|i| rng.gen_range(cert.e0.lo()[i]..=cert.e0.hi()[i])).collect();
        samples += 1;
        let v = at0(&e);
        worst = worst.max(v);
        if v > cert.gamma {
            return Ok(Verdict::Falsified { witness: e, value: v });
        }
    }
    let root = box_vec(&cert.e0);
    let min_w: Vec<f64> = root.iter().map(|iv| iv.width() * settings.min_width).collect();
    let stats = bnb::run(root, settings.max_boxes, |b| {
        let (range, grad) = enclose(
            |x| {
                let mut v = vec![Dual::cst(0.0)];
                v.extend_from_slice(x);
                v_of(cert, &v)
            },
            b,
        );
        if range.hi <= cert.gamma {
            return Classify::Done;
        }
        let c: Vec<f64> = b.iter().map(|iv| iv.mid()).collect();
        let vc = at0(&c);
        if vc > cert.gamma {
            return Classify::Violation(c, vc);
        }
        pick_split(b, &min_w, &[(&grad, range.width())])
    });
    Ok(verdict_from(stats, samples, worst))
}

fn verdict_from(stats: bnb::BnbStats, samples: usize, worst: f64) -> Verdict {
    if let Some((witness, value)) = stats.violation {
        return Verdict::Falsified { witness, value };
    }
    if stats.complete() {
        Verdict::Verified { boxes: stats.processed }
    } else {
        Verdict::Inconclusive { boxes: stats.processed, unresolved: stats.unresolved, samples, worst_sample: worst }
    }
}

/// Splits the dimension with the largest width-weighted gradient score
/// among those still above their minimum width.
fn pick_split(b: &[Interval], min_w: &[f64], grads: &[(&[Interval], f64)]) -> Classify {
    let mut best = None;
    let mut best_score = -1.0;
    for i in 0..b.len() {
        let w = b[i].width();
        if w <= min_w[i] || w == 0.0 {
            continue;
        }
        let mut score = 0.0;
        for (g, scale) in grads {
            score += w * g[i].mag() / (scale + 1e-300);
        }
        // splitting a dimension nothing depends on cannot help
        if score > 0.0 && score > best_score {
            best_score = score;
            best = Some(i);
        }
    }
    best.map_or(Classify::Unresolved, Classify::Split)
}

pub(crate) struct DecreaseProblem<'a, E: ErrorSystem + ?Sized> {
    pub cert: &'a FunnelCertificate,
    pub es: &'a E,
    dv_dt: PolynomialMap,
    dv_de: Vec<PolynomialMap>,
}

impl<'a, E: ErrorSystem + ?Sized> DecreaseProblem<'a, E> {
    pub fn new(cert: &'a FunnelCertificate, es: &'a E) -> Self {
        let n = cert.v.arities().e;
        DecreaseProblem { cert, es, dv_dt: cert.v.partial(0), dv_de: (0..n).map(|i| cert.v.partial(1 + i)).collect() }
    }

    /// `V̇ = ∂V/∂t + ∂V/∂e · (f_e + g_e κ)` at flat variables.
    pub fn vdot<S: Scalar>(&self, vars: &[S]) -> S {
        let k = self.cert.v.arities().total();
        let de = closed_loop(self.es, &self.cert.kappa, vars);
        let mut acc = self.dv_dt.eval_scalar(&vars[..k]);
        for (p, d) in self.dv_de.iter().zip(de) {
            acc = acc + p.eval_scalar(&vars[..k]) * d;
        }
        acc
    }
}

fn sample_coord(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    match rng.gen_range(0..4) {
        0 => lo,
        1 => hi,
        _ => rng.gen_range(lo..=hi),
    }
}

/// Point on `{e | V(t, e) = γ}` along direction `d`, if the ray crosses it.
fn project_to_level(cert: &FunnelCertificate, t: f64, d: &[f64]) -> Option<Vec<f64>> {
    let at = |s: f64| cert.v_at(t, &d.iter().map(|x| x * s).collect::<Vec<_>>());
    if at(0.0) >= cert.gamma {
        return None;
    }
    let mut hi = 1.0;
    let mut k = 0;
    while at(hi) < cert.gamma {
        hi *= 2.0;
        k += 1;
        if k > 60 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < cert.gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(d.iter().map(|x| x * hi).collect())
}

fn gaussian_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        // Box-Muller pairs
        let mut v = Vec::with_capacity(n + 1);
        while v.len() < n {
            let (u1, u2): (f64, f64) = (rng.gen_range(1e-300..1.0), rng.gen_range(0.0..1.0));
            let r = (-2.0 * u1.ln()).sqrt();
            v.push(r * (std::f64::consts::TAU * u2).cos());
            v.push(r * (std::f64::consts::TAU * u2).sin());
        }
        v.truncate(n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Root box `[t, e, x̂, û, w, ŵ]` for the decrease check.
fn decrease_root(cert: &FunnelCertificate, eps: &[f64]) -> Vec<Interval> {
    let mut root = vec![Interval::new(0.0, cert.ts)];
    root.extend(eps.iter().map(|e| {
        let r = e * (1.0 + 1e-9) + 1e-12;
        Interval::new(-r, r)
    }));
    let d = &cert.domains;
    for b in [&d.xhat, &d.uhat, &d.w, &d.what] {
        root.extend(b.intervals());
    }
    root
}

/// `V̇ ≤ −tolerance` wherever `V(t, e) = γ`, over all `t ∈ [0, T_s]` and
/// abstract states, inputs and disturbances in the certificate domains.
pub fn check_decrease<E: ErrorSystem + ?Sized>(cert: &FunnelCertificate, es: &E, settings: &CheckSettings) -> Result<Verdict> {
    cert.check_against(es)?;
    let problem = DecreaseProblem::new(cert, es);
    let a = cert.arities();
    let n = a.e;
    let eps = compute_epsilon(cert, &EpsilonSettings::default())?;
    let root = decrease_root(cert, &eps);

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut worst = f64::NEG_INFINITY;
    let mut samples = 0;
    for _ in 0..settings.samples {
        let t = sample_coord(&mut rng, 0.0, cert.ts);
        let dir = gaussian_direction(&mut rng, n);
        let Some(e) = project_to_level(cert, t, &dir) else { continue };
        let mut vars = vec![t];
        vars.extend(e);
        for iv in &root[1 + n..] {
            vars.push(sample_coord(&mut rng, iv.lo, iv.hi));
        }
        samples += 1;
        let vd = problem.vdot(&vars);
        worst = worst.max(vd);
        if vd > -settings.tolerance {
            return Ok(Verdict::Falsified { witness: vars, value: vd });
        }
    }

    let min_w: Vec<f64> = root.iter().map(|iv| iv.width() * settings.min_width).collect();
    let gamma = cert.gamma;
    let k = cert.v.arities().total();
    let stats = bnb::run(root, settings.max_boxes, |b| {
        let (vr, vgrad) = enclose(|x| cert.v.eval_scalar(&x[..k]), &b[..k]);
        if vr.hi < gamma || vr.lo > gamma {
            return Classify::Done;
        }
        let (dr, dgrad) = enclose(|x| problem.vdot(x), b);
        if dr.hi <= -settings.tolerance {
            return Classify::Done;
        }
        // On the level set V̇ = V̇ + λ(V − γ) for any λ; a per-box λ that
        // cancels the variation of V̇ across the level set tightens the bound.
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..k {
            let w2 = b[i].width().powi(2);
            num += w2 * dgrad[i].mid() * vgrad[i].mid();
            den += w2 * vgrad[i].mid().powi(2);
        }
        let lambda = if den > 0.0 { -num / den } else { 0.0 };
        let (fr, fgrad) = enclose(|x| problem.vdot(x) + (cert.v.eval_scalar(&x[..k]) - Dual::cst(gamma)).scale(lambda), b);
        if fr.hi <= -settings.tolerance {
            return Classify::Done;
        }
        let mut vg = vgrad;
        vg.resize(b.len(), Interval::point(0.0));
        pick_split(b, &min_w, &[(&fgrad, fr.width()), (&vg, vr.width())])
    });
    Ok(verdict_from(stats, samples, worst))
}

/// `V(0, e − J Δû) ≤ γ` for all `e` with `V(T_s, e) ≤ γ` and `Δû ∈ ΔÛ`.
/// Witnesses are `[e, Δû]`.
pub fn check_jump(cert: &FunnelCertificate, settings: &CheckSettings) -> Result<Verdict> {
    cert.validate()?;
    let n = cert.v.arities().e;
    let delta = &cert.domains.delta_uhat;
    let m = delta.dim();
    let jmul = |d: &[f64]| -> Vec<f64> { cert.jump_matrix.iter().map(|row| row.iter().zip(d).map(|(a, b)| a * b).sum()).collect() };

    if let Some(qp) = quadratic_parts(&cert.v) {
        // worst case: boundary of F(T_s) pushed outward by the largest jump
        let r2 = cert.gamma - qp.c - qp.beta * cert.ts;
        if r2 < 0.0 {
            return Ok(Verdict::Verified { boxes: 0 });
        }
        let (mut jq, mut arg) = (0.0, vec![0.0; m]);
        if m <= 20 {
            for mask in 0..(1usize << m) {
                let d = delta.corner(mask);
                let v = qp.norm_q(&jmul(&d));
                if v > jq {
                    jq = v;
                    arg = d;
                }
            }
        }
        let worst = (r2.sqrt() + jq).powi(2) + qp.c;
        if worst <= cert.gamma {
            return Ok(Verdict::Verified { boxes: 1 << m });
        }
        let jd = jmul(&arg);
        let e: Vec<f64> = if jq > 0.0 { jd.iter().map(|x| -x * r2.sqrt() / jq).collect() } else { vec![0.0; n] };
        let shifted: Vec<f64> = e.iter().zip(&jd).map(|(a, b)| a - b).collect();
        let value = cert.v_at(0.0, &shifted);
        let mut witness = e;
        witness.extend(arg);
        return Ok(Verdict::Falsified { witness, value });
    }

    let eps = compute_epsilon(cert, &EpsilonSettings::default())?;
    let mut root: Vec<Interval> = eps.iter().map(|e| Interval::new(-e * (1.0 + 1e-9) - 1e-12, e * (1.0 + 1e-9) + 1e-12)).collect();
    root.extend(delta.intervals());

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut worst = f64::NEG_INFINITY;
    let mut samples = 0;
    for _ in 0..settings.samples {
        let dir = gaussian_direction(&mut rng, n);
        let Some(edge) = project_to_level(cert, cert.ts, &dir) else { continue };
        let s = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.0..1.0) };
        let e: Vec<f64> = edge.iter().map(|x| x * s).collect();
        let d: Vec<f64> = (0..m).map(|i| sample_coord(&mut rng, delta.lo()[i], delta.hi()[i])).collect();
        let jd = jmul(&d);
        let v = cert.v_at(0.0, &e.iter().zip(&jd).map(|(a, b)| a - b).collect::<Vec<_>>());
        samples += 1;
        worst = worst.max(v);
        if v > cert.gamma {
            let mut witness = e;
            witness.extend(d);
            return Ok(Verdict::Falsified { witness, value: v });
        }
    }

    let min_w: Vec<f64> = root.iter().map(|iv| iv.width() * settings.min_width).collect();
    let gamma = cert.gamma;
    let ts = cert.ts;
    let stats = bnb::run(root, settings.max_boxes, |b| {
        let (vt, gt) = enclose(
            |x| {
                let mut v = vec![Dual::cst(ts)];
                v.extend_from_slice(&x[..n]);
                cert.v.eval_scalar(&v)
            },
            b,
        );
        if vt.lo > gamma {
            return Classify::Done;
        }
        let (v0, g0) = enclose(
            |x| {
                let mut v = vec![Dual::cst(0.0)];
                for i in 0..n {
                    let mut s = x[i].clone();
                    for j in 0..m {
                        s = s - x[n + j].scale(cert.jump_matrix[i][j]);
                    }
                    v.push(s);
                }
                cert.v.eval_scalar(&v)
            },
            b,
        );
        if v0.hi <= gamma {
            return Classify::Done;
        }
        let c: Vec<f64> = b.iter().map(|iv| iv.mid()).collect();
        if cert.v_at(ts, &c[..n]) <= gamma {
            let jd = jmul(&c[n..]);
            let v = cert.v_at(0.0, &c[..n].iter().zip(&jd).map(|(a, b)| a - b).collect::<Vec<_>>());
            if v > gamma {
                return Classify::Violation(c, v);
            }
        }
        pick_split(b, &min_w, &[(&gt, vt.width()), (&g0, v0.width())])
    });
    Ok(verdict_from(stats, samples, worst))
}
