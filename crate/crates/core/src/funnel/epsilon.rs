//! Coordinate-wise bounds `ε` on the funnel `{e | V(t, e) ≤ γ}` over
//! `t ∈ [0, T_s]`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::bnb::{self, Classify};
use super::check::{enclose, quadratic_parts};
use super::FunnelCertificate;
use crate::error::{Error, Result};
use crate::interval::Interval;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSettings {
    /// Radius beyond which the level set is reported unbounded.
    pub max_radius: f64,
    /// Initial number of slabs in `t` for the general path.
    pub time_slabs: usize,
    pub max_boxes: usize,
    /// Stop refining a bound once the extremal box is this narrow,
    /// relative to the search radius.
    pub rel_tolerance: f64,
}

impl Default for EpsilonSettings {
    fn default() -> Self {
        EpsilonSettings { max_radius: 1e6, time_slabs: 64, max_boxes: 200_000, rel_tolerance: 1e-6 }
    }
}

/// Sound upper bounds `ε_i ≥ sup |e_i|` over the funnel.
///
/// For `V = eᵀQe + βt + c` with `Q ≻ 0` the bound is exact:
/// `ε_i = √(r (Q⁻¹)_ii)` with `r` the largest of `γ − c − βt` on `[0, T_s]`.
/// Otherwise the level set is searched by bisection, assuming each time
/// slice is connected and contains the origin.
pub fn compute_epsilon(cert: &FunnelCertificate, settings: &EpsilonSettings) -> Result<Vec<f64>> {
    cert.validate()?;
    let n = cert.v.arities().e;
    if let Some(qp) = quadratic_parts(&cert.v) {
        let r = (cert.gamma - qp.c).max(cert.gamma - qp.c - qp.beta * cert.ts);
        if r <= 0.0 {
            return Ok(vec![0.0; n]);
        }
        let inv = qp.q.clone().try_inverse().ok_or_else(|| Error::Format("singular quadratic form".into()))?;
        return Ok((0..n).map(|i| (r * inv[(i, i)]).sqrt()).collect());
    }
    let radius = bounding_radius(cert, settings)?;
    (0..n)
        .map(|i| {
            let up = extremum(cert, settings, radius, i, 1.0);
            let down = extremum(cert, settings, radius, i, -1.0);
            Ok(up.max(down))
        })
        .collect()
}

fn v_box(cert: &FunnelCertificate, b: &[Interval]) -> Interval {
    enclose(|x| cert.v.eval_scalar(x), b).0
}

/// Smallest `R = 2^k` such that `V > γ` is proven on the boundary of
/// `[-R, R]^n` for all `t`.
fn bounding_radius(cert: &FunnelCertificate, settings: &EpsilonSettings) -> Result<f64> {
    let n = cert.v.arities().e;
    let gamma = cert.gamma;
    let mut r: f64 = 1.0;
    'grow: loop {
        if r > settings.max_radius {
            return Err(Error::UnboundedLevelSet(r));
        }
        for j in 0..n {
            for s in [-1.0, 1.0] {
                let mut face = vec![Interval::new(0.0, cert.ts)];
                face.extend((0..n).map(|k| if k == j { Interval::point(s * r) } else { Interval::new(-r, r) }));
                let min_w: Vec<f64> = face.iter().map(|iv| iv.width() / 4096.0).collect();
                let stats = bnb::run(face, settings.max_boxes / (2 * n), |b| {
                    let (v, g) = enclose(|x| cert.v.eval_scalar(x), b);
                    if v.lo > gamma {
                        return Classify::Done;
                    }
                    let c: Vec<f64> = b.iter().map(|iv| iv.mid()).collect();
                    let vc = cert.v_at(c[0], &c[1..]);
                    if vc <= gamma {
                        return Classify::Violation(c, vc);
                    }
                    let mut best = None;
                    let mut score = 0.0;
                    for (i, iv) in b.iter().enumerate() {
                        let sc = iv.width() * g[i].mag();
                        if iv.width() > min_w[i] && sc > score {
                            score = sc;
                            best = Some(i);
                        }
                    }
                    best.map_or(Classify::Unresolved, Classify::Split)
                });
                if !stats.complete() {
                    r *= 2.0;
                    continue 'grow;
                }
            }
        }
        return Ok(r);
    }
}

struct Node {
    key: f64,
    b: Vec<Interval>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.key.total_cmp(&o.key) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.total_cmp(&o.key)
    }
}

/// Upper bound on `sup s·e_i` over `{V ≤ γ} ∩ ([0, T_s] × [-R, R]^n)` by
/// best-first bisection; the bound is sound whenever the search stops.
fn extremum(cert: &FunnelCertificate, settings: &EpsilonSettings, radius: f64, i: usize, s: f64) -> f64 {
    let n = cert.v.arities().e;
    let key = |b: &[Interval]| if s > 0.0 { b[1 + i].hi } else { -b[1 + i].lo };
    let mut heap = BinaryHeap::new();
    let slabs = settings.time_slabs.max(1);
    for k in 0..slabs {
        let t0 = cert.ts * k as f64 / slabs as f64;
        let t1 = cert.ts * (k + 1) as f64 / slabs as f64;
        let mut b = vec![Interval::new(t0, t1)];
        b.extend((0..n).map(|_| Interval::new(-radius, radius)));
        heap.push(Node { key: key(&b), b });
    }
    let tol = settings.rel_tolerance * radius;
    let mut processed = 0;
    while let Some(node) = heap.pop() {
        let b = node.b;
        if v_box(cert, &b).lo > cert.gamma {
            continue;
        }
        processed += 1;
        let wi = b[1 + i].width();
        if wi <= tol || processed >= settings.max_boxes {
            return node.key;
        }
        // split the target coordinate unless another one is much wider
        let (mut d, mut w) = (1 + i, wi);
        for (k, iv) in b.iter().enumerate().skip(1) {
            if iv.width() > 4.0 * w {
                d = k;
                w = iv.width();
            }
        }
        if d == 1 + i && b[0].width() > 4.0 * wi {
            d = 0;
        }
        let (lo, hi) = bnb::split(&b, d);
        for c in [lo, hi] {
            heap.push(Node { key: key(&c), b: c });
        }
    }
    0.0
}
