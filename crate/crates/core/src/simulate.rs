//! Closed-loop simulation of the concrete model and its continuous
//! abstraction under the hierarchical controller, and monitoring of the
//! specification on the sampled trajectories.

use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::funnel::ErrorSystem;
use crate::games::GameMode;
use crate::interval::IntervalBox;
use crate::reach::VectorField;
use crate::refine::{HierarchicalController, Hold, Latch};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
}

impl Trajectory {
    fn push(&mut self, t: f64, x: &[f64], u: &[f64], w: &[f64]) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.controls.push(u.to_vec());
        self.disturbances.push(w.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Header `t, x1.., u1.., w1..`; values in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: &mut W, state: &str, control: &str, disturbance: &str) -> Result<()> {
        let (n, m, k) = match self.states.first() {
            Some(x) => (x.len(), self.controls[0].len(), self.disturbances[0].len()),
            None => (0, 0, 0),
        };
        let mut line = String::from("t");
        for (prefix, count) in [(state, n), (control, m), (disturbance, k)] {
            for i in 1..=count {
                let _ = write!(line, ",{prefix}{i}");
            }
        }
        writeln!(out, "{line}")?;
        for i in 0..self.len() {
            line.clear();
            let _ = write!(line, "{}", self.times[i]);
            for v in self.states[i].iter().chain(&self.controls[i]).chain(&self.disturbances[i]) {
                let _ = write!(line, ",{v}");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Piecewise-constant signal switching every `period`; the last value is
/// held beyond the end.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstant {
    pub period: f64,
    pub values: Vec<Vec<f64>>,
}

impl PiecewiseConstant {
    pub fn constant(value: Vec<f64>) -> Self {
        PiecewiseConstant { period: f64::INFINITY, values: vec![value] }
    }

    pub fn at(&self, t: f64) -> &[f64] {
        let k = if self.period.is_finite() { (t / self.period + 1e-9).floor().max(0.0) as usize } else { 0 };
        &self.values[k.min(self.values.len() - 1)]
    }
}

/// Values drawn uniformly from `w`, deterministically from `seed`.
pub fn random_disturbance(w: &IntervalBox, duration: f64, switch_period: f64, seed: u64) -> Result<PiecewiseConstant> {
    if !(switch_period > 0.0) || !w.is_bounded() {
        return Err(Error::InvalidSettings("switch period must be positive and W bounded".into()));
    }
    let count = ((duration / switch_period).ceil() as usize).max(1) + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..count)
        .map(|_| (0..w.dim()).map(|d| if w.lo()[d] < w.hi()[d] { rng.gen_range(w.lo()[d]..=w.hi()[d]) } else { w.lo()[d] }).collect())
        .collect();
    Ok(PiecewiseConstant { period: switch_period, values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimSettings {
    pub steps_per_period: usize,
    pub max_periods: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    /// All periods simulated.
    Completed,
    /// A target cell of a reach-avoid game was latched at `t`.
    ReachedTarget { t: f64 },
    /// The latched cell at `t` was outside the winning set.
    LeftWinningSet { t: f64, cell: usize },
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    /// Concrete states with `u` and `w`.
    pub concrete: Trajectory,
    /// Abstract states with the held `û` and `ŵ`.
    pub abstract_: Trajectory,
    pub status: RunStatus,
    pub warnings: Vec<String>,
}

fn clamp_jump(delta: &mut [f64], bounds: &IntervalBox) -> bool {
    let mut clamped = false;
    for (d, v) in delta.iter_mut().enumerate() {
        let c = v.clamp(bounds.lo()[d], bounds.hi()[d]);
        clamped |= c != *v;
        *v = c;
    }
    clamped
}

/// Co-integrates `[x; x̂]` with RK4 at `dt = T_s / steps_per_period`.
///
/// `x̂` is latched at every `kT_s`; input jumps outside `ΔÛ` are clamped to
/// it with a warning. The feedback is evaluated at every RK4 stage with
/// the time into the current period, disturbances are held over each step.
/// The run stops early when it reaches the target of a reach-avoid game or
/// leaves the winning set; the traces up to that instant are returned.
#[allow(clippy::too_many_arguments)]
pub fn simulate_closed_loop<C, A, E>(
    concrete: &C,
    abs: &A,
    hc: &HierarchicalController<'_, E>,
    x0: &[f64],
    xhat0: &[f64],
    w: &PiecewiseConstant,
    what: &PiecewiseConstant,
    settings: &SimSettings,
) -> Result<SimOutcome>
where
    C: VectorField + ?Sized,
    A: VectorField + ?Sized,
    E: ErrorSystem + ?Sized,
{
    let (n, nh) = (concrete.dim_x(), abs.dim_x());
    if x0.len() != n || xhat0.len() != nh {
        return Err(Error::DimensionMismatch { expected: n + nh, found: x0.len() + xhat0.len() });
    }
    if settings.steps_per_period == 0 {
        return Err(Error::InvalidSettings("steps_per_period must be positive".into()));
    }
    let ts = hc.ts();
    let dt = ts / settings.steps_per_period as f64;
    let delta_bounds = &hc.cert.domains.delta_uhat;
    let mut x = x0.to_vec();
    let mut xhat = xhat0.to_vec();
    let mut latch = Latch::new();
    let mut uhat_prev: Option<Vec<f64>> = None;
    let mut out = SimOutcome { concrete: Trajectory::default(), abstract_: Trajectory::default(), status: RunStatus::Completed, warnings: Vec::new() };
    let mut u = vec![0.0; concrete.dim_u()];

    let mut dz = vec![0.0; n + nh];
    let field = |t_tilde: f64, z: &[f64], uhat: &[f64], wk: &[f64], whk: &[f64], dz: &mut [f64], u_out: &mut Vec<f64>| {
        let (xs, xh) = z.split_at(n);
        *u_out = hc.low_level(t_tilde, xs, xh, uhat);
        let (dx, dxh) = dz.split_at_mut(n);
        concrete.eval(xs, u_out, wk, dx);
        abs.eval(xh, uhat, whk, dxh);
    };

    for k in 0..=settings.max_periods {
        let tk = k as f64 * ts;
        let hold = match hc.sample(k as u64, tk, &xhat, &mut latch) {
            Ok(h) => h,
            Err(Error::LeftWinningSet { t, cell }) => {
                out.status = RunStatus::LeftWinningSet { t, cell };
                Hold::Reached
            }
            Err(e) => return Err(e),
        };
        let Hold::Input(ui) = hold else {
            // final sample: the state at the instant the run ends
            let uh = uhat_prev.clone().unwrap_or_else(|| vec![0.0; abs.dim_u()]);
            if out.status == RunStatus::Completed {
                out.status = RunStatus::ReachedTarget { t: tk };
            }
            out.concrete.push(tk, &x, &u, w.at(tk));
            out.abstract_.push(tk, &xhat, &uh, what.at(tk));
            break;
        };
        let mut uhat = hc.table.inputs().point(ui).to_vec();
        if let Some(prev) = &uhat_prev {
            let mut delta: Vec<f64> = uhat.iter().zip(prev).map(|(a, b)| a - b).collect();
            if clamp_jump(&mut delta, delta_bounds) {
                out.warnings.push(format!("t = {tk}: input jump clamped to the admissible increments"));
                uhat = prev.iter().zip(&delta).map(|(a, b)| a + b).collect();
            }
        }
        if k == settings.max_periods {
            u = hc.low_level(0.0, &x, &xhat, &uhat);
            out.concrete.push(tk, &x, &u, w.at(tk));
            out.abstract_.push(tk, &xhat, &uhat, what.at(tk));
            break;
        }
        let mut z: Vec<f64> = x.iter().chain(&xhat).copied().collect();
        let mut tmp = vec![0.0; n + nh];
        let mut acc = vec![0.0; n + nh];
        let mut scratch_u = Vec::new();
        for j in 0..settings.steps_per_period {
            let t = tk + j as f64 * dt;
            let tt = j as f64 * dt;
            let (wk, whk) = (w.at(t).to_vec(), what.at(t).to_vec());
            field(tt, &z, &uhat, &wk, &whk, &mut dz, &mut u);
            out.concrete.push(t, &z[..n], &u, &wk);
            out.abstract_.push(t, &z[n..], &uhat, &whk);
            // classical RK4
            for i in 0..n + nh {
                acc[i] = dz[i];
                tmp[i] = z[i] + 0.5 * dt * dz[i];
            }
            field(tt + 0.5 * dt, &tmp, &uhat, &wk, &whk, &mut dz, &mut scratch_u);
            for i in 0..n + nh {
                acc[i] += 2.0 * dz[i];
                tmp[i] = z[i] + 0.5 * dt * dz[i];
            }
            field(tt + 0.5 * dt, &tmp, &uhat, &wk, &whk, &mut dz, &mut scratch_u);
            for i in 0..n + nh {
                acc[i] += 2.0 * dz[i];
                tmp[i] = z[i] + dt * dz[i];
            }
            field(tt + dt, &tmp, &uhat, &wk, &whk, &mut dz, &mut scratch_u);
            for i in 0..n + nh {
                z[i] += dt / 6.0 * (acc[i] + dz[i]);
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIntegration);
            }
        }
        x.copy_from_slice(&z[..n]);
        xhat.copy_from_slice(&z[n..]);
        uhat_prev = Some(uhat);
    }
    Ok(out)
}

/// Specification `(X, X_a, X_r)` with closed boxes; unbounded dimensions
/// are unconstrained.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecMonitor {
    pub domain: IntervalBox,
    pub avoid: Vec<IntervalBox>,
    pub target: IntervalBox,
    pub mode: GameMode,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Avoid(usize),
    OutsideDomain,
    LeftTarget,
    NeverReached,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MonitorVerdict {
    Satisfied { t_r: f64 },
    Violated { t: f64, reason: Violation },
}

impl MonitorVerdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, MonitorVerdict::Satisfied { .. })
    }
}

impl std::fmt::Display for MonitorVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MonitorVerdict::Satisfied { t_r } => write!(f, "satisfied (t_r = {t_r})"),
            MonitorVerdict::Violated { t, reason } => {
                let r = match reason {
                    Violation::Avoid(i) => format!("entered avoid set {i}"),
                    Violation::OutsideDomain => "left the domain".into(),
                    Violation::LeftTarget => "left the target".into(),
                    Violation::NeverReached => "never reached the target".into(),
                };
                write!(f, "violated at t = {t}: {r}")
            }
        }
    }
}

/// Checks the specification at the samples of `traj`.
///
/// Avoid sets are checked before the domain and the target. In reach-avoid
/// mode the verdict is decided at the first sample in `X_r`; in
/// reach-avoid-stay mode every later sample must stay in `X_r`.
pub fn monitor(spec: &SpecMonitor, traj: &Trajectory) -> MonitorVerdict {
    let mut reached: Option<f64> = None;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        if reached.is_some() {
            if !spec.target.contains_point(x) {
                return MonitorVerdict::Violated { t: *t, reason: Violation::LeftTarget };
            }
            continue;
        }
        if let Some(i) = spec.avoid.iter().position(|a| a.contains_point(x)) {
            return MonitorVerdict::Violated { t: *t, reason: Violation::Avoid(i) };
        }
        if !spec.domain.contains_point(x) {
            return MonitorVerdict::Violated { t: *t, reason: Violation::OutsideDomain };
        }
        if spec.target.contains_point(x) {
            if spec.mode == GameMode::ReachAvoid {
                return MonitorVerdict::Satisfied { t_r: *t };
            }
            reached = Some(*t);
        }
    }
    match reached {
        Some(t_r) => MonitorVerdict::Satisfied { t_r },
        None => MonitorVerdict::Violated { t: traj.times.last().copied().unwrap_or(0.0), reason: Violation::NeverReached },
    }
}

/// Sets drawn by [`plot_svg`], in concrete coordinates.
#[derive(Clone, Debug)]
pub struct PlotSets {
    pub domain: IntervalBox,
    pub shrunk_domain: IntervalBox,
    pub avoid: Vec<IntervalBox>,
    pub expanded_avoid: Vec<IntervalBox>,
    pub target: IntervalBox,
    pub shrunk_target: IntervalBox,
}

/// Plane of the plot: concrete coordinates drawn horizontally and
/// vertically, and an optional heading coordinate for arrows.
#[derive(Clone, Copy, Debug)]
pub struct PlotAxes {
    pub horizontal: usize,
    pub vertical: usize,
    /// Heading measured from the vertical axis towards the horizontal one.
    pub heading: Option<usize>,
}

/// SVG of both trajectories over the specification sets, with heading
/// arrows at every `arrow_every`-th sample.
///
/// `abstract_points` are the abstract states mapped into concrete
/// coordinates (e.g. through `π`).
pub fn plot_svg(sets: &PlotSets, axes: PlotAxes, concrete: &[Vec<f64>], abstract_points: &[Vec<f64>], arrow_every: usize) -> String {
    let (h, v) = (axes.horizontal, axes.vertical);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut include = |p: [f64; 2]| {
        for i in 0..2 {
            if p[i].is_finite() {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
    };
    for b in [&sets.domain, &sets.target] {
        include([b.lo()[h], b.lo()[v]]);
        include([b.hi()[h], b.hi()[v]]);
    }
    for p in concrete.iter().chain(abstract_points) {
        include([p[h], p[v]]);
    }
    if !(lo[0] < hi[0]) || !(lo[1] < hi[1]) {
        lo = [lo[0].min(0.0), lo[1].min(0.0)];
        hi = [hi[0].max(lo[0] + 1.0), hi[1].max(lo[1] + 1.0)];
    }
    let pad = 0.05 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let (lo, hi) = ([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad]);
    let scale = 600.0 / (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let width = (hi[0] - lo[0]) * scale;
    let height = (hi[1] - lo[1]) * scale;
    let px = |a: f64, b: f64| ((a.clamp(lo[0], hi[0]) - lo[0]) * scale, (hi[1] - b.clamp(lo[1], hi[1])) * scale);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let mut rect = |b: &IntervalBox, style: &str| {
        let (x0, y0) = px(b.lo()[h], b.hi()[v]);
        let (x1, y1) = px(b.hi()[h], b.lo()[v]);
        let _ = writeln!(s, r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" {style}/>"#, x1 - x0, y1 - y0);
    };
    rect(&sets.domain, r#"fill="none" stroke="black" stroke-width="1.5""#);
    rect(&sets.shrunk_domain, r#"fill="none" stroke="black" stroke-dasharray="6 4""#);
    rect(&sets.target, r##"fill="#c8ecc8" stroke="green""##);
    rect(&sets.shrunk_target, r##"fill="#8fd18f" stroke="green" stroke-dasharray="6 4""##);
    for b in &sets.expanded_avoid {
        if let Ok(Some(c)) = b.intersect(&sets.domain) {
            rect(&c, r##"fill="#f6d2d2" stroke="#b03030" stroke-dasharray="6 4""##);
        }
    }
    for b in &sets.avoid {
        rect(b, r##"fill="#d05050" stroke="#802020""##);
    }
    let mut polyline = |pts: &[Vec<f64>], color: &str, width: f64| {
        let mut d = String::new();
        for p in pts {
            let (a, b) = px(p[h], p[v]);
            let _ = write!(d, "{a:.2},{b:.2} ");
        }
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#, d.trim_end());
    };
    // abstract on top, the concrete trace usually hides it otherwise
    polyline(concrete, "blue", 2.5);
    polyline(abstract_points, "red", 1.0);
    if let Some(k) = axes.heading {
        let len = 0.04 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
        for p in concrete.iter().step_by(arrow_every.max(1)) {
            let (a, b) = px(p[h], p[v]);
            let (c, d) = px(p[h] + len * p[k].sin(), p[v] + len * p[k].cos());
            let _ = writeln!(s, r#"<line x1="{a:.2}" y1="{b:.2}" x2="{c:.2}" y2="{d:.2}" stroke="black" stroke-width="1"/>"#);
            let _ = writeln!(s, r#"<circle cx="{c:.2}" cy="{d:.2}" r="1.5" fill="black"/>"#);
        }
    }
    s.push_str("</svg>\n");
    s
}
