//! Pipeline configuration and the derived finite-abstraction problem.
//!
//! Specification sets live in the concrete state space. Dimensions left
//! unbounded (`-inf`/`inf`) are unconstrained and are never shrunk or
//! expanded.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::abstraction::InputGrid;
use crate::affine::preimage_pi;
use crate::error::{Error, Result};
use crate::funnel::{CandidateSettings, CheckSettings, EpsilonSettings, ErrorSystem, FunnelDomains};
use crate::games::{GameMode, GameSpec};
use crate::grid::PartitionGrid;
use crate::interval::IntervalBox;
use crate::models::ship::{Mat3, ShipParams};
use crate::reach::ReachSettings;

pub const SCENARIO_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub model: ModelConfig,
    pub spec: SpecConfig,
    pub funnel: FunnelConfig,
    pub abstraction: AbstractionConfig,
    pub simulate: SimulateConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Ship { m: Mat3, d: Mat3, coriolis: Mat3 },
    DoubleIntegrator,
}

impl ModelConfig {
    pub fn ship_params(&self) -> Option<ShipParams> {
        match self {
            ModelConfig::Ship { m, d, coriolis } => Some(ShipParams { m: *m, d: *d, coriolis: *coriolis }),
            ModelConfig::DoubleIntegrator => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub mode: GameMode,
    pub ts: f64,
    /// `X`.
    pub domain: IntervalBox,
    /// `X_a`.
    #[serde(default)]
    pub avoid: Vec<IntervalBox>,
    /// `X_r`.
    pub target: IntervalBox,
    pub w: IntervalBox,
    /// `Û`.
    pub uhat: IntervalBox,
    /// `ΔÛ`.
    pub delta_uhat: IntervalBox,
    /// `Ŵ`.
    pub what: IntervalBox,
    /// `Û_a`.
    #[serde(default)]
    pub avoid_inputs: Vec<IntervalBox>,
    /// `Û_r`; all of `Û` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_inputs: Option<IntervalBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunnelConfig {
    /// Error bound used for the specification; the certificate's own bound
    /// is used when absent. `inf` marks coordinates the specification does
    /// not constrain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    /// Defaults to half the configured `ε` box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e0: Option<IntervalBox>,
    pub xhat0: Vec<f64>,
    pub uhat0: Vec<f64>,
    pub q_weights: Vec<f64>,
    pub r_weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    #[serde(default = "default_growth")]
    pub growth: f64,
    #[serde(default = "default_max_trials")]
    pub max_trials: usize,
    #[serde(default = "default_bisect_steps")]
    pub bisect_steps: usize,
    #[serde(default)]
    pub accept_inconclusive: bool,
    #[serde(default)]
    pub check: CheckSettings,
    #[serde(default)]
    pub epsilon: EpsilonSettings,
}

fn default_shrink() -> f64 {
    0.5
}
fn default_growth() -> f64 {
    1.25
}
fn default_max_trials() -> usize {
    24
}
fn default_bisect_steps() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractionConfig {
    pub cells_per_dim: Vec<usize>,
    pub inputs_per_dim: Vec<usize>,
    #[serde(default = "default_reach_steps")]
    pub steps: usize,
    #[serde(default)]
    pub inflation: Vec<f64>,
    /// Box gridded instead of the whole shrunk abstract domain. Must lie
    /// inside it; leaving the box is losing, so this only restricts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_domain: Option<IntervalBox>,
}

fn default_reach_steps() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub runs: usize,
    pub steps_per_period: usize,
    pub max_periods: usize,
    /// Switching period of the piecewise-constant disturbances.
    pub switch_period: f64,
    /// Random `ŵ` for the companion abstract trajectory instead of `ŵ = 0`.
    #[serde(default)]
    pub random_what: bool,
    /// Region of abstract states preferred for the plotted run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_region: Option<IntervalBox>,
}

fn bx(lo: &[f64], hi: &[f64]) -> IntervalBox {
    IntervalBox::new(lo.to_vec(), hi.to_vec()).expect("static box")
}

/// The docking scenario of the marine vessel at desk resolution.
pub fn ship_scenario() -> ScenarioConfig {
    let p = ShipParams::supply_vessel();
    let inf = f64::INFINITY;
    let eps = [0.427, 0.432, 0.235];
    ScenarioConfig {
        schema_version: SCENARIO_SCHEMA,
        name: "ship".into(),
        seed: 1,
        output_dir: None,
        model: ModelConfig::Ship { m: p.m, d: p.d, coriolis: p.coriolis },
        spec: SpecConfig {
            mode: GameMode::ReachAvoid,
            ts: 3.0,
            domain: bx(&[0.0, 0.0, -PI, -inf, -inf, -inf], &[10.0, 6.5, PI, inf, inf, inf]),
            avoid: vec![
                bx(&[2.0, 0.0, -PI, -inf, -inf, -inf], &[2.5, 3.0, PI, inf, inf, inf]),
                bx(&[5.0, 3.5, -PI, -inf, -inf, -inf], &[5.5, 6.5, PI, inf, inf, inf]),
            ],
            target: bx(&[7.0, 0.0, PI / 3.0, -inf, -inf, -inf], &[10.0, 6.5, 2.0 * PI / 3.0, inf, inf, inf]),
            w: bx(&[-0.01, -0.01, -0.01, -0.01, -0.01, -0.05], &[0.01, 0.01, 0.01, 0.01, 0.01, 0.05]),
            uhat: bx(&[0.0, -0.05, -0.1], &[0.18, 0.05, 0.1]),
            delta_uhat: bx(&[-0.18, -0.1, -0.2], &[0.18, 0.1, 0.2]),
            what: bx(&[-0.01; 3], &[0.01; 3]),
            avoid_inputs: Vec::new(),
            target_inputs: None,
        },
        funnel: FunnelConfig {
            eps: Some(vec![eps[0], eps[1], eps[2], inf, inf, inf]),
            e0: Some(bx(
                &[-0.5 * eps[0], -0.5 * eps[1], -0.5 * eps[2], -0.02, -0.02, -0.02],
                &[0.5 * eps[0], 0.5 * eps[1], 0.5 * eps[2], 0.02, 0.02, 0.02],
            )),
            xhat0: vec![8.5, 3.25, PI / 2.0],
            uhat0: vec![0.09, 0.0, 0.0],
            q_weights: vec![100.0, 100.0, 100.0, 1.0, 1.0, 1.0],
            r_weights: vec![1e-6; 3],
            decay: None,
            shrink: 0.9,
            growth: 1.25,
            max_trials: 2,
            bisect_steps: 0,
            accept_inconclusive: true,
            check: CheckSettings { max_boxes: 20_000, samples: 5_000, ..CheckSettings::default() },
            epsilon: EpsilonSettings::default(),
        },
        // At 20 cells per dimension the whole shrunk domain leaves one heading
        // layer inside the shrunk target and one northing layer under the
        // first obstacle, and no successor box fits in a single layer. The
        // grid below puts two layers in each.
        abstraction: AbstractionConfig {
            cells_per_dim: vec![20, 20, 20],
            inputs_per_dim: vec![5, 5, 5],
            steps: 30,
            inflation: Vec::new(),
            grid_domain: Some(bx(&[0.6075, 0.6075, -2.7], &[8.4375, 5.8925, 2.3])),
        },
        simulate: SimulateConfig {
            runs: 200,
            steps_per_period: 300,
            max_periods: 60,
            switch_period: 1.0,
            random_what: false,
            start_region: Some(bx(&[0.0, 0.0, -PI], &[2.0, 2.0, PI])),
        },
    }
}

/// The same scenario at the resolution of the original study.
pub fn ship_scenario_full() -> ScenarioConfig {
    let mut c = ship_scenario();
    c.name = "ship-full".into();
    c.abstraction.cells_per_dim = vec![50, 50, 50];
    c.abstraction.grid_domain = None;
    c.abstraction.inputs_per_dim = vec![9, 9, 9];
    c
}

/// A double integrator that has to drive its position into `[7, 9]`.
pub fn double_integrator_scenario() -> ScenarioConfig {
    let inf = f64::INFINITY;
    ScenarioConfig {
        schema_version: SCENARIO_SCHEMA,
        name: "double-integrator".into(),
        seed: 7,
        output_dir: None,
        model: ModelConfig::DoubleIntegrator,
        spec: SpecConfig {
            mode: GameMode::ReachAvoidStay,
            ts: 1.0,
            domain: bx(&[0.0, -inf], &[10.0, inf]),
            avoid: Vec::new(),
            target: bx(&[7.0, -inf], &[9.0, inf]),
            w: bx(&[-0.02], &[0.02]),
            uhat: bx(&[-0.5], &[0.5]),
            delta_uhat: bx(&[-1.0], &[1.0]),
            what: bx(&[-0.01], &[0.01]),
            avoid_inputs: Vec::new(),
            target_inputs: None,
        },
        funnel: FunnelConfig {
            eps: None,
            e0: Some(bx(&[-0.05, -0.05], &[0.05, 0.05])),
            xhat0: vec![5.0],
            uhat0: vec![0.0],
            q_weights: vec![100.0, 4.0],
            r_weights: vec![0.001],
            decay: None,
            shrink: 0.5,
            growth: 1.25,
            max_trials: 24,
            bisect_steps: 4,
            accept_inconclusive: false,
            check: CheckSettings::default(),
            epsilon: EpsilonSettings::default(),
        },
        abstraction: AbstractionConfig { cells_per_dim: vec![40], inputs_per_dim: vec![5], steps: 10, inflation: Vec::new(), grid_domain: None },
        simulate: SimulateConfig { runs: 20, steps_per_period: 100, max_periods: 40, switch_period: 0.5, random_what: false, start_region: None },
    }
}

/// Built-in scenarios by name.
pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    match name {
        "ship" => Some(ship_scenario()),
        "ship-full" => Some(ship_scenario_full()),
        "double-integrator" => Some(double_integrator_scenario()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["ship", "ship-full", "double-integrator"];

impl ScenarioConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: ScenarioConfig = toml::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Arities of the configured model: `(n_x, n̂_x, n̂_u, n_w, n̂_w)`.
    fn dims(&self) -> (usize, usize, usize, usize, usize) {
        match self.model {
            ModelConfig::Ship { .. } => (6, 3, 3, 6, 3),
            ModelConfig::DoubleIntegrator => (2, 1, 1, 1, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCENARIO_SCHEMA {
            return Err(Error::Format(format!("scenario schema {} (expected {SCENARIO_SCHEMA})", self.schema_version)));
        }
        let (nx, nhx, nhu, nw, nhw) = self.dims();
        let s = &self.spec;
        if !(s.ts > 0.0 && s.ts.is_finite()) {
            return Err(Error::InvalidSettings(format!("sampling period must be positive, got {}", s.ts)));
        }
        let dim = |name: &str, b: &IntervalBox, n: usize| -> Result<()> {
            if b.dim() == n {
                Ok(())
            } else {
                Err(Error::InvalidSettings(format!("{name} has dimension {}, expected {n}", b.dim())))
            }
        };
        dim("spec.domain", &s.domain, nx)?;
        dim("spec.target", &s.target, nx)?;
        for a in &s.avoid {
            dim("spec.avoid", a, nx)?;
        }
        dim("spec.w", &s.w, nw)?;
        dim("spec.uhat", &s.uhat, nhu)?;
        dim("spec.delta_uhat", &s.delta_uhat, nhu)?;
        dim("spec.what", &s.what, nhw)?;
        for a in &s.avoid_inputs {
            dim("spec.avoid_inputs", a, nhu)?;
        }
        if let Some(t) = &s.target_inputs {
            dim("spec.target_inputs", t, nhu)?;
        }
        for (name, b) in [("spec.w", &s.w), ("spec.uhat", &s.uhat), ("spec.delta_uhat", &s.delta_uhat), ("spec.what", &s.what)] {
            if !b.is_bounded() {
                return Err(Error::InvalidSettings(format!("{name} must be bounded")));
            }
        }
        let f = &self.funnel;
        if let Some(eps) = &f.eps {
            if eps.len() != nx || eps.iter().any(|e| !(*e >= 0.0)) {
                return Err(Error::InvalidSettings(format!("funnel.eps must have {nx} non-negative entries")));
            }
        }
        if let Some(e0) = &f.e0 {
            dim("funnel.e0", e0, nx)?;
        }
        if f.xhat0.len() != nhx || f.uhat0.len() != nhu || f.q_weights.len() != nx || f.r_weights.len() != self.n_u() {
            return Err(Error::InvalidSettings("funnel operating point or weights have wrong length".into()));
        }
        let a = &self.abstraction;
        if a.cells_per_dim.len() != nhx || a.inputs_per_dim.len() != nhu {
            return Err(Error::InvalidSettings("abstraction grid sizes have wrong length".into()));
        }
        if a.steps == 0 {
            return Err(Error::InvalidSettings("abstraction.steps must be at least 1".into()));
        }
        let m = &self.simulate;
        if m.steps_per_period == 0 || !(m.switch_period > 0.0) {
            return Err(Error::InvalidSettings("simulate.steps_per_period and switch_period must be positive".into()));
        }
        if let Some(r) = &m.start_region {
            dim("simulate.start_region", r, nhx)?;
        }
        Ok(())
    }

    fn n_u(&self) -> usize {
        match self.model {
            ModelConfig::Ship { .. } => 3,
            ModelConfig::DoubleIntegrator => 1,
        }
    }

    pub fn domains(&self) -> FunnelDomains {
        let s = &self.spec;
        let (_, nhx, ..) = self.dims();
        // heading and positions stay within the specification domain
        let xhat = IntervalBox::new(s.domain.lo()[..nhx].to_vec(), s.domain.hi()[..nhx].to_vec()).expect("domain slice");
        FunnelDomains { xhat, uhat: s.uhat.clone(), delta_uhat: s.delta_uhat.clone(), w: s.w.clone(), what: s.what.clone() }
    }

    /// `E0`: configured, or half the configured `ε` box.
    pub fn e0(&self) -> Result<IntervalBox> {
        if let Some(e0) = &self.funnel.e0 {
            return Ok(e0.clone());
        }
        match &self.funnel.eps {
            Some(eps) if eps.iter().all(|e| e.is_finite()) => IntervalBox::symmetric(&eps.iter().map(|e| 0.5 * e).collect::<Vec<_>>()),
            _ => Err(Error::InvalidSettings("funnel.e0 is required when funnel.eps is absent or unbounded".into())),
        }
    }

    pub fn candidate_settings(&self) -> Result<CandidateSettings> {
        let f = &self.funnel;
        let mut s = CandidateSettings::new(f.q_weights.len(), f.r_weights.len(), f.xhat0.clone(), f.uhat0.clone(), self.e0()?);
        s.q_weights = f.q_weights.clone();
        s.r_weights = f.r_weights.clone();
        s.decay = f.decay;
        s.shrink = f.shrink;
        s.growth = f.growth;
        s.max_trials = f.max_trials;
        s.bisect_steps = f.bisect_steps;
        s.accept_inconclusive = f.accept_inconclusive;
        s.check = f.check.clone();
        Ok(s)
    }

    pub fn reach_settings(&self) -> Result<ReachSettings> {
        ReachSettings::new(self.spec.ts, self.abstraction.steps, self.abstraction.inflation.clone())
    }

    /// Abstraction sizes `(|𝒳|, |𝒰|)` before any filtering, without building.
    pub fn declared_sizes(&self) -> (usize, usize) {
        (PartitionGrid::count_cells(&self.abstraction.cells_per_dim), self.abstraction.inputs_per_dim.iter().product())
    }
}

fn shrink_constrained(b: &IntervalBox, eps: &[f64]) -> Option<IntervalBox> {
    let mut lo = b.lo().to_vec();
    let mut hi = b.hi().to_vec();
    for i in 0..b.dim() {
        if lo[i].is_finite() {
            lo[i] += eps[i];
        }
        if hi[i].is_finite() {
            hi[i] -= eps[i];
        }
        if !(lo[i] <= hi[i]) {
            return None;
        }
    }
    IntervalBox::new(lo, hi).ok()
}

fn expand_constrained(b: &IntervalBox, eps: &[f64]) -> IntervalBox {
    let lo = b.lo().iter().zip(eps).map(|(l, e)| if l.is_finite() { l - e } else { *l }).collect();
    let hi = b.hi().iter().zip(eps).map(|(h, e)| if h.is_finite() { h + e } else { *h }).collect();
    IntervalBox::new(lo, hi).expect("expansion keeps order")
}

/// Everything the abstraction and game stages need, derived from a
/// scenario and an error bound.
#[derive(Clone, Debug)]
pub struct AbstractProblem {
    /// Componentwise bound on `x − π(x̂, û)` implied by `ε`.
    pub offset_bound: Vec<f64>,
    /// `X^{−ε}`, `X_a^{+ε}`, `X_r^{−ε}` in the concrete state space.
    pub domain: IntervalBox,
    pub avoid: Vec<IntervalBox>,
    pub target: IntervalBox,
    /// `X̂^ε`, `Û^ε`.
    pub xhat_domain: IntervalBox,
    pub uhat_domain: IntervalBox,
    pub grid: PartitionGrid,
    pub inputs: InputGrid,
    pub avoid_cells: Vec<bool>,
    pub game: GameSpec,
}

impl AbstractProblem {
    /// Shrinks and expands the specification by the bound on
    /// `x − π(x̂, û)` implied by `ε`, projects through `π`, and grids.
    pub fn new<E: ErrorSystem + ?Sized>(cfg: &ScenarioConfig, es: &E, eps: &[f64]) -> Result<Self> {
        let s = &cfg.spec;
        if eps.len() != s.domain.dim() {
            return Err(Error::DimensionMismatch { expected: s.domain.dim(), found: eps.len() });
        }
        let offset_bound = es.untransformed_bound(eps);
        let a = es.arities();
        let pi = es.affine_map();
        let infeasible = |what: &str| Error::InvalidSettings(format!("specification infeasible at this eps: {what} is empty"));

        let domain = shrink_constrained(&s.domain, &offset_bound).ok_or_else(|| infeasible("shrunk domain"))?;
        let target = shrink_constrained(&s.target, &offset_bound).ok_or_else(|| infeasible("shrunk target"))?;
        let avoid: Vec<IntervalBox> = s.avoid.iter().map(|b| expand_constrained(b, &offset_bound)).collect();

        let (xd, ud) = preimage_pi(pi, &domain, a.xhat, a.uhat)?.ok_or_else(|| infeasible("abstract domain"))?;
        let xhat_domain = xd;
        let uhat_domain = s.uhat.intersect(&ud)?.ok_or_else(|| infeasible("abstract input set"))?;
        let (xt, ut) = preimage_pi(pi, &target, a.xhat, a.uhat)?.ok_or_else(|| infeasible("abstract target"))?;
        let xhat_target = xt.intersect(&xhat_domain)?.ok_or_else(|| infeasible("abstract target"))?;
        let mut uhat_target = ut.intersect(&uhat_domain)?.ok_or_else(|| infeasible("target inputs"))?;
        if let Some(t) = &s.target_inputs {
            uhat_target = uhat_target.intersect(t)?.ok_or_else(|| infeasible("target inputs"))?;
        }
        let mut xhat_avoid = Vec::new();
        for b in &avoid {
            if let Some((xa, _)) = preimage_pi(pi, b, a.xhat, a.uhat)? {
                xhat_avoid.push(xa);
            }
        }

        let grid_domain = match &cfg.abstraction.grid_domain {
            Some(g) if !xhat_domain.contains(g)? => {
                return Err(Error::InvalidSettings(format!("abstraction grid_domain {g:?} is not inside the shrunk abstract domain {xhat_domain:?}")));
            }
            Some(g) => g.clone(),
            None => xhat_domain.clone(),
        };
        let grid = PartitionGrid::new(grid_domain, cfg.abstraction.cells_per_dim.clone())?;
        let avoid_inputs = s.avoid_inputs.clone();
        let inputs = InputGrid::new(uhat_domain.clone(), cfg.abstraction.inputs_per_dim.clone(), |u| !avoid_inputs.iter().any(|b| b.contains_point(u)))?;
        if inputs.is_empty() {
            return Err(infeasible("input grid"));
        }
        let n = grid.total_cells();
        let mut avoid_cells = vec![false; n];
        for c in 0..n {
            let cb = grid.cell_box(c);
            for b in &xhat_avoid {
                if cb.intersects(b)? {
                    avoid_cells[c] = true;
                    break;
                }
            }
        }
        let mut target_cells = Vec::new();
        for c in 0..n {
            if !avoid_cells[c] && xhat_target.contains(&grid.cell_box(c))? {
                target_cells.push(c);
            }
        }
        if target_cells.is_empty() {
            return Err(infeasible("set of target cells"));
        }
        let all_inputs: Vec<usize> = (0..inputs.len()).collect();
        let stay_inputs: Vec<usize> = all_inputs.iter().copied().filter(|&u| uhat_target.contains_point(inputs.point(u))).collect();
        Ok(AbstractProblem {
            offset_bound,
            domain,
            avoid,
            target,
            xhat_domain,
            uhat_domain,
            grid,
            inputs,
            avoid_cells,
            game: GameSpec { target_cells, stay_inputs, all_inputs },
        })
    }
}
