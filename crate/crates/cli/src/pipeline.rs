//! Stage functions on in-memory values.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use reachsynth::abstraction::{build_abstraction, TransitionSystem};
use reachsynth::funnel::{
    check_decrease, check_initial_containment, check_jump, compute_epsilon, error_state, lyap_candidate, ErrorSystem, FunnelCertificate, GammaTrial, Verdict,
};
use reachsynth::games::{synthesize_with_stats, ControllerTable, SynthesisStats};
use reachsynth::models::integrator::Integrator;
use reachsynth::models::ship::Ship;
use reachsynth::models::Model;
use reachsynth::refine::HierarchicalController;
use reachsynth::scenario::{AbstractProblem, AbstractionConfig, FunnelConfig, ModelConfig, ScenarioConfig, SpecConfig};
use reachsynth::simulate::{monitor, random_disturbance, MonitorVerdict, PiecewiseConstant, PlotAxes, PlotSets, RunStatus, SimOutcome, SimSettings, SpecMonitor};

use crate::{CliError, CliResult};

/// Runs `$body` with `$m` bound to the configured model.
macro_rules! with_model {
    ($cfg:expr, |$m:ident| $body:expr) => {
        match $cfg.model.ship_params() {
            Some(p) => {
                let $m = Ship::new(p);
                $body
            }
            None => {
                let $m = Integrator::new();
                $body
            }
        }
    };
}

#[derive(Serialize)]
struct HashInput<'a> {
    stage: &'a str,
    model: &'a ModelConfig,
    spec: &'a SpecConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    funnel: Option<&'a FunnelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abstraction: Option<&'a AbstractionConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<&'a [f64]>,
}

fn hash(input: &HashInput<'_>) -> [u8; 32] {
    let text = toml::to_string(input).expect("configuration serializes");
    Sha256::digest(text.as_bytes()).into()
}

/// Hash of everything the certificate depends on.
pub fn certify_hash(cfg: &ScenarioConfig) -> [u8; 32] {
    hash(&HashInput { stage: "certify", model: &cfg.model, spec: &cfg.spec, funnel: Some(&cfg.funnel), abstraction: None, eps: None })
}

/// Hash of everything the transition system and controller depend on.
pub fn abstraction_hash(cfg: &ScenarioConfig, eps: &[f64]) -> [u8; 32] {
    hash(&HashInput { stage: "abstract", model: &cfg.model, spec: &cfg.spec, funnel: None, abstraction: Some(&cfg.abstraction), eps: Some(eps) })
}

pub struct CertifyOutput {
    pub certificate: FunnelCertificate,
    pub decrease: Verdict,
    pub jump: Verdict,
    pub initial: Verdict,
    pub trials: Vec<GammaTrial>,
    /// `ε` of the certificate.
    pub certificate_eps: Vec<f64>,
    /// `ε` handed to the later stages.
    pub eps: Vec<f64>,
    pub eps_configured: bool,
    pub seconds: f64,
}

impl CertifyOutput {
    pub fn verdicts(&self) -> [(&'static str, &Verdict); 3] {
        [("decrease", &self.decrease), ("jump", &self.jump), ("initial", &self.initial)]
    }

    /// Falsified verdicts always fail; inconclusive ones unless allowed.
    pub fn status(&self, allow_inconclusive: bool) -> CliResult<()> {
        for (name, v) in self.verdicts() {
            if let Verdict::Falsified { .. } = v {
                return Err(CliError::Falsified(format!("{name} condition {v}")));
            }
        }
        for (name, v) in self.verdicts() {
            if !v.is_verified() && !allow_inconclusive {
                return Err(CliError::Unverified(format!("{name} condition {v}; rerun with --allow-inconclusive to accept")));
            }
        }
        Ok(())
    }
}

/// Generates (or checks an imported) certificate and its `ε`.
pub fn certify(cfg: &ScenarioConfig, imported: Option<FunnelCertificate>) -> CliResult<CertifyOutput> {
    cfg.validate()?;
    let start = Instant::now();
    with_model!(cfg, |m| {
        let es = m.error_system();
        let (certificate, decrease, jump, initial, trials) = match imported {
            Some(c) => {
                c.check_against(es)?;
                let d = check_decrease(&c, es, &cfg.funnel.check)?;
                let j = check_jump(&c, &cfg.funnel.check)?;
                let i = check_initial_containment(&c, &cfg.funnel.check)?;
                (c, d, j, i, Vec::new())
            }
            None => {
                let r = lyap_candidate(es, &cfg.domains(), cfg.spec.ts, &cfg.candidate_settings()?)?;
                (r.certificate, r.decrease, r.jump, r.initial, r.trials)
            }
        };
        let certificate_eps = compute_epsilon(&certificate, &cfg.funnel.epsilon)?;
        let (eps, eps_configured) = match &cfg.funnel.eps {
            Some(e) => (e.clone(), true),
            None => (certificate_eps.clone(), false),
        };
        Ok(CertifyOutput { certificate, decrease, jump, initial, trials, certificate_eps, eps, eps_configured, seconds: start.elapsed().as_secs_f64() })
    })
}

pub struct AbstractOutput {
    pub problem: AbstractProblem,
    pub ts: TransitionSystem,
    pub seconds: f64,
}

pub fn abstract_problem(cfg: &ScenarioConfig, eps: &[f64]) -> CliResult<AbstractProblem> {
    cfg.validate()?;
    with_model!(cfg, |m| Ok(AbstractProblem::new(cfg, m.error_system(), eps)?))
}

/// Builds the transition system of the abstraction for `ε`.
pub fn build(cfg: &ScenarioConfig, eps: &[f64]) -> CliResult<AbstractOutput> {
    let problem = abstract_problem(cfg, eps)?;
    let start = Instant::now();
    let settings = cfg.reach_settings()?;
    let mut ts = with_model!(cfg, |m| {
        let avoid = &problem.avoid_cells;
        build_abstraction(m.decomposition(), &problem.grid, &problem.inputs, &cfg.spec.what, &settings, |s| avoid[s])?
    });
    ts.set_config_hash(abstraction_hash(cfg, eps));
    Ok(AbstractOutput { problem, ts, seconds: start.elapsed().as_secs_f64() })
}

pub struct SynthesisOutput {
    pub table: ControllerTable,
    pub stats: SynthesisStats,
    pub target_cells: usize,
    pub seconds: f64,
}

pub fn synthesize(cfg: &ScenarioConfig, eps: &[f64], ts: &TransitionSystem) -> CliResult<SynthesisOutput> {
    let expected = abstraction_hash(cfg, eps);
    if ts.config_hash() != &expected {
        return Err(CliError::Mismatch("transition system was built from a different configuration or eps".into()));
    }
    let problem = abstract_problem(cfg, eps)?;
    let start = Instant::now();
    let (table, stats) = synthesize_with_stats(ts, &problem.game, cfg.spec.mode)?;
    Ok(SynthesisOutput { table, stats, target_cells: problem.game.target_cells.len(), seconds: start.elapsed().as_secs_f64() })
}

#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub runs: usize,
    pub seed: u64,
    /// Attempts at drawing an initial state per run.
    pub attempts: usize,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub index: usize,
    /// Initial concrete state and its witness `x̂₀`; `None` when no member
    /// of the winning initial set was found.
    pub start: Option<(Vec<f64>, Vec<f64>)>,
    pub status: Option<RunStatus>,
    pub verdict: Option<MonitorVerdict>,
    /// Largest `|e_i| / ε_i` over samples and bounded coordinates.
    pub max_error_ratio: f64,
    /// Samples with some `|e_i| > ε_i`.
    pub error_violations: usize,
    pub samples: usize,
    pub warnings: Vec<String>,
    /// Index of the input held in the first period.
    pub first_input: Option<usize>,
}

impl RunRecord {
    pub fn satisfied(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.is_satisfied())
    }
}

pub struct BatchReport {
    pub records: Vec<RunRecord>,
    pub seconds: f64,
}

pub fn spec_monitor(cfg: &ScenarioConfig) -> SpecMonitor {
    SpecMonitor { domain: cfg.spec.domain.clone(), avoid: cfg.spec.avoid.clone(), target: cfg.spec.target.clone(), mode: cfg.spec.mode }
}

fn error_ratio<E: ErrorSystem + ?Sized>(es: &E, eps: &[f64], out: &SimOutcome) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for i in 0..out.concrete.len() {
        let e = error_state(&out.concrete.states[i], &out.abstract_.states[i], &out.abstract_.controls[i], es);
        let r = e.iter().zip(eps).filter(|(_, b)| b.is_finite()).map(|(v, b)| v.abs() / b).fold(0.0, f64::max);
        worst = worst.max(r);
        violations += usize::from(r > 1.0);
    }
    (worst, violations)
}

/// Monte Carlo batch from random members of the winning initial set.
///
/// Run `i` draws from ChaCha8 stream `i` of `seed`, so results do not
/// depend on scheduling. Run 0 starts in `simulate.start_region` when
/// winning cells exist there. `on_run` sees every simulated trajectory.
pub fn simulate_batch<F>(cfg: &ScenarioConfig, eps: &[f64], cert: &FunnelCertificate, table: &ControllerTable, opts: &BatchOptions, on_run: F) -> CliResult<BatchReport>
where
    F: Fn(usize, &SimOutcome) -> CliResult<()> + Sync,
{
    let start = Instant::now();
    let spec = spec_monitor(cfg);
    let settings = SimSettings { steps_per_period: cfg.simulate.steps_per_period, max_periods: cfg.simulate.max_periods };
    let duration = cfg.spec.ts * (cfg.simulate.max_periods + 1) as f64;
    let records = with_model!(cfg, |m| {
        let es = m.error_system();
        let hc = HierarchicalController::new(table, cert, es)?;
        let x0set = hc.initial_set();
        let preferred: Vec<usize> = match &cfg.simulate.start_region {
            Some(r) => table.win_set().into_iter().filter(|&c| r.contains_point(&table.grid().cell_box(c).center())).collect(),
            None => Vec::new(),
        };
        (0..opts.runs)
            .into_par_iter()
            .map(|i| -> CliResult<RunRecord> {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(i as u64);
                let pool: &[usize] = if i == 0 { &preferred } else { &[] };
                let mut record = RunRecord {
                    index: i,
                    start: None,
                    status: None,
                    verdict: None,
                    max_error_ratio: 0.0,
                    error_violations: 0,
                    samples: 0,
                    warnings: Vec::new(),
                    first_input: None,
                };
                let Some((x0, xhat0)) = x0set.sample(&mut rng, pool, opts.attempts)? else { return Ok(record) };
                let w = random_disturbance(&cfg.spec.w, duration, cfg.simulate.switch_period, rand::Rng::gen(&mut rng))?;
                let what = if cfg.simulate.random_what {
                    random_disturbance(&cfg.spec.what, duration, cfg.simulate.switch_period, rand::Rng::gen(&mut rng))?
                } else {
                    PiecewiseConstant::constant(vec![0.0; cfg.spec.what.dim()])
                };
                let out = reachsynth::simulate::simulate_closed_loop(m.concrete(), m.abstract_field(), &hc, &x0, &xhat0, &w, &what, &settings)?;
                let (ratio, violations) = error_ratio(es, eps, &out);
                record.first_input = table.choice(table.grid().cell_of(&xhat0));
                record.start = Some((x0, xhat0));
                record.verdict = Some(monitor(&spec, &out.concrete));
                record.status = Some(out.status.clone());
                record.max_error_ratio = ratio;
                record.error_violations = violations;
                record.samples = out.concrete.len();
                record.warnings = out.warnings.clone();
                on_run(i, &out)?;
                Ok(record)
            })
            .collect::<CliResult<Vec<_>>>()?
    });
    Ok(BatchReport { records, seconds: start.elapsed().as_secs_f64() })
}

/// Sets and axes for the plot of a scenario.
pub fn plot_layout(cfg: &ScenarioConfig, problem: &AbstractProblem) -> (PlotSets, PlotAxes) {
    let sets = PlotSets {
        domain: cfg.spec.domain.clone(),
        shrunk_domain: problem.domain.clone(),
        avoid: cfg.spec.avoid.clone(),
        expanded_avoid: problem.avoid.clone(),
        target: cfg.spec.target.clone(),
        shrunk_target: problem.target.clone(),
    };
    let axes = match cfg.model {
        // east to the right, north up
        ModelConfig::Ship { .. } => PlotAxes { horizontal: 1, vertical: 0, heading: Some(2) },
        ModelConfig::DoubleIntegrator => PlotAxes { horizontal: 0, vertical: 1, heading: None },
    };
    (sets, axes)
}

/// SVG of one run with heading arrows every `arrow_every` samples;
/// abstract states are drawn through `π`.
pub fn render_run(cfg: &ScenarioConfig, problem: &AbstractProblem, concrete: &[Vec<f64>], abstract_states: &[Vec<f64>], abstract_inputs: &[Vec<f64>], arrow_every: usize) -> String {
    let (sets, axes) = plot_layout(cfg, problem);
    let mapped: Vec<Vec<f64>> = with_model!(cfg, |m| {
        let pi = m.error_system().affine_map();
        abstract_states.iter().zip(abstract_inputs).map(|(x, u)| pi.apply(x, u)).collect()
    });
    reachsynth::simulate::plot_svg(&sets, axes, concrete, &mapped, arrow_every)
}
