use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reachsynth::funnel::Verdict;
use reachsynth::scenario::{builtin, ScenarioConfig, BUILTIN_NAMES};
use reachsynth_cli::artifacts::{self, FIGURE_FILE, RUNS_DIR};
use reachsynth_cli::pipeline::{self, BatchOptions};
use reachsynth_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "reachsynth", version, about = "Abstraction-based controller synthesis with certified tracking funnels")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Output directory; defaults to `output_dir` of the configuration, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Comma-separated `ε` used instead of `eps.toml` (`inf` allowed).
    #[arg(long)]
    eps_override: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize (or import) and check the tracking certificate, write `ε`.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Check this certificate instead of generating one.
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// Exit 0 on inconclusive verdicts.
        #[arg(long)]
        allow_inconclusive: bool,
    },
    /// Build the transition system of the abstraction.
    Abstract {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the game on the transition system.
    Synthesize {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo simulation of the refined controller.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of runs (default: from the configuration).
        #[arg(long)]
        runs: Option<usize>,
        /// Seed (default: from the configuration).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a built-in scenario configuration.
    Scenario {
        /// One of the built-in names; omitted lists them.
        name: Option<String>,
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Redraw the figure of a simulated run.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
}

struct Context {
    cfg: ScenarioConfig,
    dir: PathBuf,
    eps_override: Option<Vec<f64>>,
}

impl Context {
    fn new(c: &Common) -> CliResult<Self> {
        let cfg = artifacts::load_config(&c.config)?;
        let dir = c.out.clone().or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
        let eps_override = c.eps_override.as_deref().map(artifacts::parse_eps).transpose()?;
        Ok(Context { cfg, dir, eps_override })
    }

    fn eps(&self) -> CliResult<Vec<f64>> {
        match &self.eps_override {
            Some(e) => Ok(e.clone()),
            None => artifacts::read_eps(&self.dir, &self.cfg),
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn certify(c: &Common, certificate: Option<&Path>, allow_inconclusive: bool) -> CliResult<()> {
    let ctx = Context::new(c)?;
    let imported = certificate.map(artifacts::import_certificate).transpose()?;
    let mut out = pipeline::certify(&ctx.cfg, imported)?;
    if let Some(e) = &ctx.eps_override {
        out.eps = e.clone();
        out.eps_configured = true;
    }
    for t in &out.trials {
        println!("gamma {:.6}: decrease {}", t.gamma, t.decrease.label());
    }
    println!("gamma = {:.6}", out.certificate.gamma);
    for (name, v) in out.verdicts() {
        println!("{name}: {v}");
        if let Verdict::Falsified { witness, value } = v {
            eprintln!("witness for {name}: {witness:?} (value {value})");
        }
    }
    println!("certificate eps = {}", fmt_vec(&out.certificate_eps));
    println!("eps = {}{}", fmt_vec(&out.eps), if out.eps_configured { " (configured)" } else { "" });
    artifacts::write_certificate(&ctx.dir, &ctx.cfg, &out)?;
    println!("wrote {} in {:.1}s", ctx.dir.display(), out.seconds);
    out.status(allow_inconclusive || ctx.cfg.funnel.accept_inconclusive)
}

fn abstract_cmd(c: &Common) -> CliResult<()> {
    let ctx = Context::new(c)?;
    let eps = ctx.eps()?;
    let out = pipeline::build(&ctx.cfg, &eps)?;
    println!(
        "cells {}, inputs {}, transitions {}, {:.1}s",
        out.ts.num_states(),
        out.ts.num_inputs(),
        out.ts.num_transitions(),
        out.seconds
    );
    artifacts::write_transitions(&ctx.dir, &out.ts)
}

fn synthesize_cmd(c: &Common) -> CliResult<()> {
    let ctx = Context::new(c)?;
    let eps = ctx.eps()?;
    let ts = artifacts::read_transitions(&ctx.dir, &ctx.cfg, &eps)?;
    let mut out = pipeline::synthesize(&ctx.cfg, &eps, &ts)?;
    out.table.set_config_hash(*ts.config_hash());
    println!(
        "cells {}, target {}, stay {}, winning {}, coverage {:.2}%, iterations {} + {}, {:.1}s",
        ts.num_states(),
        out.target_cells,
        out.table.stay_set().len(),
        out.table.win_set().len(),
        100.0 * out.table.coverage(),
        out.stats.safety_iterations,
        out.stats.reach_iterations,
        out.seconds
    );
    artifacts::write_controller(&ctx.dir, &out.table)
}

/// Roughly ten samples per period in the run files.
fn csv_stride(cfg: &ScenarioConfig) -> usize {
    (cfg.simulate.steps_per_period / 10).max(1)
}

fn simulate_cmd(c: &Common, runs: Option<usize>, seed: Option<u64>) -> CliResult<()> {
    let ctx = Context::new(c)?;
    let eps = ctx.eps()?;
    let cert = artifacts::read_certificate(&ctx.dir, &ctx.cfg)?;
    let table = artifacts::read_controller(&ctx.dir, &ctx.cfg, &eps)?;
    let opts = BatchOptions { runs: runs.unwrap_or(ctx.cfg.simulate.runs), seed: seed.unwrap_or(ctx.cfg.seed), attempts: 1000 };
    let stride = csv_stride(&ctx.cfg);
    let report = pipeline::simulate_batch(&ctx.cfg, &eps, &cert, &table, &opts, |i, out| artifacts::write_run(&ctx.dir, i, out, stride))?;
    artifacts::write_verdicts(&ctx.dir, &report.records)?;
    let simulated = report.records.iter().filter(|r| r.start.is_some()).count();
    let satisfied = report.records.iter().filter(|r| r.satisfied()).count();
    let violations: usize = report.records.iter().map(|r| r.error_violations).sum();
    let worst = report.records.iter().map(|r| r.max_error_ratio).fold(0.0, f64::max);
    println!(
        "runs {}, started {}, satisfied {}, error bound violations {}, max |e|/eps {:.3}, {:.1}s",
        report.records.len(),
        simulated,
        satisfied,
        violations,
        worst,
        report.seconds
    );
    if report.records.first().is_some_and(|r| r.start.is_some()) {
        plot(&ctx, 0)?;
    }
    Ok(())
}

fn plot(ctx: &Context, run: usize) -> CliResult<()> {
    let eps = ctx.eps()?;
    let problem = pipeline::abstract_problem(&ctx.cfg, &eps)?;
    let (cpath, apath) = artifacts::run_paths(&ctx.dir, run);
    let (concrete, _) = artifacts::read_run(&cpath, "u")?;
    let (abs_states, abs_inputs) = artifacts::read_run(&apath, "uhat")?;
    let svg = pipeline::render_run(&ctx.cfg, &problem, &concrete, &abs_states, &abs_inputs, 10);
    artifacts::write_figure(&ctx.dir, &svg)?;
    println!("wrote {}", ctx.dir.join(FIGURE_FILE).display());
    Ok(())
}

fn scenario_cmd(name: Option<&str>, out: Option<&Path>) -> CliResult<()> {
    let Some(name) = name else {
        for n in BUILTIN_NAMES {
            println!("{n}");
        }
        return Ok(());
    };
    let cfg = builtin(name).ok_or_else(|| CliError::Usage(format!("unknown scenario {name:?}; known: {}", BUILTIN_NAMES.join(", "))))?;
    let text = cfg.to_toml()?;
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Certify { common, certificate, allow_inconclusive } => certify(common, certificate.as_deref(), *allow_inconclusive),
        Command::Abstract { common } => abstract_cmd(common),
        Command::Synthesize { common } => synthesize_cmd(common),
        Command::Simulate { common, runs, seed } => simulate_cmd(common, *runs, *seed),
        Command::Scenario { name, out } => scenario_cmd(name.as_deref(), out.as_deref()),
        Command::Plot { common, run: r } => {
            let ctx = Context::new(common)?;
            if !ctx.dir.join(RUNS_DIR).is_dir() {
                return Err(CliError::Usage(format!("no runs in {}; run `simulate` first", ctx.dir.display())));
            }
            plot(&ctx, *r)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
