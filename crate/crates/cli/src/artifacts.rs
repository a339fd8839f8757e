//! Files written to the output directory.
//!
//! | file | content |
//! |---|---|
//! | `certificate.toml` | certificate, verdicts, certify hash |
//! | `eps.toml` | `ε` handed to `abstract`, certify hash |
//! | `transitions.bin` | transition system (hash of model, spec, grid, `ε`) |
//! | `controller.bin` | controller table (same hash) |
//! | `verdicts.csv` | one line per simulated run |
//! | `runs/run_NNNN_{concrete,abstract}.csv` | traces |
//! | `fig3.svg` | plot of run 0 |

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reachsynth::abstraction::TransitionSystem;
use reachsynth::funnel::FunnelCertificate;
use reachsynth::games::ControllerTable;
use reachsynth::scenario::ScenarioConfig;
use reachsynth::simulate::{MonitorVerdict, RunStatus, SimOutcome, Trajectory};

use crate::pipeline::{abstraction_hash, certify_hash, CertifyOutput, RunRecord};
use crate::{CliError, CliResult};

pub const CERTIFICATE_FILE: &str = "certificate.toml";
pub const EPS_FILE: &str = "eps.toml";
pub const TRANSITIONS_FILE: &str = "transitions.bin";
pub const CONTROLLER_FILE: &str = "controller.bin";
pub const VERDICTS_FILE: &str = "verdicts.csv";
pub const FIGURE_FILE: &str = "fig3.svg";
pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub config_hash: String,
    pub decrease: String,
    pub jump: String,
    pub initial: String,
    pub certificate: FunnelCertificate,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsFile {
    pub config_hash: String,
    /// `configured` or `certificate`.
    pub source: String,
    pub eps: Vec<f64>,
    pub certificate_eps: Vec<f64>,
}

pub fn load_config(path: &Path) -> CliResult<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ScenarioConfig::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn to_toml<T: Serialize>(v: &T) -> CliResult<String> {
    toml::to_string(v).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> CliResult<T> {
    toml::from_str(text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn write_certificate(dir: &Path, cfg: &ScenarioConfig, out: &CertifyOutput) -> CliResult<()> {
    let hash = hex::encode(certify_hash(cfg));
    let file = CertificateFile {
        config_hash: hash.clone(),
        decrease: out.decrease.to_string(),
        jump: out.jump.to_string(),
        initial: out.initial.to_string(),
        certificate: out.certificate.clone(),
    };
    write_text(&dir.join(CERTIFICATE_FILE), &to_toml(&file)?)?;
    let eps = EpsFile {
        config_hash: hash,
        source: if out.eps_configured { "configured" } else { "certificate" }.into(),
        eps: out.eps.clone(),
        certificate_eps: out.certificate_eps.clone(),
    };
    write_text(&dir.join(EPS_FILE), &to_toml(&eps)?)
}

/// Imports a bare certificate (the `certificate` table alone).
pub fn import_certificate(path: &Path) -> CliResult<FunnelCertificate> {
    FunnelCertificate::from_toml(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn read_certificate(dir: &Path, cfg: &ScenarioConfig) -> CliResult<FunnelCertificate> {
    let path = dir.join(CERTIFICATE_FILE);
    let file: CertificateFile = parse_toml(&path, &read_text(&path)?)?;
    if file.config_hash != hex::encode(certify_hash(cfg)) {
        return Err(CliError::Mismatch(format!("{} was produced from a different configuration", path.display())));
    }
    file.certificate.validate()?;
    Ok(file.certificate)
}

pub fn read_eps(dir: &Path, cfg: &ScenarioConfig) -> CliResult<Vec<f64>> {
    let path = dir.join(EPS_FILE);
    let file: EpsFile = parse_toml(&path, &read_text(&path)?)?;
    if file.config_hash != hex::encode(certify_hash(cfg)) {
        return Err(CliError::Mismatch(format!("{} was produced from a different configuration", path.display())));
    }
    Ok(file.eps)
}

/// Comma-separated values; `inf` is accepted.
pub fn parse_eps(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| CliError::Usage(format!("--eps-override: {s:?}: {e}"))))
        .collect()
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn open(path: &Path) -> CliResult<BufReader<fs::File>> {
    Ok(BufReader::new(fs::File::open(path).map_err(|e| CliError::io(path, e))?))
}

pub fn write_transitions(dir: &Path, ts: &TransitionSystem) -> CliResult<()> {
    let path = dir.join(TRANSITIONS_FILE);
    let mut w = create(&path)?;
    ts.write_binary(&mut w)?;
    w.flush().map_err(|e| CliError::io(&path, e))
}

pub fn read_transitions(dir: &Path, cfg: &ScenarioConfig, eps: &[f64]) -> CliResult<TransitionSystem> {
    let path = dir.join(TRANSITIONS_FILE);
    let ts = TransitionSystem::read_binary(&mut open(&path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if ts.config_hash() != &abstraction_hash(cfg, eps) {
        return Err(CliError::Mismatch(format!("{} was built from a different configuration or eps", path.display())));
    }
    Ok(ts)
}

pub fn write_controller(dir: &Path, table: &ControllerTable) -> CliResult<()> {
    let path = dir.join(CONTROLLER_FILE);
    let mut w = create(&path)?;
    table.write_binary(&mut w)?;
    w.flush().map_err(|e| CliError::io(&path, e))
}

pub fn read_controller(dir: &Path, cfg: &ScenarioConfig, eps: &[f64]) -> CliResult<ControllerTable> {
    let path = dir.join(CONTROLLER_FILE);
    let table = ControllerTable::read_binary(&mut open(&path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if table.config_hash() != &abstraction_hash(cfg, eps) {
        return Err(CliError::Mismatch(format!("{} was synthesized from a different configuration or eps", path.display())));
    }
    Ok(table)
}

pub fn run_paths(dir: &Path, index: usize) -> (PathBuf, PathBuf) {
    let runs = dir.join(RUNS_DIR);
    (runs.join(format!("run_{index:04}_concrete.csv")), runs.join(format!("run_{index:04}_abstract.csv")))
}

/// Every `stride`-th sample, plus the last one.
pub fn strided(t: &Trajectory, stride: usize) -> Trajectory {
    let stride = stride.max(1);
    let mut keep: Vec<usize> = (0..t.len()).step_by(stride).collect();
    if t.len() > 0 && keep.last() != Some(&(t.len() - 1)) {
        keep.push(t.len() - 1);
    }
    Trajectory {
        times: keep.iter().map(|&i| t.times[i]).collect(),
        states: keep.iter().map(|&i| t.states[i].clone()).collect(),
        controls: keep.iter().map(|&i| t.controls[i].clone()).collect(),
        disturbances: keep.iter().map(|&i| t.disturbances[i].clone()).collect(),
    }
}

pub fn write_run(dir: &Path, index: usize, out: &SimOutcome, stride: usize) -> CliResult<()> {
    let (cpath, apath) = run_paths(dir, index);
    for (path, traj, names) in [(&cpath, &out.concrete, ("x", "u", "w")), (&apath, &out.abstract_, ("xhat", "uhat", "what"))] {
        let mut w = create(path)?;
        strided(traj, stride).write_csv(&mut w, names.0, names.1, names.2)?;
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

/// Reads a trajectory CSV back into `(states, controls)` given the state
/// dimension and the column prefix of the controls.
pub fn read_run(path: &Path, control_prefix: &str) -> CliResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| CliError::Usage(format!("{}: empty file", path.display())))?.split(',').collect();
    let is_control = |h: &str| h.strip_prefix(control_prefix).is_some_and(|r| r.chars().all(|c| c.is_ascii_digit()));
    let first_u = header.iter().position(|h| is_control(h)).unwrap_or(header.len());
    let last_u = header.iter().rposition(|h| is_control(h)).map_or(first_u, |p| p + 1);
    let mut states = Vec::new();
    let mut controls = Vec::new();
    for (n, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), n + 2)))?;
        if row.len() != header.len() {
            return Err(CliError::Usage(format!("{}:{}: wrong number of columns", path.display(), n + 2)));
        }
        states.push(row[1..first_u].to_vec());
        controls.push(row[first_u..last_u].to_vec());
    }
    Ok((states, controls))
}

fn status_label(s: &Option<RunStatus>) -> String {
    match s {
        None => "not-in-x0".into(),
        Some(RunStatus::Completed) => "completed".into(),
        Some(RunStatus::ReachedTarget { .. }) => "reached-target".into(),
        Some(RunStatus::LeftWinningSet { cell, .. }) => format!("left-winning-set:{cell}"),
    }
}

pub fn write_verdicts(dir: &Path, records: &[RunRecord]) -> CliResult<()> {
    let path = dir.join(VERDICTS_FILE);
    let mut w = create(&path)?;
    let io = |e| CliError::io(&path, e);
    writeln!(w, "run,status,verdict,time,max_error_ratio,error_violations,samples,warnings").map_err(io)?;
    for r in records {
        let (verdict, time) = match &r.verdict {
            None => ("none".to_string(), String::new()),
            Some(MonitorVerdict::Satisfied { t_r }) => ("satisfied".to_string(), t_r.to_string()),
            Some(v @ MonitorVerdict::Violated { t, .. }) => (v.to_string().replace(',', ";"), t.to_string()),
        };
        writeln!(w, "{},{},{},{},{},{},{},{}", r.index, status_label(&r.status), verdict, time, r.max_error_ratio, r.error_violations, r.samples, r.warnings.len()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_figure(dir: &Path, svg: &str) -> CliResult<()> {
    write_text(&dir.join(FIGURE_FILE), svg)
}
