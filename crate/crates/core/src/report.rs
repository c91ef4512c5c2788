//! Scenario execution and artifacts: single runs, sweeps, CSV and JSON files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analyze::{self, LimitClassification, RateFit, RateModel, UpperBoundReport, Verdict};
use crate::config::{apply_param, fmt_f64, FitModel, RunConfig, ScheduleConfig};
use crate::integrate::{self, IntegrateError, SolverStats, SystemSpec, Trajectory};
use crate::potential::{Potential, PotentialEcho};
use crate::rng::NoiseStream;
use crate::schedule::{DampingSchedule, ScheduleEcho};
use crate::sgd::{self, DiscretePath, OdeComparison, SgdError, StepFlags};

/// Environment variable read when `--jobs` is not given.
pub const JOBS_ENV: &str = "VANISH_DAMP_JOBS";

/// Log-grid points used for rate fits.
const FIT_POINTS: usize = 200;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("solver failure ({kind}): {message}")]
    Solver { kind: &'static str, message: String },
    #[error("stochastic recursion failure: {0}")]
    Sgd(#[from] SgdError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<IntegrateError> for RunError {
    fn from(e: IntegrateError) -> Self {
        Self::Solver {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl RunError {
    /// Process exit code: 2 for configuration and output problems, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } => 2,
            Self::Solver { .. } | Self::Sgd(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStats {
    pub count: usize,
    pub first: Option<f64>,
    pub last: Option<f64>,
    /// Mean gap between consecutive events over the second half of the run.
    pub mean_late_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SgdSummary {
    pub steps: usize,
    pub flags: StepFlags,
    pub final_tau: f64,
    pub final_x: Vec<f64>,
    pub drift_identity_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode_comparison: Option<OdeComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub config_echo: String,
    pub schedule: ScheduleEcho,
    pub potential: PotentialEcho,
    pub solver: SolverStats,
    pub bootstrapped: bool,
    pub stationary: bool,
    pub samples: usize,
    pub final_state: Vec<f64>,
    pub events: EventStats,
    pub rate_fit: Option<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_fit_error: Option<String>,
    pub lower_bound_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_bound: Option<UpperBoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_bound_error: Option<String>,
    pub classification: Option<LimitClassification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdSummary>,
    pub wall_clock_ms: f64,
}

/// A finished run with everything needed to write its artifacts.
pub struct RunOutput {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub path: Option<DiscretePath>,
}

fn system(cfg: &RunConfig, schedule: DampingSchedule, potential: Potential, x0: Vec<f64>, v0: Vec<f64>) -> SystemSpec {
    let r = &cfg.run;
    let mut spec = SystemSpec::new(schedule, potential, x0, v0, r.t_end)
        .with_tolerances(r.rel_tol, r.abs_tol)
        .with_t0(r.t0);
    spec.max_steps = r.max_steps;
    spec.max_samples = r.max_samples;
    if let Some(h) = r.fixed_step {
        spec = spec.with_fixed_step(h);
    }
    if let Some(d) = &r.event_dir {
        spec = spec.with_event_dir(d.clone());
    }
    spec
}

struct Analysis {
    rate_fit: Result<RateFit, String>,
    lower_bound: Option<f64>,
    upper_bound: Option<Result<UpperBoundReport, String>>,
    classification: Option<Result<LimitClassification, String>>,
}

fn analyze_run(cfg: &RunConfig, traj: &Trajectory) -> Analysis {
    let pot = &traj.spec.potential;
    let a = &cfg.analysis;
    let window = a.window.unwrap_or_else(|| analyze::default_window(traj));
    let model = match a.fit {
        FitModel::PowerLaw => RateModel::PowerLaw,
        FitModel::IntegralOfA => RateModel::ExponentialInIntegralOfA(traj.spec.schedule.clone()),
    };
    let rate_fit = analyze::phase_norm_series(traj, window, FIT_POINTS)
        .and_then(|s| analyze::rate_fit(&s, window, &model))
        .map_err(|e| e.to_string());
    let min_g = pot.min_value();
    let lower_bound = min_g.and_then(|m| analyze::lower_bound_residual(traj, m).ok());
    let upper_bound = a.bound.map(|regime| {
        let m = min_g.ok_or_else(|| "potential minimum unknown".to_owned())?;
        analyze::upper_bound_check(traj, m, a.theta, regime, a.k).map_err(|e| e.to_string())
    });
    let classification = a
        .classify
        .then(|| analyze::classify_limit(traj, pot).map_err(|e| e.to_string()));
    Analysis {
        rate_fit,
        lower_bound,
        upper_bound,
        classification,
    }
}

fn event_stats(traj: &Trajectory) -> EventStats {
    let ev = &traj.events;
    let half = 0.5 * (traj.t_start() + traj.t_end());
    let late: Vec<f64> = ev.iter().filter(|e| e.t >= half).map(|e| e.t).collect();
    EventStats {
        count: ev.len(),
        first: ev.first().map(|e| e.t),
        last: ev.last().map(|e| e.t),
        mean_late_gap: (late.len() >= 2).then(|| (late[late.len() - 1] - late[0]) / (late.len() - 1) as f64),
    }
}

fn split<T>(r: Option<Result<T, String>>) -> (Option<T>, Option<String>) {
    match r {
        None => (None, None),
        Some(Ok(v)) => (Some(v), None),
        Some(Err(e)) => (None, Some(e)),
    }
}

/// Integrates and analyzes the configured scenario, plus its recursion when
/// an `[sgd]` section is present.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let schedule = cfg.schedule.build().map_err(RunError::Config)?;
    let potential = cfg.potential.build().map_err(RunError::Config)?;
    let spec = system(cfg, schedule, potential.clone(), cfg.run.x0.clone(), cfg.run.v0.clone());
    let traj = integrate::integrate(&spec)?;
    let an = analyze_run(cfg, &traj);

    let (path, sgd_summary) = match &cfg.sgd {
        None => (None, None),
        Some(g) => {
            let x0 = g.x0.clone().unwrap_or_else(|| cfg.run.x0.clone());
            let path = sgd::run_recursion(&potential, g.steps, g.noise, &x0, g.n_steps)?;
            let ode = match g.horizon {
                Some(h) => Some(sgd::compare_to_ode(&path, &potential, g.steps.eps0(), h)?),
                None => None,
            };
            let last = path.len() - 1;
            let summary = SgdSummary {
                steps: g.n_steps,
                flags: g.steps.flags(),
                final_tau: path.tau[last],
                final_x: path.x_at(last).to_vec(),
                drift_identity_error: path.drift_identity_error,
                ode_comparison: ode,
            };
            (Some(path), Some(summary))
        }
    };

    let last = traj.len() - 1;
    let mut final_state = traj.x_at(last).to_vec();
    final_state.extend_from_slice(traj.v_at(last));
    let (upper_bound, upper_bound_error) = split(an.upper_bound);
    let (classification, classification_error) = split(an.classification);
    let (rate_fit, rate_fit_error) = match an.rate_fit {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e)),
    };
    let summary = RunSummary {
        scenario: cfg.name.clone(),
        config_echo: cfg.echo(),
        schedule: traj.spec.schedule.echo(),
        potential: potential.echo(),
        solver: traj.stats,
        bootstrapped: traj.bootstrapped,
        stationary: traj.stationary,
        samples: traj.len(),
        final_state,
        events: event_stats(&traj),
        rate_fit,
        rate_fit_error,
        lower_bound_residual: an.lower_bound,
        upper_bound,
        upper_bound_error,
        classification,
        classification_error,
        sgd: sgd_summary,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(RunOutput {
        summary,
        trajectory: traj,
        path,
    })
}

/// Writes `contents` through a temporary file in the same directory and
/// renames it into place.
fn write_atomic(path: &Path, contents: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), RunError> {
    let io = |source| RunError::Io {
        path: path.to_owned(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        contents(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
    }
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn header(prefix: &str, dim: usize) -> String {
    (0..dim).map(|i| format!(",{prefix}_{i}")).collect()
}

fn push_row(w: &mut dyn Write, vals: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    let row: Vec<String> = vals.into_iter().map(fmt_f64).collect();
    writeln!(w, "{}", row.join(","))
}

/// Writes `<name>_series.csv`, `<name>_events.csv`, `<name>_summary.json`
/// and, with a recursion, `<name>_path.csv` under `dir`. Returns the paths.
pub fn write_artifacts(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let name = &out.summary.scenario;
    let traj = &out.trajectory;
    let dim = traj.dim();
    let pot = &traj.spec.potential;
    let sched = &traj.spec.schedule;
    let mut written = Vec::new();

    let series = dir.join(format!("{name}_series.csv"));
    write_atomic(&series, |w| {
        writeln!(w, "t{}{},E,a,gnorm", header("x", dim), header("v", dim))?;
        let mut g = vec![0.0; dim];
        for i in 0..traj.len() {
            let (x, v) = (traj.x_at(i), traj.v_at(i));
            pot.gradient_into(x, &mut g);
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let t = traj.times()[i];
            let row = std::iter::once(t)
                .chain(x.iter().copied())
                .chain(v.iter().copied())
                .chain([traj.energies()[i], sched.rate(t), gnorm]);
            push_row(w, row)?;
        }
        Ok(())
    })?;
    written.push(series);

    let events = dir.join(format!("{name}_events.csv"));
    write_atomic(&events, |w| {
        writeln!(w, "i,t_i{},E", header("x", dim))?;
        for e in &traj.events {
            write!(w, "{},", e.index)?;
            push_row(w, std::iter::once(e.t).chain(e.x.iter().copied()).chain([e.energy]))?;
        }
        Ok(())
    })?;
    written.push(events);

    if let Some(p) = &out.path {
        let path_csv = dir.join(format!("{name}_path.csv"));
        write_atomic(&path_csv, |w| {
            writeln!(w, "n,tau{}{}", header("h", p.dim), header("X", p.dim))?;
            for n in 0..p.len() {
                write!(w, "{n},")?;
                push_row(w, std::iter::once(p.tau[n]).chain(p.h_at(n).iter().copied()).chain(p.x_at(n).iter().copied()))?;
            }
            Ok(())
        })?;
        written.push(path_csv);
    }

    let summary = dir.join(format!("{name}_summary.json"));
    write_atomic(&summary, |w| {
        serde_json::to_writer_pretty(&mut *w, &out.summary).map_err(std::io::Error::other)?;
        writeln!(w)
    })?;
    written.push(summary);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub param_value: Option<f64>,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub verdict: Option<Verdict>,
    /// Location of the critical point matched by the classification.
    pub nearest: Option<Vec<f64>>,
    pub rate_exponent: Option<f64>,
    pub events: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub config_echo: String,
    pub rows: Vec<SweepRow>,
    pub failures: usize,
    pub verdict_counts: BTreeMap<String, usize>,
    /// Fraction of rows classified `ConvergesToMin` or `ConvergesToMax` at
    /// each critical point, keyed by its rounded location.
    pub convergence_fractions: BTreeMap<String, f64>,
    /// Mean fitted exponent per parameter value.
    pub mean_exponents: Vec<(f64, f64)>,
    pub wall_clock_ms: f64,
}

struct RowSpec {
    index: usize,
    param_value: Option<f64>,
    schedule: ScheduleConfig,
    x0: Vec<f64>,
    v0: Vec<f64>,
}

fn sweep_rows(cfg: &RunConfig) -> Result<Vec<RowSpec>, RunError> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| RunError::Config("sweep needs a [sweep] section".into()))?;
    let values: Vec<Option<f64>> = if sw.values.is_empty() {
        vec![None]
    } else {
        sw.values.iter().copied().map(Some).collect()
    };
    let dim = cfg.potential.dim();
    let mut rows = Vec::new();
    for value in values {
        let schedule = match (value, sw.param) {
            (Some(v), Some(p)) => apply_param(&cfg.schedule, p, v).map_err(RunError::Config)?,
            _ => cfg.schedule.clone(),
        };
        for _ in 0..sw.samples.max(1) {
            let index = rows.len();
            let (x0, v0) = if sw.samples == 0 {
                (cfg.run.x0.clone(), cfg.run.v0.clone())
            } else {
                // one stream per row keeps draws independent of scheduling
                let mut s = NoiseStream::with_stream(cfg.seed, index as u64);
                let x0 = (0..dim).map(|_| s.uniform(sw.x0_range.0, sw.x0_range.1)).collect();
                let v0 = (0..dim).map(|_| s.uniform(sw.v0_range.0, sw.v0_range.1)).collect();
                (x0, v0)
            };
            rows.push(RowSpec {
                index,
                param_value: value,
                schedule: schedule.clone(),
                x0,
                v0,
            });
        }
    }
    Ok(rows)
}

fn run_row(cfg: &RunConfig, potential: &Potential, row: RowSpec) -> SweepRow {
    let mut out = SweepRow {
        index: row.index,
        param_value: row.param_value,
        x0: row.x0.clone(),
        v0: row.v0.clone(),
        verdict: None,
        nearest: None,
        rate_exponent: None,
        events: 0,
        error: None,
    };
    let schedule = match row.schedule.build() {
        Ok(s) => s,
        Err(e) => {
            out.error = Some(e);
            return out;
        }
    };
    let spec = system(cfg, schedule, potential.clone(), row.x0, row.v0);
    match integrate::integrate(&spec) {
        Err(e) => out.error = Some(format!("{}: {e}", e.kind())),
        Ok(traj) => {
            let an = analyze_run(cfg, &traj);
            out.events = traj.events.len();
            out.rate_exponent = an.rate_fit.ok().map(|f| f.exponent);
            if let Some(Ok(c)) = an.classification {
                out.verdict = Some(c.verdict);
                out.nearest = c.nearest.map(|p| p.location);
            }
        }
    }
    out
}

fn verdict_name(v: Verdict) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Runs every sweep row on `jobs` worker threads. Rows come back in grid
/// order whatever the thread count.
pub fn run_sweep(cfg: &RunConfig, jobs: Option<usize>) -> Result<SweepReport, RunError> {
    let start = Instant::now();
    let potential = cfg.potential.build().map_err(RunError::Config)?;
    let specs = sweep_rows(cfg)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| specs.into_par_iter().map(|r| run_row(cfg, &potential, r)).collect());

    let n = rows.len() as f64;
    let mut verdict_counts = BTreeMap::new();
    let mut at_point: BTreeMap<String, usize> = BTreeMap::new();
    for r in &rows {
        if let Some(v) = r.verdict {
            *verdict_counts.entry(verdict_name(v)).or_insert(0) += 1;
            if matches!(v, Verdict::ConvergesToMin | Verdict::ConvergesToMax) {
                if let Some(p) = &r.nearest {
                    let key = p.iter().map(|c| format!("{:.6}", c + 0.0)).collect::<Vec<_>>().join(";");
                    *at_point.entry(key).or_insert(0) += 1;
                }
            }
        }
    }
    let mut mean_exponents = Vec::new();
    for v in rows.iter().filter_map(|r| r.param_value) {
        if mean_exponents.iter().any(|(p, _)| *p == v) {
            continue;
        }
        let ex: Vec<f64> = rows
            .iter()
            .filter(|r| r.param_value == Some(v))
            .filter_map(|r| r.rate_exponent)
            .collect();
        if !ex.is_empty() {
            mean_exponents.push((v, ex.iter().sum::<f64>() / ex.len() as f64));
        }
    }
    Ok(SweepReport {
        scenario: cfg.name.clone(),
        config_echo: cfg.echo(),
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
        verdict_counts,
        convergence_fractions: at_point.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
        mean_exponents,
        rows,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Writes `<name>_sweep.csv` and `<name>_sweep.json` under `dir`.
pub fn write_sweep(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let name = &report.scenario;
    let csv = dir.join(format!("{name}_sweep.csv"));
    let dim = report.rows.first().map_or(0, |r| r.x0.len());
    write_atomic(&csv, |w| {
        writeln!(w, "row,param{}{},verdict,nearest,exponent,events,error", header("x0", dim), header("v0", dim))?;
        for r in &report.rows {
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            let mut cells = vec![r.index.to_string(), opt(r.param_value)];
            cells.extend(r.x0.iter().chain(&r.v0).map(|v| fmt_f64(*v)));
            cells.push(r.verdict.map(verdict_name).unwrap_or_default());
            cells.push(
                r.nearest
                    .as_ref()
                    .map(|p| p.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default(),
            );
            cells.push(opt(r.rate_exponent));
            cells.push(r.events.to_string());
            cells.push(r.error.as_deref().unwrap_or("").replace([',', '\n'], " "));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })?;
    let json = dir.join(format!("{name}_sweep.json"));
    write_atomic(&json, |w| {
        serde_json::to_writer_pretty(&mut *w, report).map_err(std::io::Error::other)?;
        writeln!(w)
    })?;
    Ok(vec![csv, json])
}

/// Thread count from `--jobs`, then the environment, else rayon's default.
pub fn resolve_jobs(flag: Option<usize>) -> Result<Option<usize>, RunError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(JOBS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| RunError::Config(format!("{JOBS_ENV} must be a positive integer, got '{v}'"))),
    }
}
