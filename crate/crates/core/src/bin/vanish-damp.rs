use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vanish_damp::config::{fmt_f64, RunConfig};
use vanish_damp::oracle;
use vanish_damp::report::{self, RunError};
use vanish_damp::schedule::DampingSchedule;
use vanish_damp::verify::{self, VerifyOptions};

/// Damped gradient dynamics with vanishing friction.
#[derive(Parser)]
#[command(name = "vanish-damp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate and analyze one scenario, writing CSV and JSON artifacts.
    Run {
        config: PathBuf,
        /// Output directory, overriding the scenario's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every row of the scenario's [sweep] grid.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: VANISH_DAMP_JOBS, else all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the acceptance suite.
    Verify {
        /// Print criterion ids without running them.
        #[arg(long)]
        list: bool,
        /// Comma-separated criterion ids to run.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Relative tolerance used by every integration instead of the pinned ones.
        #[arg(long)]
        rel_tol: Option<f64>,
        /// Also write the results as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print a closed-form reference as CSV `t,value`.
    Oracle {
        #[arg(value_enum)]
        kind: OracleKind,
        /// Bessel order, damping amplitude c, or exponent beta depending on the kind.
        #[arg(long, default_value_t = 0.0)]
        param: f64,
        /// Power-law schedule exponent for `envelope`.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 50.0)]
        t1: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    /// J_nu(t), order from --param.
    BesselJ,
    /// Regular solution of x'' + (c/t)x' + x = 0, c from --param.
    Linear,
    /// Decay shape of x'' + (c/t)x' - x = 0, c from --param.
    DecayAsymptote,
    /// (t+1)^(-beta), beta from --param.
    PowerLaw,
    /// exp(-integral of c/(t+1)^gamma), c from --param.
    Envelope,
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn load(path: &PathBuf) -> Result<RunConfig, RunError> {
    RunConfig::from_file(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

fn cmd_run(config: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let cfg = match load(&config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let dir = out.unwrap_or_else(|| cfg.output.clone());
    let res = report::run_scenario(&cfg).and_then(|o| report::write_artifacts(&o, &dir).map(|f| (o, f)));
    match res {
        Err(e) => fail(e),
        Ok((o, files)) => {
            let s = &o.summary;
            println!("scenario {}: {} steps, {} events", s.scenario, s.solver.accepted, s.events.count);
            if let Some(f) = &s.rate_fit {
                println!("rate exponent {} over [{}, {}]", fmt_f64(f.exponent), fmt_f64(f.window.0), fmt_f64(f.window.1));
            }
            if let Some(c) = &s.classification {
                println!("verdict {:?} ({})", c.verdict, c.rule);
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
    }
}

fn cmd_sweep(config: PathBuf, out: Option<PathBuf>, jobs: Option<usize>) -> ExitCode {
    let res = load(&config).and_then(|cfg| {
        let jobs = report::resolve_jobs(jobs)?;
        let dir = out.unwrap_or_else(|| cfg.output.clone());
        let rep = report::run_sweep(&cfg, jobs)?;
        let files = report::write_sweep(&rep, &dir)?;
        Ok((rep, files))
    });
    match res {
        Err(e) => fail(e),
        Ok((rep, files)) => {
            println!("{} rows, {} failed", rep.rows.len(), rep.failures);
            for (k, v) in &rep.convergence_fractions {
                println!("converged to {k}: {v}");
            }
            for (p, e) in &rep.mean_exponents {
                println!("param {}: mean exponent {}", fmt_f64(*p), fmt_f64(*e));
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
    }
}

fn cmd_verify(list: bool, only: Vec<String>, rel_tol: Option<f64>, json: Option<PathBuf>) -> ExitCode {
    if list {
        for c in &verify::CRITERIA {
            println!("{} {}", c.id, c.title);
        }
        return ExitCode::SUCCESS;
    }
    let opts = VerifyOptions { rel_tol };
    let ids: Vec<String> = if only.is_empty() {
        verify::ids().into_iter().map(String::from).collect()
    } else {
        only
    };
    let mut results = Vec::new();
    for id in &ids {
        match verify::run_criterion(id, &opts) {
            Some(r) => {
                println!("{}", r.line());
                results.push(r);
            }
            None => {
                eprintln!("error: unknown criterion '{id}'");
                return ExitCode::from(2);
            }
        }
    }
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&results).expect("results serialize");
        if let Err(e) = std::fs::write(&path, text + "\n") {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_oracle(kind: OracleKind, param: f64, gamma: f64, t0: f64, t1: f64, points: usize) -> ExitCode {
    if !(t1 >= t0) || points < 2 {
        eprintln!("error: need t1 >= t0 and at least 2 points");
        return ExitCode::from(2);
    }
    let sched = match kind {
        OracleKind::Envelope => match DampingSchedule::power_law(param, gamma, 1.0) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        _ => None,
    };
    println!("t,value");
    for i in 0..points {
        let t = t0 + (t1 - t0) * i as f64 / (points - 1) as f64;
        let v = match kind {
            OracleKind::BesselJ => oracle::bessel_j(param, t),
            OracleKind::Linear => oracle::linear_regular_solution(param, t),
            OracleKind::DecayAsymptote => oracle::modified_decay_asymptote(param, t),
            OracleKind::PowerLaw => oracle::power_law_exact(param, t).map(|e| e.x),
            OracleKind::Envelope => oracle::linear_envelope(sched.as_ref().expect("schedule built"), t).map(|e| e.value),
        };
        match v {
            Ok(v) => println!("{},{}", fmt_f64(t), fmt_f64(v)),
            Err(e) => {
                eprintln!("error: t = {t}: {e}");
                return ExitCode::from(2);
            }
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::Sweep { config, out, jobs } => cmd_sweep(config, out, jobs),
        Command::Verify {
            list,
            only,
            rel_tol,
            json,
        } => cmd_verify(list, only, rel_tol, json),
        Command::Oracle {
            kind,
            param,
            gamma,
            t0,
            t1,
            points,
        } => cmd_oracle(kind, param, gamma, t0, t1, points),
    }
}
