//! Scenario files: `[section]` headers and `key = value` lines, `#` or `;`
//! comments. Every error carries the line it refers to.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analyze::BoundRegime;
use crate::integrate::{DEFAULT_ABS_TOL, DEFAULT_MAX_SAMPLES, DEFAULT_MAX_STEPS, DEFAULT_REL_TOL};
use crate::potential::Potential;
use crate::schedule::DampingSchedule;
use crate::sgd::{NoiseModel, StepSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "key '{k}': ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, key: Option<&str>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        key: key.map(str::to_owned),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleConfig {
    Constant { level: f64 },
    PowerLaw { c: f64, gamma: f64, offset: f64 },
    LogLog,
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<DampingSchedule, String> {
        match *self {
            Self::Constant { level } => DampingSchedule::constant(level).map_err(|e| e.to_string()),
            Self::PowerLaw { c, gamma, offset } => DampingSchedule::power_law(c, gamma, offset).map_err(|e| e.to_string()),
            Self::LogLog => Ok(DampingSchedule::log_log_example()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialConfig {
    Quadratic { dim: usize },
    PPower { dim: usize, p: f64 },
    SignedPower { beta: f64 },
    DoubleWell,
    FlatBottom { dim: usize },
    Polynomial { coeffs: Vec<f64> },
    Zero { dim: usize },
}

impl PotentialConfig {
    pub fn build(&self) -> Result<Potential, String> {
        let r = match self {
            Self::Quadratic { dim } => Potential::quadratic(*dim),
            Self::PPower { dim, p } => Potential::p_power(*dim, *p),
            Self::SignedPower { beta } => Potential::signed_power(*beta),
            Self::DoubleWell => Ok(Potential::double_well()),
            Self::FlatBottom { dim } => Potential::flat_bottom(*dim),
            Self::Polynomial { coeffs } => Potential::polynomial(coeffs.clone()),
            Self::Zero { dim } => Potential::zero(*dim),
        };
        r.map_err(|e| e.to_string())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { dim } | Self::PPower { dim, .. } | Self::FlatBottom { dim } | Self::Zero { dim } => *dim,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSection {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
    pub max_samples: usize,
    pub event_dir: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SgdSection {
    pub steps: StepSchedule,
    pub noise: NoiseModel,
    pub n_steps: usize,
    /// Start point; defaults to the run's `x0`.
    pub x0: Option<Vec<f64>>,
    /// Comparison horizon on the `tau` clock.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    C,
    Gamma,
    Offset,
    Level,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            Self::C => "c",
            Self::Gamma => "gamma",
            Self::Offset => "offset",
            Self::Level => "level",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSection {
    /// Random initial conditions per parameter value; 0 keeps the run's start.
    pub samples: usize,
    pub x0_range: (f64, f64),
    pub v0_range: (f64, f64),
    pub param: Option<SweepParam>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    PowerLaw,
    IntegralOfA,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSection {
    pub fit: FitModel,
    pub window: Option<(f64, f64)>,
    pub classify: bool,
    pub bound: Option<BoundRegime>,
    pub theta: f64,
    pub k: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            fit: FitModel::PowerLaw,
            window: None,
            classify: true,
            bound: None,
            theta: 0.5,
            k: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub name: String,
    pub output: PathBuf,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub potential: PotentialConfig,
    pub run: RunSection,
    pub analysis: AnalysisSection,
    pub sgd: Option<SgdSection>,
    pub sweep: Option<SweepSection>,
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn raw(&mut self, key: &str) -> Option<(&str, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.as_str(), e.line)
        })
    }

    fn require(&mut self, key: &str) -> Result<(String, usize), ConfigError> {
        let (name, line) = (self.name.clone(), self.line);
        self.raw(key)
            .map(|(v, l)| (v.to_owned(), l))
            .ok_or_else(|| err(line, Some(key), format!("missing in [{name}]")))
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, l)) => parse_f64(v).map(Some).map_err(|m| err(l, Some(key), m)),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&mut self, key: &str) -> Result<f64, ConfigError> {
        let (v, l) = self.require(key)?;
        parse_f64(&v).map_err(|m| err(l, Some(key), m))
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, l)) => parse_count(v).map_err(|m| err(l, Some(key), m)),
        }
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, l)) => v
                .parse::<u64>()
                .map_err(|_| err(l, Some(key), format!("expected an unsigned integer, got '{v}'"))),
        }
    }

    fn list_opt(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, l)) => parse_list(v).map(Some).map_err(|m| err(l, Some(key), m)),
        }
    }

    fn range_opt(&mut self, key: &str) -> Result<Option<(f64, f64)>, ConfigError> {
        let line = self.entries.get(key).map(|e| e.line);
        match self.list_opt(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 && v[0] < v[1] => Ok(Some((v[0], v[1]))),
            Some(_) => Err(err(line.unwrap_or(self.line), Some(key), "expected 'lo, hi' with lo < hi")),
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(("true" | "yes" | "1", _)) => Ok(true),
            Some(("false" | "no" | "0", _)) => Ok(false),
            Some((v, l)) => Err(err(l, Some(key), format!("expected true or false, got '{v}'"))),
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(self.line, |e| e.line)
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.iter().find(|(_, e)| !e.used) {
            Some((k, e)) => Err(err(e.line, Some(k), format!("unknown key in [{}]", self.name))),
            None => Ok(()),
        }
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a finite number, got '{v}'")),
    }
}

fn parse_count(v: &str) -> Result<usize, String> {
    if let Ok(n) = v.parse::<usize>() {
        return Ok(n);
    }
    // allow 1e5 style counts
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x <= 1e15 => Ok(x as usize),
        _ => Err(format!("expected a nonnegative integer, got '{v}'")),
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(parse_f64).collect()
}

const SECTIONS: [&str; 7] = ["scenario", "schedule", "potential", "run", "analysis", "sgd", "sweep"];

fn split_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, None, "unterminated section header"))?
                .trim()
                .to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(err(line, None, format!("unknown section [{name}]")));
            }
            if out.iter().any(|s| s.name == name) {
                return Err(err(line, None, format!("duplicate section [{name}]")));
            }
            out.push(Section {
                name,
                line,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| err(line, None, format!("expected 'key = value', got '{body}'")))?;
        let key = k.trim().to_ascii_lowercase();
        let sec = out
            .last_mut()
            .ok_or_else(|| err(line, Some(&key), "key outside any section"))?;
        if sec.entries.contains_key(&key) {
            return Err(err(line, Some(&key), format!("duplicate key in [{}]", sec.name)));
        }
        sec.entries.insert(
            key,
            Entry {
                value: v.trim().to_owned(),
                line,
                used: false,
            },
        );
    }
    Ok(out)
}

fn take(sections: &mut Vec<Section>, name: &str) -> Option<Section> {
    let i = sections.iter().position(|s| s.name == name)?;
    Some(sections.remove(i))
}

fn empty(name: &str) -> Section {
    Section {
        name: name.into(),
        line: 0,
        entries: BTreeMap::new(),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections = split_sections(text)?;

        let mut sc = take(&mut sections, "scenario").unwrap_or_else(|| empty("scenario"));
        let name = sc.raw("name").map_or_else(|| "scenario".to_owned(), |(v, _)| v.to_owned());
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(err(sc.line_of("name"), Some("name"), "use letters, digits, '_' or '-'"));
        }
        let output = PathBuf::from(sc.raw("output").map_or("out", |(v, _)| v));
        let seed = sc.u64_or("seed", 0)?;
        sc.finish()?;

        let mut s = take(&mut sections, "schedule").ok_or_else(|| ConfigError {
            line: None,
            key: None,
            message: "missing section [schedule]".into(),
        })?;
        let (kind, kline) = s.require("kind")?;
        let schedule = match kind.as_str() {
            "constant" => ScheduleConfig::Constant {
                level: s.f64_req("level")?,
            },
            "power_law" => ScheduleConfig::PowerLaw {
                c: s.f64_req("c")?,
                gamma: s.f64_or("gamma", 1.0)?,
                offset: s.f64_or("offset", 1.0)?,
            },
            "log_log" => ScheduleConfig::LogLog,
            other => return Err(err(kline, Some("kind"), format!("unknown schedule kind '{other}'"))),
        };
        schedule.build().map_err(|m| err(kline, Some("kind"), m))?;
        s.finish()?;

        let mut p = take(&mut sections, "potential").ok_or_else(|| ConfigError {
            line: None,
            key: None,
            message: "missing section [potential]".into(),
        })?;
        let (kind, kline) = p.require("kind")?;
        let dim = p.usize_or("dim", 1)?;
        let potential = match kind.as_str() {
            "quadratic" => PotentialConfig::Quadratic { dim },
            "p_power" => PotentialConfig::PPower { dim, p: p.f64_req("p")? },
            "signed_power" => PotentialConfig::SignedPower {
                beta: p.f64_req("beta")?,
            },
            "double_well" => PotentialConfig::DoubleWell,
            "flat_bottom" => PotentialConfig::FlatBottom { dim },
            "polynomial" => PotentialConfig::Polynomial {
                coeffs: p.list_opt("coeffs")?.ok_or_else(|| err(p.line, Some("coeffs"), "missing in [potential]"))?,
            },
            "zero" => PotentialConfig::Zero { dim },
            other => return Err(err(kline, Some("kind"), format!("unknown potential kind '{other}'"))),
        };
        if potential.dim() != dim && p.entries.contains_key("dim") {
            return Err(err(p.line_of("dim"), Some("dim"), format!("potential kind '{kind}' is one-dimensional")));
        }
        potential.build().map_err(|m| err(kline, Some("kind"), m))?;
        p.finish()?;
        let dim = potential.dim();

        let mut r = take(&mut sections, "run").unwrap_or_else(|| empty("run"));
        let x0 = r.list_opt("x0")?.unwrap_or_else(|| vec![0.0; dim]);
        let v0 = r.list_opt("v0")?.unwrap_or_else(|| vec![0.0; dim]);
        for (key, v) in [("x0", &x0), ("v0", &v0)] {
            if v.len() != dim {
                return Err(err(r.line_of(key), Some(key), format!("expected {dim} components, got {}", v.len())));
            }
        }
        let run = RunSection {
            x0,
            v0,
            t0: r.f64_or("t0", 0.0)?,
            t_end: r.f64_req("t_end")?,
            rel_tol: r.f64_or("rel_tol", DEFAULT_REL_TOL)?,
            abs_tol: r.f64_or("abs_tol", DEFAULT_ABS_TOL)?,
            fixed_step: r.f64_opt("fixed_step")?,
            max_steps: r.usize_or("max_steps", DEFAULT_MAX_STEPS)?,
            max_samples: r.usize_or("max_samples", DEFAULT_MAX_SAMPLES)?,
            event_dir: r.list_opt("event_dir")?,
        };
        if !(run.t_end > run.t0) {
            return Err(err(r.line_of("t_end"), Some("t_end"), "t_end must exceed t0"));
        }
        if !(run.rel_tol > 0.0 && run.abs_tol > 0.0) {
            return Err(err(r.line_of("rel_tol"), Some("rel_tol"), "tolerances must be positive"));
        }
        if let Some(d) = &run.event_dir {
            if d.len() != dim {
                return Err(err(r.line_of("event_dir"), Some("event_dir"), format!("expected {dim} components")));
            }
        }
        r.finish()?;

        let mut a = take(&mut sections, "analysis").unwrap_or_else(|| empty("analysis"));
        let mut analysis = AnalysisSection::default();
        if let Some((v, l)) = a.raw("fit") {
            analysis.fit = match v {
                "power_law" => FitModel::PowerLaw,
                "integral_of_a" => FitModel::IntegralOfA,
                other => return Err(err(l, Some("fit"), format!("unknown fit model '{other}'"))),
            };
        }
        analysis.window = a.range_opt("window")?;
        analysis.classify = a.bool_or("classify", true)?;
        if let Some((v, l)) = a.raw("bound") {
            analysis.bound = match v {
                "k1" => Some(BoundRegime::K1),
                "k2" => Some(BoundRegime::K2),
                "none" => None,
                other => return Err(err(l, Some("bound"), format!("unknown bound regime '{other}'"))),
            };
        }
        analysis.theta = a.f64_or("theta", 0.5)?;
        analysis.k = a.f64_or("k", 1.0)?;
        a.finish()?;

        let sgd = match take(&mut sections, "sgd") {
            None => None,
            Some(mut g) => {
                let (rule, rline) = g.require("rule")?;
                let eps0 = g.f64_req("eps0")?;
                let steps = match rule.as_str() {
                    "constant" => StepSchedule::constant(eps0),
                    "power_decay" => StepSchedule::power_decay(eps0, g.f64_req("rho")?),
                    other => return Err(err(rline, Some("rule"), format!("unknown step rule '{other}'"))),
                }
                .map_err(|e| err(rline, Some("rule"), e.to_string()))?;
                let sigma = g.f64_or("sigma", 0.0)?;
                let seed = g.u64_or("seed", 0)?;
                let noise = if sigma > 0.0 {
                    NoiseModel::gaussian(sigma, seed).map_err(|e| err(g.line_of("sigma"), Some("sigma"), e.to_string()))?
                } else if sigma == 0.0 {
                    NoiseModel { seed, ..NoiseModel::none() }
                } else {
                    return Err(err(g.line_of("sigma"), Some("sigma"), "sigma must be nonnegative"));
                };
                let n_steps = g.usize_or("n", 0)?;
                if n_steps == 0 {
                    return Err(err(g.line_of("n"), Some("n"), "step count N must be at least 1"));
                }
                let x0 = g.list_opt("x0")?;
                if x0.as_ref().is_some_and(|x| x.len() != dim) {
                    return Err(err(g.line_of("x0"), Some("x0"), format!("expected {dim} components")));
                }
                let horizon = g.f64_opt("horizon")?;
                g.finish()?;
                Some(SgdSection {
                    steps,
                    noise,
                    n_steps,
                    x0,
                    horizon,
                })
            }
        };

        let sweep = match take(&mut sections, "sweep") {
            None => None,
            Some(mut w) => {
                let param = match w.raw("param") {
                    None => None,
                    Some(("c", _)) => Some(SweepParam::C),
                    Some(("gamma", _)) => Some(SweepParam::Gamma),
                    Some(("offset", _)) => Some(SweepParam::Offset),
                    Some(("level", _)) => Some(SweepParam::Level),
                    Some((v, l)) => return Err(err(l, Some("param"), format!("unknown sweep parameter '{v}'"))),
                };
                let values = w.list_opt("values")?.unwrap_or_default();
                if param.is_some() != !values.is_empty() {
                    return Err(err(w.line, Some("values"), "'param' and 'values' go together"));
                }
                let sweep = SweepSection {
                    samples: w.usize_or("samples", 0)?,
                    x0_range: w.range_opt("x0_range")?.unwrap_or((-2.0, 2.0)),
                    v0_range: w.range_opt("v0_range")?.unwrap_or((-2.0, 2.0)),
                    param,
                    values,
                };
                if let Some(param) = sweep.param {
                    for &v in &sweep.values {
                        apply_param(&schedule, param, v).map_err(|m| err(w.line_of("values"), Some("values"), m))?;
                    }
                }
                let rows = sweep.values.len().max(1) * sweep.samples.max(1);
                if rows > 10_000 {
                    return Err(err(w.line, None, format!("sweep has {rows} rows, the limit is 10000")));
                }
                w.finish()?;
                Some(sweep)
            }
        };
        Ok(Self {
            name,
            output,
            seed,
            schedule,
            potential,
            run,
            analysis,
            sgd,
            sweep,
        })
    }

    /// Canonical text form; parses back to an equal config.
    pub fn echo(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            o.push_str(k);
            o.push_str(" = ");
            o.push_str(&v);
            o.push('\n');
        };
        let list = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ");
        kv("[scenario]\nname", self.name.clone());
        kv("output", self.output.display().to_string());
        kv("seed", self.seed.to_string());
        match &self.schedule {
            ScheduleConfig::Constant { level } => {
                kv("\n[schedule]\nkind", "constant".into());
                kv("level", fmt_f64(*level));
            }
            ScheduleConfig::PowerLaw { c, gamma, offset } => {
                kv("\n[schedule]\nkind", "power_law".into());
                kv("c", fmt_f64(*c));
                kv("gamma", fmt_f64(*gamma));
                kv("offset", fmt_f64(*offset));
            }
            ScheduleConfig::LogLog => kv("\n[schedule]\nkind", "log_log".into()),
        }
        match &self.potential {
            PotentialConfig::Quadratic { dim } => {
                kv("\n[potential]\nkind", "quadratic".into());
                kv("dim", dim.to_string());
            }
            PotentialConfig::PPower { dim, p } => {
                kv("\n[potential]\nkind", "p_power".into());
                kv("dim", dim.to_string());
                kv("p", fmt_f64(*p));
            }
            PotentialConfig::SignedPower { beta } => {
                kv("\n[potential]\nkind", "signed_power".into());
                kv("beta", fmt_f64(*beta));
            }
            PotentialConfig::DoubleWell => kv("\n[potential]\nkind", "double_well".into()),
            PotentialConfig::FlatBottom { dim } => {
                kv("\n[potential]\nkind", "flat_bottom".into());
                kv("dim", dim.to_string());
            }
            PotentialConfig::Polynomial { coeffs } => {
                kv("\n[potential]\nkind", "polynomial".into());
                kv("coeffs", list(coeffs));
            }
            PotentialConfig::Zero { dim } => {
                kv("\n[potential]\nkind", "zero".into());
                kv("dim", dim.to_string());
            }
        }
        let r = &self.run;
        kv("\n[run]\nx0", list(&r.x0));
        kv("v0", list(&r.v0));
        kv("t0", fmt_f64(r.t0));
        kv("t_end", fmt_f64(r.t_end));
        kv("rel_tol", fmt_f64(r.rel_tol));
        kv("abs_tol", fmt_f64(r.abs_tol));
        if let Some(h) = r.fixed_step {
            kv("fixed_step", fmt_f64(h));
        }
        kv("max_steps", r.max_steps.to_string());
        kv("max_samples", r.max_samples.to_string());
        if let Some(d) = &r.event_dir {
            kv("event_dir", list(d));
        }
        let a = &self.analysis;
        kv(
            "\n[analysis]\nfit",
            match a.fit {
                FitModel::PowerLaw => "power_law",
                FitModel::IntegralOfA => "integral_of_a",
            }
            .into(),
        );
        if let Some((lo, hi)) = a.window {
            kv("window", list(&[lo, hi]));
        }
        kv("classify", a.classify.to_string());
        kv(
            "bound",
            match a.bound {
                None => "none",
                Some(BoundRegime::K1) => "k1",
                Some(BoundRegime::K2) => "k2",
            }
            .into(),
        );
        kv("theta", fmt_f64(a.theta));
        kv("k", fmt_f64(a.k));
        if let Some(g) = &self.sgd {
            match g.steps {
                StepSchedule::Constant { eps } => {
                    kv("\n[sgd]\nrule", "constant".into());
                    kv("eps0", fmt_f64(eps));
                }
                StepSchedule::PowerDecay { eps0, rho } => {
                    kv("\n[sgd]\nrule", "power_decay".into());
                    kv("eps0", fmt_f64(eps0));
                    kv("rho", fmt_f64(rho));
                }
            }
            kv("sigma", fmt_f64(g.noise.sigma()));
            kv("seed", g.noise.seed.to_string());
            kv("n", g.n_steps.to_string());
            if let Some(x) = &g.x0 {
                kv("x0", list(x));
            }
            if let Some(h) = g.horizon {
                kv("horizon", fmt_f64(h));
            }
        }
        if let Some(w) = &self.sweep {
            kv("\n[sweep]\nsamples", w.samples.to_string());
            kv("x0_range", list(&[w.x0_range.0, w.x0_range.1]));
            kv("v0_range", list(&[w.v0_range.0, w.v0_range.1]));
            if let Some(p) = w.param {
                kv("param", p.name().into());
                kv("values", list(&w.values));
            }
        }
        o
    }
}

/// The schedule with one parameter replaced.
pub fn apply_param(base: &ScheduleConfig, param: SweepParam, value: f64) -> Result<ScheduleConfig, String> {
    let out = match (base.clone(), param) {
        (ScheduleConfig::PowerLaw { gamma, offset, .. }, SweepParam::C) => ScheduleConfig::PowerLaw { c: value, gamma, offset },
        (ScheduleConfig::PowerLaw { c, offset, .. }, SweepParam::Gamma) => ScheduleConfig::PowerLaw { c, gamma: value, offset },
        (ScheduleConfig::PowerLaw { c, gamma, .. }, SweepParam::Offset) => ScheduleConfig::PowerLaw { c, gamma, offset: value },
        (ScheduleConfig::Constant { .. }, SweepParam::Level) => ScheduleConfig::Constant { level: value },
        (_, p) => return Err(format!("schedule has no parameter '{}'", p.name())),
    };
    out.build()?;
    Ok(out)
}

/// Shortest decimal that parses back to the same `f64`. Very large or small
/// magnitudes switch to exponent form.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x:?}")
    } else {
        format!("{x:e}")
    }
}
