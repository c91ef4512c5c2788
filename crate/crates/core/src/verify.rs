//! Built-in acceptance suite. Each criterion integrates its own fixture and
//! compares the measurement against a pinned tolerance.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use crate::analyze::{self, BoundRegime, RateModel, Verdict};
use crate::integrate::{self, SystemSpec, Trajectory};
use crate::oracle;
use crate::potential::Potential;
use crate::rng::NoiseStream;
use crate::schedule::DampingSchedule;
use crate::sgd::{self, NoiseModel, StepSchedule};

pub const A1_MAX_ERROR: f64 = 1e-6;
pub const A2_REL_TOL: f64 = 0.05;
pub const A3_SLOPE_TOL: f64 = 0.1;
pub const A4_MIN_RESIDUAL: f64 = -1e-8;
pub const A5_STABILITY_FACTOR: f64 = 2.0;
pub const A6_COVER: f64 = 0.95;
pub const A6_WIDTH: f64 = 1e-3;
pub const A7_MAX_ERROR: f64 = 1e-6;
pub const A8_EVENT_GROWTH: f64 = 10.0;
pub const A9_PERIOD_TOL: f64 = 0.02;
pub const A9_RATIO_SPREAD: f64 = 2.0;
pub const A10_DENSITY: f64 = 0.05;
pub const A10_CESARO: f64 = 0.05;
pub const A12_RATIO: (f64, f64) = (1.6, 2.4);
pub const A12_DRIFT_TOL: f64 = 1e-10;
pub const A13_MIN_DIAMETER: f64 = 0.5;

const A8_SEED: u64 = 2024;
const A11_SEED: u64 = 11;
const RANDOM_STARTS: usize = 20;
const MATCH_TOL: f64 = 1e-2;

pub struct Criterion {
    pub id: &'static str,
    pub title: &'static str,
    run: fn(&VerifyOptions) -> Result<Measured, String>,
}

pub const CRITERIA: [Criterion; 13] = [
    Criterion { id: "A1", title: "Bessel oracle, a = 1/t, Quadratic", run: a1 },
    Criterion { id: "A2", title: "decay exponents for a = c/(t+1)", run: a2 },
    Criterion { id: "A3", title: "sub-power schedule rate against the integral of a", run: a3 },
    Criterion { id: "A4", title: "energy lower bound on the A1-A3 runs", run: a4 },
    Criterion { id: "A5", title: "energy upper bounds in both regimes", run: a5 },
    Criterion { id: "A6", title: "FlatBottom non-convergence versus convergence", run: a6 },
    Criterion { id: "A7", title: "exact power-law solutions", run: a7 },
    Criterion { id: "A8", title: "DoubleWell classification from random starts", run: a8 },
    Criterion { id: "A9", title: "sign-change gap growth", run: a9 },
    Criterion { id: "A10", title: "occupation density and Cesaro mean", run: a10 },
    Criterion { id: "A11", title: "bounded damping always converges", run: a11 },
    Criterion { id: "A12", title: "stochastic recursion against its limiting ODE", run: a12 },
    Criterion { id: "A13", title: "2D FlatBottom does not converge", run: a13 },
];

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Replaces the relative tolerance of every integration.
    pub rel_tol: Option<f64>,
}

struct Measured {
    pass: bool,
    summary: String,
    values: BTreeMap<String, f64>,
}

impl Measured {
    fn new() -> Self {
        Self {
            pass: true,
            summary: String::new(),
            values: BTreeMap::new(),
        }
    }

    fn check(&mut self, ok: bool, key: impl Into<String>, value: f64) {
        self.pass &= ok;
        self.values.insert(key.into(), value);
    }

    fn note(mut self, s: String) -> Self {
        self.summary = s;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: String,
    pub title: String,
    pub pass: bool,
    pub summary: String,
    pub values: BTreeMap<String, f64>,
}

impl CriterionResult {
    /// One line: `PASS A1 ...` or `FAIL A1 ...`.
    pub fn line(&self) -> String {
        format!(
            "{} {} {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.summary
        )
    }
}

pub fn ids() -> Vec<&'static str> {
    CRITERIA.iter().map(|c| c.id).collect()
}

/// Runs one criterion by id (case-insensitive).
pub fn run_criterion(id: &str, opts: &VerifyOptions) -> Option<CriterionResult> {
    let c = CRITERIA.iter().find(|c| c.id.eq_ignore_ascii_case(id))?;
    let (pass, summary, values) = match (c.run)(opts) {
        Ok(m) => (m.pass, m.summary, m.values),
        Err(e) => (false, format!("error: {e}"), BTreeMap::new()),
    };
    Some(CriterionResult {
        id: c.id.into(),
        title: c.title.into(),
        pass,
        summary,
        values,
    })
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter_map(|c| run_criterion(c.id, opts))
        .collect()
}

fn solve(spec: SystemSpec, opts: &VerifyOptions) -> Result<Trajectory, String> {
    let spec = match opts.rel_tol {
        Some(r) => {
            let abs = spec.abs_tol;
            spec.with_tolerances(r, abs)
        }
        None => spec,
    };
    integrate::integrate(&spec).map_err(|e| e.to_string())
}

fn s<T, E: ToString>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn power(c: f64, gamma: f64, offset: f64) -> Result<DampingSchedule, String> {
    s(DampingSchedule::power_law(c, gamma, offset))
}

fn quadratic() -> Result<Potential, String> {
    s(Potential::quadratic(1))
}

fn a1_run(opts: &VerifyOptions) -> Result<Trajectory, String> {
    let spec = SystemSpec::new(power(1.0, 1.0, 0.0)?, quadratic()?, vec![1.0], vec![0.0], 50.0).with_tolerances(1e-9, 1e-12);
    solve(spec, opts)
}

const A2_AMPLITUDES: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

fn a2_run(c: f64, opts: &VerifyOptions) -> Result<Trajectory, String> {
    let spec = SystemSpec::new(power(c, 1.0, 1.0)?, quadratic()?, vec![1.0], vec![0.0], 1e3).with_tolerances(1e-10, 1e-20);
    solve(spec, opts)
}

fn a3_run(opts: &VerifyOptions) -> Result<Trajectory, String> {
    let spec = SystemSpec::new(power(1.0, 0.5, 1.0)?, quadratic()?, vec![1.0], vec![0.0], 1e3).with_tolerances(1e-10, 1e-40);
    solve(spec, opts)
}

fn a1(opts: &VerifyOptions) -> Result<Measured, String> {
    let traj = a1_run(opts)?;
    let mut worst: f64 = 0.0;
    for i in 0..traj.len() {
        let t = traj.times()[i];
        worst = worst.max((traj.x_at(i)[0] - s(oracle::bessel_j(0.0, t))?).abs());
    }
    let mut m = Measured::new();
    m.check(worst <= A1_MAX_ERROR, "max_error", worst);
    Ok(m.note(format!("max |x - J0| = {worst:.3e} (limit {A1_MAX_ERROR:e})")))
}

fn a2(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let mut parts = Vec::new();
    for c in A2_AMPLITUDES {
        let traj = a2_run(c, opts)?;
        let w = (1e2, 1e3);
        let fit = s(analyze::phase_norm_series(&traj, w, 200).and_then(|p| analyze::rate_fit(&p, w, &RateModel::PowerLaw)))?;
        let rel = (fit.exponent + c).abs() / c;
        m.check(rel <= A2_REL_TOL, format!("slope_c{c}"), fit.exponent);
        parts.push(format!("c={c}: {:.4}", fit.exponent));
    }
    Ok(m.note(format!("{} (within {}%)", parts.join(", "), A2_REL_TOL * 100.0)))
}

fn a3(opts: &VerifyOptions) -> Result<Measured, String> {
    let traj = a3_run(opts)?;
    let w = (1e2, 1e3);
    let model = RateModel::ExponentialInIntegralOfA(traj.spec.schedule.clone());
    let fit = s(analyze::phase_norm_series(&traj, w, 200).and_then(|p| analyze::rate_fit(&p, w, &model)))?;
    let mut m = Measured::new();
    m.check((fit.exponent - 1.0).abs() <= A3_SLOPE_TOL, "slope", fit.exponent);
    Ok(m.note(format!("slope {:.4} (1 +- {A3_SLOPE_TOL})", fit.exponent)))
}

fn a4(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut runs = vec![("a1".to_owned(), a1_run(opts)?)];
    for c in A2_AMPLITUDES {
        runs.push((format!("a2_c{c}"), a2_run(c, opts)?));
    }
    runs.push(("a3".into(), a3_run(opts)?));
    let mut m = Measured::new();
    let mut worst = f64::INFINITY;
    for (name, traj) in &runs {
        let r = s(analyze::lower_bound_residual(traj, 0.0))?;
        worst = worst.min(r);
        m.check(r >= A4_MIN_RESIDUAL, name.clone(), r);
    }
    Ok(m.note(format!("min residual {worst:.3e} over {} runs (limit {A4_MIN_RESIDUAL:e})", runs.len())))
}

fn a5(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let k1 = s(analyze::upper_bound_check(&a2_run(1.0, opts)?, 0.0, 0.5, BoundRegime::K1, 1.0))?;
    let ratio = k1.last_decade_max / k1.early_max;
    m.check(
        k1.constant.is_finite() && k1.last_decade_max <= A5_STABILITY_FACTOR * k1.early_max,
        "k1_constant",
        k1.constant,
    );
    m.values.insert("k1_late_over_early".into(), ratio);
    let k2 = s(analyze::upper_bound_check(&a3_run(opts)?, 0.0, 0.5, BoundRegime::K2, 1.0))?;
    m.check(k2.constant.is_finite() && k2.pass, "k2_constant", k2.constant);
    Ok(m.note(format!(
        "regime i C = {:.4} (late/early {ratio:.3}), regime ii D = {:.4}",
        k1.constant, k2.constant
    )))
}

fn flat_run(gamma: f64, t_end: f64, opts: &VerifyOptions) -> Result<Trajectory, String> {
    let spec = SystemSpec::new(power(1.0, gamma, 1.0)?, s(Potential::flat_bottom(1))?, vec![0.0], vec![2.0], t_end);
    solve(spec, opts)
}

fn a6(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let traj = flat_run(1.0, 1e5, opts)?;
    let mut parts = Vec::new();
    for t in [1e3, 1e4] {
        let e = s(analyze::extent_over(&traj, t, 10.0 * t))?;
        m.check(e.covers(0, -A6_COVER, A6_COVER), format!("lo_{t}"), e.lo[0]);
        m.values.insert(format!("hi_{t}"), e.hi[0]);
        parts.push(format!("[{t:e},{:e}] spans [{:.4}, {:.4}]", 10.0 * t, e.lo[0], e.hi[0]));
    }
    let slow = flat_run(0.5, 1e4, opts)?;
    let tail = s(analyze::omega_limit_extent(&slow, 0.1))?;
    let width = tail.max_width();
    let limit = tail.midpoint()[0];
    m.check(width <= A6_WIDTH, "gamma_half_width", width);
    m.check((-1.0..=1.0).contains(&limit), "gamma_half_limit", limit);
    Ok(m.note(format!("{}; gamma=0.5 width {width:.2e}, limit {limit:.4}", parts.join(", "))))
}

fn a7(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let mut parts = Vec::new();
    for beta in [0.5, 1.0, 2.0] {
        let ex = s(oracle::power_law_exact(beta, 0.0))?;
        let spec = SystemSpec::new(power(ex.c, 1.0, 1.0)?, s(Potential::signed_power(beta))?, vec![ex.x], vec![ex.v], 100.0);
        let traj = solve(spec, opts)?;
        let mut worst: f64 = 0.0;
        for i in 0..traj.len() {
            let t = traj.times()[i];
            worst = worst.max((traj.x_at(i)[0] - (t + 1.0).powf(-beta)).abs());
        }
        m.check(worst <= A7_MAX_ERROR, format!("beta_{beta}"), worst);
        parts.push(format!("beta={beta}: {worst:.2e}"));
    }
    Ok(m.note(format!("{} (limit {A7_MAX_ERROR:e})", parts.join(", "))))
}

fn random_starts(seed: u64) -> Vec<(f64, f64)> {
    let mut rng = NoiseStream::new(seed);
    (0..RANDOM_STARTS)
        .map(|_| {
            let x = rng.uniform(-2.0, 2.0);
            (x, rng.uniform(-2.0, 2.0))
        })
        .collect()
}

fn well_run(sched: DampingSchedule, x0: f64, v0: f64, t_end: f64, opts: &VerifyOptions) -> Result<Trajectory, String> {
    solve(SystemSpec::new(sched, Potential::double_well(), vec![x0], vec![v0], t_end), opts)
}

fn a8(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let pot = Potential::double_well();
    let (mut at_min, mut at_max, mut worst_growth) = (0usize, 0usize, f64::INFINITY);
    for (x0, v0) in random_starts(A8_SEED) {
        let traj = well_run(power(1.0, 1.0, 1.0)?, x0, v0, 1e4, opts)?;
        let c = s(analyze::classify_limit(&traj, &pot))?;
        let loc = c.nearest.as_ref().map_or(f64::NAN, |p| p.location[0]);
        let ok_min = c.verdict == Verdict::ConvergesToMin && ((loc.abs() - 1.0).abs() <= MATCH_TOL);
        at_min += ok_min as usize;
        at_max += (c.verdict == Verdict::ConvergesToMax || loc.abs() <= MATCH_TOL && c.limit_exists) as usize;
        let early = traj.events.iter().filter(|e| e.t <= 1e2).count();
        let growth = traj.events.len() as f64 / early.max(1) as f64;
        worst_growth = worst_growth.min(growth);
    }
    m.check(at_min == RANDOM_STARTS, "converged_to_min", at_min as f64);
    m.check(at_max == 0, "converged_to_max", at_max as f64);
    m.check(worst_growth >= A8_EVENT_GROWTH, "min_event_growth", worst_growth);
    Ok(m.note(format!(
        "{at_min}/{RANDOM_STARTS} to a minimum, {at_max} to the maximum, event growth 1e2->1e4 at least {worst_growth:.1}x"
    )))
}

fn a9(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let period = PI / SQRT_2;
    let trapped = well_run(power(1.0, 1.0, 1.0)?, 1.2, 0.0, 1e4, opts)?;
    let gaps = s(analyze::sign_change_gaps(&trapped))?;
    let late: Vec<f64> = gaps.gaps.iter().filter(|(t, _)| *t >= 1e3).map(|(_, g)| *g).collect();
    if late.is_empty() {
        return Err("no sign changes after t = 1e3 in the trapped run".into());
    }
    let worst = late.iter().map(|g| (g / period - 1.0).abs()).fold(0.0, f64::max);
    m.check(worst <= A9_PERIOD_TOL, "trapped_rel_gap_error", worst);

    let flat = flat_run(1.0, 1e5, opts)?;
    let fg = s(analyze::sign_change_gaps(&flat))?;
    let ratios: Vec<f64> = [1e2, 1e3, 1e4].iter().map(|&h| fg.max_ratio_until(h)).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let spread = hi / lo;
    m.check(lo > 0.0 && spread <= A9_RATIO_SPREAD, "flat_ratio_spread", spread);
    for (h, r) in [1e2, 1e3, 1e4].iter().zip(&ratios) {
        m.values.insert(format!("flat_max_ratio_{h}"), *r);
    }
    Ok(m.note(format!(
        "trapped gaps within {:.2e} of pi/sqrt2 (limit {A9_PERIOD_TOL}); FlatBottom max gap/(1+ln(1+t)) by horizon 1e2,1e3,1e4 = {:.2}, {:.2}, {:.2}, spread {spread:.1}x (limit {A9_RATIO_SPREAD}x)",
        worst, ratios[0], ratios[1], ratios[2]
    )))
}

fn a10(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let (x0, v0) = random_starts(A8_SEED)[0];
    let traj = well_run(power(1.0, 1.0, 1.0)?, x0, v0, 1e4, opts)?;
    let c = s(analyze::classify_limit(&traj, &Potential::double_well()))?;
    let limit = c
        .nearest
        .as_ref()
        .map(|p| p.location[0])
        .ok_or("no critical point matched")?;
    let d = s(analyze::occupation_density(&traj, &[limit], 0.1, &[1e2, 1e3, 1e4]))?;
    let f = &d.fractions;
    let decreasing = f.windows(2).all(|w| w[1] < w[0]);
    m.check(decreasing, "fraction_1e2", f[0]);
    m.values.insert("fraction_1e3".into(), f[1]);
    m.check(f[2] <= A10_DENSITY, "fraction_1e4", f[2]);
    let ces = s(analyze::cesaro_mean(&traj, 1e4))?[0];
    m.check((ces - limit).abs() <= A10_CESARO, "cesaro_error", (ces - limit).abs());
    Ok(m.note(format!(
        "limit {limit}, outside fractions {:.4}, {:.4}, {:.4}; Cesaro mean {ces:.5}",
        f[0], f[1], f[2]
    )))
}

fn a11(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let pot = Potential::double_well();
    let mut converged = 0;
    let mut widest: f64 = 0.0;
    for (x0, v0) in random_starts(A11_SEED) {
        let traj = well_run(s(DampingSchedule::constant(1.0))?, x0, v0, 1e2, opts)?;
        let c = s(analyze::classify_limit(&traj, &pot))?;
        converged += (c.limit_exists && matches!(c.verdict, Verdict::ConvergesToMin | Verdict::ConvergesToMax)) as usize;
        widest = widest.max(c.tail_width);
    }
    m.check(converged == RANDOM_STARTS, "converged", converged as f64);
    m.values.insert("max_tail_width".into(), widest);
    Ok(m.note(format!("{converged}/{RANDOM_STARTS} converged by t=1e2, widest tail {widest:.2e}")))
}

fn a12(_opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let pot = quadratic()?;
    let horizon = 20.0;
    let dev = |eps: f64| -> Result<f64, String> {
        let n = (horizon / eps) as usize + 2;
        let p = s(sgd::run_recursion(&pot, s(StepSchedule::constant(eps))?, NoiseModel::none(), &[1.0], n))?;
        Ok(s(sgd::compare_to_ode(&p, &pot, eps, horizon))?.sup_deviation)
    };
    let (d1, d2) = (dev(1e-3)?, dev(5e-4)?);
    let ratio = d1 / d2;
    m.check((A12_RATIO.0..=A12_RATIO.1).contains(&ratio), "deviation_ratio", ratio);

    let p = s(sgd::run_recursion(&pot, s(StepSchedule::constant(1e-3))?, NoiseModel::none(), &[1.0], 100_000))?;
    m.check(p.drift_identity_error <= A12_DRIFT_TOL, "drift_identity", p.drift_identity_error);

    let noisy = || sgd::run_recursion(&pot, StepSchedule::Constant { eps: 1e-2 }, NoiseModel { kind: sgd::NoiseKind::GaussianAdditive { sigma: 1.0 }, seed: 42 }, &[1.0], 10_000);
    let same = s(noisy())? == s(noisy())?;
    m.check(same, "reproducible", same as u8 as f64);
    Ok(m.note(format!(
        "deviation {d1:.3e} / {d2:.3e} = {ratio:.3}; drift identity {:.2e}; seeded paths identical: {same}",
        p.drift_identity_error
    )))
}

fn a13(opts: &VerifyOptions) -> Result<Measured, String> {
    let mut m = Measured::new();
    let spec = SystemSpec::new(power(1.0, 1.0, 1.0)?, s(Potential::flat_bottom(2))?, vec![0.3, 0.0], vec![0.0, 2.0], 2e4);
    let traj = solve(spec, opts)?;
    let mut parts = Vec::new();
    for t in [1e3, 1e4] {
        let d = s(analyze::tail_diameter(&traj, t, 2.0 * t))?;
        m.check(d >= A13_MIN_DIAMETER, format!("diameter_{t}"), d);
        parts.push(format!("[{t:e},{:e}] {d:.3}", 2.0 * t));
    }
    Ok(m.note(format!("tail diameters {} (at least {A13_MIN_DIAMETER})", parts.join(", "))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_unique_and_ordered() {
        let ids = ids();
        assert_eq!(ids.len(), 13);
        assert_eq!(ids[0], "A1");
        assert_eq!(ids[12], "A13");
    }

    #[test]
    fn tampered_tolerance_fails_a1() {
        let r = run_criterion("a1", &VerifyOptions { rel_tol: Some(1e-2) }).unwrap();
        assert!(!r.pass);
        assert!(r.values["max_error"] > A1_MAX_ERROR);
        assert!(r.line().starts_with("FAIL A1"));
    }

    #[test]
    fn unknown_id_is_none() {
        assert!(run_criterion("A99", &VerifyOptions::default()).is_none());
    }
}
