//! Damping coefficients `a(t)`: evaluation, calculus and classification
//! against the convergence conditions of the damped system.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;

/// Relative tolerance used for quadrature of custom schedules.
pub const CUSTOM_QUAD_REL_TOL: f64 = 1e-10;
/// Absolute floor used for quadrature of custom schedules.
pub const CUSTOM_QUAD_ABS_TOL: f64 = 1e-14;
/// Horizon used by the heuristic classification of custom schedules.
pub const HEURISTIC_HORIZON: f64 = 1e6;
/// Integral value above which a custom schedule is treated as divergent.
pub const HEURISTIC_DIVERGENCE_THRESHOLD: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("time {t} is outside the domain of the schedule ({reason})")]
    Domain { t: f64, reason: &'static str },
    #[error("reversed integration interval [{t0}, {t1}]")]
    ReversedInterval { t0: f64, t1: f64 },
    #[error("invalid schedule parameter: {0}")]
    InvalidParameter(String),
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied schedule.
#[derive(Clone)]
pub struct CustomSchedule {
    name: String,
    rate: ScalarFn,
    derivative: Option<ScalarFn>,
    nonincreasing: bool,
}

impl CustomSchedule {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Whether `ȧ` is evaluated by finite differences.
    pub fn derivative_is_numeric(&self) -> bool {
        self.derivative.is_none()
    }
}

/// The damping coefficient `a(t) ≥ 0`.
#[derive(Clone)]
pub enum DampingSchedule {
    /// `a(t) = level`.
    Constant { level: f64 },
    /// `a(t) = c / (t + offset)^gamma`.
    PowerLaw { c: f64, gamma: f64, offset: f64 },
    Custom(CustomSchedule),
}

impl fmt::Debug for DampingSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { level } => f.debug_struct("Constant").field("level", level).finish(),
            Self::PowerLaw { c, gamma, offset } => f
                .debug_struct("PowerLaw")
                .field("c", c)
                .field("gamma", gamma)
                .field("offset", offset)
                .finish(),
            Self::Custom(s) => f
                .debug_struct("Custom")
                .field("name", &s.name)
                .field("nonincreasing", &s.nonincreasing)
                .finish(),
        }
    }
}

/// Where `ȧ` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

/// Convergence-relevant flags of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleClassification {
    /// `∫₀^∞ a = ∞`.
    pub integral_a_diverges: bool,
    /// `∫₀^∞ e^{-∫₀ᵗ a} dt < ∞`.
    pub exp_integral_finite: bool,
    /// `a(t) ≥ a₀ > 0` for all t.
    pub bounded_below: bool,
    /// `∫₁^∞ a(t ln t) dt = ∞`.
    pub slow_log_condition: bool,
    /// False when the flags come from the quadrature heuristic.
    pub analytic: bool,
}

/// Flat description used in reports and config round trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEcho {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
}

impl DampingSchedule {
    pub fn constant(level: f64) -> Result<Self, ScheduleError> {
        if !(level.is_finite() && level >= 0.0) {
            return Err(ScheduleError::InvalidParameter(format!(
                "constant level must be finite and nonnegative, got {level}"
            )));
        }
        Ok(Self::Constant { level })
    }

    /// `a(t) = c/(t+offset)^gamma`. A zero offset is the singular start and
    /// is only accepted for `gamma ≤ 1`.
    pub fn power_law(c: f64, gamma: f64, offset: f64) -> Result<Self, ScheduleError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(ScheduleError::InvalidParameter(format!(
                "power-law amplitude c must be positive, got {c}"
            )));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(ScheduleError::InvalidParameter(format!(
                "power-law exponent gamma must be nonnegative, got {gamma}"
            )));
        }
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(ScheduleError::InvalidParameter(format!(
                "power-law offset must be nonnegative, got {offset}"
            )));
        }
        if offset == 0.0 && gamma > 1.0 {
            return Err(ScheduleError::InvalidParameter(format!(
                "zero offset requires gamma <= 1, got {gamma}"
            )));
        }
        Ok(Self::PowerLaw { c, gamma, offset })
    }

    /// A custom schedule. Without `derivative`, `ȧ` falls back to central
    /// differences with step `max(1e-6, 1e-6 t)`.
    pub fn custom<A>(
        name: impl Into<String>,
        rate: A,
        derivative: Option<ScalarFn>,
        nonincreasing: bool,
    ) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Custom(CustomSchedule {
            name: name.into(),
            rate: Arc::new(rate),
            derivative,
            nonincreasing,
        })
    }

    /// `t ↦ 1/((t+1) ln ln(t+3))`, nonincreasing, satisfies the weakened
    /// logarithmic condition `∫₁^∞ a(t ln t) dt = ∞` while `∫ a` diverges
    /// only like `ln t / ln ln t`.
    pub fn log_log_example() -> Self {
        let rate = |t: f64| 1.0 / ((t + 1.0) * (t + 3.0).ln().ln());
        let derivative: ScalarFn = Arc::new(|t: f64| {
            let l = (t + 3.0).ln();
            let ll = l.ln();
            let denom = (t + 1.0) * ll;
            let d_denom = ll + (t + 1.0) / ((t + 3.0) * l);
            -d_denom / (denom * denom)
        });
        Self::custom("log_log", rate, Some(derivative), true)
    }

    /// True for `c/t^gamma` (offset zero), where `a(0)` is undefined.
    pub fn is_singular_at_zero(&self) -> bool {
        matches!(self, Self::PowerLaw { offset, .. } if *offset == 0.0)
    }

    pub fn declared_nonincreasing(&self) -> bool {
        match self {
            Self::Constant { .. } | Self::PowerLaw { .. } => true,
            Self::Custom(s) => s.nonincreasing,
        }
    }

    fn check_time(&self, t: f64) -> Result<(), ScheduleError> {
        if t.is_nan() || t < 0.0 {
            return Err(ScheduleError::Domain {
                t,
                reason: "negative time",
            });
        }
        if t == 0.0 && self.is_singular_at_zero() {
            return Err(ScheduleError::Domain {
                t,
                reason: "schedule is singular at t = 0",
            });
        }
        Ok(())
    }

    /// `a(t)`.
    pub fn a_at(&self, t: f64) -> Result<f64, ScheduleError> {
        self.check_time(t)?;
        Ok(self.rate(t))
    }

    /// Unchecked `a(t)` for hot loops; callers guarantee the domain.
    #[inline]
    pub fn rate(&self, t: f64) -> f64 {
        match self {
            Self::Constant { level } => *level,
            Self::PowerLaw { c, gamma, offset } => {
                let s = t + offset;
                if *gamma == 1.0 {
                    c / s
                } else if *gamma == 0.0 {
                    *c
                } else {
                    c * s.powf(-gamma)
                }
            }
            Self::Custom(s) => (s.rate)(t),
        }
    }

    fn fd_step(t: f64) -> f64 {
        1e-6f64.max(1e-6 * t)
    }

    /// `ȧ(t)` with its provenance.
    pub fn da_at(&self, t: f64) -> Result<(f64, DerivativeSource), ScheduleError> {
        self.check_time(t)?;
        Ok(match self {
            Self::Constant { .. } => (0.0, DerivativeSource::Analytic),
            Self::PowerLaw { c, gamma, offset } => (
                -c * gamma * (t + offset).powf(-gamma - 1.0),
                DerivativeSource::Analytic,
            ),
            Self::Custom(s) => match &s.derivative {
                Some(d) => (d(t), DerivativeSource::Analytic),
                None => {
                    let h = Self::fd_step(t).min(if t > 0.0 { 0.5 * t } else { f64::INFINITY });
                    let (lo, hi) = if t > h { (t - h, t + h) } else { (t, t + h) };
                    (
                        ((s.rate)(hi) - (s.rate)(lo)) / (hi - lo),
                        DerivativeSource::FiniteDifference,
                    )
                }
            },
        })
    }

    /// `ä(t)`: analytic for the built-ins, central differences of `ȧ` otherwise.
    pub fn dda_at(&self, t: f64) -> Result<(f64, DerivativeSource), ScheduleError> {
        self.check_time(t)?;
        match self {
            Self::Constant { .. } => Ok((0.0, DerivativeSource::Analytic)),
            Self::PowerLaw { c, gamma, offset } => Ok((
                c * gamma * (gamma + 1.0) * (t + offset).powf(-gamma - 2.0),
                DerivativeSource::Analytic,
            )),
            Self::Custom(_) => {
                let h = Self::fd_step(t).max(1e-4 * t);
                let lo = (t - h).max(if self.is_singular_at_zero() { 0.5 * t } else { 0.0 });
                let hi = t + h;
                let (d_hi, _) = self.da_at(hi)?;
                let (d_lo, _) = self.da_at(lo)?;
                Ok(((d_hi - d_lo) / (hi - lo), DerivativeSource::FiniteDifference))
            }
        }
    }

    /// `∫_{t0}^{t1} a(s) ds`. Returns `+∞` for a non-integrable singular start.
    pub fn integral_a(&self, t0: f64, t1: f64) -> Result<f64, ScheduleError> {
        if t0.is_nan() || t0 < 0.0 {
            return Err(ScheduleError::Domain {
                t: t0,
                reason: "negative time",
            });
        }
        if t1 < t0 || t1.is_nan() {
            return Err(ScheduleError::ReversedInterval { t0, t1 });
        }
        if t1 == t0 {
            return Ok(0.0);
        }
        Ok(match self {
            Self::Constant { level } => level * (t1 - t0),
            Self::PowerLaw { c, gamma, offset } => {
                let s0 = t0 + offset;
                let ratio_m1 = (t1 - t0) / s0;
                if *gamma == 1.0 {
                    if s0 == 0.0 {
                        f64::INFINITY
                    } else {
                        c * ratio_m1.ln_1p()
                    }
                } else if s0 == 0.0 {
                    // gamma < 1 here: ∫₀^{t1} c s^{-γ} ds
                    c * (t1 + offset).powf(1.0 - gamma) / (1.0 - gamma)
                } else {
                    let e = 1.0 - gamma;
                    c * s0.powf(e) * (e * ratio_m1.ln_1p()).exp_m1() / e
                }
            }
            Self::Custom(s) => {
                let r = quad::integrate(
                    |t| (s.rate)(t),
                    t0,
                    t1,
                    CUSTOM_QUAD_REL_TOL,
                    CUSTOM_QUAD_ABS_TOL,
                    20_000,
                );
                r.value
            }
        })
    }

    /// `e^{-∫₀ᵗ a}`.
    pub fn decay_kernel(&self, t: f64) -> Result<f64, ScheduleError> {
        Ok((-self.integral_a(0.0, t)?).exp())
    }

    /// Classifies the schedule. Constant and power-law schedules get exact
    /// flags; custom schedules get quadrature-based heuristic flags.
    pub fn classify(&self) -> ScheduleClassification {
        match self {
            Self::Constant { level } => {
                let positive = *level > 0.0;
                ScheduleClassification {
                    integral_a_diverges: positive,
                    exp_integral_finite: positive,
                    bounded_below: positive,
                    slow_log_condition: positive,
                    analytic: true,
                }
            }
            Self::PowerLaw { c, gamma, .. } => {
                let slow = *gamma <= 1.0;
                ScheduleClassification {
                    integral_a_diverges: slow,
                    exp_integral_finite: *gamma < 1.0 || (*gamma == 1.0 && *c > 1.0),
                    bounded_below: *gamma == 0.0,
                    slow_log_condition: slow,
                    analytic: true,
                }
            }
            Self::Custom(s) => classify_heuristic(&s.rate),
        }
    }

    /// Spot-checks `a(t1) ≥ a(t2)` and `a ≥ 0` on a log grid of `[t_min, t_max]`.
    pub fn check_monotone_on_grid(&self, t_min: f64, t_max: f64, points: usize) -> bool {
        let grid = log_grid(t_min, t_max, points.max(2));
        let values: Vec<f64> = grid.iter().map(|&t| self.rate(t)).collect();
        values.iter().all(|&a| a >= 0.0 && a.is_finite())
            && values.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn echo(&self) -> ScheduleEcho {
        match self {
            Self::Constant { level } => ScheduleEcho {
                kind: "constant".into(),
                c: None,
                gamma: None,
                offset: None,
                level: Some(*level),
            },
            Self::PowerLaw { c, gamma, offset } => ScheduleEcho {
                kind: "power_law".into(),
                c: Some(*c),
                gamma: Some(*gamma),
                offset: Some(*offset),
                level: None,
            },
            Self::Custom(s) => ScheduleEcho {
                kind: format!("custom:{}", s.name),
                c: None,
                gamma: None,
                offset: None,
                level: None,
            },
        }
    }
}

/// Log-spaced grid with `points` entries from `t_min` to `t_max` inclusive.
pub fn log_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    let (l0, l1) = (t_min.ln(), t_max.ln());
    (0..points)
        .map(|i| {
            if i + 1 == points {
                t_max
            } else {
                (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

fn quad_rate(f: &dyn Fn(f64) -> f64, t0: f64, t1: f64) -> f64 {
    quad::integrate(f, t0, t1, CUSTOM_QUAD_REL_TOL, CUSTOM_QUAD_ABS_TOL, 20_000).value
}

fn classify_heuristic(rate: &ScalarFn) -> ScheduleClassification {
    let f = |t: f64| rate(t);
    // start slightly off zero so schedules singular at the origin are accepted
    let start = 1e-12;
    let last_decade_start = HEURISTIC_HORIZON / 10.0;
    let head = quad_rate(&f, start, last_decade_start);
    let tail = quad_rate(&f, last_decade_start, HEURISTIC_HORIZON);
    let total = head + tail;
    let integral_a_diverges = total > HEURISTIC_DIVERGENCE_THRESHOLD || tail >= 0.1;

    // kernel integral over the last decade against the whole range
    let kernel = |t: f64| (-quad_rate(&f, start, t.max(start))).exp();
    let mut kernel_total = 0.0;
    let mut kernel_tail = 0.0;
    let grid = log_grid(1e-3, HEURISTIC_HORIZON, 91);
    let mut prev = 0.0;
    for &t in &grid {
        // coarse running integral with a GL5 rule per log cell
        let piece: f64 = quad::GL5_NODES
            .iter()
            .zip(quad::GL5_WEIGHTS)
            .map(|(&x, w)| w * kernel(prev + (t - prev) * x))
            .sum::<f64>()
            * (t - prev);
        kernel_total += piece;
        if t > last_decade_start {
            kernel_tail += piece;
        }
        prev = t;
    }
    let exp_integral_finite = integral_a_diverges && kernel_tail < 1e-3 * kernel_total.max(1.0);

    let a_far = rate(HEURISTIC_HORIZON);
    let a_near = rate(last_decade_start);
    let bounded_below = a_far > 0.0 && a_far >= 0.5 * a_near;

    let log_arg = |t: f64| rate(t * t.ln());
    let log_tail = quad_rate(&log_arg, last_decade_start, HEURISTIC_HORIZON);
    let slow_log_condition = log_tail >= 0.1 || integral_a_diverges && tail >= 0.1;

    ScheduleClassification {
        integral_a_diverges,
        exp_integral_finite,
        bounded_below,
        slow_log_condition,
        analytic: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn a_at_examples() {
        let s = DampingSchedule::power_law(2.0, 1.0, 1.0).unwrap();
        assert_eq!(s.a_at(1.0).unwrap(), 1.0);
        let s = DampingSchedule::constant(0.5).unwrap();
        assert_eq!(s.a_at(1e3).unwrap(), 0.5);
        let s = DampingSchedule::power_law(1.0, 0.5, 1.0).unwrap();
        assert_eq!(s.a_at(3.0).unwrap(), 0.5);
    }

    #[test]
    fn a_at_domain_errors() {
        let singular = DampingSchedule::power_law(1.0, 1.0, 0.0).unwrap();
        assert!(matches!(singular.a_at(0.0), Err(ScheduleError::Domain { .. })));
        let s = DampingSchedule::constant(1.0).unwrap();
        assert!(matches!(s.a_at(-1.0), Err(ScheduleError::Domain { .. })));
    }

    #[test]
    fn constructor_rejects_singular_fast_decay() {
        assert!(DampingSchedule::power_law(1.0, 1.5, 0.0).is_err());
        assert!(DampingSchedule::power_law(0.0, 1.0, 1.0).is_err());
        assert!(DampingSchedule::constant(-1.0).is_err());
    }

    #[test]
    fn integral_examples() {
        let s = DampingSchedule::power_law(1.0, 1.0, 1.0).unwrap();
        assert!(rel(s.integral_a(0.0, E - 1.0).unwrap(), 1.0) < 1e-15);
        let s = DampingSchedule::constant(2.0).unwrap();
        assert_eq!(s.integral_a(0.0, 5.0).unwrap(), 10.0);
        let s = DampingSchedule::power_law(1.0, 0.5, 1.0).unwrap();
        assert!(rel(s.integral_a(0.0, 3.0).unwrap(), 2.0) < 1e-15);
        assert!(matches!(
            s.integral_a(3.0, 1.0),
            Err(ScheduleError::ReversedInterval { .. })
        ));
    }

    #[test]
    fn singular_integral_is_infinite() {
        let s = DampingSchedule::power_law(1.0, 1.0, 0.0).unwrap();
        assert_eq!(s.integral_a(0.0, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(s.decay_kernel(1.0).unwrap(), 0.0);
        let s = DampingSchedule::power_law(1.0, 0.5, 0.0).unwrap();
        assert!(rel(s.integral_a(0.0, 4.0).unwrap(), 4.0) < 1e-15);
    }

    #[test]
    fn decay_kernel_examples() {
        let s = DampingSchedule::power_law(2.0, 1.0, 1.0).unwrap();
        assert!(rel(s.decay_kernel(3.0).unwrap(), 1.0 / 16.0) < 1e-15);
        let s = DampingSchedule::constant(1.0).unwrap();
        assert!(rel(s.decay_kernel(2f64.ln()).unwrap(), 0.5) < 1e-15);
        assert_eq!(s.decay_kernel(0.0).unwrap(), 1.0);
    }

    #[test]
    fn classify_examples() {
        let c = DampingSchedule::power_law(1.0, 1.0, 1.0).unwrap().classify();
        assert!(c.integral_a_diverges && !c.exp_integral_finite && c.analytic);
        let c = DampingSchedule::power_law(2.0, 1.0, 1.0).unwrap().classify();
        assert!(c.integral_a_diverges && c.exp_integral_finite);
        let c = DampingSchedule::constant(1.0).unwrap().classify();
        assert!(c.integral_a_diverges && c.exp_integral_finite && c.bounded_below);
    }

    #[test]
    fn power_law_derivative_matches_finite_difference() {
        let s = DampingSchedule::power_law(1.7, 0.6, 2.0).unwrap();
        for &t in &[0.1, 1.0, 10.0, 300.0] {
            let h = 1e-5 * (1.0 + t);
            let fd = (s.rate(t + h) - s.rate(t - h)) / (2.0 * h);
            let (d, src) = s.da_at(t).unwrap();
            assert_eq!(src, DerivativeSource::Analytic);
            assert!(rel(d, fd) < 1e-7, "t = {t}");
            let fd2 = (s.da_at(t + h).unwrap().0 - s.da_at(t - h).unwrap().0) / (2.0 * h);
            assert!(rel(s.dda_at(t).unwrap().0, fd2) < 1e-6);
        }
    }

    #[test]
    fn custom_falls_back_to_finite_differences() {
        let s = DampingSchedule::custom("inv", |t| 1.0 / (1.0 + t), None, true);
        let (d, src) = s.da_at(3.0).unwrap();
        assert_eq!(src, DerivativeSource::FiniteDifference);
        assert!(rel(d, -1.0 / 16.0) < 1e-8);
        let i = s.integral_a(0.0, 9.0).unwrap();
        assert!(rel(i, 10f64.ln()) < 1e-10);
    }

    #[test]
    fn log_log_example_classification() {
        let s = DampingSchedule::log_log_example();
        let (d, _) = s.da_at(5.0).unwrap();
        let h = 1e-5;
        let fd = (s.rate(5.0 + h) - s.rate(5.0 - h)) / (2.0 * h);
        assert!(rel(d, fd) < 1e-7);
        assert!(s.check_monotone_on_grid(1e-3, 1e6, 200));
        let c = s.classify();
        assert!(!c.analytic);
        assert!(c.integral_a_diverges);
        assert!(c.slow_log_condition);
        assert!(!c.exp_integral_finite);
    }

    #[test]
    fn heuristic_agrees_on_clear_cases() {
        let fast = DampingSchedule::custom("fast", |t| 1.0 / (1.0 + t).powi(2), None, true);
        let c = fast.classify();
        assert!(!c.integral_a_diverges && !c.exp_integral_finite);
        let heavy = DampingSchedule::custom("heavy", |_| 1.0, None, true);
        let c = heavy.classify();
        assert!(c.integral_a_diverges && c.exp_integral_finite && c.bounded_below);
    }
}
