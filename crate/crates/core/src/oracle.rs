//! Closed-form reference solutions: Bessel functions of the first kind, the
//! regular solution of the linear equation with `a = c/t`, the free-motion
//! solution for `G ≡ 0`, the exact power-law solution and the linear decay
//! envelope.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;
use crate::schedule::{log_grid, DampingSchedule, ScheduleError};
use crate::special::{gamma, DoubleDouble};

/// Argument above which `bessel_j` switches from the series to the
/// large-argument expansion.
pub const SERIES_SWITCH: f64 = 30.0;
/// Smallest argument accepted by [`modified_decay_asymptote`].
pub const ASYMPTOTIC_THRESHOLD: f64 = 10.0;
pub const MAX_ORDER: f64 = 3.0;
pub const MAX_LINEAR_C: f64 = 7.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("Bessel order {0} outside the supported range [0, 3]")]
    UnsupportedOrder(f64),
    #[error("damping amplitude c = {0} outside (0, 7]")]
    UnsupportedAmplitude(f64),
    #[error("argument {t} outside the domain: {reason}")]
    Domain { t: f64, reason: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BesselMethod {
    Series,
    Asymptotic,
    ClosedFormHalfInteger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselEval {
    pub order: f64,
    pub t: f64,
    pub value: f64,
    pub method: BesselMethod,
    pub error_estimate: f64,
}

fn check_argument(t: f64) -> Result<(), OracleError> {
    if !t.is_finite() || t < 0.0 {
        return Err(OracleError::Domain {
            t,
            reason: "argument must be finite and nonnegative",
        });
    }
    Ok(())
}

/// `J_ν(t)` for `ν ∈ [0, 3]`, `t ≥ 0`.
pub fn bessel_j(nu: f64, t: f64) -> Result<f64, OracleError> {
    bessel_j_eval(nu, t).map(|e| e.value)
}

/// `J_ν(t)` with the method used and an error estimate.
pub fn bessel_j_eval(nu: f64, t: f64) -> Result<BesselEval, OracleError> {
    if !(0.0..=MAX_ORDER).contains(&nu) {
        return Err(OracleError::UnsupportedOrder(nu));
    }
    check_argument(t)?;
    if nu == 0.5 {
        let value = if t == 0.0 { 0.0 } else { (2.0 / (PI * t)).sqrt() * t.sin() };
        return Ok(BesselEval {
            order: nu,
            t,
            value,
            method: BesselMethod::ClosedFormHalfInteger,
            error_estimate: 4.0 * f64::EPSILON * value.abs().max(f64::MIN_POSITIVE),
        });
    }
    Ok(if t <= SERIES_SWITCH {
        series_eval(nu, t)
    } else {
        hankel_eval(nu, t)
    })
}

/// Power series `Σ (−1)^k (t/2)^{2k+ν} / (k! Γ(k+ν+1))`, summed in
/// double-double arithmetic. Usable at any `t`, but slow past a few hundred.
pub fn bessel_j_series(nu: f64, t: f64) -> Result<f64, OracleError> {
    if !(nu > -1.0 && nu.is_finite()) {
        return Err(OracleError::UnsupportedOrder(nu));
    }
    check_argument(t)?;
    Ok(series_eval(nu, t).value)
}

fn series_eval(nu: f64, t: f64) -> BesselEval {
    let prefactor = if nu == 0.0 { 1.0 } else { (0.5 * t).powf(nu) } / gamma(nu + 1.0);
    let (sum, max_term) = normalized_series(nu, t);
    let value = prefactor * sum.value();
    BesselEval {
        order: nu,
        t,
        value,
        method: BesselMethod::Series,
        error_estimate: prefactor.abs() * (max_term * 1e-28) + value.abs() * 1e-14,
    }
}

/// `Σ (−1)^k (t²/4)^k / (k! (ν+1)_k)` in double-double, with the largest
/// term magnitude.
fn normalized_series(nu: f64, t: f64) -> (DoubleDouble, f64) {
    let half = 0.5 * t;
    let x = DoubleDouble::product_of(half, half).neg();
    let mut term = DoubleDouble::from_f64(1.0);
    let mut sum = term;
    let mut max_term: f64 = 1.0;
    let mut k = 0.0f64;
    loop {
        k += 1.0;
        let denom = DoubleDouble::sum_of(nu, k).mul_f64(k);
        term = term.mul(x).div(denom);
        sum = sum.add(term);
        let mag = term.hi.abs();
        max_term = max_term.max(mag);
        if mag <= 1e-34 * sum.hi.abs().max(1e-300) || (k > 2.0 * half && mag < 1e-300) {
            break;
        }
    }
    (sum, max_term)
}

/// Large-argument expansion `√(2/(πt)) [P cos ω − Q sin ω]`,
/// `ω = t − νπ/2 − π/4`, with `P`, `Q` summed to their smallest term.
pub fn bessel_j_asymptotic(nu: f64, t: f64) -> Result<f64, OracleError> {
    if !(nu > -1.0 && nu.is_finite()) {
        return Err(OracleError::UnsupportedOrder(nu));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(OracleError::Domain {
            t,
            reason: "asymptotic form needs t > 0",
        });
    }
    Ok(hankel_eval(nu, t).value)
}

/// Leading term plus first correction only:
/// `√(2/(πt)) [cos ω − (4ν² − 1)/(8t) sin ω]`.
pub fn bessel_j_first_correction(nu: f64, t: f64) -> Result<f64, OracleError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(OracleError::Domain {
            t,
            reason: "asymptotic form needs t > 0",
        });
    }
    let omega = phase(nu, t);
    let mu = 4.0 * nu * nu;
    Ok((2.0 / (PI * t)).sqrt() * (omega.cos() - (mu - 1.0) / (8.0 * t) * omega.sin()))
}

fn phase(nu: f64, t: f64) -> f64 {
    t - (nu * FRAC_PI_2 + FRAC_PI_4)
}

fn hankel_eval(nu: f64, t: f64) -> BesselEval {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term: f64 = 1.0;
    let mut last = f64::INFINITY;
    let mut k = 0;
    loop {
        k += 1;
        let odd = (2 * k - 1) as f64;
        let next = term * (mu - odd * odd) / (k as f64 * 8.0 * t);
        if next.abs() >= last || next == 0.0 {
            // the series is asymptotic: stop at the smallest term
            last = next.abs().min(last);
            break;
        }
        term = next;
        last = term.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            q += sign * term;
        } else {
            p += sign * term;
        }
        if last < 1e-17 || k > 200 {
            break;
        }
    }
    let omega = phase(nu, t);
    let amp = (2.0 / (PI * t)).sqrt();
    let value = amp * (p * omega.cos() - q * omega.sin());
    BesselEval {
        order: nu,
        t,
        value,
        method: BesselMethod::Asymptotic,
        error_estimate: amp * (last + 4.0 * f64::EPSILON * t),
    }
}

/// Solution of `ẍ + (c/t)ẋ + x = 0` with `x(0) = 1`, `ẋ(0) = 0`:
/// `Γ(ν+1) (2/t)^ν J_ν(t)` with `ν = (c − 1)/2`.
pub fn linear_regular_solution(c: f64, t: f64) -> Result<f64, OracleError> {
    if !(c > 0.0 && c <= MAX_LINEAR_C) {
        return Err(OracleError::UnsupportedAmplitude(c));
    }
    check_argument(t)?;
    Ok(regular_unchecked(c, t))
}

/// Time derivative of [`linear_regular_solution`], via
/// `x_c'(t) = −t/(c+1) · x_{c+2}(t)`.
pub fn linear_regular_derivative(c: f64, t: f64) -> Result<f64, OracleError> {
    if !(c > 0.0 && c <= MAX_LINEAR_C) {
        return Err(OracleError::UnsupportedAmplitude(c));
    }
    check_argument(t)?;
    Ok(-t / (c + 1.0) * regular_unchecked(c + 2.0, t))
}

fn regular_unchecked(c: f64, t: f64) -> f64 {
    let nu = 0.5 * (c - 1.0);
    if t <= SERIES_SWITCH {
        normalized_series(nu, t).0.value()
    } else {
        gamma(nu + 1.0) * (2.0 / t).powf(nu) * hankel_eval(nu, t).value
    }
}

/// `t^{−c/2} e^{−t}`, the decaying shape of solutions of `ẍ + (c/t)ẋ − x = 0`.
pub fn modified_decay_asymptote(c: f64, t: f64) -> Result<f64, OracleError> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(OracleError::InvalidParameter(format!("c must be >= 0, got {c}")));
    }
    if !(t >= ASYMPTOTIC_THRESHOLD && t.is_finite()) {
        return Err(OracleError::Domain {
            t,
            reason: "asymptote needs t >= 10",
        });
    }
    Ok(t.powf(-0.5 * c) * (-t).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleState {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// Exact state for `G ≡ 0`: `v(t) = v0 K(t)`, `x(t) = x0 + v0 ∫₀ᵗ K`,
/// with `K = e^{−∫a}`.
pub fn zero_potential_solution(
    sched: &DampingSchedule,
    x0: &[f64],
    v0: &[f64],
    t: f64,
) -> Result<OracleState, OracleError> {
    check_argument(t)?;
    if x0.len() != v0.len() {
        return Err(OracleError::InvalidParameter("x0 and v0 differ in dimension".into()));
    }
    let kernel = sched.decay_kernel(t)?;
    let displacement = kernel_integral(sched, t)?;
    Ok(OracleState {
        t,
        x: x0.iter().zip(v0).map(|(x, v)| x + v * displacement).collect(),
        v: v0.iter().map(|v| v * kernel).collect(),
    })
}

/// `∫₀ᵗ e^{−∫₀ˢ a} ds`, closed form where one exists.
pub fn kernel_integral(sched: &DampingSchedule, t: f64) -> Result<f64, OracleError> {
    check_argument(t)?;
    match sched {
        DampingSchedule::Constant { level } => Ok(if *level == 0.0 {
            t
        } else {
            -(-level * t).exp_m1() / level
        }),
        DampingSchedule::PowerLaw { c, gamma, offset } if *gamma == 1.0 && *offset > 0.0 => {
            let s = *offset;
            Ok(if *c == 1.0 {
                s * (t / s).ln_1p()
            } else {
                // s^c ((t+s)^{1−c} − s^{1−c})/(1−c), written to avoid cancellation
                s * ((1.0 - c) * (t / s).ln_1p()).exp_m1() / (1.0 - c)
            })
        }
        DampingSchedule::PowerLaw { gamma, offset, .. } if *gamma == 1.0 && *offset == 0.0 => Ok(0.0),
        _ => {
            let r = quad::integrate(
                |s| sched.decay_kernel(s).unwrap_or(0.0),
                0.0,
                t,
                1e-13,
                1e-15,
                20_000,
            );
            Ok(r.value)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawExact {
    pub x: f64,
    pub v: f64,
    /// Damping amplitude the solution requires, `1 + β + 1/β`.
    pub c: f64,
}

/// `x = (t+1)^{−β}` solves `ẍ + c/(t+1) ẋ + x^{1+2/β} = 0` for `c = 1 + β + 1/β`.
pub fn power_law_exact(beta: f64, t: f64) -> Result<PowerLawExact, OracleError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(OracleError::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    check_argument(t)?;
    let x = (t + 1.0).powf(-beta);
    Ok(PowerLawExact {
        x,
        v: -beta * x / (t + 1.0),
        c: 1.0 + beta + 1.0 / beta,
    })
}

/// Grid verdict on the hypotheses of the linear decay envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeHypotheses {
    pub nonincreasing: bool,
    pub vanishing: bool,
    pub derivative_vanishing: bool,
    /// `ä + aȧ` keeps one sign on the tail of the grid.
    pub one_signed: bool,
}

impl EnvelopeHypotheses {
    pub fn all(&self) -> bool {
        self.nonincreasing && self.vanishing && self.derivative_vanishing && self.one_signed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub value: f64,
    pub hypotheses: EnvelopeHypotheses,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn envelope_hypotheses(sched: &DampingSchedule) -> EnvelopeHypotheses {
    let grid = log_grid(10.0, 1e6, 200);
    let a_end = sched.rate(1e6);
    let a_start = sched.rate(1.0);
    let da = |t: f64| sched.da_at(t).map(|d| d.0).unwrap_or(f64::NAN);
    let dda = |t: f64| sched.dda_at(t).map(|d| d.0).unwrap_or(f64::NAN);
    let mut pos = 0;
    let mut neg = 0;
    for &t in &grid {
        let w = dda(t) + sched.rate(t) * da(t);
        let scale = 1e-12 * (dda(t).abs() + (sched.rate(t) * da(t)).abs());
        if w > scale {
            pos += 1;
        } else if w < -scale {
            neg += 1;
        }
    }
    EnvelopeHypotheses {
        nonincreasing: sched.check_monotone_on_grid(1e-3, 1e6, 400),
        vanishing: a_end <= 1e-2 * a_start.max(f64::MIN_POSITIVE) || a_end == 0.0,
        derivative_vanishing: da(1e6).abs() <= 1e-2 * da(1.0).abs().max(1e-300) || da(1e6) == 0.0,
        one_signed: pos == 0 || neg == 0,
    }
}

/// `e^{−∫₀ᵗ a}` together with a grid check of the hypotheses under which it
/// brackets `|x|² + |ẋ|²` for the linear equation.
pub fn linear_envelope(sched: &DampingSchedule, t: f64) -> Result<Envelope, OracleError> {
    let value = sched.decay_kernel(t)?;
    let hypotheses = envelope_hypotheses(sched);
    let warning = (!hypotheses.all()).then(|| format!("envelope hypotheses fail on the grid: {hypotheses:?}"));
    Ok(Envelope {
        value,
        hypotheses,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j0_at_zero_and_first_zero() {
        assert_eq!(bessel_j(0.0, 0.0).unwrap(), 1.0);
        let (mut a, mut b) = (2.0, 3.0);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if bessel_j(0.0, m).unwrap() > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        assert!((a - 2.404825558).abs() < 1e-9);
    }

    #[test]
    fn half_order_closed_form_matches_series() {
        assert!(bessel_j(0.5, PI).unwrap().abs() < 1e-16);
        for t in [0.3, 1.0, 5.0, 17.0, 29.5] {
            let closed = (2.0 / (PI * t)).sqrt() * t.sin();
            let series = bessel_j_series(0.5, t).unwrap();
            assert!((closed - series).abs() < 1e-13, "t = {t}: {closed} vs {series}");
        }
    }

    #[test]
    fn known_values() {
        // reference digits from standard tables
        let cases = [
            (0.0, 1.0, 0.765_197_686_557_966_6),
            (1.0, 1.0, 0.440_050_585_744_933_5),
            (0.0, 10.0, -0.245_935_764_451_348_3),
            (1.0, 10.0, 0.043_472_746_168_861_44),
            (2.0, 5.0, 0.046_565_116_277_752_2),
            (0.0, 50.0, 0.055_812_327_669_251_82),
        ];
        for (nu, t, want) in cases {
            let got = bessel_j(nu, t).unwrap();
            assert!((got - want).abs() < 1e-12, "J_{nu}({t}) = {got}, want {want}");
        }
    }

    #[test]
    fn series_and_expansion_agree_on_overlap() {
        for nu in [0.0, 0.5, 1.0] {
            let mut t = 25.0;
            while t <= 35.0 {
                let s = bessel_j_series(nu, t).unwrap();
                let h = bessel_j_asymptotic(nu, t).unwrap();
                assert!((s - h).abs() < 1e-12, "nu {nu} t {t}: {s} vs {h}");
                let f = bessel_j_first_correction(nu, t).unwrap();
                assert!((s - f).abs() < 1e-4, "first correction nu {nu} t {t}");
                t += 0.25;
            }
        }
        for nu in [2.5, 3.0] {
            for t in [25.0, 30.0, 35.0] {
                let s = bessel_j_series(nu, t).unwrap();
                assert!((s - bessel_j_asymptotic(nu, t).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(bessel_j(3.5, 1.0), Err(OracleError::UnsupportedOrder(_))));
        assert!(matches!(bessel_j(-0.5, 1.0), Err(OracleError::UnsupportedOrder(_))));
        assert!(bessel_j(1.0, -1.0).is_err());
    }

    #[test]
    fn large_argument_is_finite() {
        let v = bessel_j(0.0, 1e6).unwrap();
        assert!(v.abs() <= (2.0 / (PI * 1e6)).sqrt() * 1.001);
    }

    #[test]
    fn regular_solution_examples() {
        for t in [0.0, 0.7, 12.0, 31.0, 48.0] {
            let a = linear_regular_solution(1.0, t).unwrap();
            let b = bessel_j(0.0, t).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
        assert!(linear_regular_solution(2.0, PI).unwrap().abs() < 1e-15);
        for t in [0.5, 3.0, 40.0] {
            assert!((linear_regular_solution(2.0, t).unwrap() - t.sin() / t).abs() < 1e-13);
        }
        assert!(linear_regular_solution(7.5, 1.0).is_err());
        assert!(linear_regular_solution(0.0, 1.0).is_err());
    }

    #[test]
    fn regular_solution_satisfies_ode() {
        for c in [1.0, 2.0, 3.0] {
            let h = 1e-3;
            let mut t: f64 = 1.0;
            while t <= 50.0 {
                let x = |s| linear_regular_solution(c, s).unwrap();
                let xdd = (x(t + h) - 2.0 * x(t) + x(t - h)) / (h * h);
                let xd = linear_regular_derivative(c, t).unwrap();
                let res = xdd + c / t * xd + x(t);
                assert!(res.abs() < 1e-6, "c {c} t {t}: residual {res}");
                let fd = (x(t + h) - x(t - h)) / (2.0 * h);
                assert!((fd - xd).abs() < 1e-6);
                t += 0.37;
            }
        }
    }

    #[test]
    fn regular_solution_envelope() {
        // peaks of |x_c| over a period scale like t^{−c/2}
        let peak = |c: f64, t0: f64| {
            (0..400)
                .map(|i| linear_regular_solution(c, t0 + i as f64 * 2.0 * PI / 400.0).unwrap().abs())
                .fold(0.0, f64::max)
        };
        for c in [1.0, 3.0] {
            let ratio = peak(c, 4000.0) / peak(c, 1000.0);
            assert!((ratio / 4f64.powf(-c / 2.0) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn modified_asymptote() {
        let y = |t| modified_decay_asymptote(2.0, t).unwrap();
        let h = 1e-5;
        let dlog = (y(100.0 + h).ln() - y(100.0 - h).ln()) / (2.0 * h);
        assert!((dlog + 1.01).abs() < 1e-8);
        assert!((y(501.0) / y(500.0) - (-1f64).exp()).abs() < 1e-3);
        assert_eq!(modified_decay_asymptote(0.0, 12.0).unwrap(), (-12f64).exp());
        assert!(modified_decay_asymptote(1.0, 5.0).is_err());
    }

    #[test]
    fn zero_potential_examples() {
        let free = DampingSchedule::constant(0.0).unwrap();
        let s = zero_potential_solution(&free, &[1.0], &[2.0], 3.0).unwrap();
        assert_eq!(s.x, vec![7.0]);
        let c1 = DampingSchedule::power_law(1.0, 1.0, 1.0).unwrap();
        for t in [0.5, 10.0, 1e4] {
            let s = zero_potential_solution(&c1, &[1.0], &[1.0], t).unwrap();
            assert!((s.x[0] - (1.0 + (1.0f64 + t).ln())).abs() < 1e-12);
            assert!((s.v[0] - 1.0 / (1.0 + t)).abs() < 1e-15);
        }
        let c2 = DampingSchedule::power_law(2.0, 1.0, 1.0).unwrap();
        let s = zero_potential_solution(&c2, &[0.0], &[1.0], 1e12).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-9);
        // quadrature path against the closed form
        let sub = DampingSchedule::power_law(1.0, 0.5, 1.0).unwrap();
        let q = kernel_integral(&sub, 20.0).unwrap();
        // ∫₀²⁰ e^{−2(√(1+s) − 1)} ds = e²[(1+2)e^{−2} − (1+2√21)e^{−2√21}]/2
        let r = 21f64.sqrt();
        let exact = (2f64).exp() * (3.0 * (-2f64).exp() - (1.0 + 2.0 * r) * (-2.0 * r).exp()) / 2.0;
        assert!((q - exact).abs() < 1e-12, "{q} vs {exact}");
    }

    #[test]
    fn power_law_examples() {
        let s = power_law_exact(1.0, 2.0).unwrap();
        assert_eq!(s.c, 3.0);
        assert!((s.x - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(power_law_exact(2.0, 0.0).unwrap().v, -2.0);
        assert_eq!(power_law_exact(2.0, 0.0).unwrap().c, 3.5);
        assert!(power_law_exact(0.0, 1.0).is_err());
    }

    #[test]
    fn power_law_residual() {
        for beta in [0.5, 1.0, 2.0] {
            let q = 1.0 + 2.0 / beta;
            let mut t = 0.0;
            while t <= 100.0 {
                let s = power_law_exact(beta, t).unwrap();
                let xdd = beta * (beta + 1.0) * (t + 1.0).powf(-beta - 2.0);
                let res = xdd + s.c / (t + 1.0) * s.v + s.x.powf(q);
                assert!(res.abs() <= 1e-10 * (1.0 + xdd.abs()), "beta {beta} t {t}: {res}");
                t += 0.5;
            }
        }
    }

    #[test]
    fn envelope_examples() {
        let c = DampingSchedule::power_law(2.0, 1.0, 1.0).unwrap();
        let e = linear_envelope(&c, 3.0).unwrap();
        assert!((e.value - 1.0 / 16.0).abs() < 1e-15);
        assert!(e.hypotheses.all() && e.warning.is_none());
        let sub = DampingSchedule::power_law(1.0, 0.5, 1.0).unwrap();
        let e = linear_envelope(&sub, 99.0).unwrap();
        assert!((e.value - (-2.0 * (10.0 - 1.0f64)).exp()).abs() < 1e-20);
        assert!(e.hypotheses.all());
        let k = DampingSchedule::constant(0.5).unwrap();
        let e = linear_envelope(&k, 4.0).unwrap();
        assert!((e.value - (-2f64).exp()).abs() < 1e-16);
        assert!(e.warning.is_some());
    }
}
