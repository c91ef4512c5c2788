//! Solver for `ẍ + a(t)ẋ + ∇G(x) = 0` written as a first-order system in
//! `(x, v)`, with dense output, velocity sign-change events and an energy
//! ledger.

pub mod dopri;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::{Potential, PotentialError};
use crate::quad::{GL5_NODES, GL5_WEIGHTS};
use crate::schedule::{DampingSchedule, ScheduleError};
pub use dopri::{DopriError, SolverStats, StepControl};
use dopri::{eval_dense, Dopri5};

/// Start time of the series bootstrap for `a = c/t`.
pub const BOOTSTRAP_H0: f64 = 1e-6;
pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_ABS_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_STEPS: usize = 20_000_000;
pub const DEFAULT_MAX_SAMPLES: usize = 100_000;
/// Event times are refined by bisection on the dense output to this width.
pub const EVENT_TIME_TOL: f64 = 1e-10;
/// Sub-intervals per step scanned for sign changes of the monitored velocity.
const EVENT_SCAN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid system: {0}")]
    InvalidSpec(String),
    #[error("maximum step count {steps} exceeded at t = {t}")]
    MaxStepsExceeded { t: f64, steps: usize },
    #[error("step size {h} below 1e-14 * t_end at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("time {t} outside the solved range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

impl From<DopriError> for IntegrateError {
    fn from(e: DopriError) -> Self {
        match e {
            DopriError::MaxStepsExceeded { t, steps } => Self::MaxStepsExceeded { t, steps },
            DopriError::StepUnderflow { t, h } => Self::StepUnderflow { t, h },
            DopriError::NonFiniteState { t } => Self::NonFiniteState { t },
        }
    }
}

impl IntegrateError {
    /// Short machine-readable failure kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidSpec(_) => "invalid_spec",
            Self::MaxStepsExceeded { .. } => "max_steps_exceeded",
            Self::StepUnderflow { .. } => "step_underflow",
            Self::NonFiniteState { .. } => "non_finite_state",
            Self::OutOfRange { .. } => "out_of_range",
            Self::Schedule(_) => "schedule",
            Self::Potential(_) => "potential",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub schedule: DampingSchedule,
    pub potential: Potential,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    /// Initial time; the system is integrated on `[t0, t_end]`.
    pub t0: f64,
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Constant step size instead of error control.
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
    /// Upper bound on stored samples; beyond it the stride doubles.
    pub max_samples: usize,
    /// Events are sign changes of `⟨v, d⟩`; `None` means the first axis.
    pub event_dir: Option<Vec<f64>>,
}

impl SystemSpec {
    pub fn new(schedule: DampingSchedule, potential: Potential, x0: Vec<f64>, v0: Vec<f64>, t_end: f64) -> Self {
        Self {
            schedule,
            potential,
            x0,
            v0,
            t0: 0.0,
            t_end,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            fixed_step: None,
            max_steps: DEFAULT_MAX_STEPS,
            max_samples: DEFAULT_MAX_SAMPLES,
            event_dir: None,
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn with_fixed_step(mut self, h: f64) -> Self {
        self.fixed_step = Some(h);
        self
    }

    pub fn with_event_dir(mut self, d: Vec<f64>) -> Self {
        self.event_dir = Some(d);
        self
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    fn validate(&self) -> Result<(), IntegrateError> {
        let n = self.potential.dim();
        let bad = |m: String| Err(IntegrateError::InvalidSpec(m));
        if self.x0.len() != n || self.v0.len() != n {
            return bad(format!(
                "x0 and v0 must have the potential's dimension {n} (got {} and {})",
                self.x0.len(),
                self.v0.len()
            ));
        }
        if self.x0.iter().chain(&self.v0).any(|v| !v.is_finite()) {
            return bad("initial state must be finite".into());
        }
        if !(self.t0 >= 0.0 && self.t_end > self.t0 && self.t_end.is_finite()) {
            return bad(format!("need 0 <= t0 < t_end, got t0 = {}, t_end = {}", self.t0, self.t_end));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if let Some(h) = self.fixed_step {
            if !(h > 0.0 && h.is_finite()) {
                return bad("fixed step must be positive".into());
            }
        }
        if self.max_samples < 2 {
            return bad("max_samples must be at least 2".into());
        }
        if let Some(d) = &self.event_dir {
            if d.len() != n || d.iter().all(|v| *v == 0.0) {
                return bad("event_dir must be a nonzero vector of the potential's dimension".into());
            }
        }
        if self.t0 == 0.0 && self.schedule.is_singular_at_zero() && self.v0.iter().any(|v| *v != 0.0) {
            return bad("a schedule singular at t = 0 requires v0 = 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Position in the ordered event list.
    pub index: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub energy: f64,
    /// Sign of the monitored velocity after the event.
    pub sign_after: i8,
}

/// Piecewise quartic interpolant over the solved range.
#[derive(Debug, Clone, Default)]
pub struct DenseOutput {
    width: usize,
    starts: Vec<f64>,
    steps: Vec<f64>,
    coeffs: Vec<f64>,
}

impl DenseOutput {
    fn new(width: usize) -> Self {
        Self {
            width,
            ..Default::default()
        }
    }

    fn push(&mut self, t: f64, h: f64, coeffs: &[f64]) {
        self.starts.push(t);
        self.steps.push(h);
        self.coeffs.extend_from_slice(coeffs);
    }

    pub fn segments(&self) -> usize {
        self.starts.len()
    }

    pub fn start(&self) -> f64 {
        self.starts[0]
    }

    pub fn end(&self) -> f64 {
        let last = self.starts.len() - 1;
        self.starts[last] + self.steps[last]
    }

    /// Segment index containing `t` (the last one for `t` at the end).
    pub fn locate(&self, t: f64) -> usize {
        let i = self.starts.partition_point(|s| *s <= t);
        i.saturating_sub(1)
    }

    /// Writes the interpolated `(x, v)` at `t` into `out` using segment `seg`.
    pub fn eval_in(&self, seg: usize, t: f64, out: &mut [f64]) {
        let w = self.width;
        let h = self.steps[seg];
        let theta = if h == 0.0 { 0.0 } else { (t - self.starts[seg]) / h };
        eval_dense(&self.coeffs[5 * w * seg..5 * w * (seg + 1)], w, theta, out);
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        self.eval_in(self.locate(t), t, out);
    }

    pub fn segment_bounds(&self, seg: usize) -> (f64, f64) {
        (self.starts[seg], self.starts[seg] + self.steps[seg])
    }
}

/// Dense solution of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub spec: SystemSpec,
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    energy: Vec<f64>,
    dissipation: Vec<f64>,
    pub events: Vec<Event>,
    dense: DenseOutput,
    pub stats: SolverStats,
    /// Whether the run started from the series bootstrap at `t = 1e-6`.
    pub bootstrapped: bool,
    /// Whether the initial state was stationary and no steps were taken.
    pub stationary: bool,
    pub sample_stride: usize,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn energies(&self) -> &[f64] {
        &self.energy
    }

    /// Cumulative `∫ a|ẋ|²` at each sample.
    pub fn dissipation(&self) -> &[f64] {
        &self.dissipation
    }

    pub fn x_at(&self, i: usize) -> &[f64] {
        &self.states[2 * self.dim * i..2 * self.dim * i + self.dim]
    }

    pub fn v_at(&self, i: usize) -> &[f64] {
        &self.states[2 * self.dim * i + self.dim..2 * self.dim * (i + 1)]
    }

    pub fn sample(&self, i: usize) -> State {
        State {
            t: self.times[i],
            x: self.x_at(i).to_vec(),
            v: self.v_at(i).to_vec(),
        }
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has samples")
    }

    pub fn dense(&self) -> &DenseOutput {
        &self.dense
    }

    /// Interpolated state at `t`.
    pub fn dense_eval(&self, t: f64) -> Result<State, IntegrateError> {
        let (lo, hi) = (self.t_start(), self.t_end());
        if !(t >= lo && t <= hi) {
            return Err(IntegrateError::OutOfRange { t, lo, hi });
        }
        if let Ok(i) = self.times.binary_search_by(|s| s.total_cmp(&t)) {
            return Ok(self.sample(i));
        }
        let mut y = vec![0.0; 2 * self.dim];
        self.dense.eval(t, &mut y);
        let v = y.split_off(self.dim);
        Ok(State { t, x: y, v })
    }

    /// Energy `½|v|² + G(x)` of an interpolated state.
    pub fn energy_of(&self, s: &State) -> f64 {
        0.5 * s.v.iter().map(|v| v * v).sum::<f64>() + self.spec.potential.energy(&s.x)
    }

    /// Uniform walk over `[t0, t1]` with spacing at most `step`, calling
    /// `f(t, y)` with `y = (x, v)`. Returns the spacing used.
    pub fn walk(&self, t0: f64, t1: f64, step: f64, mut f: impl FnMut(f64, &[f64])) -> f64 {
        let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
        let dt = (t1 - t0) / n as f64;
        let mut y = vec![0.0; 2 * self.dim];
        let mut seg = self.dense.locate(t0);
        let last = self.dense.segments() - 1;
        for i in 0..=n {
            let t = if i == n { t1 } else { t0 + dt * i as f64 };
            while seg < last && self.dense.segment_bounds(seg).1 < t {
                seg += 1;
            }
            self.dense.eval_in(seg, t, &mut y);
            f(t, &y);
        }
        dt
    }
}

/// Series start for `a = c/t`: the state at `t = h₀ = 1e-6` from
/// `x(t) = x0 − g(x0) t²/(2(1+c)) + O(t⁴)`.
pub fn bootstrap_singular_start(spec: &SystemSpec) -> Result<State, IntegrateError> {
    let c = match spec.schedule {
        DampingSchedule::PowerLaw { c, gamma, offset } if offset == 0.0 => {
            if gamma != 1.0 {
                return Err(IntegrateError::InvalidSpec(format!(
                    "singular start implemented only for exponent 1, got {gamma}"
                )));
            }
            c
        }
        _ => {
            return Err(IntegrateError::InvalidSpec(
                "bootstrap needs a power-law schedule with zero offset".into(),
            ))
        }
    };
    if spec.v0.iter().any(|v| *v != 0.0) {
        return Err(IntegrateError::InvalidSpec("singular start requires v0 = 0".into()));
    }
    let g = spec.potential.grad(&spec.x0)?;
    let h0 = BOOTSTRAP_H0;
    Ok(State {
        t: h0,
        x: spec.x0.iter().zip(&g).map(|(x, g)| x - g * h0 * h0 / (2.0 * (1.0 + c))).collect(),
        v: g.iter().map(|g| -g * h0 / (1.0 + c)).collect(),
    })
}

struct Recorder<'a> {
    spec: &'a SystemSpec,
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    energy: Vec<f64>,
    dissipation: Vec<f64>,
    stride: usize,
    counter: usize,
}

impl Recorder<'_> {
    fn record(&mut self, t: f64, y: &[f64], diss: f64, force: bool) {
        let due = self.counter % self.stride == 0;
        self.counter += 1;
        if !(due || force) {
            return;
        }
        let n = self.dim;
        self.times.push(t);
        self.states.extend_from_slice(y);
        let e = 0.5 * y[n..].iter().map(|v| v * v).sum::<f64>() + self.spec.potential.energy(&y[..n]);
        self.energy.push(e);
        self.dissipation.push(diss);
        if self.times.len() > self.spec.max_samples {
            self.thin(force);
        }
    }

    fn thin(&mut self, keep_last: bool) {
        let w = 2 * self.dim;
        let len = self.times.len();
        let mut keep: Vec<usize> = (0..len).step_by(2).collect();
        if keep_last && keep.last() != Some(&(len - 1)) {
            keep.push(len - 1);
        }
        for (dst, &src) in keep.iter().enumerate() {
            self.times[dst] = self.times[src];
            self.energy[dst] = self.energy[src];
            self.dissipation[dst] = self.dissipation[src];
            self.states.copy_within(src * w..(src + 1) * w, dst * w);
        }
        let m = keep.len();
        self.times.truncate(m);
        self.energy.truncate(m);
        self.dissipation.truncate(m);
        self.states.truncate(m * w);
        self.stride *= 2;
    }
}

struct EventTracker {
    dir: Vec<f64>,
    last_sign: i8,
    last_nonzero_t: f64,
}

impl EventTracker {
    fn project(&self, y: &[f64], n: usize) -> f64 {
        y[n..2 * n].iter().zip(&self.dir).map(|(v, d)| v * d).sum()
    }
}

/// Integrates the system described by `spec`.
pub fn integrate(spec: &SystemSpec) -> Result<Trajectory, IntegrateError> {
    spec.validate()?;
    let n = spec.dim();
    let w = 2 * n;
    let pot = &spec.potential;
    let sched = &spec.schedule;
    let mut dense = DenseOutput::new(w);
    let mut rec = Recorder {
        spec,
        dim: n,
        times: Vec::new(),
        states: Vec::new(),
        energy: Vec::new(),
        dissipation: Vec::new(),
        stride: 1,
        counter: 0,
    };
    let mut y0: Vec<f64> = spec.x0.iter().chain(&spec.v0).copied().collect();
    let g0 = pot.grad(&spec.x0)?;

    let stationary = spec.v0.iter().all(|v| *v == 0.0) && g0.iter().all(|g| *g == 0.0);
    if stationary {
        let mut coeffs = vec![0.0; 5 * w];
        coeffs[..w].copy_from_slice(&y0);
        dense.push(spec.t0, spec.t_end - spec.t0, &coeffs);
        rec.record(spec.t0, &y0, 0.0, true);
        rec.record(spec.t_end, &y0, 0.0, true);
        return Ok(finish(spec, rec, dense, Vec::new(), SolverStats::default(), false, true));
    }

    rec.record(spec.t0, &y0, 0.0, true);
    let mut t_start = spec.t0;
    let mut dissipation = 0.0;
    let bootstrapped = spec.t0 == 0.0 && sched.is_singular_at_zero();
    if bootstrapped {
        let s = bootstrap_singular_start(spec)?;
        // x = x0 + Δx θ², v = v1 θ over [0, h0]
        let mut coeffs = vec![0.0; 5 * w];
        for i in 0..n {
            let dx = s.x[i] - spec.x0[i];
            coeffs[i] = spec.x0[i];
            coeffs[w + i] = dx;
            coeffs[2 * w + i] = -dx;
            coeffs[w + n + i] = s.v[i];
        }
        dense.push(0.0, s.t, &coeffs);
        // a|v|² = (c/t)(v1 t/h0)² integrates to c|v1|²/2
        if let DampingSchedule::PowerLaw { c, .. } = sched {
            dissipation = 0.5 * c * s.v.iter().map(|v| v * v).sum::<f64>();
        }
        y0 = s.x.iter().chain(&s.v).copied().collect();
        t_start = s.t;
        rec.record(t_start, &y0, dissipation, false);
    }

    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let a = sched.rate(t);
        dy[..n].copy_from_slice(&y[n..]);
        pot.gradient_into(&y[..n], &mut dy[n..]);
        for i in 0..n {
            dy[n + i] = -a * y[n + i] - dy[n + i];
        }
    };
    let control = match spec.fixed_step {
        Some(h) => StepControl::Fixed { h },
        None => StepControl::Adaptive {
            rel_tol: spec.rel_tol,
            abs_tol: spec.abs_tol,
        },
    };
    let mut solver = Dopri5::new(rhs, t_start, &y0, spec.t_end, control, spec.max_steps);

    let mut tracker = EventTracker {
        dir: spec.event_dir.clone().unwrap_or_else(|| {
            let mut d = vec![0.0; n];
            d[0] = 1.0;
            d
        }),
        last_sign: 0,
        last_nonzero_t: spec.t0,
    };
    let s0 = tracker.project(&y0, n);
    if s0 != 0.0 {
        tracker.last_sign = s0.signum() as i8;
        tracker.last_nonzero_t = t_start;
    }
    let mut events = Vec::new();
    let mut ybuf = vec![0.0; w];

    while solver.step()? {
        let seg = solver.segment();
        dense.push(seg.t, seg.h, seg.coeffs);
        let (ts, h) = (seg.t, seg.h);
        // energy ledger: ∫ a|v|² by Gauss–Legendre on the interpolant
        let mut acc = 0.0;
        for (node, weight) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
            let t = ts + node * h;
            solver.dense(t, &mut ybuf);
            acc += weight * sched.rate(t) * ybuf[n..].iter().map(|v| v * v).sum::<f64>();
        }
        dissipation += acc * h;

        for j in 1..=EVENT_SCAN {
            let t = if j == EVENT_SCAN { solver.t() } else { ts + h * j as f64 / EVENT_SCAN as f64 };
            if j == EVENT_SCAN {
                ybuf.copy_from_slice(solver.y());
            } else {
                solver.dense(t, &mut ybuf);
            }
            let s = tracker.project(&ybuf, n);
            if s == 0.0 {
                continue;
            }
            let sign = s.signum() as i8;
            if tracker.last_sign != 0 && sign != tracker.last_sign {
                let te = refine_event(&dense, &tracker, n, tracker.last_nonzero_t, t, tracker.last_sign);
                let mut ye = vec![0.0; w];
                dense.eval(te, &mut ye);
                let ve = ye.split_off(n);
                let energy = 0.5 * ve.iter().map(|v| v * v).sum::<f64>() + pot.energy(&ye);
                events.push(Event {
                    index: events.len(),
                    t: te,
                    x: ye,
                    v: ve,
                    energy,
                    sign_after: sign,
                });
            }
            tracker.last_sign = sign;
            tracker.last_nonzero_t = t;
        }
        let done = solver.finished();
        rec.record(solver.t(), solver.y(), dissipation, done);
    }
    let stats = solver.stats();
    Ok(finish(spec, rec, dense, events, stats, bootstrapped, false))
}

fn refine_event(dense: &DenseOutput, tracker: &EventTracker, n: usize, mut a: f64, mut b: f64, sign_a: i8) -> f64 {
    let mut y = vec![0.0; 2 * n];
    while b - a > EVENT_TIME_TOL {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        dense.eval(m, &mut y);
        let s = tracker.project(&y, n);
        if s != 0.0 && (s.signum() as i8) == sign_a {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn finish(
    spec: &SystemSpec,
    rec: Recorder<'_>,
    dense: DenseOutput,
    events: Vec<Event>,
    stats: SolverStats,
    bootstrapped: bool,
    stationary: bool,
) -> Trajectory {
    Trajectory {
        spec: spec.clone(),
        dim: rec.dim,
        times: rec.times,
        states: rec.states,
        energy: rec.energy,
        dissipation: rec.dissipation,
        events,
        dense,
        stats,
        bootstrapped,
        stationary,
        sample_stride: rec.stride,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn j0_spec(t_end: f64) -> SystemSpec {
        SystemSpec::new(
            DampingSchedule::power_law(1.0, 1.0, 0.0).unwrap(),
            Potential::quadratic(1).unwrap(),
            vec![1.0],
            vec![0.0],
            t_end,
        )
    }

    #[test]
    fn free_motion() {
        let spec = SystemSpec::new(
            DampingSchedule::constant(0.0).unwrap(),
            Potential::zero(1).unwrap(),
            vec![1.0],
            vec![1.0],
            5.0,
        );
        let tr = integrate(&spec).unwrap();
        let last = tr.sample(tr.len() - 1);
        assert!((last.x[0] - 6.0).abs() < 1e-12);
        assert!((last.v[0] - 1.0).abs() < 1e-12);
        for t in [0.3, 1.7, 4.2] {
            let s = tr.dense_eval(t).unwrap();
            assert!((s.x[0] - (1.0 + t)).abs() < 1e-12);
        }
    }

    #[test]
    fn bessel_run_matches_oracle() {
        let tr = integrate(&j0_spec(20.0)).unwrap();
        assert!(tr.bootstrapped);
        let mut worst: f64 = 0.0;
        for i in 0..tr.len() {
            let t = tr.times()[i];
            worst = worst.max((tr.x_at(i)[0] - oracle::bessel_j(0.0, t).unwrap()).abs());
        }
        assert!(worst < 1e-6, "{worst}");
        // midpoints of stored samples through the interpolant
        for i in 1..tr.len() {
            let t = 0.5 * (tr.times()[i - 1] + tr.times()[i]);
            let s = tr.dense_eval(t).unwrap();
            assert!((s.x[0] - oracle::bessel_j(0.0, t).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn bootstrap_examples() {
        let spec = j0_spec(1.0);
        let s = bootstrap_singular_start(&spec).unwrap();
        let h = BOOTSTRAP_H0;
        assert_eq!(s.v[0], -h / 2.0);
        assert!((s.x[0] - (1.0 - h * h / 4.0)).abs() < 1e-24);
        let mut bad = spec.clone();
        bad.v0 = vec![1.0];
        assert!(bootstrap_singular_start(&bad).is_err());
        let mut bad = spec.clone();
        bad.schedule = DampingSchedule::power_law(1.0, 0.5, 0.0).unwrap();
        assert!(bootstrap_singular_start(&bad).is_err());
        let mut still = spec;
        still.potential = Potential::double_well();
        still.x0 = vec![0.0];
        let s = bootstrap_singular_start(&still).unwrap();
        assert_eq!((s.x[0], s.v[0]), (0.0, 0.0));
    }

    #[test]
    fn singular_requires_zero_velocity() {
        let mut spec = j0_spec(1.0);
        spec.v0 = vec![0.5];
        assert!(matches!(integrate(&spec), Err(IntegrateError::InvalidSpec(_))));
    }

    #[test]
    fn power_law_solution() {
        let spec = SystemSpec::new(
            DampingSchedule::power_law(3.0, 1.0, 1.0).unwrap(),
            Potential::signed_power(1.0).unwrap(),
            vec![1.0],
            vec![-1.0],
            100.0,
        );
        let tr = integrate(&spec).unwrap();
        for i in 0..tr.len() {
            let t = tr.times()[i];
            assert!((tr.x_at(i)[0] - 1.0 / (1.0 + t)).abs() < 1e-6);
        }
    }

    #[test]
    fn stationary_start_is_constant() {
        let spec = SystemSpec::new(
            DampingSchedule::power_law(1.0, 1.0, 1.0).unwrap(),
            Potential::double_well(),
            vec![0.0],
            vec![0.0],
            100.0,
        );
        let tr = integrate(&spec).unwrap();
        assert!(tr.stationary);
        assert!(tr.events.is_empty());
        assert_eq!(tr.dense_eval(37.0).unwrap().x, vec![0.0]);
    }

    #[test]
    fn energy_identity_and_monotonicity() {
        let spec = SystemSpec::new(
            DampingSchedule::power_law(1.0, 1.0, 1.0).unwrap(),
            Potential::double_well(),
            vec![1.8],
            vec![0.0],
            200.0,
        );
        let tr = integrate(&spec).unwrap();
        let e = tr.energies();
        let e0 = e[0];
        let budget = 1e3 * spec.rel_tol * (1.0 + e0.abs());
        for i in 1..e.len() {
            assert!(e[i] <= e[i - 1] + budget);
        }
        for i in 0..e.len() {
            let residual = e0 - tr.dissipation()[i] - e[i];
            assert!(residual.abs() <= 1e-6 * (1.0 + e0.abs()), "{residual}");
        }
    }

    #[test]
    fn events_are_alternating_and_increasing() {
        let tr = integrate(&j0_spec(100.0)).unwrap();
        let ev = &tr.events;
        assert!(ev.len() > 20);
        for pair in ev.windows(2) {
            assert!(pair[1].t > pair[0].t);
            assert_eq!(pair[0].sign_after, -pair[1].sign_after);
        }
        for e in ev {
            assert!(e.v[0].abs() < 1e-8);
        }
        for pair in ev.windows(2).filter(|p| p[0].t > 50.0) {
            let gap = pair[1].t - pair[0].t;
            assert!((gap / std::f64::consts::PI - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn thinning_keeps_bounds() {
        let mut spec = j0_spec(200.0);
        spec.max_samples = 50;
        let tr = integrate(&spec).unwrap();
        assert!(tr.len() <= 51);
        assert_eq!(tr.t_start(), 0.0);
        assert_eq!(tr.t_end(), 200.0);
        assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
        assert!(tr.sample_stride > 1);
    }

    #[test]
    fn out_of_range_dense_eval() {
        let tr = integrate(&j0_spec(5.0)).unwrap();
        assert!(matches!(tr.dense_eval(6.0), Err(IntegrateError::OutOfRange { .. })));
        assert_eq!(tr.dense_eval(tr.times()[3]).unwrap(), tr.sample(3));
    }

    #[test]
    fn dimension_errors() {
        let spec = SystemSpec::new(
            DampingSchedule::constant(1.0).unwrap(),
            Potential::quadratic(2).unwrap(),
            vec![1.0],
            vec![0.0],
            1.0,
        );
        assert!(matches!(integrate(&spec), Err(IntegrateError::InvalidSpec(_))));
    }
}
