//! Averaged stochastic-approximation recursion
//!
//! ```text
//! h[n+1] = h[n] - e[n] h[n] / tau[n] + e[n] g(X[n], w[n+1]) / tau[n]
//! tau[n+1] = tau[n] + e[n+1]
//! X[n+1] = X[n] - e[n+1] h[n+1]
//! ```
//!
//! started from `tau[0] = e[0]`, `h[0] = 0`, and its limiting ODE
//! `X'' = -(X' + g(X)) / (t + beta)`.

use serde::Serialize;
use thiserror::Error;

use crate::integrate::dopri::Dopri5;
use crate::integrate::{self, IntegrateError, StepControl};
use crate::potential::{Potential, PotentialError};
use crate::rng::NoiseStream;

/// Drift identity tolerance, relative to the running scale `Σ e|g| / tau`.
pub const DRIFT_IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SgdError {
    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },
    #[error("singular clock: t + beta = {0} must be positive")]
    SingularClock(f64),
    #[error("step count must be at least 1")]
    NoSteps,
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { eps: f64 },
    /// `eps0 (n+1)^(-rho)` with `rho` in `(1/2, 1]`.
    PowerDecay { eps0: f64, rho: f64 },
}

/// Analytic step-size flags: `Σ e = ∞` and `Σ e^(1+α) < ∞` for some `α > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepFlags {
    pub divergent_sum: bool,
    pub summable_power: bool,
}

impl StepSchedule {
    pub fn constant(eps: f64) -> Result<Self, SgdError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(SgdError::InvalidSchedule(format!("eps must be positive, got {eps}")));
        }
        Ok(Self::Constant { eps })
    }

    pub fn power_decay(eps0: f64, rho: f64) -> Result<Self, SgdError> {
        if !(eps0.is_finite() && eps0 > 0.0) {
            return Err(SgdError::InvalidSchedule(format!("eps0 must be positive, got {eps0}")));
        }
        if !(rho > 0.5 && rho <= 1.0) {
            return Err(SgdError::InvalidSchedule(format!("rho must lie in (0.5, 1], got {rho}")));
        }
        Ok(Self::PowerDecay { eps0, rho })
    }

    pub fn eps(&self, n: usize) -> f64 {
        match *self {
            Self::Constant { eps } => eps,
            Self::PowerDecay { eps0, rho } => eps0 * ((n + 1) as f64).powf(-rho),
        }
    }

    pub fn eps0(&self) -> f64 {
        self.eps(0)
    }

    pub fn flags(&self) -> StepFlags {
        match *self {
            Self::Constant { .. } => StepFlags {
                divergent_sum: true,
                summable_power: false,
            },
            Self::PowerDecay { rho, .. } => StepFlags {
                divergent_sum: rho <= 1.0,
                summable_power: true,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    GaussianAdditive { sigma: f64 },
}

/// Zero-mean additive noise on the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Result<Self, SgdError> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(SgdError::InvalidNoise(format!("sigma must be nonnegative, got {sigma}")));
        }
        Ok(Self {
            kind: NoiseKind::GaussianAdditive { sigma },
            seed,
        })
    }

    pub fn sigma(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::GaussianAdditive { sigma } => sigma,
        }
    }

    /// Fills `out` with one noisy gradient sample at `x`.
    fn sample(&self, pot: &Potential, x: &[f64], stream: &mut Option<NoiseStream>, out: &mut [f64]) {
        pot.gradient_into(x, out);
        if let (NoiseKind::GaussianAdditive { sigma }, Some(s)) = (self.kind, stream.as_mut()) {
            for o in out.iter_mut() {
                *o += sigma * s.gaussian();
            }
        }
    }

    fn stream(&self) -> Option<NoiseStream> {
        match self.kind {
            NoiseKind::None => None,
            NoiseKind::GaussianAdditive { .. } => Some(NoiseStream::new(self.seed)),
        }
    }
}

/// Neumaier running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Full recursion output for `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub dim: usize,
    pub steps: StepSchedule,
    pub noise: NoiseModel,
    pub tau: Vec<f64>,
    h: Vec<f64>,
    x: Vec<f64>,
    /// Worst relative gap between `h[n+1]` and the weighted mean `Σ e g / tau[n]`.
    pub drift_identity_error: f64,
}

impl DiscretePath {
    /// Number of recorded states, `N + 1`.
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn h_at(&self, n: usize) -> &[f64] {
        &self.h[n * self.dim..(n + 1) * self.dim]
    }

    pub fn x_at(&self, n: usize) -> &[f64] {
        &self.x[n * self.dim..(n + 1) * self.dim]
    }

    /// `G(X) + ½ tau |h|²` along the path.
    pub fn lyapunov(&self, pot: &Potential) -> Vec<f64> {
        (0..self.len())
            .map(|n| {
                let h2: f64 = self.h_at(n).iter().map(|h| h * h).sum();
                pot.energy(self.x_at(n)) + 0.5 * self.tau[n] * h2
            })
            .collect()
    }
}

/// Runs `n_steps` iterations of the recursion from `x0`.
pub fn run_recursion(
    pot: &Potential,
    steps: StepSchedule,
    noise: NoiseModel,
    x0: &[f64],
    n_steps: usize,
) -> Result<DiscretePath, SgdError> {
    if n_steps == 0 {
        return Err(SgdError::NoSteps);
    }
    let dim = pot.dim();
    if x0.len() != dim {
        return Err(PotentialError::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        }
        .into());
    }
    let len = n_steps + 1;
    let mut tau = Vec::with_capacity(len);
    let mut h = Vec::with_capacity(len * dim);
    let mut x = Vec::with_capacity(len * dim);
    let mut clock = Compensated::default();
    clock.add(steps.eps(0));
    tau.push(clock.value());
    h.extend(std::iter::repeat_n(0.0, dim));
    x.extend_from_slice(x0);

    let mut stream = noise.stream();
    let mut g = vec![0.0; dim];
    let mut weighted = vec![Compensated::default(); dim];
    let mut scale = Compensated::default();
    let mut worst: f64 = 0.0;
    for n in 0..n_steps {
        let eps_n = steps.eps(n);
        let tau_n = tau[n];
        noise.sample(pot, &x[n * dim..(n + 1) * dim], &mut stream, &mut g);
        let eps_next = steps.eps(n + 1);
        clock.add(eps_next);
        tau.push(clock.value());
        let mut gnorm = 0.0;
        for i in 0..dim {
            let hn = h[n * dim + i];
            let hn1 = hn - eps_n * hn / tau_n + eps_n * g[i] / tau_n;
            let xn1 = x[n * dim + i] - eps_next * hn1;
            if !(hn1.is_finite() && xn1.is_finite()) {
                return Err(SgdError::NonFiniteState { step: n + 1 });
            }
            h.push(hn1);
            x.push(xn1);
            weighted[i].add(eps_n * g[i]);
            gnorm += g[i].abs();
        }
        scale.add(eps_n * gnorm);
        let s = scale.value() / tau_n;
        if s > 0.0 {
            for (i, w) in weighted.iter().enumerate() {
                let err = (h[(n + 1) * dim + i] - w.value() / tau_n).abs() / s;
                worst = worst.max(err);
            }
        }
    }
    Ok(DiscretePath {
        dim,
        steps,
        noise,
        tau,
        h,
        x,
        drift_identity_error: worst,
    })
}

/// Acceleration of the limiting ODE, `-(v + g(x)) / (t + beta)`.
pub fn limiting_ode_rhs(t: f64, x: &[f64], v: &[f64], beta: f64, pot: &Potential) -> Result<Vec<f64>, SgdError> {
    let clock = t + beta;
    if !(clock > 0.0) {
        return Err(SgdError::SingularClock(clock));
    }
    let g = pot.grad(x)?;
    if v.len() != g.len() {
        return Err(PotentialError::DimensionMismatch {
            expected: g.len(),
            got: v.len(),
        }
        .into());
    }
    Ok(v.iter().zip(&g).map(|(v, g)| -(v + g) / clock).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeComparison {
    pub horizon: f64,
    /// Largest `|X[n] - X_ode(tau[n])|` over `tau[n] <= horizon`.
    pub sup_deviation: f64,
    pub rms_deviation: f64,
    pub compared: usize,
}

/// Compares the path with the ODE system `X' = -h`, `h' = (g(X) - h) / (t + beta)`.
/// Step `n` maps to ODE time `tau[n] - beta` and the ODE starts at `(X[0], h[0])`.
pub fn compare_to_ode(path: &DiscretePath, pot: &Potential, beta: f64, horizon: f64) -> Result<OdeComparison, SgdError> {
    let s0 = path.tau[0] - beta;
    if !(path.tau[0] > 0.0) || !(beta > 0.0) {
        return Err(SgdError::SingularClock(path.tau[0]));
    }
    let last = path.tau.partition_point(|&t| t <= horizon);
    if last < 2 {
        return Err(SgdError::InvalidSchedule(format!(
            "horizon {horizon} does not cover any step beyond the start"
        )));
    }
    let s_end = path.tau[last - 1] - beta;
    let dim = path.dim;
    let mut g = vec![0.0; dim];
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (x, h) = y.split_at(dim);
        pot.gradient_into(x, &mut g);
        let clock = t + beta;
        for i in 0..dim {
            dy[i] = -h[i];
            dy[dim + i] = (g[i] - h[i]) / clock;
        }
    };
    let mut y0 = path.x_at(0).to_vec();
    y0.extend_from_slice(path.h_at(0));
    let control = StepControl::Adaptive {
        rel_tol: 1e-11,
        abs_tol: 1e-13,
    };
    let mut ode = Dopri5::new(rhs, s0, &y0, s_end, control, integrate::DEFAULT_MAX_STEPS);
    let mut y = vec![0.0; 2 * dim];
    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    let mut n = 0;
    let mut record = |n: usize, xode: &[f64]| {
        let d2: f64 = path.x_at(n).iter().zip(xode).map(|(a, b)| (a - b).powi(2)).sum();
        sup = sup.max(d2.sqrt());
        sq += d2;
    };
    record(0, &y0[..dim]);
    n += 1;
    while n < last {
        if !ode.step().map_err(IntegrateError::from)? {
            break;
        }
        while n < last && (path.tau[n] - beta <= ode.t() || n + 1 == last && ode.finished()) {
            ode.dense((path.tau[n] - beta).min(ode.t()), &mut y);
            record(n, &y[..dim]);
            n += 1;
        }
    }
    Ok(OdeComparison {
        horizon,
        sup_deviation: sup,
        rms_deviation: (sq / last as f64).sqrt(),
        compared: last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalMean {
    pub error: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Averages `samples` noisy gradients at the frozen point `x` and compares
/// the mean with `g(x)`. The bound is `3 sigma / sqrt(samples)`.
pub fn conditional_mean_check(
    pot: &Potential,
    noise: NoiseModel,
    x: &[f64],
    samples: usize,
) -> Result<ConditionalMean, SgdError> {
    let exact = pot.grad(x)?;
    let mut stream = noise.stream();
    let mut g = vec![0.0; x.len()];
    let mut acc = vec![0.0; x.len()];
    for _ in 0..samples {
        noise.sample(pot, x, &mut stream, &mut g);
        for (a, v) in acc.iter_mut().zip(&g) {
            *a += v;
        }
    }
    let error = acc
        .iter()
        .zip(&exact)
        .map(|(a, e)| (a / samples as f64 - e).abs())
        .fold(0.0, f64::max);
    let bound = 3.0 * noise.sigma() / (samples as f64).sqrt();
    Ok(ConditionalMean {
        error,
        bound,
        pass: error <= bound.max(f64::EPSILON),
    })
}

/// Largest increase of `G(X) + ½ tau |h|²` between consecutive steps after
/// `burn_in`, relative to the value at `burn_in`. Nonpositive means the
/// sequence is nonincreasing.
pub fn lyapunov_max_increase(path: &DiscretePath, pot: &Potential, burn_in: usize) -> f64 {
    let w = path.lyapunov(pot);
    if burn_in + 1 >= w.len() {
        return 0.0;
    }
    let scale = w[burn_in].abs().max(f64::MIN_POSITIVE);
    w[burn_in..]
        .windows(2)
        .map(|p| (p[1] - p[0]) / scale)
        .fold(f64::NEG_INFINITY, f64::max)
}
