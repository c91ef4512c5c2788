//! Dormand–Prince 5(4) with PI step-size control and the quartic dense
//! output of Hairer, Nørsett and Wanner.

use thiserror::Error;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC1: f64 = 0.2;
const FAC2: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    Adaptive { rel_tol: f64, abs_tol: f64 },
    /// Constant step `h`; the final step is shortened to land on `t_end`.
    Fixed { h: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DopriError {
    #[error("maximum step count {steps} exceeded at t = {t}")]
    MaxStepsExceeded { t: f64, steps: usize },
    #[error("step size {h} underflowed at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Dense-output coefficients of one accepted step over `[t, t + h]`.
pub struct Segment<'a> {
    pub t: f64,
    pub h: f64,
    pub coeffs: &'a [f64],
}

/// Evaluates the quartic interpolant `r1 + θ(r2 + (1−θ)(r3 + θ(r4 + (1−θ)r5)))`.
#[inline]
pub fn eval_dense(coeffs: &[f64], n: usize, theta: f64, out: &mut [f64]) {
    let theta1 = 1.0 - theta;
    for i in 0..n {
        out[i] = coeffs[i]
            + theta
                * (coeffs[n + i]
                    + theta1 * (coeffs[2 * n + i] + theta * (coeffs[3 * n + i] + theta1 * coeffs[4 * n + i])));
    }
}

pub struct Dopri5<F> {
    f: F,
    n: usize,
    t: f64,
    t_end: f64,
    y: Vec<f64>,
    y1: Vec<f64>,
    ytmp: Vec<f64>,
    k: [Vec<f64>; 7],
    rcont: Vec<f64>,
    t_old: f64,
    h_old: f64,
    h: f64,
    facold: f64,
    last_rejected: bool,
    control: StepControl,
    min_step: f64,
    max_steps: usize,
    stats: SolverStats,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Dopri5<F> {
    pub fn new(mut f: F, t0: f64, y0: &[f64], t_end: f64, control: StepControl, max_steps: usize) -> Self {
        let n = y0.len();
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        f(t0, y0, &mut k[0]);
        let mut s = Self {
            f,
            n,
            t: t0,
            t_end,
            y: y0.to_vec(),
            y1: vec![0.0; n],
            ytmp: vec![0.0; n],
            k,
            rcont: vec![0.0; 5 * n],
            t_old: t0,
            h_old: 0.0,
            h: 0.0,
            facold: 1e-4,
            last_rejected: false,
            control,
            min_step: 1e-14 * t_end.abs().max(1.0),
            max_steps,
            stats: SolverStats {
                rhs_evals: 1,
                ..Default::default()
            },
        };
        s.h = match control {
            StepControl::Fixed { h } => h,
            // a guess below the floor is only a heuristic; let the controller decide
            StepControl::Adaptive { rel_tol, abs_tol } => s.initial_step(rel_tol, abs_tol).max(s.min_step),
        };
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn finished(&self) -> bool {
        self.t >= self.t_end
    }

    /// Dense output of the last accepted step.
    pub fn segment(&self) -> Segment<'_> {
        Segment {
            t: self.t_old,
            h: self.h_old,
            coeffs: &self.rcont,
        }
    }

    pub fn dense(&self, t: f64, out: &mut [f64]) {
        let theta = if self.h_old == 0.0 { 0.0 } else { (t - self.t_old) / self.h_old };
        eval_dense(&self.rcont, self.n, theta, out);
    }

    fn initial_step(&mut self, rtol: f64, atol: f64) -> f64 {
        let n = self.n;
        let hmax = (self.t_end - self.t).abs();
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..n {
            let sk = atol + rtol * self.y[i].abs();
            dnf += (self.k[0][i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(hmax);
        for i in 0..n {
            self.ytmp[i] = self.y[i] + h * self.k[0][i];
        }
        (self.f)(self.t + h, &self.ytmp, &mut self.k[1]);
        self.stats.rhs_evals += 1;
        let mut der2: f64 = 0.0;
        for i in 0..n {
            let sk = atol + rtol * self.y[i].abs();
            der2 += ((self.k[1][i] - self.k[0][i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h.abs() * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(hmax)
    }

    /// Advances by one accepted step. Returns `Ok(false)` once `t_end` has
    /// been reached and no step was taken.
    pub fn step(&mut self) -> Result<bool, DopriError> {
        if self.finished() {
            return Ok(false);
        }
        let n = self.n;
        loop {
            if self.stats.accepted + self.stats.rejected >= self.max_steps {
                return Err(DopriError::MaxStepsExceeded {
                    t: self.t,
                    steps: self.max_steps,
                });
            }
            let mut h = self.h;
            let mut last = false;
            if self.t + 1.01 * h >= self.t_end {
                h = self.t_end - self.t;
                last = true;
            }
            if matches!(self.control, StepControl::Adaptive { .. }) && h.abs() < self.min_step && !last {
                return Err(DopriError::StepUnderflow { t: self.t, h });
            }
            self.stages(h);
            for v in &self.y1 {
                if !v.is_finite() {
                    return Err(DopriError::NonFiniteState { t: self.t + h });
                }
            }
            let (accept, h_next) = match self.control {
                StepControl::Fixed { h: hf } => (true, hf),
                StepControl::Adaptive { rel_tol, abs_tol } => self.control_step(h, rel_tol, abs_tol),
            };
            if !accept {
                self.stats.rejected += 1;
                self.last_rejected = true;
                self.h = h_next;
                continue;
            }
            self.stats.accepted += 1;
            // dense coefficients use the stage values before the swap
            for i in 0..n {
                let ydiff = self.y1[i] - self.y[i];
                let bspl = h * self.k[0][i] - ydiff;
                self.rcont[i] = self.y[i];
                self.rcont[n + i] = ydiff;
                self.rcont[2 * n + i] = bspl;
                self.rcont[3 * n + i] = ydiff - h * self.k[6][i] - bspl;
                self.rcont[4 * n + i] = h
                    * (D1 * self.k[0][i]
                        + D3 * self.k[2][i]
                        + D4 * self.k[3][i]
                        + D5 * self.k[4][i]
                        + D6 * self.k[5][i]
                        + D7 * self.k[6][i]);
            }
            self.t_old = self.t;
            self.h_old = h;
            self.t = if last { self.t_end } else { self.t + h };
            std::mem::swap(&mut self.y, &mut self.y1);
            self.k.swap(0, 6);
            if self.last_rejected {
                self.h = h_next.min(h);
            } else {
                self.h = h_next;
            }
            self.last_rejected = false;
            return Ok(true);
        }
    }

    fn stages(&mut self, h: f64) {
        let n = self.n;
        let t = self.t;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let y = &self.y;
        let ytmp = &mut self.ytmp;
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        (self.f)(t + C2 * h, ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        (self.f)(t + C3 * h, ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        (self.f)(t + C4 * h, ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        (self.f)(t + C5 * h, ytmp, k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        (self.f)(t + h, ytmp, k6);
        for i in 0..n {
            self.y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        (self.f)(t + h, &self.y1, k7);
        self.stats.rhs_evals += 6;
    }

    fn control_step(&mut self, h: f64, rtol: f64, atol: f64) -> (bool, f64) {
        let n = self.n;
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = atol + rtol * self.y[i].abs().max(self.y1[i].abs());
            err += (e / sk).powi(2);
        }
        let err = (err / n as f64).sqrt();
        let expo1 = 0.2 - BETA * 0.75;
        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            let fac = fac11 / self.facold.powf(BETA);
            let fac = (1.0 / FAC2).max((1.0 / FAC1).min(fac / SAFE));
            self.facold = err.max(1e-4);
            (true, h / fac)
        } else {
            (false, h / (1.0 / FAC1).min(fac11 / SAFE))
        }
    }
}
