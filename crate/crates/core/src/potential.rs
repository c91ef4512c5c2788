//! Potentials `G: ℝⁿ → ℝ` with gradient `g = ∇G`, the built-in examples,
//! critical-point enumeration and convexity-type certificates.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::halton;

/// Cells used by the 1D sign scan of `g`.
pub const SCAN_CELLS: usize = 10_000;
/// Gradient norm accepted at a critical point handed in by a caller.
pub const CRITICAL_GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("dimension mismatch: potential has dimension {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid potential parameter: {0}")]
    InvalidParameter(String),
    #[error("operation unsupported for this potential: {0}")]
    Unsupported(String),
    #[error("critical set is not isolated: every point of [{lo}, {hi}] is critical")]
    NonIsolatedCriticalSet { lo: f64, hi: f64 },
    #[error("anchor point is not critical: |g(z)| = {0}")]
    NotCritical(f64),
    #[error("potential is not flagged coercive")]
    NotCoercive,
    #[error("no level crossing found inside the search box")]
    NoCrossing,
}

type EnergyFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Built-in potentials plus a callback-backed escape hatch.
#[derive(Clone)]
pub enum PotentialKind {
    /// `½|x|²`
    Quadratic,
    /// `|x|^p / p`, `p > 1`
    PPower { p: f64 },
    /// 1D, gradient `sign(x)|x|^q` with `q = 1 + 2/β`
    SignedPower { beta: f64 },
    /// 1D, `(x² − 1)²/4`
    DoubleWell,
    /// `((|x| − 1)₊)²`
    FlatBottom,
    /// 1D, `Σ coeffs[k] x^k`
    Polynomial1D { coeffs: Vec<f64> },
    Zero,
    Custom {
        name: String,
        energy: EnergyFn,
        gradient: GradFn,
        coercive: bool,
        min_value: Option<f64>,
    },
}

#[derive(Clone)]
pub struct Potential {
    dim: usize,
    kind: PotentialKind,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("dim", &self.dim)
            .field("kind", &self.kind_name())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    LocalMin,
    LocalMax,
    Saddle,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    pub kind: CriticalKind,
    /// `|G''(x*)|/2` in 1D, the largest admissible strong convexity (or
    /// concavity) modulus at the point.
    pub modulus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateValidity {
    Analytic,
    Sampled { violations: usize, probes: usize },
}

/// Outcome of checking `G(x) − G(z) ≤ θ⟨g(x), x − z⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCertificate {
    pub theta: f64,
    pub anchor: Vec<f64>,
    pub validity: CertificateValidity,
    /// Most negative `θ⟨g(x),x−z⟩ − (G(x) − G(z))` seen.
    pub worst_slack: f64,
}

impl ConvexityCertificate {
    pub fn violations(&self) -> usize {
        match self.validity {
            CertificateValidity::Analytic => 0,
            CertificateValidity::Sampled { violations, .. } => violations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    Convex,
    /// Checks the strong convexity inequality for `−G`.
    Concave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCheck {
    pub pass: bool,
    pub worst_slack: f64,
}

/// Flat description used in reports and config round trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialEcho {
    pub kind: String,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Potential {
    pub fn quadratic(dim: usize) -> Result<Self, PotentialError> {
        Self::with_dim(dim, PotentialKind::Quadratic)
    }

    pub fn p_power(dim: usize, p: f64) -> Result<Self, PotentialError> {
        if !(p.is_finite() && p > 1.0) {
            return Err(PotentialError::InvalidParameter(format!(
                "p-power exponent must exceed 1, got {p}"
            )));
        }
        Self::with_dim(dim, PotentialKind::PPower { p })
    }

    pub fn signed_power(beta: f64) -> Result<Self, PotentialError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(PotentialError::InvalidParameter(format!(
                "signed-power beta must be positive, got {beta}"
            )));
        }
        Ok(Self {
            dim: 1,
            kind: PotentialKind::SignedPower { beta },
        })
    }

    pub fn double_well() -> Self {
        Self {
            dim: 1,
            kind: PotentialKind::DoubleWell,
        }
    }

    pub fn flat_bottom(dim: usize) -> Result<Self, PotentialError> {
        Self::with_dim(dim, PotentialKind::FlatBottom)
    }

    /// `G(x) = Σ coeffs[k] x^k` (ascending powers).
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self, PotentialError> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(PotentialError::InvalidParameter(
                "polynomial needs at least one finite coefficient".into(),
            ));
        }
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        Ok(Self {
            dim: 1,
            kind: PotentialKind::Polynomial1D { coeffs },
        })
    }

    pub fn zero(dim: usize) -> Result<Self, PotentialError> {
        Self::with_dim(dim, PotentialKind::Zero)
    }

    pub fn custom<E, G>(
        name: impl Into<String>,
        dim: usize,
        energy: E,
        gradient: G,
        coercive: bool,
        min_value: Option<f64>,
    ) -> Result<Self, PotentialError>
    where
        E: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::with_dim(
            dim,
            PotentialKind::Custom {
                name: name.into(),
                energy: Arc::new(energy),
                gradient: Arc::new(gradient),
                coercive,
                min_value,
            },
        )
    }

    fn with_dim(dim: usize, kind: PotentialKind) -> Result<Self, PotentialError> {
        if dim == 0 {
            return Err(PotentialError::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(Self { dim, kind })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn kind_name(&self) -> String {
        match &self.kind {
            PotentialKind::Quadratic => "quadratic".into(),
            PotentialKind::PPower { .. } => "ppower".into(),
            PotentialKind::SignedPower { .. } => "signed_power".into(),
            PotentialKind::DoubleWell => "double_well".into(),
            PotentialKind::FlatBottom => "flat_bottom".into(),
            PotentialKind::Polynomial1D { .. } => "polynomial".into(),
            PotentialKind::Zero => "zero".into(),
            PotentialKind::Custom { name, .. } => format!("custom:{name}"),
        }
    }

    pub fn echo(&self) -> PotentialEcho {
        let mut echo = PotentialEcho {
            kind: self.kind_name(),
            dim: self.dim,
            p: None,
            beta: None,
            coeffs: None,
        };
        match &self.kind {
            PotentialKind::PPower { p } => echo.p = Some(*p),
            PotentialKind::SignedPower { beta } => echo.beta = Some(*beta),
            PotentialKind::Polynomial1D { coeffs } => echo.coeffs = Some(coeffs.clone()),
            _ => {}
        }
        echo
    }

    pub fn is_coercive(&self) -> bool {
        match &self.kind {
            PotentialKind::Quadratic
            | PotentialKind::PPower { .. }
            | PotentialKind::SignedPower { .. }
            | PotentialKind::DoubleWell
            | PotentialKind::FlatBottom => true,
            PotentialKind::Polynomial1D { coeffs } => {
                let deg = coeffs.len() - 1;
                deg >= 2 && deg % 2 == 0 && coeffs[deg] > 0.0
            }
            PotentialKind::Zero => false,
            PotentialKind::Custom { coercive, .. } => *coercive,
        }
    }

    /// `min G` when known exactly (built-ins) or computable (coercive polynomials).
    pub fn min_value(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::Polynomial1D { .. } => {
                if !self.is_coercive() {
                    return None;
                }
                let bound = self.cauchy_bound();
                let pts = self.critical_points(&[(-bound, bound)]).ok()?;
                pts.iter().map(|p| p.value).reduce(f64::min)
            }
            PotentialKind::Custom { min_value, .. } => *min_value,
            _ => Some(0.0),
        }
    }

    /// Radius enclosing every real root of `G'` for polynomials.
    fn cauchy_bound(&self) -> f64 {
        match &self.kind {
            PotentialKind::Polynomial1D { coeffs } => {
                let d: Vec<f64> = derivative_coeffs(coeffs);
                let lead = *d.last().unwrap_or(&1.0);
                let m = d[..d.len().saturating_sub(1)]
                    .iter()
                    .map(|c| (c / lead).abs())
                    .fold(0.0, f64::max);
                1.0 + m + 1e-6
            }
            _ => 10.0,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), PotentialError> {
        if x.len() != self.dim {
            return Err(PotentialError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `G(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, PotentialError> {
        self.check_dim(x)?;
        Ok(self.energy(x))
    }

    /// `∇G(x)`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>, PotentialError> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.gradient_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked energy; `x.len()` must equal `dim`.
    #[inline]
    pub fn energy(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Quadratic => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            PotentialKind::PPower { p } => norm(x).powf(*p) / p,
            PotentialKind::SignedPower { beta } => {
                let q = 1.0 + 2.0 / beta;
                x[0].abs().powf(q + 1.0) / (q + 1.0)
            }
            PotentialKind::DoubleWell => {
                let w = x[0] * x[0] - 1.0;
                0.25 * w * w
            }
            PotentialKind::FlatBottom => {
                let e = (norm(x) - 1.0).max(0.0);
                e * e
            }
            PotentialKind::Polynomial1D { coeffs } => horner(coeffs, x[0]),
            PotentialKind::Zero => 0.0,
            PotentialKind::Custom { energy, .. } => energy(x),
        }
    }

    /// Unchecked gradient; `x.len()` and `out.len()` must equal `dim`.
    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            PotentialKind::Quadratic => out.copy_from_slice(x),
            PotentialKind::PPower { p } => {
                let r = norm(x);
                let scale = if r == 0.0 { 0.0 } else { r.powf(p - 2.0) };
                for (o, v) in out.iter_mut().zip(x) {
                    *o = scale * v;
                }
            }
            PotentialKind::SignedPower { beta } => {
                let q = 1.0 + 2.0 / beta;
                out[0] = x[0].signum() * x[0].abs().powf(q);
                if x[0] == 0.0 {
                    out[0] = 0.0;
                }
            }
            PotentialKind::DoubleWell => out[0] = x[0] * (x[0] * x[0] - 1.0),
            PotentialKind::FlatBottom => {
                let r = norm(x);
                let scale = if r > 1.0 { 2.0 * (r - 1.0) / r } else { 0.0 };
                for (o, v) in out.iter_mut().zip(x) {
                    *o = scale * v;
                }
            }
            PotentialKind::Polynomial1D { coeffs } => {
                let mut acc = 0.0;
                for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * x[0] + k as f64 * c;
                }
                out[0] = acc;
            }
            PotentialKind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            PotentialKind::Custom { gradient, .. } => gradient(x, out),
        }
    }

    fn grad1(&self, x: f64) -> f64 {
        let mut out = [0.0];
        self.gradient_into(&[x], &mut out);
        out[0]
    }

    /// Known argmin interval for potentials whose minima are not isolated (1D).
    pub fn argmin_interval(&self) -> Option<(f64, f64)> {
        match (&self.kind, self.dim) {
            (PotentialKind::FlatBottom, 1) => Some((-1.0, 1.0)),
            _ => None,
        }
    }

    /// All critical points in the search box, sorted by location.
    ///
    /// 1D potentials use a sign scan of `g` over [`SCAN_CELLS`] cells with
    /// bisection to machine precision; points are classified by the sign of
    /// `g` on flanking probes. Higher-dimensional built-ins use their closed
    /// form critical set.
    pub fn critical_points(&self, search_box: &[(f64, f64)]) -> Result<Vec<CriticalPoint>, PotentialError> {
        if search_box.len() != self.dim {
            return Err(PotentialError::DimensionMismatch {
                expected: self.dim,
                got: search_box.len(),
            });
        }
        if search_box.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(PotentialError::InvalidParameter("search box must be finite and nonempty".into()));
        }
        match &self.kind {
            PotentialKind::Zero => {
                return Err(PotentialError::NonIsolatedCriticalSet {
                    lo: f64::NEG_INFINITY,
                    hi: f64::INFINITY,
                })
            }
            PotentialKind::FlatBottom => return Err(PotentialError::NonIsolatedCriticalSet { lo: -1.0, hi: 1.0 }),
            _ => {}
        }
        if self.dim > 1 {
            return match &self.kind {
                PotentialKind::Quadratic | PotentialKind::PPower { .. } => {
                    let inside = search_box.iter().all(|&(lo, hi)| lo <= 0.0 && 0.0 <= hi);
                    let modulus = if matches!(self.kind, PotentialKind::Quadratic) { 0.5 } else { 0.0 };
                    Ok(if inside {
                        vec![CriticalPoint {
                            location: vec![0.0; self.dim],
                            value: 0.0,
                            kind: CriticalKind::LocalMin,
                            modulus,
                        }]
                    } else {
                        Vec::new()
                    })
                }
                _ => Err(PotentialError::Unsupported(format!(
                    "critical point enumeration for {} in dimension {}",
                    self.kind_name(),
                    self.dim
                ))),
            };
        }
        Ok(self.scan_roots(search_box[0].0, search_box[0].1))
    }

    fn scan_roots(&self, lo: f64, hi: f64) -> Vec<CriticalPoint> {
        let cell = (hi - lo) / SCAN_CELLS as f64;
        let node = |i: usize| if i == SCAN_CELLS { hi } else { lo + (hi - lo) * i as f64 / SCAN_CELLS as f64 };
        let values: Vec<f64> = (0..=SCAN_CELLS).map(|i| self.grad1(node(i))).collect();
        let mut roots = Vec::new();
        for i in 0..=SCAN_CELLS {
            if values[i] == 0.0 {
                roots.push(node(i));
            } else if i < SCAN_CELLS && values[i + 1] != 0.0 && values[i].signum() != values[i + 1].signum() {
                roots.push(self.bisect_gradient(node(i), node(i + 1), values[i]));
            }
        }
        roots
            .into_iter()
            .map(|x| {
                let probe = 0.5 * cell;
                let left = self.grad1(x - probe);
                let right = self.grad1(x + probe);
                let kind = if left < 0.0 && right > 0.0 {
                    CriticalKind::LocalMin
                } else if left > 0.0 && right < 0.0 {
                    CriticalKind::LocalMax
                } else {
                    CriticalKind::Degenerate
                };
                let h = 1e-5 * (1.0 + x.abs());
                let curvature = (self.grad1(x + h) - self.grad1(x - h)) / (2.0 * h);
                CriticalPoint {
                    location: vec![x],
                    value: self.energy(&[x]),
                    kind,
                    modulus: 0.5 * curvature.abs(),
                }
            })
            .collect()
    }

    fn bisect_gradient(&self, mut a: f64, mut b: f64, ga: f64) -> f64 {
        let sa = ga.signum();
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let gm = self.grad1(m);
            if gm == 0.0 {
                return m;
            }
            if gm.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        if self.grad1(a).abs() <= self.grad1(b).abs() {
            a
        } else {
            b
        }
    }

    /// Samples `G(x) − G(z) ≤ θ⟨g(x), x − z⟩` at `probes` Halton points of the
    /// ball of the given radius around `z`.
    pub fn check_base_inequality(
        &self,
        theta: f64,
        z: &[f64],
        probes: usize,
        radius: f64,
        seed: u64,
    ) -> Result<ConvexityCertificate, PotentialError> {
        self.check_dim(z)?;
        if !(theta >= 0.0) || probes == 0 || !(radius > 0.0) {
            return Err(PotentialError::InvalidParameter(
                "theta must be >= 0, probes >= 1 and radius > 0".into(),
            ));
        }
        let gz = norm(&self.grad(z)?);
        if gz > CRITICAL_GRAD_TOL {
            return Err(PotentialError::NotCritical(gz));
        }
        let g_z = self.energy(z);
        let mut x = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        let mut violations = 0;
        let mut worst = f64::INFINITY;
        let mut produced = 0;
        let mut index = seed;
        while produced < probes {
            index += 1;
            // map the Halton point of the cube [-1,1]^n into the ball, rejecting corners
            let mut r2 = 0.0;
            for (j, xj) in x.iter_mut().enumerate() {
                let u = 2.0 * halton(index, j) - 1.0;
                r2 += u * u;
                *xj = u;
            }
            if r2 > 1.0 {
                continue;
            }
            for (xj, zj) in x.iter_mut().zip(z) {
                *xj = zj + radius * *xj;
            }
            produced += 1;
            self.gradient_into(&x, &mut g);
            let gx = self.energy(&x);
            let inner: f64 = g.iter().zip(x.iter().zip(z)).map(|(gi, (xi, zi))| gi * (xi - zi)).sum();
            let slack = theta * inner - (gx - g_z);
            worst = worst.min(slack);
            if slack < -1e-9 * (1.0 + gx.abs()) {
                violations += 1;
            }
        }
        Ok(ConvexityCertificate {
            theta,
            anchor: z.to_vec(),
            validity: CertificateValidity::Sampled { violations, probes },
            worst_slack: worst,
        })
    }

    /// Tests `G(y) ≥ G(x) + (y−x)G'(x) + δ(y−x)²` on a 200×200 grid of the
    /// open window `(x* − ε, x* + ε)`; `Concave` tests the same for `−G`.
    pub fn check_strong_convexity_window(
        &self,
        center: f64,
        eps: f64,
        delta: f64,
        curvature: Curvature,
    ) -> Result<WindowCheck, PotentialError> {
        if self.dim != 1 {
            return Err(PotentialError::Unsupported("strong convexity window needs a 1D potential".into()));
        }
        const N: usize = 200;
        let sign = match curvature {
            Curvature::Convex => 1.0,
            Curvature::Concave => -1.0,
        };
        let grid: Vec<f64> = (0..N)
            .map(|i| center - eps + 2.0 * eps * (i as f64 + 0.5) / N as f64)
            .collect();
        let vals: Vec<(f64, f64)> = grid
            .iter()
            .map(|&x| (sign * self.energy(&[x]), sign * self.grad1(x)))
            .collect();
        let mut worst = f64::INFINITY;
        for (i, &x) in grid.iter().enumerate() {
            let (gx, dgx) = vals[i];
            for (j, &y) in grid.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = y - x;
                let slack = vals[j].0 - gx - d * dgx - delta * d * d;
                worst = worst.min(slack / (d * d));
            }
        }
        // slack is normalised by (y−x)² so a pass means the modulus holds uniformly
        Ok(WindowCheck {
            pass: worst >= -1e-9,
            worst_slack: worst,
        })
    }

    /// Level-crossing abscissas `X₁ < x* < X₂` of a local maximum: the
    /// nearest points on either side where `G` rises above `G(x*)`.
    pub fn plateau_interval(&self, x_star: f64, search_box: (f64, f64)) -> Result<(f64, f64), PotentialError> {
        if self.dim != 1 {
            return Err(PotentialError::Unsupported("plateau interval needs a 1D potential".into()));
        }
        if !self.is_coercive() {
            return Err(PotentialError::NotCoercive);
        }
        let level = self.energy(&[x_star]);
        let above = |x: f64| self.energy(&[x]) > level;
        let step = (search_box.1 - search_box.0) / SCAN_CELLS as f64;
        let find = |dir: f64| -> Result<f64, PotentialError> {
            let mut inside = x_star;
            loop {
                let next = inside + dir * step;
                if next < search_box.0 - step || next > search_box.1 + step {
                    return Err(PotentialError::NoCrossing);
                }
                if above(next) {
                    let (mut a, mut b) = (inside, next);
                    while (b - a).abs() > 1e-12 * (1.0 + a.abs()) {
                        let m = 0.5 * (a + b);
                        if m == a || m == b {
                            break;
                        }
                        if above(m) {
                            b = m;
                        } else {
                            a = m;
                        }
                    }
                    return Ok(0.5 * (a + b));
                }
                inside = next;
            }
        };
        let x1 = find(-1.0)?;
        let x2 = find(1.0)?;
        Ok((x1, x2))
    }

    /// Largest observed `|g(x) − g(y)|/|x − y|` over Halton pairs in the
    /// ball of radius `r` about the origin.
    pub fn lipschitz_estimate(&self, r: f64, pairs: usize) -> f64 {
        let n = self.dim;
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        let mut best: f64 = 0.0;
        for k in 0..pairs as u64 {
            for j in 0..n {
                x[j] = r * (2.0 * halton(2 * k + 1, j) - 1.0) / (n as f64).sqrt();
                y[j] = r * (2.0 * halton(2 * k + 2, j) - 1.0) / (n as f64).sqrt();
            }
            let d = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d == 0.0 {
                continue;
            }
            self.gradient_into(&x, &mut gx);
            self.gradient_into(&y, &mut gy);
            let dg = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            best = best.max(dg / d);
        }
        best
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn derivative_coeffs(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert_eq!(Potential::quadratic(2).unwrap().eval(&[3.0, 4.0]).unwrap(), 12.5);
        assert_eq!(Potential::double_well().eval(&[1.0]).unwrap(), 0.0);
        assert_eq!(Potential::flat_bottom(1).unwrap().eval(&[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn grad_examples() {
        assert_eq!(Potential::double_well().grad(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(Potential::flat_bottom(1).unwrap().grad(&[2.0]).unwrap(), vec![2.0]);
        assert_eq!(Potential::signed_power(1.0).unwrap().grad(&[-2.0]).unwrap(), vec![-8.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = Potential::quadratic(2).unwrap();
        assert!(matches!(
            p.eval(&[1.0]),
            Err(PotentialError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(p.grad(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn double_well_critical_points() {
        let pts = Potential::double_well().critical_points(&[(-2.0, 2.0)]).unwrap();
        assert_eq!(pts.len(), 3);
        let locs: Vec<f64> = pts.iter().map(|p| p.location[0]).collect();
        assert_eq!(locs, vec![-1.0, 0.0, 1.0]);
        let kinds: Vec<CriticalKind> = pts.iter().map(|p| p.kind).collect();
        assert_eq!(
            kinds,
            vec![CriticalKind::LocalMin, CriticalKind::LocalMax, CriticalKind::LocalMin]
        );
        assert_eq!(pts[1].value, 0.25);
        assert_eq!(pts[0].value, 0.0);
    }

    #[test]
    fn quadratic_critical_point() {
        let pts = Potential::quadratic(1).unwrap().critical_points(&[(-1.0, 1.0)]).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].location, vec![0.0]);
        assert_eq!(pts[0].kind, CriticalKind::LocalMin);
    }

    #[test]
    fn polynomial_roots_by_scan() {
        // g(x) = (x+1)x(x−2) = x³ − x² − 2x, so G = x⁴/4 − x³/3 − x²
        let p = Potential::polynomial(vec![0.0, 0.0, -1.0, -1.0 / 3.0, 0.25]).unwrap();
        let pts = p.critical_points(&[(-3.0, 3.0)]).unwrap();
        let locs: Vec<f64> = pts.iter().map(|c| c.location[0]).collect();
        assert_eq!(locs.len(), 3);
        for (got, want) in locs.iter().zip([-1.0, 0.0, 2.0]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        for c in &pts {
            assert!(p.grad(&c.location).unwrap()[0].abs() <= 1e-10);
        }
        // distinct critical values, as the generic assumptions need
        assert!(pts[0].value != pts[2].value);
        assert_eq!(p.min_value(), Some(pts.iter().map(|c| c.value).fold(f64::INFINITY, f64::min)));
    }

    #[test]
    fn unsupported_and_non_isolated() {
        let custom = Potential::custom("bowl", 2, |x| x[0] * x[0] + x[1] * x[1], |x, g| {
            g[0] = 2.0 * x[0];
            g[1] = 2.0 * x[1];
        }, true, Some(0.0))
        .unwrap();
        assert!(matches!(
            custom.critical_points(&[(-1.0, 1.0), (-1.0, 1.0)]),
            Err(PotentialError::Unsupported(_))
        ));
        assert!(matches!(
            Potential::flat_bottom(1).unwrap().critical_points(&[(-2.0, 2.0)]),
            Err(PotentialError::NonIsolatedCriticalSet { .. })
        ));
    }

    #[test]
    fn base_inequality_examples() {
        let q = Potential::quadratic(1).unwrap();
        let c = q.check_base_inequality(0.5, &[0.0], 10_000, 5.0, 0).unwrap();
        assert_eq!(c.violations(), 0);
        let p4 = Potential::p_power(1, 4.0).unwrap();
        let c = p4.check_base_inequality(0.25, &[0.0], 10_000, 5.0, 0).unwrap();
        assert_eq!(c.violations(), 0);
        let dw = Potential::double_well();
        let c = dw.check_base_inequality(1.0, &[1.0], 2_000, 2.5, 0).unwrap();
        assert!(c.violations() > 0);
        // direct evaluation at x = −0.9: θ⟨g(x), x−z⟩ − (G(x) − G(1)) < 0
        let x = -0.9;
        let slack = dw.grad(&[x]).unwrap()[0] * (x - 1.0) - dw.eval(&[x]).unwrap();
        assert!(slack < -0.3);
    }

    #[test]
    fn base_inequality_rejects_noncritical_anchor() {
        let q = Potential::quadratic(1).unwrap();
        assert!(matches!(
            q.check_base_inequality(0.5, &[0.1], 10, 1.0, 0),
            Err(PotentialError::NotCritical(_))
        ));
    }

    #[test]
    fn strong_convexity_windows() {
        let dw = Potential::double_well();
        // G'' = 3x² − 1 ≥ 0.47 on (0.7, 1.3): modulus up to ≈ 0.235
        assert!(dw.check_strong_convexity_window(1.0, 0.3, 0.2, Curvature::Convex).unwrap().pass);
        assert!(!dw.check_strong_convexity_window(1.0, 0.3, 0.4, Curvature::Convex).unwrap().pass);
        // −G'' = 1 − 3x² ≥ 0.73 on (−0.3, 0.3): modulus up to ≈ 0.365
        assert!(dw.check_strong_convexity_window(0.0, 0.3, 0.3, Curvature::Concave).unwrap().pass);
        assert!(!dw.check_strong_convexity_window(0.0, 0.3, 0.4, Curvature::Concave).unwrap().pass);
        let fb = Potential::flat_bottom(1).unwrap();
        assert!(!fb.check_strong_convexity_window(0.5, 0.3, 1e-3, Curvature::Convex).unwrap().pass);
    }

    #[test]
    fn plateau_examples() {
        let (x1, x2) = Potential::double_well().plateau_interval(0.0, (-3.0, 3.0)).unwrap();
        assert!((x1 + 2f64.sqrt()).abs() < 1e-10);
        assert!((x2 - 2f64.sqrt()).abs() < 1e-10);
        let quartic = Potential::polynomial(vec![0.0, 0.0, -0.5, 0.0, 0.25]).unwrap();
        let (x1, x2) = quartic.plateau_interval(0.0, (-3.0, 3.0)).unwrap();
        assert!((x1 + 2f64.sqrt()).abs() < 1e-10 && (x2 - 2f64.sqrt()).abs() < 1e-10);
        assert!(matches!(
            Potential::zero(1).unwrap().plateau_interval(0.0, (-1.0, 1.0)),
            Err(PotentialError::NotCoercive)
        ));
    }

    #[test]
    fn plateau_of_asymmetric_sextic() {
        // G = x²(x−3)²(x+2)² has an interior maximum between 0 and 3
        let g = |x: f64| (x * (x - 3.0) * (x + 2.0)).powi(2);
        // expand (x³ − x² − 6x)² = x⁶ − 2x⁵ − 11x⁴ + 12x³ + 36x²
        let p = Potential::polynomial(vec![0.0, 0.0, 36.0, 12.0, -11.0, -2.0, 1.0]).unwrap();
        let crit = p.critical_points(&[(-4.0, 5.0)]).unwrap();
        let max = crit
            .iter()
            .find(|c| c.kind == CriticalKind::LocalMax && c.location[0] > 0.0)
            .expect("interior maximum");
        let xs = max.location[0];
        let (x1, x2) = p.plateau_interval(xs, (-4.0, 5.0)).unwrap();
        assert!(x1 < xs && xs < x2);
        let level = g(xs);
        assert!((g(x1) - level).abs() < 1e-8 * (1.0 + level));
        assert!((g(x2) - level).abs() < 1e-8 * (1.0 + level));
    }

    #[test]
    fn lipschitz_is_finite() {
        let dw = Potential::double_well();
        let l = dw.lipschitz_estimate(2.0, 500);
        // |g'| = |3x² − 1| ≤ 11 on [−2, 2]
        assert!(l > 1.0 && l <= 11.0);
    }
}
