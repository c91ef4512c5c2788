//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Piece {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]` until the estimated error is below
/// `max(abs_tol, rel_tol * |value|)` or `max_intervals` is reached.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> QuadResult {
    if a == b {
        return QuadResult {
            value: 0.0,
            abs_error: 0.0,
            intervals: 0,
            converged: true,
        };
    }
    let first = kronrod15(&f, a, b);
    let mut total = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    while error > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= max_intervals {
            return QuadResult {
                value: total,
                abs_error: error,
                intervals: heap.len(),
                converged: false,
            };
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            heap.push(worst);
            return QuadResult {
                value: total,
                abs_error: error,
                intervals: heap.len(),
                converged: false,
            };
        }
        let left = kronrod15(&f, worst.a, mid);
        let right = kronrod15(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed the accumulated cancellation in `total`
    let value = heap.iter().map(|p| p.value).sum();
    let abs_error = heap.iter().map(|p| p.error).sum();
    QuadResult {
        value,
        abs_error,
        intervals: heap.len(),
        converged: true,
    }
}

/// Five-point Gauss–Legendre nodes on `[0, 1]` with matching weights.
pub(crate) const GL5_NODES: [f64; 5] = [
    0.046_910_077_030_668_004,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
pub(crate) const GL5_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_45,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1e-12, 1e-14, 100);
        assert!(r.converged);
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-12);
    }

    #[test]
    fn long_range_log_integrand() {
        let r = integrate(|t| 1.0 / (1.0 + t), 0.0, 1e6, 1e-10, 1e-14, 4000);
        assert!(r.converged);
        assert!((r.value - (1e6f64 + 1.0).ln()).abs() < 1e-8);
    }

    #[test]
    fn gl5_integrates_degree_nine() {
        let s: f64 = GL5_NODES
            .iter()
            .zip(GL5_WEIGHTS)
            .map(|(&x, w)| w * x.powi(9))
            .sum();
        assert!((s - 0.1).abs() < 1e-15);
    }
}
