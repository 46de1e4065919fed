//! Globally adaptive 7/15-point Gauss–Kronrod quadrature for small vectors of
//! complex values.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

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
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<const N: usize> {
    pub value: [Complex64; N],
    /// Sum of the Kronrod-minus-Gauss error estimates of the final partition.
    pub error: f64,
    pub intervals: usize,
    pub evaluations: usize,
}

fn max_norm<const N: usize>(v: &[Complex64; N]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn gk15<const N: usize>(f: &impl Fn(f64) -> [Complex64; N], a: f64, b: f64) -> ([Complex64; N], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let zero = [Complex64::new(0.0, 0.0); N];
    let fc = f(c);
    let mut k = zero;
    let mut g = zero;
    for i in 0..N {
        k[i] = fc[i] * WGK[7];
        g[i] = fc[i] * WG[3];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for i in 0..N {
            let s = f1[i] + f2[i];
            k[i] += s * WGK[j];
            if j % 2 == 1 {
                g[i] += s * WG[j / 2];
            }
        }
    }
    let mut diff = zero;
    for i in 0..N {
        k[i] *= h;
        g[i] *= h;
        diff[i] = k[i] - g[i];
    }
    (k, max_norm(&diff))
}

struct Piece<const N: usize> {
    a: f64,
    b: f64,
    value: [Complex64; N],
    error: f64,
}

impl<const N: usize> PartialEq for Piece<N> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const N: usize> Eq for Piece<N> {}
impl<const N: usize> PartialOrd for Piece<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Piece<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then(other.a.total_cmp(&self.a))
    }
}

/// Integrates `f` over `[a, b]`, bisecting the interval with the largest
/// error estimate until the total estimate is at most `abs_tol` or
/// `max_intervals` pieces exist.
pub fn integrate<const N: usize>(
    f: impl Fn(f64) -> [Complex64; N],
    a: f64,
    b: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> QuadResult<N> {
    integrate_from(f, &[a, b], abs_tol, max_intervals)
}

/// As [`integrate`], starting from the partition given by `breaks`.
pub fn integrate_from<const N: usize>(
    f: impl Fn(f64) -> [Complex64; N],
    breaks: &[f64],
    abs_tol: f64,
    max_intervals: usize,
) -> QuadResult<N> {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk15(&f, w[0], w[1]);
            evaluations += 15;
            heap.push(Piece { a: w[0], b: w[1], value, error });
        }
    }
    let total_error = |h: &BinaryHeap<Piece<N>>| h.iter().map(|p| p.error).sum::<f64>();
    while heap.len() < max_intervals && total_error(&heap) > abs_tol {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk15(&f, a, b);
            evaluations += 15;
            heap.push(Piece { a, b, value, error });
        }
    }
    // deterministic summation order
    let mut pieces = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = [Complex64::new(0.0, 0.0); N];
    let mut error = 0.0;
    for p in &pieces {
        for i in 0..N {
            value[i] += p.value[i];
        }
        error += p.error;
    }
    QuadResult { value, error, intervals: pieces.len(), evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| [Complex64::new(x.powi(10), -x.powi(3))], 0.0, 2.0, 1e-14, 10);
        assert!((r.value[0].re - 2f64.powi(11) / 11.0).abs() < 1e-11);
        assert!((r.value[0].im + 4.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_tail_resolves() {
        let r = integrate(|x| [Complex64::new((-x * x).exp(), 0.0)], 0.0, 12.0, 1e-13, 200);
        assert!((r.value[0].re - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-13);
        assert!(r.error <= 1e-13);
    }

    #[test]
    fn sqrt_singularity() {
        let r = integrate(|x| [Complex64::new(x.sqrt(), 0.0)], 0.0, 1.0, 1e-12, 500);
        assert!((r.value[0].re - 2.0 / 3.0).abs() < 1e-11);
    }
}
