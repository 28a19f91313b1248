//! Globally adaptive Gauss–Kronrod (7/15 point) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::Scalar;

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

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
    pub converged: bool,
}

/// Tolerances and subdivision budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Scalar> Default for QuadOptions<T> {
    fn default() -> Self {
        Self { abs_tol: T::lit(1e-12), rel_tol: T::lit(1e-10), max_intervals: 2000 }
    }
}

impl<T: Scalar> QuadOptions<T> {
    pub fn new(abs_tol: T, rel_tol: T) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }
}

struct Piece<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Scalar> PartialEq for Piece<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Piece<T> {}
impl<T: Scalar> PartialOrd for Piece<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Piece<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

fn kronrod<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let radius = half * (b - a);
    let fc = f(center);
    let mut gauss = fc * T::lit(WG[3]);
    let mut kron = fc * T::lit(WGK[7]);
    for j in 0..7 {
        let dx = radius * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kron = kron + T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * pair;
        }
    }
    let value = kron * radius;
    let error = ((kron - gauss) * radius).abs();
    (value, error)
}

/// Integrates `f` over `[a, b]`; `a > b` flips the sign.
pub fn integrate<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, opts: QuadOptions<T>) -> Integral<T> {
    if a == b {
        return Integral { value: T::zero(), error: T::zero(), evaluations: 0, converged: true };
    }
    if a > b {
        let r = integrate(f, b, a, opts);
        return Integral { value: -r.value, ..r };
    }
    let (v, e) = kronrod(&mut f, a, b);
    let mut evaluations = 15;
    let mut total = v;
    let mut total_err = e;
    let mut heap = BinaryHeap::from([Piece { a, b, value: v, error: e }]);
    let tiny = T::epsilon() * T::lit(64.0);
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= target {
            return Integral { value: total, error: total_err, evaluations, converged: true };
        }
        if heap.len() >= opts.max_intervals {
            break;
        }
        let worst = heap.pop().expect("nonempty");
        let mid = T::lit(0.5) * (worst.a + worst.b);
        if (worst.b - worst.a) <= tiny * (worst.a.abs() + worst.b.abs() + T::one()) {
            heap.push(worst);
            break;
        }
        let (lv, le) = kronrod(&mut f, worst.a, mid);
        let (rv, re) = kronrod(&mut f, mid, worst.b);
        evaluations += 30;
        total = total - worst.value + lv + rv;
        total_err = total_err - worst.error + le + re;
        heap.push(Piece { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Piece { a: mid, b: worst.b, value: rv, error: re });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let (value, error) = heap
        .iter()
        .fold((T::zero(), T::zero()), |(v, e), p| (v + p.value, e + p.error));
    let target = opts.abs_tol.max(opts.rel_tol * value.abs());
    Integral { value, error, evaluations, converged: error <= target }
}

/// Integrates over `[a, b]` after splitting at the given interior points.
pub fn integrate_with_breaks<T: Scalar, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    breaks: &[T],
    opts: QuadOptions<T>,
) -> Integral<T> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    let mut acc = Integral { value: T::zero(), error: T::zero(), evaluations: 0, converged: true };
    for w in pts.windows(2) {
        let r = integrate(&mut f, w[0], w[1], opts);
        acc.value = acc.value + r.value;
        acc.error = acc.error + r.error;
        acc.evaluations += r.evaluations;
        acc.converged &= r.converged;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x: f64| x.powi(5) - 3.0 * x * x, 0.0, 2.0, QuadOptions::default());
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
        assert!(r.converged);
    }

    #[test]
    fn integrable_singularity() {
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, QuadOptions::new(1e-10, 1e-10));
        assert!((r.value - 2.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn oscillatory() {
        let r = integrate(|x: f64| (20.0 * x).cos(), 0.0, 3.0, QuadOptions::default());
        assert!((r.value - (60.0f64).sin() / 20.0).abs() < 1e-11);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(|x: f64| x.exp(), 1.0, 0.0, QuadOptions::default());
        assert!((r.value + (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn single_precision() {
        let r = integrate(|x: f32| x.sin(), 0.0, std::f32::consts::PI, QuadOptions::new(1e-5, 1e-5));
        assert!((r.value - 2.0).abs() < 1e-4);
    }

    #[test]
    fn kink_with_break() {
        let r = integrate_with_breaks(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], QuadOptions::default());
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-14);
    }
}
