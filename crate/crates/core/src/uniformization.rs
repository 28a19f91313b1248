//! Transient analysis of finite continuous-time chains by uniformization.
//!
//! For a generator `Q` and a nonnegative killing rate `V` the semigroup
//! `e^{t(Q − V)}` equals `Σ_n Pois(Λt; n) K^n` with the substochastic jump
//! matrix `K = I + (Q − V)/Λ` and `Λ ≥ max_x (q_x + V_x)`. Time integrals of
//! the semigroup reduce to the same sums with Poisson survival weights, which
//! gives closed-form iterated integrals over time simplices.

use crate::scalar::Scalar;
use crate::walker::JumpChain;

/// Neglected Poisson mass used throughout.
pub const POISSON_TAIL: f64 = 1e-13;

/// Normalized Poisson probabilities on a window `left..left + weights.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonWeights {
    pub left: usize,
    pub weights: Vec<f64>,
    /// Upper bound on the probability outside the window.
    pub tail_bound: f64,
}

impl PoissonWeights {
    pub fn right(&self) -> usize {
        self.left + self.weights.len() - 1
    }

    pub fn prob(&self, n: usize) -> f64 {
        if n < self.left {
            0.0
        } else {
            self.weights.get(n - self.left).copied().unwrap_or(0.0)
        }
    }

    /// Survival probabilities `P(N ≥ n)` for `n = 0..=right+1`.
    pub fn survival(&self) -> Vec<f64> {
        let r = self.right();
        let mut out = vec![0.0; r + 2];
        let mut acc = 0.0;
        for n in (0..=r).rev() {
            acc += self.prob(n);
            out[n] = acc.min(1.0);
        }
        for v in out.iter_mut().take(self.left + 1) {
            *v = 1.0;
        }
        out
    }
}

/// Poisson(`mean`) weights with neglected mass below `tail`.
///
/// The recurrence starts at the mode, so no factorials or `lnΓ` are needed and
/// nothing underflows before the window closes. The tails beyond the window
/// are bounded by geometric series.
pub fn poisson_weights(mean: f64, tail: f64) -> PoissonWeights {
    assert!(mean >= 0.0 && mean.is_finite(), "Poisson mean must be finite and >= 0");
    if mean == 0.0 {
        return PoissonWeights { left: 0, weights: vec![1.0], tail_bound: 0.0 };
    }
    let mode = mean.floor() as usize;
    let mut right_side = vec![1.0f64];
    let mut left_side: Vec<f64> = Vec::new();
    let mut total = 1.0;
    // Right tail: w_{n+1} = w_n λ/(n+1); beyond n the ratio is below λ/(n+2).
    let mut n = mode;
    let mut right_bound;
    loop {
        let w = *right_side.last().expect("nonempty");
        let ratio = mean / (n as f64 + 2.0);
        right_bound = if ratio < 1.0 { w * ratio / (1.0 - ratio) } else { f64::INFINITY };
        if right_bound < 0.25 * tail * total {
            break;
        }
        let next = w * mean / (n as f64 + 1.0);
        right_side.push(next);
        total += next;
        n += 1;
    }
    // Left tail: w_{n-1} = w_n n/λ; below n the ratio is at most (n-1)/λ.
    let mut n = mode;
    let mut left_bound = 0.0;
    while n > 0 {
        let w = left_side.last().copied().unwrap_or(1.0);
        let ratio = (n as f64 - 1.0) / mean;
        let bound = w * (n as f64 / mean) / (1.0 - ratio);
        if bound < 0.25 * tail * total {
            left_bound = bound;
            break;
        }
        let next = w * n as f64 / mean;
        left_side.push(next);
        total += next;
        n -= 1;
    }
    let left = n;
    let mut weights: Vec<f64> = left_side.into_iter().rev().collect();
    weights.extend(right_side);
    for w in &mut weights {
        *w /= total;
    }
    PoissonWeights { left, weights, tail_bound: (left_bound + right_bound) / total }
}

/// The uniformized jump operator of a chain, optionally with killing.
#[derive(Debug, Clone)]
pub struct Uniformized<T> {
    lambda: T,
    diag: Vec<T>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    vals: Vec<T>,
    /// `tvals[j] = K(targets[j], x)` for `j` in row `x`.
    tvals: Vec<T>,
}

impl<T: Scalar> Uniformized<T> {
    pub fn new(chain: &JumpChain<T>) -> Self {
        Self::with_killing(chain, None)
    }

    /// Uniformizes `Q − diag(V)`; `V` must be nonnegative.
    pub fn with_killing(chain: &JumpChain<T>, killing: Option<&[T]>) -> Self {
        let n = chain.len();
        let kill = |x: usize| killing.map_or(T::zero(), |v| v[x]);
        let lambda = (0..n).fold(T::zero(), |acc, x| acc.max(chain.rate(x) + kill(x)));
        let diag = (0..n).map(|x| T::one() - (chain.rate(x) + kill(x)) / lambda).collect();
        let offsets = chain.offsets().to_vec();
        let targets = chain.targets().to_vec();
        let mut vals = Vec::with_capacity(targets.len());
        for x in 0..n {
            for j in offsets[x]..offsets[x + 1] {
                vals.push(chain.rate(x) * chain.probs()[j] / lambda);
            }
        }
        let mut tvals = vec![T::zero(); targets.len()];
        for x in 0..n {
            for j in offsets[x]..offsets[x + 1] {
                let y = targets[j];
                let back = (offsets[y]..offsets[y + 1])
                    .find(|&i| targets[i] == x)
                    .expect("adjacency is symmetric");
                tvals[j] = vals[back];
            }
        }
        Self { lambda, diag, offsets, targets, vals, tvals }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Uniformization rate `Λ`.
    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// `out = K v`.
    pub fn apply(&self, v: &[T], out: &mut [T]) {
        for x in 0..self.len() {
            let mut acc = self.diag[x] * v[x];
            for j in self.offsets[x]..self.offsets[x + 1] {
                acc = acc + self.vals[j] * v[self.targets[j]];
            }
            out[x] = acc;
        }
    }

    /// `out = μ K` (row vector action).
    pub fn apply_left(&self, mu: &[T], out: &mut [T]) {
        for y in 0..self.len() {
            let mut acc = self.diag[y] * mu[y];
            for j in self.offsets[y]..self.offsets[y + 1] {
                acc = acc + self.tvals[j] * mu[self.targets[j]];
            }
            out[y] = acc;
        }
    }

    fn weights(&self, t: T) -> PoissonWeights {
        poisson_weights((self.lambda * t).as_f64(), POISSON_TAIL)
    }

    fn power_sum(&self, v: &[T], coeff: impl Fn(usize) -> f64, last: usize, left: bool) -> Vec<T> {
        let n = self.len();
        let mut cur = v.to_vec();
        let mut next = vec![T::zero(); n];
        let mut out = vec![T::zero(); n];
        for m in 0..=last {
            let c = coeff(m);
            if c != 0.0 {
                let c = T::lit(c);
                for (o, &x) in out.iter_mut().zip(&cur) {
                    *o = *o + c * x;
                }
            }
            if m < last {
                if left {
                    self.apply_left(&cur, &mut next);
                } else {
                    self.apply(&cur, &mut next);
                }
                std::mem::swap(&mut cur, &mut next);
            }
        }
        out
    }

    /// `e^{t(Q−V)} v`.
    pub fn propagate(&self, v: &[T], t: T) -> Vec<T> {
        if t == T::zero() {
            return v.to_vec();
        }
        let w = self.weights(t);
        self.power_sum(v, |m| w.prob(m), w.right(), false)
    }

    /// `μ e^{t(Q−V)}`.
    pub fn propagate_left(&self, mu: &[T], t: T) -> Vec<T> {
        if t == T::zero() {
            return mu.to_vec();
        }
        let w = self.weights(t);
        self.power_sum(mu, |m| w.prob(m), w.right(), true)
    }

    /// `∫_0^r e^{u(Q−V)} c du = Λ^{-1} Σ_n P(N_r ≥ n+1) K^n c`.
    pub fn integrate(&self, c: &[T], r: T) -> Vec<T> {
        self.simplex_moment(c, r, 1)
    }

    /// Row-vector version of [`Self::integrate`]: `∫_0^r μ e^{u(Q−V)} du`.
    pub fn integrate_left(&self, mu: &[T], r: T) -> Vec<T> {
        if r == T::zero() {
            return vec![T::zero(); self.len()];
        }
        let w = self.weights(r);
        let surv = w.survival();
        let inv = T::one() / self.lambda;
        let mut out = self.power_sum(mu, |m| surv.get(m + 1).copied().unwrap_or(0.0), w.right(), true);
        for o in &mut out {
            *o = *o * inv;
        }
        out
    }

    /// Iterated integral
    /// `F_ℓ(r) = ∫_{0<s_1<…<s_ℓ<r} P(s_1) C P(s_2−s_1) C ⋯ P(s_ℓ−s_{ℓ−1}) c ds`
    /// with `C = diag(c)` and `P(u) = e^{u(Q−V)}`, so that
    /// `E_x[(∫_0^r c(X_s) ds)^ℓ] = ℓ! F_ℓ(r)(x)` when `V = 0`.
    pub fn simplex_moment(&self, c: &[T], r: T, ell: usize) -> Vec<T> {
        let n = self.len();
        if ell == 0 {
            return vec![T::one(); n];
        }
        if r == T::zero() {
            return vec![T::zero(); n];
        }
        let w = self.weights(r);
        let surv = w.survival();
        let last = w.right() + 1;
        // z[j] holds Z^{(j+1)}_m for the current m.
        let mut z: Vec<Vec<T>> = vec![vec![T::zero(); n]; ell];
        let mut scratch = vec![T::zero(); n];
        let mut out = vec![T::zero(); n];
        for m in 0..=last {
            if m == 0 {
                z[0].copy_from_slice(c);
                for j in 1..ell {
                    let (lo, hi) = z.split_at_mut(j);
                    for x in 0..n {
                        hi[0][x] = c[x] * lo[j - 1][x];
                    }
                }
            } else {
                for j in 0..ell {
                    self.apply(&z[j], &mut scratch);
                    if j > 0 {
                        let (lo, hi) = z.split_at_mut(j);
                        for x in 0..n {
                            scratch[x] = scratch[x] + c[x] * lo[j - 1][x];
                        }
                        hi[0].copy_from_slice(&scratch);
                    } else {
                        z[0].copy_from_slice(&scratch);
                    }
                }
            }
            let coeff = surv.get(m + ell).copied().unwrap_or(0.0);
            if coeff == 0.0 {
                break;
            }
            let coeff = T::lit(coeff);
            for x in 0..n {
                out[x] = out[x] + coeff * z[ell - 1][x];
            }
        }
        let scale = self.lambda.powi(ell as i32);
        out.iter().map(|&v| v / scale).collect()
    }
}
