//! Crank–Nicolson finite differences for the Robin heat equation on
//! intervals and axis-aligned boxes.
//!
//! The flux condition `∂u/∂n = g u + h` (inward normal) is imposed with
//! centered ghost nodes, and the first step is replaced by backward-Euler
//! half steps to damp the start-up oscillation from incompatible data.
//! Grids are refined by doubling until consecutive solutions agree on the
//! shared nodes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fk_solver::RobinProblem;
use crate::geometry::DomainKind;
use crate::scalar::{max_abs_diff, Scalar};

/// Refinement control for [`fd_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdOptions {
    /// Sup-norm agreement required between consecutive grids.
    pub tol: f64,
    /// Cells per unit length on the first grid.
    pub initial_density: usize,
    /// Largest cells-per-unit-length tried on intervals.
    pub max_density_1d: usize,
    /// Largest cells-per-unit-length tried on boxes.
    pub max_density_nd: usize,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self { tol: 1e-4, initial_density: 16, max_density_1d: 8192, max_density_nd: 256 }
    }
}

/// Nodal solution at the problem horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdSolution<T> {
    pub lows: Vec<T>,
    pub highs: Vec<T>,
    pub cells: Vec<usize>,
    pub steps: usize,
    pub values: Vec<T>,
    /// Sup-norm differences between consecutive refinements.
    pub refinement_diffs: Vec<T>,
}

impl<T: Scalar> FdSolution<T> {
    fn strides(&self) -> Vec<usize> {
        strides(&self.cells)
    }

    pub fn spacing(&self, axis: usize) -> T {
        (self.highs[axis] - self.lows[axis]) / T::count(self.cells[axis])
    }

    pub fn node(&self, index: &[usize]) -> T {
        let s = self.strides();
        self.values[index.iter().zip(&s).map(|(i, s)| i * s).sum::<usize>()]
    }

    /// Multilinear interpolation at `x`.
    pub fn value_at(&self, x: &[T]) -> T {
        let d = self.cells.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![T::zero(); d];
        for i in 0..d {
            let s = ((x[i] - self.lows[i]) / self.spacing(i)).max(T::zero());
            let j = s.floor().to_usize().unwrap_or(0).min(self.cells[i] - 1);
            base[i] = j;
            frac[i] = (s - T::count(j)).min(T::one());
        }
        let mut total = T::zero();
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = T::one();
            for i in 0..d {
                let up = (corner >> i) & 1 == 1;
                idx[i] = base[i] + usize::from(up);
                w = w * if up { frac[i] } else { T::one() - frac[i] };
            }
            if w != T::zero() {
                total = total + w * self.node(&idx);
            }
        }
        total
    }

    /// Values on the nodes of a grid with half as many cells per axis.
    fn restrict(&self) -> Vec<T> {
        let coarse: Vec<usize> = self.cells.iter().map(|c| c / 2).collect();
        let n: usize = coarse.iter().map(|c| c + 1).product();
        let cs = strides(&coarse);
        let fs = self.strides();
        (0..n)
            .map(|p| {
                let mut rem = p;
                let mut fine = 0;
                for (i, s) in cs.iter().enumerate() {
                    let j = rem / s;
                    rem %= s;
                    fine += 2 * j * fs[i];
                }
                self.values[fine]
            })
            .collect()
    }
}

fn strides(cells: &[usize]) -> Vec<usize> {
    let d = cells.len();
    let mut s = vec![1usize; d];
    for i in (0..d.saturating_sub(1)).rev() {
        s[i] = s[i + 1] * (cells[i + 1] + 1);
    }
    s
}

struct Grid<T> {
    cells: Vec<usize>,
    dx: Vec<T>,
    strides: Vec<usize>,
    len: usize,
    positions: Vec<Vec<T>>,
    /// `Σ_{boundary axes} 1/dx_i` per node.
    flux: Vec<T>,
    /// Trapezoid weights that symmetrize the operator.
    weights: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    fn new(lows: &[T], highs: &[T], density: usize) -> Self {
        let d = lows.len();
        let cells: Vec<usize> = (0..d)
            .map(|i| {
                let c = ((highs[i] - lows[i]).as_f64() * density as f64).ceil() as usize;
                c.max(2).next_multiple_of(2)
            })
            .collect();
        let dx: Vec<T> = (0..d).map(|i| (highs[i] - lows[i]) / T::count(cells[i])).collect();
        let strides = strides(&cells);
        let len: usize = cells.iter().map(|c| c + 1).product();
        let mut positions = Vec::with_capacity(len);
        let mut flux = Vec::with_capacity(len);
        let mut weights = Vec::with_capacity(len);
        for p in 0..len {
            let mut rem = p;
            let mut x = vec![T::zero(); d];
            let mut f = T::zero();
            let mut w = T::one();
            for i in 0..d {
                let j = rem / strides[i];
                rem %= strides[i];
                x[i] = lows[i] + T::count(j) * dx[i];
                if j == 0 || j == cells[i] {
                    f = f + T::one() / dx[i];
                    w = w * T::lit(0.5);
                }
            }
            positions.push(x);
            flux.push(f);
            weights.push(w);
        }
        Self { cells, dx, strides, len, positions, flux, weights }
    }

    fn coord(&self, p: usize, axis: usize) -> usize {
        (p / self.strides[axis]) % (self.cells[axis] + 1)
    }

    /// `½ Δ_ghost u` with homogeneous Neumann reflection.
    fn half_laplacian(&self, u: &[T], out: &mut [T]) {
        let half = T::lit(0.5);
        for p in 0..self.len {
            let mut acc = T::zero();
            for i in 0..self.cells.len() {
                let j = self.coord(p, i);
                let s = self.strides[i];
                let n = self.cells[i];
                let (lo, hi) = match j {
                    0 => (u[p + s], u[p + s]),
                    _ if j == n => (u[p - s], u[p - s]),
                    _ => (u[p - s], u[p + s]),
                };
                acc = acc + (lo - T::lit(2.0) * u[p] + hi) / (self.dx[i] * self.dx[i]);
            }
            out[p] = half * acc;
        }
    }

    /// Killing `κ = g Σ 1/dx` and forcing `b = −h Σ 1/dx` at time `t`.
    fn robin_terms(&self, problem: &RobinProblem<T>, t: T) -> (Vec<T>, Vec<T>) {
        let mut kappa = vec![T::zero(); self.len];
        let mut b = vec![T::zero(); self.len];
        for p in 0..self.len {
            if self.flux[p] > T::zero() {
                let x = &self.positions[p];
                kappa[p] = self.flux[p] * problem.g.eval(t, x);
                b[p] = -self.flux[p] * problem.h.eval(t, x);
            }
        }
        (kappa, b)
    }

    /// `out = u + τ (½Δu − κ u)`.
    fn explicit(&self, u: &[T], kappa: &[T], tau: T, out: &mut [T]) {
        self.half_laplacian(u, out);
        for p in 0..self.len {
            out[p] = u[p] + tau * (out[p] - kappa[p] * u[p]);
        }
    }

    /// Solves `(I − τ(½Δ − κ)) u = rhs`.
    fn implicit(&self, kappa: &[T], tau: T, rhs: &[T], guess: &[T]) -> Result<Vec<T>> {
        if self.cells.len() == 1 {
            Ok(self.thomas(kappa, tau, rhs))
        } else {
            self.conjugate_gradient(kappa, tau, rhs, guess)
        }
    }

    fn thomas(&self, kappa: &[T], tau: T, rhs: &[T]) -> Vec<T> {
        let n = self.len;
        let c = tau * T::lit(0.5) / (self.dx[0] * self.dx[0]);
        let mut lower = vec![-c; n];
        let mut upper = vec![-c; n];
        let diag: Vec<T> = (0..n).map(|p| T::one() + T::lit(2.0) * c + tau * kappa[p]).collect();
        upper[0] = -T::lit(2.0) * c;
        lower[n - 1] = -T::lit(2.0) * c;
        let mut cp = vec![T::zero(); n];
        let mut dp = vec![T::zero(); n];
        cp[0] = upper[0] / diag[0];
        dp[0] = rhs[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - lower[i] * cp[i - 1];
            cp[i] = upper[i] / m;
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m;
        }
        let mut x = vec![T::zero(); n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        x
    }

    /// Jacobi-preconditioned CG on the trapezoid-weighted system, which is
    /// symmetric positive definite when `κ ≥ 0`.
    fn conjugate_gradient(&self, kappa: &[T], tau: T, rhs: &[T], guess: &[T]) -> Result<Vec<T>> {
        let n = self.len;
        let w = &self.weights;
        let diag: Vec<T> = (0..n)
            .map(|p| {
                let lap: T = self.dx.iter().map(|h| T::one() / (*h * *h)).sum();
                w[p] * (T::one() + tau * (lap + kappa[p]))
            })
            .collect();
        let mut scratch = vec![T::zero(); n];
        let apply = |v: &[T], out: &mut [T], scratch: &mut [T]| {
            self.half_laplacian(v, scratch);
            for p in 0..n {
                out[p] = w[p] * (v[p] - tau * (scratch[p] - kappa[p] * v[p]));
            }
        };
        let b: Vec<T> = (0..n).map(|p| w[p] * rhs[p]).collect();
        let mut x = guess.to_vec();
        let mut ax = vec![T::zero(); n];
        apply(&x, &mut ax, &mut scratch);
        let mut r: Vec<T> = (0..n).map(|p| b[p] - ax[p]).collect();
        let mut z: Vec<T> = (0..n).map(|p| r[p] / diag[p]).collect();
        let mut dir = z.clone();
        let mut rz = crate::scalar::dot(&r, &z);
        let bnorm = crate::scalar::dot(&b, &b).sqrt().max(T::min_positive_value());
        let tol = T::lit(1e-13).max(T::epsilon() * T::lit(100.0)) * bnorm;
        let mut q = vec![T::zero(); n];
        for _ in 0..(10 * n).max(100) {
            if crate::scalar::dot(&r, &r).sqrt() <= tol {
                return Ok(x);
            }
            apply(&dir, &mut q, &mut scratch);
            let alpha = rz / crate::scalar::dot(&dir, &q);
            for p in 0..n {
                x[p] = x[p] + alpha * dir[p];
                r[p] = r[p] - alpha * q[p];
                z[p] = r[p] / diag[p];
            }
            let rz_new = crate::scalar::dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for p in 0..n {
                dir[p] = z[p] + beta * dir[p];
            }
        }
        Err(Error::NoConvergence("conjugate gradient did not reach tolerance".into()))
    }
}

fn box_bounds<T: Scalar>(problem: &RobinProblem<T>) -> Result<(Vec<T>, Vec<T>)> {
    match problem.domain.kind() {
        DomainKind::Interval { a, b } => Ok((vec![*a], vec![*b])),
        DomainKind::Box { lows, highs } => Ok((lows.clone(), highs.clone())),
        DomainKind::Polygon { .. } => {
            Err(Error::UnsupportedDomain("finite differences are limited to intervals and boxes".into()))
        }
    }
}

/// Solves on a single grid with `density` cells per unit length and
/// `⌈T · density⌉` time steps.
pub fn solve_on_grid<T: Scalar>(problem: &RobinProblem<T>, density: usize) -> Result<FdSolution<T>> {
    problem.validate()?;
    let (lows, highs) = box_bounds(problem)?;
    let grid = Grid::new(&lows, &highs, density);
    let mut u: Vec<T> = grid.positions.iter().map(|x| (problem.initial)(x)).collect();
    let horizon = problem.horizon;
    let steps = ((horizon.as_f64() * density as f64).ceil() as usize).max(4);
    if horizon == T::zero() {
        return Ok(FdSolution { lows, highs, cells: grid.cells, steps: 0, values: u, refinement_diffs: Vec::new() });
    }
    let dt = horizon / T::count(steps);
    let half = T::lit(0.5);
    let mut rhs = vec![T::zero(); grid.len];
    let mut t = T::zero();
    // Backward-Euler start-up: the first step is split into four quarter steps.
    let quarter = dt / T::lit(4.0);
    for _ in 0..4 {
        let next = t + quarter;
        let (kappa, b) = grid.robin_terms(problem, next);
        for p in 0..grid.len {
            rhs[p] = u[p] + quarter * b[p];
        }
        u = grid.implicit(&kappa, quarter, &rhs, &u)?;
        t = next;
    }
    let (mut kappa_now, mut b_now) = grid.robin_terms(problem, t);
    for step in 1..steps {
        let next = if step + 1 == steps { horizon } else { dt * T::count(step + 1) };
        let tau = half * (next - t);
        let (kappa_next, b_next) = grid.robin_terms(problem, next);
        grid.explicit(&u, &kappa_now, tau, &mut rhs);
        for p in 0..grid.len {
            rhs[p] = rhs[p] + tau * (b_now[p] + b_next[p]);
        }
        u = grid.implicit(&kappa_next, tau, &rhs, &u)?;
        kappa_now = kappa_next;
        b_now = b_next;
        t = next;
    }
    Ok(FdSolution { lows, highs, cells: grid.cells, steps, values: u, refinement_diffs: Vec::new() })
}

/// Refines [`solve_on_grid`] by doubling until consecutive solutions differ
/// by less than `opts.tol` on the shared nodes.
pub fn fd_oracle<T: Scalar>(problem: &RobinProblem<T>, opts: &FdOptions) -> Result<FdSolution<T>> {
    let (lows, _) = box_bounds(problem)?;
    let cap = if lows.len() == 1 { opts.max_density_1d } else { opts.max_density_nd };
    let mut density = opts.initial_density.max(2);
    let mut previous = solve_on_grid(problem, density)?;
    let mut diffs = Vec::new();
    while density * 2 <= cap {
        density *= 2;
        let mut next = solve_on_grid(problem, density)?;
        let diff = max_abs_diff(&next.restrict(), &previous.values);
        diffs.push(diff);
        if diff.as_f64() < opts.tol {
            next.refinement_diffs = diffs;
            return Ok(next);
        }
        previous = next;
    }
    Err(Error::NoConvergence(format!(
        "refinement stalled at {density} cells per unit length, last difference {}",
        diffs.last().map_or(f64::NAN, |d| d.as_f64())
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fk_solver::Coefficient;
    use crate::geometry::Domain;
    use std::f64::consts::PI;

    #[test]
    fn neumann_eigenfunction() {
        let p = RobinProblem::neumann(Domain::unit_interval(), |x: &[f64]| (PI * x[0]).cos(), 0.3);
        let sol = fd_oracle(&p, &FdOptions::default()).unwrap();
        for &x in &[0.0, 0.2, 0.5, 0.9, 1.0] {
            let exact = (-PI * PI * 0.3 / 2.0).exp() * (PI * x).cos();
            assert!((sol.value_at(&[x]) - exact).abs() < 1e-4, "{x}");
        }
    }

    #[test]
    fn constants_are_preserved() {
        let p = RobinProblem::neumann(Domain::unit_square(), |_: &[f64]| 1.0, 0.5);
        let sol = solve_on_grid(&p, 16).unwrap();
        assert!(sol.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn square_eigenfunction() {
        let f = |x: &[f64]| (PI * x[0]).cos() * (PI * x[1]).cos();
        let p = RobinProblem::neumann(Domain::unit_square(), f, 0.1);
        let sol = fd_oracle(&p, &FdOptions::default()).unwrap();
        let exact = (-PI * PI * 0.1).exp() * f(&[0.2, 0.7]);
        assert!((sol.value_at(&[0.2, 0.7]) - exact).abs() < 2e-4);
    }

    #[test]
    fn boundary_source_converges_at_second_order() {
        let p = RobinProblem::neumann(Domain::unit_interval(), |_: &[f64]| 0.0, 0.5).with_h(Coefficient::Constant(1.0));
        let sols: Vec<_> = [32, 64, 128, 256].iter().map(|&n| solve_on_grid(&p, n).unwrap()).collect();
        let d1 = max_abs_diff(&sols[1].restrict(), &sols[0].values);
        let d2 = max_abs_diff(&sols[2].restrict(), &sols[1].values);
        let d3 = max_abs_diff(&sols[3].restrict(), &sols[2].values);
        assert!((d1 / d2 - 4.0).abs() < 0.6, "{}", d1 / d2);
        assert!((d2 / d3 - 4.0).abs() < 0.6, "{}", d2 / d3);
        // The mean of u is driven by the boundary flux: d/dt ∫u = −½ Σ h = −1.
        let mean: f64 = sols[3].values.iter().sum::<f64>() / sols[3].values.len() as f64;
        assert!((mean + 0.5).abs() < 1e-2);
    }

    #[test]
    fn robin_decay_is_monotone() {
        let p = RobinProblem::neumann(Domain::unit_interval(), |_: &[f64]| 1.0, 0.5).with_g(Coefficient::Constant(1.0));
        let sol = fd_oracle(&p, &FdOptions::default()).unwrap();
        let mid = sol.value_at(&[0.5]);
        let edge = sol.value_at(&[0.0]);
        assert!(edge < mid && mid < 1.0 && edge > 0.0);
        assert!(sol.refinement_diffs.last().unwrap() < &1e-4);
    }

    #[test]
    fn polygons_are_rejected() {
        let p = RobinProblem::neumann(Domain::rotated_square(), |_: &[f64]| 1.0, 0.1);
        assert!(matches!(fd_oracle(&p, &FdOptions::default()), Err(Error::UnsupportedDomain(_))));
    }
}
