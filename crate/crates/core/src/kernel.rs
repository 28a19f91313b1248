//! Exact discrete transition densities, continuum reference kernels and
//! empirical checks of the heat-kernel estimates.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Domain, DomainKind};
use crate::scalar::{dist2, Scalar};
use crate::uniformization::Uniformized;
use crate::walker::{par_paths, simulate_path, JumpChain, Start, TimeMode, WalkConfig};

/// Default limit on the number of sites for dense matrices.
pub const DEFAULT_SITE_CAP: usize = 20_000;

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::TooManySites { sites: n, cap })
    } else {
        Ok(())
    }
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Builds the matrix from its columns.
    fn from_columns(n: usize, columns: Vec<Vec<T>>) -> Self {
        let mut m = Self::zeros(n);
        for (j, col) in columns.into_iter().enumerate() {
            for (i, v) in col.into_iter().enumerate() {
                m.data[i * n + j] = v;
            }
        }
        m
    }
}

/// Generator `Q` with `Q(x, y) = rate(x) p_xy` and `Q(x, x) = −rate(x)`.
pub fn generator_matrix<T: Scalar>(config: &WalkConfig<T>, cap: usize) -> Result<DenseMatrix<T>> {
    let chain = config.chain();
    let n = chain.len();
    check_cap(n, cap)?;
    let mut q = DenseMatrix::zeros(n);
    for x in 0..n {
        let (targets, probs) = chain.row(x);
        for (&y, &p) in targets.iter().zip(probs) {
            q.set(x, y, chain.rate(x) * p);
        }
        q.set(x, x, -chain.rate(x));
    }
    Ok(q)
}

/// Dense table of `p(t, x, y) = P^x(X_t = y) / m(y)`.
#[derive(Debug, Clone)]
pub struct DiscreteKernel<T> {
    level: u32,
    time: T,
    density: DenseMatrix<T>,
    measure: Vec<T>,
}

/// `e^{tQ}` column by column in parallel; for discrete-time walks the
/// `s`-step power with `s = round(t · rate)`.
pub fn transition_density<T: Scalar>(config: &WalkConfig<T>, t: T, cap: usize) -> Result<DiscreteKernel<T>> {
    let chain = config.chain();
    let n = chain.len();
    check_cap(n, cap)?;
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument(format!("kernel time must be positive, got {t}")));
    }
    let columns: Vec<Vec<T>> = match config.mode() {
        TimeMode::Continuous => {
            let u = Uniformized::new(chain);
            (0..n).into_par_iter().map(|y| u.propagate(&unit(n, y), t)).collect()
        }
        TimeMode::DiscreteInterpolated => {
            let steps = discrete_steps(chain, t)?;
            (0..n).into_par_iter().map(|y| step_power(chain, &unit(n, y), steps)).collect()
        }
    };
    Ok(finish_kernel(config, t, n, columns))
}

/// Parity average `½ (P^s + P^{s+1}) / m` of the discrete-time kernel, which
/// removes the period-two oscillation of walks on bipartite lattices.
pub fn parity_averaged_density<T: Scalar>(config: &WalkConfig<T>, t: T, cap: usize) -> Result<DiscreteKernel<T>> {
    let chain = config.chain();
    let n = chain.len();
    check_cap(n, cap)?;
    let steps = discrete_steps(chain, t)?;
    let half = T::lit(0.5);
    let columns: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|y| {
            let a = step_power(chain, &unit(n, y), steps);
            let b = step_once(chain, &a);
            a.iter().zip(&b).map(|(&u, &v)| half * (u + v)).collect()
        })
        .collect();
    Ok(finish_kernel(config, t, n, columns))
}

fn discrete_steps<T: Scalar>(chain: &JumpChain<T>, t: T) -> Result<usize> {
    let rate = chain.rate(0);
    if chain.rates().iter().any(|&r| r != rate) {
        return Err(Error::Unsupported("step kernels need a constant jump rate".into()));
    }
    Ok((t * rate).round().to_usize().unwrap_or(0))
}

fn finish_kernel<T: Scalar>(config: &WalkConfig<T>, t: T, n: usize, columns: Vec<Vec<T>>) -> DiscreteKernel<T> {
    let measure = config.measure().to_vec();
    let mut density = DenseMatrix::from_columns(n, columns);
    for x in 0..n {
        for y in 0..n {
            let v = density.get(x, y) / measure[y];
            density.set(x, y, v);
        }
    }
    DiscreteKernel { level: config.lattice().level(), time: t, density, measure }
}

fn unit<T: Scalar>(n: usize, i: usize) -> Vec<T> {
    let mut v = vec![T::zero(); n];
    v[i] = T::one();
    v
}

fn step_once<T: Scalar>(chain: &JumpChain<T>, v: &[T]) -> Vec<T> {
    (0..chain.len())
        .map(|x| {
            let (targets, probs) = chain.row(x);
            targets.iter().zip(probs).fold(T::zero(), |acc, (&y, &p)| acc + p * v[y])
        })
        .collect()
}

fn step_power<T: Scalar>(chain: &JumpChain<T>, v: &[T], steps: usize) -> Vec<T> {
    let mut cur = v.to_vec();
    for _ in 0..steps {
        cur = step_once(chain, &cur);
    }
    cur
}

/// One row `y ↦ p(t, x, y)` of the continuous-time kernel.
pub fn transition_row<T: Scalar>(config: &WalkConfig<T>, t: T, x: usize) -> Vec<T> {
    let n = config.chain().len();
    let u = Uniformized::new(config.chain());
    let row = u.propagate_left(&unit(n, x), t);
    row.iter().zip(config.measure()).map(|(&p, &m)| p / m).collect()
}

impl<T: Scalar> DiscreteKernel<T> {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn density(&self, x: usize, y: usize) -> T {
        self.density.get(x, y)
    }

    pub fn row(&self, x: usize) -> &[T] {
        self.density.row(x)
    }

    pub fn measure(&self) -> &[T] {
        &self.measure
    }

    /// `max |p(x, y) − p(y, x)|`.
    pub fn symmetry_error(&self) -> T {
        let n = self.len();
        let mut worst = T::zero();
        for x in 0..n {
            for y in x + 1..n {
                worst = worst.max((self.density(x, y) - self.density(y, x)).abs());
            }
        }
        worst
    }

    /// `max_x |Σ_y p(x, y) m(y) − 1|`.
    pub fn conservation_error(&self) -> T {
        (0..self.len())
            .map(|x| {
                let s: T = self.row(x).iter().zip(&self.measure).map(|(&p, &m)| p * m).sum();
                (s - T::one()).abs()
            })
            .fold(T::zero(), T::max)
    }

    pub fn min_density(&self) -> T {
        (0..self.len()).flat_map(|x| self.row(x).iter().copied()).fold(T::infinity(), T::min)
    }

    /// `(p ∘ q)(x, z) = Σ_y p(x, y) q(y, z) m(y)`.
    pub fn compose(&self, other: &Self) -> DenseMatrix<T> {
        let n = self.len();
        let rows: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|x| {
                let mut out = vec![T::zero(); n];
                for y in 0..n {
                    let w = self.density(x, y) * self.measure[y];
                    for (o, &q) in out.iter_mut().zip(other.row(y)) {
                        *o = *o + w * q;
                    }
                }
                out
            })
            .collect();
        DenseMatrix { n, data: rows.into_iter().flatten().collect() }
    }

    /// `max |p(t+s) − p(t) ∘ p(s)|`, `self` being `p(t+s)`.
    pub fn chapman_kolmogorov_error(&self, first: &Self, second: &Self) -> T {
        let c = first.compose(second);
        let n = self.len();
        (0..n * n).fold(T::zero(), |acc, i| acc.max((c.data[i] - self.density.data[i]).abs()))
    }

    /// `max |p(x, y) − q(x, y)|`.
    pub fn max_difference(&self, other: &Self) -> T {
        self.density
            .data
            .iter()
            .zip(&other.density.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn write_row_csv<W: Write>(&self, x: usize, mut w: W) -> io::Result<()> {
        writeln!(w, "y,density")?;
        for (y, p) in self.row(x).iter().enumerate() {
            writeln!(w, "{y},{p}")?;
        }
        Ok(())
    }
}

/// Neumann heat kernel of `Δ/2` on an interval or a box, with respect to
/// Lebesgue measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceKernel<T> {
    lows: Vec<T>,
    highs: Vec<T>,
}

/// Truncation bound on neglected series or image terms.
const REFERENCE_TAIL: f64 = 1e-10;

impl<T: Scalar> ReferenceKernel<T> {
    pub fn new(domain: &Domain<T>) -> Result<Self> {
        match domain.kind() {
            DomainKind::Interval { a, b } => Ok(Self { lows: vec![*a], highs: vec![*b] }),
            DomainKind::Box { lows, highs } => Ok(Self { lows: lows.clone(), highs: highs.clone() }),
            DomainKind::Polygon { .. } => {
                Err(Error::UnsupportedDomain("no closed-form reference kernel for polygons".into()))
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.lows.len()
    }

    pub fn volume(&self) -> T {
        self.lows.iter().zip(&self.highs).fold(T::one(), |acc, (l, h)| acc * (*h - *l))
    }

    /// `p(t, x, y)` as a product of one-dimensional kernels.
    pub fn density(&self, t: T, x: &[T], y: &[T]) -> T {
        (0..self.dim()).fold(T::one(), |acc, i| {
            let len = self.highs[i] - self.lows[i];
            acc * interval_kernel(len, t, x[i] - self.lows[i], y[i] - self.lows[i])
        })
    }

    /// One-dimensional factor along `axis`.
    pub fn axis_density(&self, axis: usize, t: T, x: T, y: T) -> T {
        let len = self.highs[axis] - self.lows[axis];
        interval_kernel(len, t, x - self.lows[axis], y - self.lows[axis])
    }

    pub fn side(&self, axis: usize) -> T {
        self.highs[axis] - self.lows[axis]
    }

    pub fn low(&self, axis: usize) -> T {
        self.lows[axis]
    }
}

/// Number of cosine terms needed for a tail below `tol` on `(0, len)`.
pub fn series_terms<T: Scalar>(len: T, t: T, tol: T) -> usize {
    let a = T::PI() * T::PI() * t / (T::lit(2.0) * len * len);
    let lead = T::lit(2.0) / len;
    let mut n = 1usize;
    loop {
        let m = T::count(n + 1);
        let bound = lead * (-m * m * a).exp() / (T::one() - (-(T::lit(2.0) * m + T::one()) * a).exp());
        if bound < tol || n > 1_000_000 {
            return n;
        }
        n += 1;
    }
}

/// Cosine series with `terms` terms for the Neumann kernel on `(0, len)`.
pub fn interval_series<T: Scalar>(len: T, t: T, x: T, y: T, terms: usize) -> T {
    let a = T::PI() * T::PI() * t / (T::lit(2.0) * len * len);
    let mut s = T::zero();
    for n in 1..=terms {
        let nf = T::count(n);
        let w = nf * T::PI() / len;
        s = s + (-nf * nf * a).exp() * (w * x).cos() * (w * y).cos();
    }
    (T::one() + T::lit(2.0) * s) / len
}

/// Method of images for the Neumann kernel on `(0, len)`.
pub fn interval_images<T: Scalar>(len: T, t: T, x: T, y: T) -> T {
    let norm = T::one() / (T::lit(2.0) * T::PI() * t).sqrt();
    let g = |z: T| norm * (-z * z / (T::lit(2.0) * t)).exp();
    let two_l = T::lit(2.0) * len;
    let mut s = g(x - y) + g(x + y);
    let mut n = 1i64;
    loop {
        let nf = T::from_i64(n).expect("index") * two_l;
        let terms = g(x - y + nf) + g(x + y + nf) + g(x - y - nf) + g(x + y - nf);
        s = s + terms;
        if terms < T::lit(REFERENCE_TAIL * 1e-3) * norm || n > 10_000 {
            return s;
        }
        n += 1;
    }
}

/// Neumann kernel on `(0, len)`, choosing images for short times.
pub fn interval_kernel<T: Scalar>(len: T, t: T, x: T, y: T) -> T {
    if t <= T::lit(0.1) * len * len {
        interval_images(len, t, x, y)
    } else {
        interval_series(len, t, x, y, series_terms(len, t, T::lit(REFERENCE_TAIL)))
    }
}

/// Reference kernel at the level-`k` site positions.
fn reference_table<T: Scalar>(config: &WalkConfig<T>, reference: &ReferenceKernel<T>, t: T) -> Vec<T> {
    let lat = config.lattice();
    let n = lat.len();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|x| (0..n).map(move |y| reference.density(t, lat.position(x), lat.position(y))))
        .collect()
}

/// `sup_{x,y} |p^(k)(t, x, y) − p(t, x, y)|`.
pub fn llt_error<T: Scalar>(config: &WalkConfig<T>, domain: &Domain<T>, t: T) -> Result<T> {
    let reference = ReferenceKernel::new(domain)?;
    let kernel = transition_density(config, t, DEFAULT_SITE_CAP)?;
    Ok(llt_error_of(&kernel, config, &reference))
}

pub fn llt_error_of<T: Scalar>(kernel: &DiscreteKernel<T>, config: &WalkConfig<T>, reference: &ReferenceKernel<T>) -> T {
    let table = reference_table(config, reference, kernel.time());
    kernel
        .density
        .data
        .iter()
        .zip(&table)
        .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
}

/// `sup_x ε^{d−1} Σ_{y ∈ S} p(t, x, y)` for a set of sites `S`, evaluated as
/// one semigroup application to `1_S / m`.
pub fn boundary_sum<T: Scalar>(config: &WalkConfig<T>, t: T, sites: &[usize]) -> T {
    let lat = config.lattice();
    let n = lat.len();
    let mut g = vec![T::zero(); n];
    for &y in sites {
        g[y] = T::one() / config.measure()[y];
    }
    let u = Uniformized::new(config.chain());
    let v = u.propagate(&g, t);
    let scale = lat.spacing().powi(lat.dim() as i32 - 1);
    v.into_iter().fold(T::zero(), T::max) * scale
}

/// Graph-boundary variant of [`boundary_sum`].
pub fn graph_boundary_sum<T: Scalar>(config: &WalkConfig<T>, t: T) -> T {
    boundary_sum(config, t, &config.lattice().boundary_sites())
}

/// Settings for [`verify_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsOptions<T> {
    /// Exponent `C₂` in the upper envelope `exp(−C₂|x−y|²/t)`.
    pub upper_exponent: T,
    /// Exponent in the lower envelope.
    pub lower_exponent: T,
    /// Hölder exponents `(α, β)` used in the quotient.
    pub holder: (T, T),
    /// Exit-time Monte Carlo: number of paths, probe time and radii.
    pub exit_paths: usize,
    pub exit_time: T,
    pub exit_radii: Vec<T>,
    pub seed: u64,
}

impl<T: Scalar> Default for BoundsOptions<T> {
    fn default() -> Self {
        Self {
            upper_exponent: T::lit(0.25),
            lower_exponent: T::lit(2.0),
            holder: (T::one(), T::one()),
            exit_paths: 4000,
            exit_time: T::lit(0.01),
            exit_radii: [0.05, 0.1, 0.15, 0.2, 0.25, 0.3].iter().map(|&r| T::lit(r)).collect(),
            seed: 7,
        }
    }
}

/// Empirical constants of the heat-kernel estimates at one level.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundsReport {
    pub level: u32,
    /// `max p (ε ∨ √t)^d exp(C₂|x−y|²/t)` over the grid with `t ≥ ε`.
    pub upper_constant: f64,
    /// `min p (ε ∨ √t)^d exp(C₂'|x−y|²/t)` over the grid.
    pub lower_constant: f64,
    /// `max |p(t,x,y) − p(t,x',y)| t^{(d+β)/2} / |x−x'|^α` over neighbor pairs.
    pub holder_constant: f64,
    /// Least-squares fit `ln P(sup|X−x| ≥ η) ≈ a + b η/(√t ∨ ε)`.
    pub exit_slope: f64,
    pub exit_intercept: f64,
}

/// Computes the empirical constants for one walk over a time grid.
pub fn verify_bounds<T: Scalar>(config: &WalkConfig<T>, t_grid: &[T], opts: &BoundsOptions<T>) -> Result<BoundsReport> {
    let lat = config.lattice();
    let d = lat.dim() as i32;
    let eps = lat.spacing();
    let n = lat.len();
    let mut upper = T::zero();
    let mut lower = T::infinity();
    let mut holder = T::zero();
    let (alpha, beta) = opts.holder;
    for &t in t_grid {
        let kernel = transition_density(config, t, DEFAULT_SITE_CAP)?;
        let scale = eps.max(t.sqrt()).powi(d);
        for x in 0..n {
            for y in 0..n {
                let r2 = dist2(lat.position(x), lat.position(y));
                let p = kernel.density(x, y) * scale;
                if t >= eps {
                    upper = upper.max(p * (opts.upper_exponent * r2 / t).exp());
                }
                lower = lower.min(p * (opts.lower_exponent * r2 / t).exp());
            }
            for x2 in lat.neighbors(x) {
                let gap = dist2(lat.position(x), lat.position(x2)).sqrt();
                let denom = gap.powf(alpha) / t.powf((T::count(d as usize) + beta) / T::lit(2.0));
                for y in 0..n {
                    holder = holder.max((kernel.density(x, y) - kernel.density(x2, y)).abs() / denom);
                }
            }
        }
    }
    let (slope, intercept) = exit_time_fit(config, opts)?;
    Ok(BoundsReport {
        level: lat.level(),
        upper_constant: upper.as_f64(),
        lower_constant: lower.as_f64(),
        holder_constant: holder.as_f64(),
        exit_slope: slope,
        exit_intercept: intercept,
    })
}

/// Largest upper exponent among `candidates` whose constants stay within a
/// factor two across the given levels, with those constants.
pub fn select_upper_exponent<T: Scalar>(
    configs: &[&WalkConfig<T>],
    t_grid: &[T],
    candidates: &[T],
) -> Result<Option<(T, Vec<f64>)>> {
    let kernels: Vec<Vec<DiscreteKernel<T>>> = configs
        .iter()
        .map(|c| t_grid.iter().map(|&t| transition_density(c, t, DEFAULT_SITE_CAP)).collect())
        .collect::<Result<_>>()?;
    let mut best = None;
    for &c2 in candidates {
        let consts: Vec<f64> = configs
            .iter()
            .zip(&kernels)
            .map(|(cfg, ks)| {
                let lat = cfg.lattice();
                let eps = lat.spacing();
                let mut worst = T::zero();
                for k in ks.iter().filter(|k| k.time() >= eps) {
                    let t = k.time();
                    let scale = eps.max(t.sqrt()).powi(lat.dim() as i32);
                    for x in 0..lat.len() {
                        for y in 0..lat.len() {
                            let r2 = dist2(lat.position(x), lat.position(y));
                            worst = worst.max(k.density(x, y) * scale * (c2 * r2 / t).exp());
                        }
                    }
                }
                worst.as_f64()
            })
            .collect();
        let (mn, mx) = consts.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
        if mx.is_finite() && mx <= 2.0 * mn {
            best = Some((c2, consts));
        }
    }
    Ok(best)
}

fn exit_time_fit<T: Scalar>(config: &WalkConfig<T>, opts: &BoundsOptions<T>) -> Result<(f64, f64)> {
    let lat = config.lattice();
    let center: Vec<T> = {
        let n = lat.len();
        let d = lat.dim();
        (0..d)
            .map(|i| (0..n).map(|s| lat.position(s)[i]).sum::<T>() / T::count(n))
            .collect()
    };
    let x0 = lat.nearest_site(&center);
    let t = opts.exit_time;
    let scale = t.sqrt().max(lat.spacing()).as_f64();
    let excursions: Vec<f64> = par_paths(opts.exit_paths, |i| {
        let path = simulate_path(config, Start::Site(x0), t, opts.seed, i);
        path.sites
            .iter()
            .map(|&s| dist2(lat.position(s), lat.position(x0)).sqrt().as_f64())
            .fold(0.0, f64::max)
    });
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &eta in &opts.exit_radii {
        let eta = eta.as_f64();
        let hits = excursions.iter().filter(|&&e| e >= eta).count();
        if hits >= 10 {
            xs.push(eta / scale);
            ys.push((hits as f64 / excursions.len() as f64).ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::NoConvergence("too few exit events for a regression".into()));
    }
    Ok(linear_fit(&xs, &ys))
}

/// Ordinary least squares `y ≈ a + b x`, returned as `(b, a)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_lattice;
    use std::sync::Arc;

    fn config(domain: &Domain<f64>, k: u32, mode: TimeMode) -> WalkConfig<f64> {
        WalkConfig::simple(Arc::new(build_lattice(domain, k).unwrap()), mode)
    }

    #[test]
    fn generator_rows() {
        let cfg = config(&Domain::unit_interval(), 2, TimeMode::Continuous);
        let q = generator_matrix(&cfg, DEFAULT_SITE_CAP).unwrap();
        assert_eq!(q.row(0), &[-16.0, 16.0, 0.0]);
        assert_eq!(q.row(1), &[8.0, -16.0, 8.0]);
        for x in 0..3 {
            assert!(q.row(x).iter().sum::<f64>().abs() < 1e-12);
        }
        assert!(matches!(generator_matrix(&cfg, 2), Err(Error::TooManySites { .. })));
    }

    #[test]
    fn kernel_invariants_on_square() {
        let cfg = config(&Domain::unit_square(), 3, TimeMode::Continuous);
        let p1 = transition_density(&cfg, 0.05, DEFAULT_SITE_CAP).unwrap();
        let p2 = transition_density(&cfg, 0.1, DEFAULT_SITE_CAP).unwrap();
        let p3 = transition_density(&cfg, 0.15, DEFAULT_SITE_CAP).unwrap();
        assert!(p1.symmetry_error() < 1e-10);
        assert!(p1.conservation_error() < 1e-10);
        assert!(p1.min_density() > 0.0);
        assert!(p3.chapman_kolmogorov_error(&p1, &p2) < 1e-8);
    }

    #[test]
    fn ergodic_limit() {
        let cfg = config(&Domain::unit_interval(), 3, TimeMode::Continuous);
        let p = transition_density(&cfg, 5.0, DEFAULT_SITE_CAP).unwrap();
        let total: f64 = cfg.measure().iter().sum();
        for x in 0..p.len() {
            for &v in p.row(x) {
                assert!((v - 1.0 / total).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reference_series_self_consistency() {
        let a = interval_series::<f64>(1.0, 0.5, 0.25, 0.75, 50);
        let b = interval_series::<f64>(1.0, 0.5, 0.25, 0.75, 200);
        assert!((a - b).abs() < 1e-12);
        let img = interval_images::<f64>(1.0, 0.5, 0.25, 0.75);
        assert!((a - img).abs() < 1e-10);
        assert!((interval_kernel::<f64>(1.0, 50.0, 0.1, 0.9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_kernel_integrates_to_one() {
        use crate::quadrature::{integrate, QuadOptions};
        for &t in &[0.01, 0.2, 1.0] {
            let r = integrate(|y| interval_kernel::<f64>(1.0, t, 0.3, y), 0.0, 1.0, QuadOptions::new(1e-12, 1e-12));
            assert!((r.value - 1.0).abs() < 1e-8, "{t}");
        }
        assert!(ReferenceKernel::new(&Domain::<f64>::rotated_square()).is_err());
    }

    #[test]
    fn llt_on_interval_matches_expm_oracle() {
        // Frozen from a dense matrix exponential and a 400-term cosine series.
        let d = Domain::unit_interval();
        for (k, expect) in [(3, 0.4414036394), (4, 0.2136155433)] {
            let e = llt_error(&config(&d, k, TimeMode::Continuous), &d, 0.5).unwrap();
            assert!((e - expect).abs() < 1e-8, "k={k} e={e}");
        }
    }

    #[test]
    fn step_kernel_parity() {
        let d = Domain::unit_interval();
        let cfg = config(&d, 4, TimeMode::DiscreteInterpolated);
        let p = transition_density(&cfg, 0.5, DEFAULT_SITE_CAP).unwrap();
        // Even number of steps: odd-distance pairs carry no mass.
        assert_eq!(p.density(0, 1), 0.0);
        let avg = parity_averaged_density(&cfg, 0.5, DEFAULT_SITE_CAP).unwrap();
        assert!(avg.conservation_error() < 1e-12);
        assert!(avg.min_density() > 0.0);
    }

    #[test]
    fn boundary_sum_ergodic_value() {
        let cfg = config(&Domain::unit_interval(), 5, TimeMode::Continuous);
        let v = graph_boundary_sum(&cfg, 20.0);
        let total: f64 = cfg.measure().iter().sum();
        assert!((v - 2.0 / total).abs() < 1e-8);
    }

    #[test]
    fn bounds_report_is_finite() {
        let cfg = config(&Domain::unit_interval(), 4, TimeMode::Continuous);
        let rep = verify_bounds(&cfg, &[0.1, 0.5], &BoundsOptions { exit_paths: 2000, ..Default::default() }).unwrap();
        assert!(rep.upper_constant.is_finite() && rep.upper_constant > 0.0);
        assert!(rep.lower_constant > 0.0);
        assert!(rep.holder_constant.is_finite());
        assert!(rep.exit_slope < 0.0);
    }
}
