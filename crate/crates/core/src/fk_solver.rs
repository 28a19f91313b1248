//! Feynman–Kac solution of the heat equation with a Robin boundary condition
//!
//! ```text
//! ∂u/∂t = ½Δu in D,    ∂u/∂n = g u + h on ∂D,    u(0, ·) = f,
//! ```
//!
//! where `n` is the inward normal. The estimator averages
//! `f(ω(t)) e^{-∫_0^t G(t−s, ω(s)) dL^(k)_s} − ∫_0^t H(t−θ, ω(θ)) e^{-∫_0^θ G(t−s, ω(s)) dL^(k)_s} dL^(k)_θ`
//! over walk paths, where `G` and `H` extend `g` and `h` to `D̄` by evaluation
//! at the nearest boundary point.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fd::{fd_oracle, FdOptions};
use crate::geometry::{build_lattice, Domain, LatticeDomain};
use crate::localtime::BoundaryWeights;
use crate::partition::{assign_patches, build_partition, default_alpha, AssignmentMode};
use crate::quadrature::{integrate, QuadOptions};
use crate::scalar::Scalar;
use crate::uniformization::Uniformized;
use crate::walker::{mean_and_se, par_paths, simulate_path, Path, Start, TimeMode, WalkConfig};

pub type SpaceFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
pub type SpaceTimeFn<T> = Arc<dyn Fn(T, &[T]) -> T + Send + Sync>;

/// A boundary coefficient `g(t, x)` or `h(t, x)`.
#[derive(Clone)]
pub enum Coefficient<T> {
    Constant(T),
    Space(SpaceFn<T>),
    SpaceTime(SpaceTimeFn<T>),
}

impl<T: Scalar> Coefficient<T> {
    pub fn zero() -> Self {
        Self::Constant(T::zero())
    }

    pub fn space(f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Self::Space(Arc::new(f))
    }

    pub fn space_time(f: impl Fn(T, &[T]) -> T + Send + Sync + 'static) -> Self {
        Self::SpaceTime(Arc::new(f))
    }

    pub fn eval(&self, t: T, x: &[T]) -> T {
        match self {
            Self::Constant(c) => *c,
            Self::Space(f) => f(x),
            Self::SpaceTime(f) => f(t, x),
        }
    }

    pub fn is_time_constant(&self) -> bool {
        !matches!(self, Self::SpaceTime(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Constant(c) if *c == T::zero())
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for Coefficient<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c:?})"),
            Self::Space(_) => f.write_str("Space(..)"),
            Self::SpaceTime(_) => f.write_str("SpaceTime(..)"),
        }
    }
}

/// Heat equation on `domain` with Robin data `(g, h)` and initial value `f`.
#[derive(Clone)]
pub struct RobinProblem<T> {
    pub domain: Domain<T>,
    pub initial: SpaceFn<T>,
    pub g: Coefficient<T>,
    pub h: Coefficient<T>,
    pub horizon: T,
}

impl<T: Scalar> RobinProblem<T> {
    /// Pure Neumann problem `g = h = 0`.
    pub fn neumann(domain: Domain<T>, initial: impl Fn(&[T]) -> T + Send + Sync + 'static, horizon: T) -> Self {
        Self { domain, initial: Arc::new(initial), g: Coefficient::zero(), h: Coefficient::zero(), horizon }
    }

    pub fn with_g(mut self, g: Coefficient<T>) -> Self {
        self.g = g;
        self
    }

    pub fn with_h(mut self, h: Coefficient<T>) -> Self {
        self.h = h;
        self
    }

    pub fn with_horizon(mut self, horizon: T) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= T::zero()) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be finite and nonnegative, got {}", self.horizon)));
        }
        Ok(())
    }
}

/// Walk family used to discretize the problem.
#[derive(Clone)]
pub enum WalkerSpec<T> {
    Simple,
    /// Biased walk with diffusivity `a` and drift potential `h`.
    Biased { a: SpaceFn<T>, h: SpaceFn<T> },
}

/// Walk, boundary weights and boundary projections at one lattice level.
pub struct FkDiscretization<T> {
    config: WalkConfig<T>,
    weights: BoundaryWeights<T>,
    anchors: Vec<Vec<T>>,
}

impl<T: Scalar> FkDiscretization<T> {
    /// Builds the lattice, partition and assignment at level `k`.
    pub fn build(domain: &Domain<T>, k: u32, walker: &WalkerSpec<T>, mode: TimeMode, assignment: AssignmentMode) -> Result<Self> {
        let lattice = Arc::new(build_lattice(domain, k)?);
        let config = match walker {
            WalkerSpec::Simple => WalkConfig::simple(lattice, mode),
            WalkerSpec::Biased { a, h } => WalkConfig::biased(lattice, mode, |x| a(x), |x| h(x))?,
        };
        let partition = build_partition(domain, k)?;
        let assignment = assign_patches(&partition, config.lattice(), default_alpha(domain), assignment)?;
        let weights = BoundaryWeights::new(&assignment, config.lattice())?;
        Ok(Self::from_parts(domain, config, weights))
    }

    pub fn from_parts(domain: &Domain<T>, config: WalkConfig<T>, weights: BoundaryWeights<T>) -> Self {
        let lattice = config.lattice();
        let anchors = (0..lattice.len())
            .map(|z| {
                if weights.slope(z) > T::zero() {
                    domain.project_to_boundary(lattice.position(z))
                } else {
                    lattice.position(z).to_vec()
                }
            })
            .collect();
        Self { config, weights, anchors }
    }

    pub fn config(&self) -> &WalkConfig<T> {
        &self.config
    }

    pub fn weights(&self) -> &BoundaryWeights<T> {
        &self.weights
    }

    pub fn lattice(&self) -> &LatticeDomain<T> {
        self.config.lattice()
    }

    /// Boundary point where `G` and `H` are evaluated for `site`.
    pub fn anchor(&self, site: usize) -> &[T] {
        &self.anchors[site]
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub se: f64,
    pub paths: usize,
}

/// Feynman–Kac functional of a single path.
pub fn path_functional<T: Scalar>(problem: &RobinProblem<T>, disc: &FkDiscretization<T>, path: &Path<T>) -> T {
    let t = problem.horizon;
    let opts = QuadOptions::new(T::zero(), T::lit(1e-10).max(T::epsilon() * T::lit(64.0)));
    let mut exponent = T::zero();
    let mut source = T::zero();
    let with_source = !problem.h.is_zero();
    for seg in path.segments() {
        let slope = disc.weights.slope(seg.site);
        let dur = seg.duration();
        if slope == T::zero() || dur <= T::zero() {
            continue;
        }
        let y = disc.anchor(seg.site);
        if problem.g.is_time_constant() {
            let gamma = slope * problem.g.eval(T::zero(), y);
            if with_source {
                let base = (-exponent).exp();
                source = source
                    + if problem.h.is_time_constant() {
                        slope * problem.h.eval(T::zero(), y) * base * decay_integral(gamma, dur)
                    } else {
                        let r = integrate(
                            |s| problem.h.eval(t - s, y) * (-gamma * (s - seg.start)).exp(),
                            seg.start,
                            seg.end,
                            opts,
                        );
                        slope * base * r.value
                    };
            }
            exponent = exponent + gamma * dur;
        } else {
            let rate = |s: T| slope * problem.g.eval(t - s, y);
            if with_source {
                let partial = |s: T| integrate(rate, seg.start, s, opts).value;
                let r = integrate(
                    |s| problem.h.eval(t - s, y) * (-(exponent + partial(s))).exp(),
                    seg.start,
                    seg.end,
                    opts,
                );
                source = source + slope * r.value;
            }
            exponent = exponent + integrate(rate, seg.start, seg.end, opts).value;
        }
    }
    let end = disc.lattice().position(path.end_site());
    (problem.initial)(end) * (-exponent).exp() - source
}

/// `∫_0^r e^{-γu} du`.
fn decay_integral<T: Scalar>(gamma: T, r: T) -> T {
    let x = gamma * r;
    if x.abs() < T::lit(1e-8) {
        r * (T::one() - x / T::lit(2.0))
    } else {
        -(-x).exp_m1() / gamma
    }
}

/// Monte Carlo estimate of `u_k(t, x_k)` from `paths` walks started at `site`.
pub fn estimate_u<T: Scalar>(
    problem: &RobinProblem<T>,
    disc: &FkDiscretization<T>,
    site: usize,
    paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    problem.validate()?;
    if site >= disc.lattice().len() {
        return Err(Error::InvalidArgument(format!("site {site} out of range")));
    }
    if paths == 0 {
        return Err(Error::InvalidArgument("path count must be positive".into()));
    }
    if problem.domain.dim() != disc.lattice().dim() {
        return Err(Error::InvalidArgument("problem and lattice dimensions differ".into()));
    }
    let values = par_paths(paths, |i| {
        let path = simulate_path(&disc.config, Start::Site(site), problem.horizon, seed, i);
        path_functional(problem, disc, &path).as_f64()
    });
    let (estimate, se) = mean_and_se(&values);
    Ok(McEstimate { estimate, se, paths })
}

/// Exact value of the discrete functional's expectation,
/// `P^V(t) f − ∫_0^t P^V(s) c ds` with killing `V = G ½σ_k/m_k` and source
/// `c = H ½σ_k/m_k`. Needs time-constant nonnegative `G`, time-constant `H`
/// and a continuous-time walk.
pub fn exact_u<T: Scalar>(problem: &RobinProblem<T>, disc: &FkDiscretization<T>) -> Result<Vec<T>> {
    problem.validate()?;
    if !problem.g.is_time_constant() || !problem.h.is_time_constant() {
        return Err(Error::Unsupported("exact discrete values need time-constant boundary data".into()));
    }
    if disc.config.mode() != TimeMode::Continuous {
        return Err(Error::Unsupported("exact discrete values need the continuous-time walk".into()));
    }
    let lattice = disc.lattice();
    let n = lattice.len();
    let mut killing = vec![T::zero(); n];
    let mut source = vec![T::zero(); n];
    for z in 0..n {
        let s = disc.weights.slope(z);
        if s > T::zero() {
            killing[z] = s * problem.g.eval(T::zero(), disc.anchor(z));
            source[z] = s * problem.h.eval(T::zero(), disc.anchor(z));
        }
    }
    if killing.iter().any(|&v| v < T::zero()) {
        return Err(Error::Unsupported("exact discrete values need g >= 0".into()));
    }
    let u = Uniformized::with_killing(disc.config.chain(), Some(&killing));
    let f: Vec<T> = (0..n).map(|z| (problem.initial)(lattice.position(z))).collect();
    let mut out = u.propagate(&f, problem.horizon);
    if source.iter().any(|&v| v != T::zero()) {
        let integral = u.integrate(&source, problem.horizon);
        for (o, i) in out.iter_mut().zip(integral) {
            *o = *o - i;
        }
    }
    Ok(out)
}

/// One level of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: u32,
    pub site: usize,
    pub position: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
    /// Exact discrete expectation when available.
    pub exact_discrete: Option<f64>,
    pub oracle: Option<f64>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub target: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
    /// Errors are nonincreasing up to three combined standard errors.
    pub trend_nonincreasing: bool,
}

/// Runs [`estimate_u`] at each level in `ks` from the site nearest `target`
/// and compares with the finite-difference oracle (simple walks on intervals
/// and boxes) and with the exact discrete expectation.
pub fn convergence_study<T: Scalar>(
    problem: &RobinProblem<T>,
    walker: &WalkerSpec<T>,
    ks: &[u32],
    target: &[T],
    paths: usize,
    seed: u64,
) -> Result<ConvergenceTable> {
    let oracle = match (walker, problem.domain.kind()) {
        (WalkerSpec::Simple, crate::geometry::DomainKind::Interval { .. } | crate::geometry::DomainKind::Box { .. }) => {
            Some(fd_oracle(problem, &FdOptions::default())?.value_at(target).as_f64())
        }
        _ => None,
    };
    convergence_study_with(problem, ks, target, paths, seed, oracle, |k| {
        FkDiscretization::build(&problem.domain, k, walker, TimeMode::Continuous, AssignmentMode::NearestSingle)
    })
}

/// [`convergence_study`] with a caller-supplied oracle value and
/// discretization for each level.
pub fn convergence_study_with<T: Scalar>(
    problem: &RobinProblem<T>,
    ks: &[u32],
    target: &[T],
    paths: usize,
    seed: u64,
    oracle: Option<f64>,
    build: impl Fn(u32) -> Result<FkDiscretization<T>>,
) -> Result<ConvergenceTable> {
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let disc = build(k)?;
        let site = disc.lattice().nearest_site(target);
        let est = estimate_u(problem, &disc, site, paths, seed)?;
        let exact_discrete = match exact_u(problem, &disc) {
            Ok(v) => Some(v[site].as_f64()),
            Err(Error::Unsupported(_)) => None,
            Err(e) => return Err(e),
        };
        let abs_error = oracle.map(|o| (est.estimate - o).abs());
        let rel_error = oracle.and_then(|o| abs_error.map(|e| e / o.abs().max(f64::MIN_POSITIVE)));
        rows.push(ConvergenceRow {
            k,
            site,
            position: disc.lattice().position(site).iter().map(|v| v.as_f64()).collect(),
            estimate: est.estimate,
            se: est.se,
            exact_discrete,
            oracle,
            abs_error,
            rel_error,
        });
    }
    let trend_nonincreasing = rows.windows(2).all(|w| match (w[0].abs_error, w[1].abs_error) {
        (Some(a), Some(b)) => b <= a + 3.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt(),
        _ => true,
    });
    Ok(ConvergenceTable { target: target.iter().map(|v| v.as_f64()).collect(), rows, trend_nonincreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::transition_row;

    fn interval_disc(k: u32) -> FkDiscretization<f64> {
        FkDiscretization::build(&Domain::unit_interval(), k, &WalkerSpec::Simple, TimeMode::Continuous, AssignmentMode::NearestSingle)
            .unwrap()
    }

    #[test]
    fn trivial_problem_has_unit_weights() {
        let disc = interval_disc(4);
        let p = RobinProblem::neumann(Domain::unit_interval(), |_| 1.0, 0.5);
        let e = estimate_u(&p, &disc, 3, 500, 1).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn neumann_matches_kernel_row() {
        let disc = interval_disc(4);
        let f = |x: &[f64]| (std::f64::consts::PI * x[0]).cos();
        let p = RobinProblem::neumann(Domain::unit_interval(), f, 0.3);
        let site = 5;
        let row = transition_row(disc.config(), 0.3, site);
        let lat = disc.lattice();
        let expect: f64 = (0..lat.len()).map(|y| row[y] * f(lat.position(y)) * lat.measure(y)).sum();
        let exact = exact_u(&p, &disc).unwrap()[site];
        assert!((exact - expect).abs() < 1e-10);
        let e = estimate_u(&p, &disc, site, 20_000, 5).unwrap();
        assert!((e.estimate - expect).abs() < 3.0 * e.se, "{e:?} {expect}");
    }

    #[test]
    fn killing_weights_stay_in_range() {
        let disc = interval_disc(3);
        let p = RobinProblem::neumann(Domain::unit_interval(), |x| x[0], 0.5).with_g(Coefficient::Constant(2.0));
        for i in 0..200 {
            let path = simulate_path(disc.config(), Start::Site(2), 0.5, 9, i);
            let v = path_functional(&p, &disc, &path);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn robin_monte_carlo_matches_exact() {
        let disc = interval_disc(4);
        let p = RobinProblem::neumann(Domain::unit_interval(), |_| 1.0, 0.5)
            .with_g(Coefficient::Constant(1.0))
            .with_h(Coefficient::space(|x| 0.5 + x[0]));
        let exact = exact_u(&p, &disc).unwrap()[8];
        let e = estimate_u(&p, &disc, 8, 20_000, 11).unwrap();
        assert!((e.estimate - exact).abs() < 3.0 * e.se, "{e:?} {exact}");
    }

    #[test]
    fn time_reversal_is_invisible_for_constant_data() {
        let disc = interval_disc(3);
        let constant = RobinProblem::neumann(Domain::unit_interval(), |_| 1.0, 0.4)
            .with_g(Coefficient::Constant(1.5))
            .with_h(Coefficient::Constant(0.25));
        let wrapped = constant
            .clone()
            .with_g(Coefficient::space_time(|_, _| 1.5))
            .with_h(Coefficient::space_time(|_, _| 0.25));
        for i in 0..50 {
            let path = simulate_path(disc.config(), Start::Site(1), 0.4, 3, i);
            let a = path_functional(&constant, &disc, &path);
            let b = path_functional(&wrapped, &disc, &path);
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn time_argument_is_reversed() {
        // With G(t, x) = t, a dwell on [s0, s1] contributes ∫ (T − s) ds.
        let disc = interval_disc(3);
        let p = RobinProblem::neumann(Domain::unit_interval(), |_| 1.0, 1.0).with_g(Coefficient::space_time(|t, _| t));
        let path = Path { jump_times: vec![0.25], sites: vec![0, 1], horizon: 1.0 };
        let slope = disc.weights().slope(0);
        let expect = (-slope * (1.0 * 0.25 - 0.25 * 0.25 / 2.0)).exp();
        assert!((path_functional(&p, &disc, &path) - expect).abs() < 1e-12);
    }
}
