//! Moments of boundary-local-time functionals `∫_a^b f dL`.
//!
//! Discrete moments are evaluated exactly from the uniformized semigroup.
//! Continuum moments for intervals and boxes use the Neumann kernel in
//! product form together with adaptive quadrature in time.

use crate::error::{Error, Result};
use crate::geometry::{BoundaryPiece, Domain, LatticeDomain};
use crate::kernel::{linear_fit, ReferenceKernel};
use crate::localtime::{accumulate, naive_boundary_time, occupation_candidate, window_integral, BoundaryWeights};
use crate::partition::{assign_patches, build_partition, default_alpha, AssignmentMode};
use crate::quadrature::{integrate, QuadOptions};
use crate::scalar::{dot, Scalar};
use crate::uniformization::Uniformized;
use crate::walker::{mean_and_se, par_paths, simulate_path, Start, WalkConfig};

/// Highest supported moment order.
pub const MAX_ORDER: usize = 3;

/// Initial law for moment computations.
#[derive(Debug, Clone, PartialEq)]
pub enum StartLaw<T> {
    Site(usize),
    /// A point of `D̄`; discrete computations use the nearest site.
    Point(Vec<T>),
    /// Normalized symmetrizing measure (discrete) or normalized Lebesgue measure (continuum).
    Stationary,
}

/// Order `ℓ`, window `[a, b]` and starting law of a moment.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSpec<T> {
    pub order: usize,
    pub a: T,
    pub b: T,
    pub start: StartLaw<T>,
}

impl<T: Scalar> MomentSpec<T> {
    pub fn new(order: usize, a: T, b: T, start: StartLaw<T>) -> Result<Self> {
        let spec = Self { order, a, b, start };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(self.order));
        }
        if !(self.a >= T::zero()) || !(self.a <= self.b) {
            return Err(Error::InvalidArgument(format!("window needs 0 <= a <= b, got [{}, {}]", self.a, self.b)));
        }
        Ok(())
    }

    pub fn width(&self) -> T {
        self.b - self.a
    }
}

fn factorial<T: Scalar>(n: usize) -> T {
    (1..=n).fold(T::one(), |acc, i| acc * T::count(i))
}

/// Initial distribution as a row vector over sites.
fn start_vector<T: Scalar>(start: &StartLaw<T>, config: &WalkConfig<T>) -> Vec<T> {
    let n = config.lattice().len();
    match start {
        StartLaw::Site(x) => {
            let mut v = vec![T::zero(); n];
            v[*x] = T::one();
            v
        }
        StartLaw::Point(p) => {
            let mut v = vec![T::zero(); n];
            v[config.lattice().nearest_site(p)] = T::one();
            v
        }
        StartLaw::Stationary => {
            let total: T = config.measure().iter().copied().sum();
            config.measure().iter().map(|&m| m / total).collect()
        }
    }
}

fn start_site<T: Scalar>(start: &StartLaw<T>, lattice: &LatticeDomain<T>) -> Start {
    match start {
        StartLaw::Site(x) => Start::Site(*x),
        StartLaw::Point(p) => Start::Site(lattice.nearest_site(p)),
        StartLaw::Stationary => Start::Stationary,
    }
}

/// Per-site rate `c(z) = f(z) · ½σ_k(z)/m_k(z)` of the functional.
fn rate_vector<T: Scalar>(weights: &BoundaryWeights<T>, lattice: &LatticeDomain<T>, f: &impl Fn(&[T]) -> T) -> Vec<T> {
    (0..lattice.len())
        .map(|z| {
            let s = weights.slope(z);
            if s == T::zero() {
                T::zero()
            } else {
                s * f(lattice.position(z))
            }
        })
        .collect()
}

/// `E[(∫_a^b f(X^(k)_s) dL^(k)_s)^ℓ] = ℓ! (μ P(a)) · F_ℓ(b − a)`.
pub fn exact_moment_discrete<T: Scalar>(
    spec: &MomentSpec<T>,
    weights: &BoundaryWeights<T>,
    config: &WalkConfig<T>,
    f: impl Fn(&[T]) -> T,
) -> Result<T> {
    spec.validate()?;
    let lattice = config.lattice();
    if weights.level() != lattice.level() {
        return Err(Error::MismatchedLevel("weights and walk are at different levels".into()));
    }
    let c = rate_vector(weights, lattice, &f);
    if c.iter().all(|&v| v == T::zero()) || spec.a == spec.b {
        return Ok(T::zero());
    }
    let u = Uniformized::new(config.chain());
    let mu0 = start_vector(&spec.start, config);
    // The stationary law is invariant, so shifting it to time a is a no-op.
    let mu = match spec.start {
        StartLaw::Stationary => mu0,
        _ => u.propagate_left(&mu0, spec.a),
    };
    let f_ell = u.simplex_moment(&c, spec.width(), spec.order);
    Ok(factorial::<T>(spec.order) * dot(&mu, &f_ell))
}

/// First moment through `½ ∫_a^b Σ_z p^(k)(s, x, z) f(z) σ_k(z) ds`, with the
/// time integral done by adaptive quadrature.
pub fn first_moment_direct<T: Scalar>(
    spec: &MomentSpec<T>,
    weights: &BoundaryWeights<T>,
    config: &WalkConfig<T>,
    f: impl Fn(&[T]) -> T,
) -> Result<T> {
    spec.validate()?;
    if spec.order != 1 {
        return Err(Error::UnsupportedOrder(spec.order));
    }
    let lattice = config.lattice();
    let c = rate_vector(weights, lattice, &f);
    let u = Uniformized::new(config.chain());
    let mu = start_vector(&spec.start, config);
    let opts = QuadOptions::new(T::lit(1e-13), T::lit(1e-11));
    let r = integrate(|s| dot(&u.propagate_left(&mu, s), &c), spec.a, spec.b, opts);
    Ok(r.value)
}

/// Boundary data for continuum moments.
#[derive(Clone, Copy)]
pub enum BoundaryData<'a, T> {
    Constant(T),
    /// One value per boundary piece (endpoint or face), in `Domain::boundary_pieces` order.
    PerPiece(&'a [T]),
    General(&'a (dyn Fn(&[T]) -> T + Sync)),
}

struct Face<T> {
    axis: usize,
    value: T,
    measure: T,
    data: T,
}

/// Continuum moment `E[(∫_a^b f(X_s) dL_s)^ℓ]` for reflected Brownian motion
/// on an interval or a box.
///
/// Intervals support all orders up to three. Boxes support `ℓ = 1` for any
/// boundary data and `ℓ = 2` for data constant on each face.
pub fn exact_moment_continuum<T: Scalar>(spec: &MomentSpec<T>, domain: &Domain<T>, f: BoundaryData<'_, T>) -> Result<T> {
    spec.validate()?;
    let reference = ReferenceKernel::new(domain)?;
    let pieces = domain.boundary_pieces();
    let per_face = |i: usize, piece: &BoundaryPiece<T>| -> Option<T> {
        match f {
            BoundaryData::Constant(c) => Some(c),
            BoundaryData::PerPiece(v) => Some(v[i]),
            BoundaryData::General(g) => match piece {
                BoundaryPiece::Point { position } => Some(g(position)),
                _ => None,
            },
        }
    };
    let faces: Option<Vec<Face<T>>> = pieces
        .iter()
        .enumerate()
        .map(|(i, piece)| {
            let data = per_face(i, piece)?;
            Some(match piece {
                BoundaryPiece::Point { position } => Face { axis: 0, value: position[0], measure: T::one(), data },
                BoundaryPiece::Face { axis, value, .. } => Face { axis: *axis, value: *value, measure: piece.measure(), data },
                BoundaryPiece::Edge { .. } => unreachable!("reference kernels exclude polygons"),
            })
        })
        .collect();
    if spec.a == spec.b {
        return Ok(T::zero());
    }
    let volume = reference.volume();
    match (faces, spec.order) {
        (Some(faces), 1) => Ok(first_continuum(spec, &reference, &faces, volume)),
        (Some(faces), 2) => Ok(second_continuum(spec, &reference, &faces, volume)),
        (Some(faces), 3) if reference.dim() == 1 => Ok(interval_moment(spec, &reference, &faces, volume)),
        (None, 1) => {
            let BoundaryData::General(g) = f else { unreachable!() };
            Ok(first_continuum_general(spec, &reference, domain, g, volume))
        }
        (None, order) => Err(Error::Unsupported(format!(
            "continuum moments of order {order} on boxes need boundary data constant on each face"
        ))),
        (Some(_), order) => Err(Error::Unsupported(format!("continuum moments of order {order} on boxes"))),
    }
}

fn time_opts<T: Scalar>() -> QuadOptions<T> {
    QuadOptions { abs_tol: T::lit(1e-11), rel_tol: T::lit(1e-9), max_intervals: 400 }
}

/// `∫_lo^hi g(s) ds` with `s = lo + v²` to absorb `(s − lo)^{-1/2}` singularities.
fn integrate_sqrt<T: Scalar>(g: impl Fn(T) -> T, lo: T, hi: T, opts: QuadOptions<T>) -> T {
    if hi <= lo {
        return T::zero();
    }
    let two = T::lit(2.0);
    integrate(|v: T| two * v * g(lo + v * v), T::zero(), (hi - lo).sqrt(), opts).value
}

fn point_coords<T: Scalar>(start: &StartLaw<T>) -> Option<&[T]> {
    match start {
        StartLaw::Point(p) => Some(p),
        _ => None,
    }
}

fn first_continuum<T: Scalar>(spec: &MomentSpec<T>, kernel: &ReferenceKernel<T>, faces: &[Face<T>], volume: T) -> T {
    let half = T::lit(0.5);
    match point_coords(&spec.start) {
        None => {
            let mass: T = faces.iter().map(|f| f.data * f.measure).sum();
            half * spec.width() * mass / volume
        }
        Some(x) => {
            let opts = time_opts();
            faces
                .iter()
                .map(|face| {
                    let g = |s: T| kernel.axis_density(face.axis, s, x[face.axis], face.value);
                    half * face.data * integrate_sqrt(g, spec.a, spec.b, opts)
                })
                .sum()
        }
    }
}

fn second_continuum<T: Scalar>(spec: &MomentSpec<T>, kernel: &ReferenceKernel<T>, faces: &[Face<T>], volume: T) -> T {
    let opts = time_opts();
    let width = spec.width();
    // 2!/2² = ½.
    let half = T::lit(0.5);
    let x = point_coords(&spec.start);
    let mut total = T::zero();
    for f1 in faces {
        for f2 in faces {
            let weight = f1.data * f2.data;
            if weight == T::zero() {
                continue;
            }
            let same_axis = f1.axis == f2.axis;
            let value = match x {
                None => {
                    let g = |u: T| {
                        let inner = if same_axis {
                            kernel.axis_density(f1.axis, u, f1.value, f2.value)
                        } else {
                            T::one() / kernel.side(f2.axis)
                        };
                        (width - u) * inner
                    };
                    f1.measure / volume * integrate_sqrt(g, T::zero(), width, opts)
                }
                Some(x) => {
                    let outer = |s1: T| {
                        let first = kernel.axis_density(f1.axis, s1, x[f1.axis], f1.value);
                        let inner = |u: T| {
                            if same_axis {
                                kernel.axis_density(f1.axis, u, f1.value, f2.value)
                            } else {
                                kernel.axis_density(f2.axis, s1 + u, x[f2.axis], f2.value)
                            }
                        };
                        first * integrate_sqrt(inner, T::zero(), spec.b - s1, opts)
                    };
                    integrate_sqrt(outer, spec.a, spec.b, opts)
                }
            };
            total = total + weight * value;
        }
    }
    half * total
}

/// Interval moments of any supported order through the recursion
/// `H_j(r, y) = ∫_0^r Σ_{y'} p(u, y, y') f(y') H_{j−1}(r − u, y') du`.
fn interval_moment<T: Scalar>(spec: &MomentSpec<T>, kernel: &ReferenceKernel<T>, faces: &[Face<T>], volume: T) -> T {
    fn h_rec<T: Scalar>(j: usize, r: T, y: T, kernel: &ReferenceKernel<T>, faces: &[Face<T>]) -> T {
        if j == 0 {
            return T::one();
        }
        if r <= T::zero() {
            return T::zero();
        }
        let opts = time_opts();
        integrate_sqrt(
            |u| {
                faces
                    .iter()
                    .map(|f| kernel.axis_density(0, u, y, f.value) * f.data * h_rec(j - 1, r - u, f.value, kernel, faces))
                    .sum()
            },
            T::zero(),
            r,
            opts,
        )
    }
    let ell = spec.order;
    let scale = factorial::<T>(ell) / T::lit(2.0).powi(ell as i32);
    let opts = time_opts();
    let value = match point_coords(&spec.start) {
        None => faces
            .iter()
            .map(|f| {
                let g = |s: T| h_rec(ell - 1, spec.b - s, f.value, kernel, faces);
                f.data * f.measure / volume * integrate(g, spec.a, spec.b, opts).value
            })
            .sum(),
        Some(x) => faces
            .iter()
            .map(|f| {
                let g = |s: T| kernel.axis_density(0, s, x[0], f.value) * h_rec(ell - 1, spec.b - s, f.value, kernel, faces);
                f.data * integrate_sqrt(g, spec.a, spec.b, opts)
            })
            .sum(),
    };
    scale * value
}

fn first_continuum_general<T: Scalar>(
    spec: &MomentSpec<T>,
    kernel: &ReferenceKernel<T>,
    domain: &Domain<T>,
    g: &(dyn Fn(&[T]) -> T + Sync),
    volume: T,
) -> T {
    let half = T::lit(0.5);
    let opts = QuadOptions { abs_tol: T::lit(1e-10), rel_tol: T::lit(1e-8), max_intervals: 200 };
    match point_coords(&spec.start) {
        None => {
            let mass = crate::partition::boundary_integral(domain, g, opts);
            half * spec.width() * mass / volume
        }
        Some(x) => {
            let mut total = T::zero();
            for piece in domain.boundary_pieces() {
                let BoundaryPiece::Face { axis, value, lows, highs } = piece else { continue };
                let free: Vec<usize> = (0..lows.len()).filter(|&i| i != axis).collect();
                let time = |s: T| {
                    let normal = kernel.axis_density(axis, s, x[axis], value);
                    let mut y = vec![value; lows.len()];
                    normal * face_average(kernel, s, x, g, &free, &lows, &highs, &mut y, opts)
                };
                total = total + integrate_sqrt(time, spec.a, spec.b, opts);
            }
            half * total
        }
    }
}

/// `∫ Π_{i free} p_i(s, x_i, y_i) g(y) dy` over the free coordinates of a face.
#[allow(clippy::too_many_arguments)]
fn face_average<T: Scalar>(
    kernel: &ReferenceKernel<T>,
    s: T,
    x: &[T],
    g: &(dyn Fn(&[T]) -> T + Sync),
    free: &[usize],
    lows: &[T],
    highs: &[T],
    y: &mut [T],
    opts: QuadOptions<T>,
) -> T {
    let Some((&i, rest)) = free.split_first() else {
        return g(y);
    };
    let mut scratch = y.to_vec();
    integrate(
        |yi: T| {
            scratch[i] = yi;
            let mut inner = scratch.clone();
            kernel.axis_density(i, s, x[i], yi) * face_average(kernel, s, x, g, rest, lows, highs, &mut inner, opts)
        },
        lows[i],
        highs[i],
        opts,
    )
    .value
}

/// Monte Carlo estimate of `E[(∫_a^b f dL^(k))^ℓ]` with its standard error.
pub fn mc_moment<T: Scalar>(
    spec: &MomentSpec<T>,
    weights: &BoundaryWeights<T>,
    config: &WalkConfig<T>,
    f: impl Fn(&[T]) -> T + Sync,
    paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    spec.validate()?;
    let lattice = config.lattice();
    let start = start_site(&spec.start, lattice);
    let samples = mc_samples(spec, weights, config, &f, start, paths, seed);
    Ok(mean_and_se(&samples))
}

fn mc_samples<T: Scalar>(
    spec: &MomentSpec<T>,
    weights: &BoundaryWeights<T>,
    config: &WalkConfig<T>,
    f: &(impl Fn(&[T]) -> T + Sync),
    start: Start,
    paths: usize,
    seed: u64,
) -> Vec<f64> {
    let lattice = config.lattice();
    par_paths(paths, |i| {
        let path = simulate_path(config, start, spec.b, seed, i);
        let v = window_integral(&path, weights, spec.a, spec.b, |z| f(lattice.position(z)));
        v.as_f64().powi(spec.order as i32)
    })
}

/// Log-log regression of `E|L_b − L_a|^ℓ` against `b − a`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScalingReport {
    pub level: u32,
    pub order: usize,
    pub widths: Vec<f64>,
    pub moments: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// `moment / width^{ℓ/2}` per window.
    pub constants: Vec<f64>,
}

/// Exact stationary increments `E_{m_k}|L^(k)_{a+w} − L^(k)_a|^ℓ` over a
/// ladder of widths `w`.
pub fn increment_scaling<T: Scalar>(
    config: &WalkConfig<T>,
    weights: &BoundaryWeights<T>,
    order: usize,
    widths: &[T],
) -> Result<ScalingReport> {
    let mut moments = Vec::with_capacity(widths.len());
    for &w in widths {
        let spec = MomentSpec::new(order, T::zero(), w, StartLaw::Stationary)?;
        moments.push(exact_moment_discrete(&spec, weights, config, |_| T::one())?.as_f64());
    }
    let ws: Vec<f64> = widths.iter().map(|w| w.as_f64()).collect();
    let xs: Vec<f64> = ws.iter().map(|w| w.ln()).collect();
    let ys: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    let (slope, intercept) = if ws.len() >= 2 { linear_fit(&xs, &ys) } else { (f64::NAN, f64::NAN) };
    let constants = ws.iter().zip(&moments).map(|(w, m)| m / w.powf(order as f64 / 2.0)).collect();
    Ok(ScalingReport { level: weights.level(), order, widths: ws, moments, slope, intercept, constants })
}

/// `E_{m_k}[L^(k)_t]` under the normalized stationary start.
pub fn stationary_mean_local_time<T: Scalar>(config: &WalkConfig<T>, weights: &BoundaryWeights<T>, t: T) -> T {
    let m = config.measure();
    let total: T = m.iter().copied().sum();
    t * dot(m, weights.slopes()) / total
}

/// Stationary expectations of the two rejected candidates and of `L^(k)_t`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Example54 {
    pub level: u32,
    pub t: f64,
    pub c_occ: f64,
    pub mean_local_time: f64,
    pub mean_occupation: f64,
    pub mean_naive: f64,
    pub ratio_occupation: f64,
    pub ratio_naive: f64,
}

/// Exact stationary ratios `E[A^(k)_{C 2^{-k}}(t)] / E[L^(k)_t]` and
/// `E[2^{k-1} ∫_0^t 1{X ∈ ∂D^(k)} ds] / E[L^(k)_t]` for the simple walk on
/// `domain`. Stationarity reduces every expectation to `t Σ_z π(z) c(z)`.
pub fn example54_ratios<T: Scalar>(domain: &Domain<T>, k: u32, t: T, c_occ: T) -> Result<Example54> {
    use std::sync::Arc;
    let lattice = Arc::new(crate::geometry::build_lattice(domain, k)?);
    let partition = build_partition(domain, k)?;
    let assignment = assign_patches(&partition, &lattice, default_alpha(domain), AssignmentMode::NearestSingle)?;
    let weights = BoundaryWeights::new(&assignment, &lattice)?;
    let config = WalkConfig::simple(lattice.clone(), crate::walker::TimeMode::Continuous);
    let m = lattice.measures();
    let total: T = m.iter().copied().sum();
    let h = lattice.spacing();
    let delta = c_occ * h;
    let mut near = T::zero();
    let mut boundary = T::zero();
    for z in 0..lattice.len() {
        if domain.dist_to_boundary(lattice.position(z)) < delta {
            near = near + m[z];
        }
        if lattice.is_boundary(z) {
            boundary = boundary + m[z];
        }
    }
    let el = stationary_mean_local_time(&config, &weights, t);
    let occ = t * near / total / (T::lit(2.0) * delta);
    let naive = t * boundary / total / (T::lit(2.0) * h);
    Ok(Example54 {
        level: k,
        t: t.as_f64(),
        c_occ: c_occ.as_f64(),
        mean_local_time: el.as_f64(),
        mean_occupation: occ.as_f64(),
        mean_naive: naive.as_f64(),
        ratio_occupation: (occ / el).as_f64(),
        ratio_naive: (naive / el).as_f64(),
    })
}

/// Monte Carlo means of `L^(k)_t`, `A^(k)_δ(t)` and the naive boundary time
/// under the stationary start, used to cross-check [`example54_ratios`].
pub fn example54_monte_carlo<T: Scalar>(
    domain: &Domain<T>,
    config: &WalkConfig<T>,
    weights: &BoundaryWeights<T>,
    t: T,
    delta: T,
    paths: usize,
    seed: u64,
) -> [(f64, f64); 3] {
    let lattice = config.lattice();
    let samples: Vec<[f64; 3]> = par_paths(paths, |i| {
        let path = simulate_path(config, Start::Stationary, t, seed, i);
        [
            accumulate(&path, weights).final_value().as_f64(),
            occupation_candidate(&path, lattice, domain, delta).as_f64(),
            naive_boundary_time(&path, lattice).as_f64(),
        ]
    });
    let col = |j: usize| mean_and_se(&samples.iter().map(|s| s[j]).collect::<Vec<_>>());
    [col(0), col(1), col(2)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_lattice;
    use crate::walker::TimeMode;
    use std::sync::Arc;

    fn setup(domain: &Domain<f64>, k: u32) -> (WalkConfig<f64>, BoundaryWeights<f64>) {
        let lat = Arc::new(build_lattice(domain, k).unwrap());
        let part = build_partition(domain, k).unwrap();
        let asg = assign_patches(&part, &lat, default_alpha(domain), AssignmentMode::NearestSingle).unwrap();
        let w = BoundaryWeights::new(&asg, &lat).unwrap();
        (WalkConfig::simple(lat, TimeMode::Continuous), w)
    }

    #[test]
    fn zero_integrand_gives_zero() {
        let (cfg, w) = setup(&Domain::unit_interval(), 3);
        for ell in 1..=3 {
            let spec = MomentSpec::<f64>::new(ell, 0.0, 0.5, StartLaw::Site(2)).unwrap();
            assert_eq!(exact_moment_discrete(&spec, &w, &cfg, |_| 0.0).unwrap(), 0.0);
        }
        assert!(matches!(MomentSpec::<f64>::new(4, 0.0, 1.0, StartLaw::<f64>::Stationary), Err(Error::UnsupportedOrder(4))));
    }

    #[test]
    fn stationary_first_moment_on_interval() {
        let (cfg, w) = setup(&Domain::unit_interval(), 4);
        let spec = MomentSpec::<f64>::new(1, 0.0, 0.7, StartLaw::Stationary).unwrap();
        let v = exact_moment_discrete(&spec, &w, &cfg, |_| 1.0).unwrap();
        // Σσ_k / (2 Σ m_k) = 2 / (2 (1 − 2h)).
        let expect = 0.7 / (1.0 - 2.0 / 16.0);
        assert!((v - expect).abs() < 1e-12, "{v} {expect}");
        assert!((stationary_mean_local_time(&cfg, &w, 0.7) - expect).abs() < 1e-14);
    }

    #[test]
    fn two_routes_for_the_first_moment() {
        let d = Domain::unit_square();
        let (cfg, w) = setup(&d, 3);
        let spec = MomentSpec::<f64>::new(1, 0.05, 0.3, StartLaw::Site(10)).unwrap();
        let f = |p: &[f64]| 1.0 + p[0] * p[1];
        let a = exact_moment_discrete(&spec, &w, &cfg, f).unwrap();
        let b = first_moment_direct(&spec, &w, &cfg, f).unwrap();
        assert!((a - b).abs() < 1e-8 * a.abs(), "{a} {b}");
    }

    #[test]
    fn continuum_first_moments() {
        let spec = MomentSpec::<f64>::new(1, 0.0, 0.8, StartLaw::Stationary).unwrap();
        let v = exact_moment_continuum(&spec, &Domain::unit_interval(), BoundaryData::Constant(1.0)).unwrap();
        assert!((v - 0.8).abs() < 1e-12);
        // Box with general data: ½ t ∫ f dσ / |D| with ∫ x dσ = 2.
        let g = |p: &[f64]| p[0];
        let w = exact_moment_continuum(&spec, &Domain::unit_square(), BoundaryData::General(&g)).unwrap();
        assert!((w - 0.8).abs() < 1e-9);
        assert!(exact_moment_continuum(&spec, &Domain::rotated_square(), BoundaryData::Constant(1.0)).is_err());
    }

    #[test]
    fn continuum_point_start_first_moment() {
        // ½ ∫_0^t Σ_{y∈{0,1}} p(s, x, y) ds from the cosine series
        // t + Σ_n 4(1 − e^{-n²π²t/2}) cos(nπx) / (n²π²) over even n, summed to 4·10⁶ terms.
        let t = 0.5;
        let x = 0.3;
        let spec = MomentSpec::<f64>::new(1, 0.0, t, StartLaw::Point(vec![x])).unwrap();
        let v = exact_moment_continuum(&spec, &Domain::unit_interval(), BoundaryData::Constant(1.0)).unwrap();
        let series = 0.4566682861179654;
        assert!((v - series).abs() < 1e-9, "{v} {series}");
    }

    #[test]
    fn second_moment_matches_recursion() {
        let spec = MomentSpec::<f64>::new(2, 0.0, 0.3, StartLaw::Stationary).unwrap();
        let interval = exact_moment_continuum(&spec, &Domain::unit_interval(), BoundaryData::Constant(1.0)).unwrap();
        let faces = [
            Face { axis: 0, value: 0.0, measure: 1.0, data: 1.0 },
            Face { axis: 0, value: 1.0, measure: 1.0, data: 1.0 },
        ];
        let k = ReferenceKernel::new(&Domain::unit_interval()).unwrap();
        let rec = interval_moment(&spec, &k, &faces, 1.0);
        assert!((interval - rec).abs() < 1e-8, "{interval} {rec}");
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let (cfg, w) = setup(&Domain::unit_interval(), 3);
        let spec = MomentSpec::<f64>::new(2, 0.0, 0.5, StartLaw::Site(3)).unwrap();
        let exact = exact_moment_discrete(&spec, &w, &cfg, |_| 1.0).unwrap();
        let (m, se) = mc_moment(&spec, &w, &cfg, |_| 1.0, 20_000, 3).unwrap();
        assert!((m - exact).abs() < 3.5 * se, "{m} {se} {exact}");
    }

    #[test]
    fn example54_matches_cover_free_identity() {
        let d = Domain::rotated_square();
        let r = example54_ratios(&d, 4, 1.0, 2.0).unwrap();
        // E[L] = t σ(∂D) / (2 Σ m_k).
        let lat = build_lattice(&d, 4).unwrap();
        let expect = 4.0 * 2f64.sqrt() / (2.0 * lat.total_measure());
        assert!((r.mean_local_time - expect).abs() < 1e-12);
    }

    #[test]
    fn stationary_identity_matches_semigroup() {
        let d = Domain::rotated_square();
        let (cfg, w) = setup(&d, 3);
        let u = Uniformized::new(cfg.chain());
        let total: f64 = cfg.measure().iter().sum();
        let pi: Vec<f64> = cfg.measure().iter().map(|m| m / total).collect();
        let occ = u.integrate_left(&pi, 1.0);
        let via_semigroup = dot(&occ, w.slopes());
        assert!((via_semigroup - stationary_mean_local_time(&cfg, &w, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn scaling_report_shape() {
        let (cfg, w) = setup(&Domain::unit_interval(), 3);
        let rep = increment_scaling(&cfg, &w, 2, &[0.0625, 0.125, 0.25]).unwrap();
        assert_eq!(rep.moments.len(), 3);
        assert!(rep.moments.windows(2).all(|p| p[1] > p[0]));
        assert!(rep.slope > 0.0);
    }
}
