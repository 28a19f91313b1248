//! Pathwise discrete boundary local time and related functionals.
//!
//! Along a step path the local time `L^(k)` grows linearly with slope
//! `½ σ_k(z) / m_k(z)` while the walk sits at `z`, so the trajectory is stored
//! exactly as a piecewise-linear function with one breakpoint per jump.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::geometry::{Domain, LatticeDomain};
use crate::partition::Assignment;
use crate::quadrature::{integrate, QuadOptions};
use crate::scalar::Scalar;
use crate::walker::Path;

/// Per-site local-time slopes for one lattice level.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryWeights<T> {
    level: u32,
    slopes: Vec<T>,
}

impl<T: Scalar> BoundaryWeights<T> {
    pub fn new(assignment: &Assignment<T>, lattice: &LatticeDomain<T>) -> Result<Self> {
        if assignment.level() != lattice.level() || assignment.sigma_k().len() != lattice.len() {
            return Err(Error::MismatchedLevel(format!(
                "assignment at level {} but lattice at level {}",
                assignment.level(),
                lattice.level()
            )));
        }
        Ok(Self { level: lattice.level(), slopes: assignment.slopes(lattice) })
    }

    /// Weights from explicit slopes, one per site.
    pub fn from_slopes(level: u32, slopes: Vec<T>) -> Self {
        Self { level, slopes }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn slope(&self, site: usize) -> T {
        self.slopes[site]
    }

    pub fn slopes(&self) -> &[T] {
        &self.slopes
    }
}

/// `t ↦ L^(k)_t` as an exact piecewise-linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeTrajectory<T> {
    pub breakpoints: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Scalar> LocalTimeTrajectory<T> {
    pub fn final_value(&self) -> T {
        *self.values.last().expect("trajectory has a breakpoint")
    }

    /// `L^(k)_t` by linear interpolation between breakpoints.
    pub fn value_at(&self, t: T) -> T {
        let i = self.breakpoints.partition_point(|&b| b <= t);
        if i == 0 {
            return self.values[0];
        }
        if i == self.breakpoints.len() {
            return self.final_value();
        }
        let (t0, t1) = (self.breakpoints[i - 1], self.breakpoints[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        if t1 == t0 {
            return v1;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,local_time")?;
        for (t, v) in self.breakpoints.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Accumulates `L^(k)_t = ½ ∫_0^t σ_k(ω(s)) / m_k(ω(s)) ds` along `path`.
pub fn accumulate<T: Scalar>(path: &Path<T>, weights: &BoundaryWeights<T>) -> LocalTimeTrajectory<T> {
    let mut breakpoints = Vec::with_capacity(path.sites.len() + 1);
    let mut values = Vec::with_capacity(path.sites.len() + 1);
    breakpoints.push(T::zero());
    values.push(T::zero());
    let mut acc = T::zero();
    for seg in path.segments() {
        acc = acc + weights.slope(seg.site) * seg.duration();
        breakpoints.push(seg.end);
        values.push(acc);
    }
    LocalTimeTrajectory { breakpoints, values }
}

/// `L^(k)_T` through the double sum `½ Σ_λ Σ_{z ∈ D_λ} σ(λ)/#D_λ · occ(z)/m_k(z)`.
pub fn local_time_by_patches<T: Scalar>(
    path: &Path<T>,
    assignment: &Assignment<T>,
    lattice: &LatticeDomain<T>,
) -> Result<T> {
    if assignment.level() != lattice.level() {
        return Err(Error::MismatchedLevel("assignment and lattice levels differ".into()));
    }
    let occ = path.occupation(lattice.len());
    let half = T::lit(0.5);
    let mut total = T::zero();
    for (set, &sigma) in assignment.sets().iter().zip(assignment.patch_masses()) {
        let share = sigma / T::count(set.len());
        for &z in set {
            total = total + half * share * occ[z] / lattice.measure(z);
        }
    }
    Ok(total)
}

/// `∫_0^T F(ω(s)) dL^(k)_s` for a time-independent integrand.
pub fn stieltjes_integral<T: Scalar>(path: &Path<T>, weights: &BoundaryWeights<T>, f: impl Fn(usize) -> T) -> T {
    window_integral(path, weights, T::zero(), path.horizon, f)
}

/// `∫_a^b F(ω(s)) dL^(k)_s` for a time-independent integrand.
pub fn window_integral<T: Scalar>(
    path: &Path<T>,
    weights: &BoundaryWeights<T>,
    a: T,
    b: T,
    f: impl Fn(usize) -> T,
) -> T {
    let mut total = T::zero();
    for seg in path.segments() {
        let slope = weights.slope(seg.site);
        if slope == T::zero() {
            continue;
        }
        let (lo, hi) = (seg.start.max(a), seg.end.min(b));
        if hi > lo {
            total = total + f(seg.site) * slope * (hi - lo);
        }
    }
    total
}

/// `∫_0^T F(s, ω(s)) dL^(k)_s` with adaptive quadrature on every boundary dwell.
pub fn stieltjes_integral_timed<T: Scalar>(
    path: &Path<T>,
    weights: &BoundaryWeights<T>,
    f: impl Fn(T, usize) -> T,
) -> T {
    let opts = QuadOptions::new(T::zero(), T::lit(1e-10).max(T::epsilon() * T::lit(16.0)));
    let mut total = T::zero();
    for seg in path.segments() {
        let slope = weights.slope(seg.site);
        if slope == T::zero() || seg.end <= seg.start {
            continue;
        }
        let r = integrate(|s| f(s, seg.site), seg.start, seg.end, opts);
        total = total + slope * r.value;
    }
    total
}

/// `A^(k)_δ(T) = (1/(2δ)) ∫_0^T 1{dist(ω(s), ∂D) < δ} ds`.
pub fn occupation_candidate<T: Scalar>(path: &Path<T>, lattice: &LatticeDomain<T>, domain: &Domain<T>, delta: T) -> T {
    let near: Vec<bool> = (0..lattice.len())
        .map(|z| domain.dist_to_boundary(lattice.position(z)) < delta)
        .collect();
    let time: T = path.segments().filter(|s| near[s.site]).map(|s| s.duration()).sum();
    time / (T::lit(2.0) * delta)
}

/// `2^{k-1} ∫_0^T 1{ω(s) ∈ ∂D^(k)} ds`.
pub fn naive_boundary_time<T: Scalar>(path: &Path<T>, lattice: &LatticeDomain<T>) -> T {
    let time: T = path
        .segments()
        .filter(|s| lattice.is_boundary(s.site))
        .map(|s| s.duration())
        .sum();
    time / (T::lit(2.0) * lattice.spacing())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_lattice;
    use crate::partition::{assign_patches, build_partition, default_alpha, AssignmentMode};

    fn interval_weights(k: u32) -> (LatticeDomain<f64>, Assignment<f64>, BoundaryWeights<f64>) {
        let d = Domain::unit_interval();
        let lat = build_lattice(&d, k).unwrap();
        let part = build_partition(&d, k).unwrap();
        let asg = assign_patches(&part, &lat, default_alpha(&d), AssignmentMode::NearestSingle).unwrap();
        let w = BoundaryWeights::new(&asg, &lat).unwrap();
        (lat, asg, w)
    }

    #[test]
    fn dwell_at_first_site() {
        let (_, _, w) = interval_weights(3);
        let p = Path { jump_times: vec![0.25], sites: vec![0, 1], horizon: 1.0 };
        let tr = accumulate(&p, &w);
        assert_eq!(tr.final_value(), 0.25 * 8.0);
        assert_eq!(tr.value_at(0.125), 1.0);
        assert_eq!(tr.value_at(0.9), 2.0);
    }

    #[test]
    fn interior_path_has_no_local_time() {
        let (_, _, w) = interval_weights(3);
        let p = Path { jump_times: vec![0.1, 0.2], sites: vec![3, 2, 3], horizon: 0.5 };
        assert_eq!(accumulate(&p, &w).final_value(), 0.0);
    }

    #[test]
    fn time_dependent_integrand() {
        let (_, _, w) = interval_weights(3);
        let p = Path { jump_times: vec![0.2, 0.6], sites: vec![1, 0, 1], horizon: 1.0 };
        let v = stieltjes_integral_timed(&p, &w, |s, _| s);
        assert!((v - 8.0 * (0.36 - 0.04) / 2.0).abs() < 1e-12);
        assert_eq!(stieltjes_integral(&p, &w, |_| 1.0), accumulate(&p, &w).final_value());
        assert_eq!(stieltjes_integral(&p, &w, |_| 0.0), 0.0);
    }

    #[test]
    fn candidates_on_interval() {
        let (lat, _, _) = interval_weights(3);
        let d = Domain::unit_interval();
        let p = Path { jump_times: vec![0.3, 0.5], sites: vec![0, 3, 6], horizon: 1.0 };
        let a = occupation_candidate(&p, &lat, &d, 0.2);
        assert!((a - (0.3 + 0.5) / 0.4).abs() < 1e-14);
        assert!((occupation_candidate(&p, &lat, &d, 2.0) - 1.0 / 4.0).abs() < 1e-15);
        assert!((naive_boundary_time(&p, &lat) - 0.8 * 4.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_levels() {
        let (_, asg, _) = interval_weights(3);
        let other = build_lattice(&Domain::unit_interval(), 4).unwrap();
        assert!(BoundaryWeights::new(&asg, &other).is_err());
    }
}
