//! Boundary partitions `Λ^(k)` and patch-to-site assignments.
//!
//! Each flat piece of `∂D` is cut into patches of extent `2^{-k}` (the last
//! patch along an edge may be shorter). A patch `λ` is then attached to a
//! nonempty set of lattice sites `D^(k)_λ` within distance `α 2^{-k}`, and its
//! mass `σ(λ)` is spread evenly over that set to produce `σ_k`.

use std::collections::HashMap;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryPiece, Domain, LatticeDomain};
use crate::quadrature::{integrate, QuadOptions};
use crate::scalar::{dist2, Scalar};

/// One patch `λ ∈ Λ^(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPatch<T> {
    pub id: usize,
    /// Index of the boundary piece (endpoint, face or edge) the patch lies on.
    pub piece: usize,
    pub support: BoundaryPiece<T>,
    pub sigma: T,
    pub anchor: Vec<T>,
}

impl<T: Scalar> BoundaryPatch<T> {
    pub fn distance(&self, p: &[T]) -> T {
        self.support.distance(p)
    }
}

/// The partition `Λ^(k)` of `∂D` together with its recorded constants.
#[derive(Debug, Clone)]
pub struct Partition<T> {
    level: u32,
    dim: usize,
    lipschitz: T,
    patches: Vec<BoundaryPatch<T>>,
    constant: T,
}

/// Builds the uniform partition of `∂D` at level `k`.
pub fn build_partition<T: Scalar>(domain: &Domain<T>, k: u32) -> Result<Partition<T>> {
    if k == 0 {
        return Err(Error::InvalidArgument("partition level must be positive".into()));
    }
    let h = T::dyadic(k);
    let mut patches = Vec::new();
    for (piece_id, piece) in domain.boundary_pieces().into_iter().enumerate() {
        match &piece {
            BoundaryPiece::Point { position } => {
                let anchor = position.clone();
                patches.push(BoundaryPatch { id: 0, piece: piece_id, support: piece.clone(), sigma: T::one(), anchor });
            }
            BoundaryPiece::Edge { start, end } => {
                let len = piece.measure();
                for (s0, s1) in subdivide(len, h) {
                    let at = |s: T| [start[0] + (end[0] - start[0]) * s / len, start[1] + (end[1] - start[1]) * s / len];
                    let (p0, p1) = (at(s0), at(s1));
                    let mid = at(T::lit(0.5) * (s0 + s1));
                    patches.push(BoundaryPatch {
                        id: 0,
                        piece: piece_id,
                        support: BoundaryPiece::Edge { start: p0, end: p1 },
                        sigma: s1 - s0,
                        anchor: mid.to_vec(),
                    });
                }
            }
            BoundaryPiece::Face { axis, value, lows, highs } => {
                let free: Vec<usize> = (0..lows.len()).filter(|i| i != axis).collect();
                let cuts: Vec<Vec<(T, T)>> = free
                    .iter()
                    .map(|&i| {
                        subdivide(highs[i] - lows[i], h)
                            .into_iter()
                            .map(|(s0, s1)| (lows[i] + s0, lows[i] + s1))
                            .collect()
                    })
                    .collect();
                let mut counter = vec![0usize; free.len()];
                loop {
                    let mut lo = lows.clone();
                    let mut hi = highs.clone();
                    lo[*axis] = *value;
                    hi[*axis] = *value;
                    let mut anchor = vec![*value; lows.len()];
                    let mut sigma = T::one();
                    for (j, &i) in free.iter().enumerate() {
                        let (a, b) = cuts[j][counter[j]];
                        lo[i] = a;
                        hi[i] = b;
                        anchor[i] = T::lit(0.5) * (a + b);
                        sigma = sigma * (b - a);
                    }
                    patches.push(BoundaryPatch {
                        id: 0,
                        piece: piece_id,
                        support: BoundaryPiece::Face { axis: *axis, value: *value, lows: lo, highs: hi },
                        sigma,
                        anchor,
                    });
                    let mut j = free.len();
                    loop {
                        if j == 0 {
                            break;
                        }
                        j -= 1;
                        counter[j] += 1;
                        if counter[j] < cuts[j].len() {
                            break;
                        }
                        counter[j] = 0;
                    }
                    if counter.iter().all(|&c| c == 0) {
                        break;
                    }
                }
            }
        }
    }
    for (i, p) in patches.iter_mut().enumerate() {
        p.id = i;
    }
    let d = domain.dim();
    let scale = h.powi(d as i32 - 1);
    let constant = patches.iter().fold(T::zero(), |acc, p| acc.max(p.sigma / scale));
    Ok(Partition { level: k, dim: d, lipschitz: domain.lipschitz(), patches, constant })
}

/// Splits `[0, len]` into consecutive pieces of length `h`, the last one shorter.
fn subdivide<T: Scalar>(len: T, h: T) -> Vec<(T, T)> {
    let full = (len / h).floor().to_usize().unwrap_or(0);
    let mut out: Vec<(T, T)> = (0..full).map(|i| (T::count(i) * h, T::count(i + 1) * h)).collect();
    let last = T::count(full) * h;
    // Leftovers below a relative 1e-9 of h are rounding noise from irrational edge lengths.
    if len - last > h * T::lit(1e-9) {
        out.push((last, len));
    } else if let Some(end) = out.last_mut() {
        end.1 = len;
    }
    out
}

impl<T: Scalar> Partition<T> {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn patches(&self) -> &[BoundaryPatch<T>] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// `Σ_λ σ(λ)`.
    pub fn total_mass(&self) -> T {
        self.patches.iter().map(|p| p.sigma).sum()
    }

    /// Recorded constant `C` with `σ(λ) ≤ C 2^{-k(d-1)}`.
    pub fn constant(&self) -> T {
        self.constant
    }

    /// Number of patches meeting the closed ball `B(center, radius)`.
    pub fn ball_count(&self, center: &[T], radius: T) -> usize {
        self.patches.iter().filter(|p| p.distance(center) <= radius).count()
    }

    /// `#{λ : λ ∩ B(x, s) ≠ ∅} / (2^k s ∨ 1)^{d-1}`.
    pub fn ball_ratio(&self, center: &[T], radius: T) -> T {
        let scaled = (radius / T::dyadic(self.level)).max(T::one());
        T::count(self.ball_count(center, radius)) / scaled.powi(self.dim as i32 - 1)
    }
}

/// How patches are attached to lattice sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentMode {
    /// `D^(k)_λ = {z_λ}`, the site nearest to the patch anchor.
    NearestSingle,
    /// Every graph-boundary site joins the nearest admissible patch and each
    /// patch keeps its nearest graph-boundary site.
    CoverGraphBoundary,
}

/// The sets `D^(k)_λ` and the induced site masses `σ_k`.
#[derive(Debug, Clone)]
pub struct Assignment<T> {
    level: u32,
    alpha: T,
    mode: AssignmentMode,
    sets: Vec<Vec<usize>>,
    sigmas: Vec<T>,
    sigma_k: Vec<T>,
}

/// Default `α = 1.01 √(1 + M²)`.
pub fn default_alpha<T: Scalar>(domain: &Domain<T>) -> T {
    T::lit(1.01) * domain.alpha_threshold()
}

pub fn assign_patches<T: Scalar>(
    partition: &Partition<T>,
    lattice: &LatticeDomain<T>,
    alpha: T,
    mode: AssignmentMode,
) -> Result<Assignment<T>> {
    if partition.level != lattice.level() {
        return Err(Error::MismatchedLevel(format!(
            "partition at level {} but lattice at level {}",
            partition.level,
            lattice.level()
        )));
    }
    let threshold = (T::one() + partition.lipschitz * partition.lipschitz).sqrt();
    if !(alpha > threshold) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} must exceed sqrt(1 + M^2) = {threshold}"
        )));
    }
    let h = lattice.spacing();
    let reach = alpha * h;
    let mut sets: Vec<Vec<usize>> = Vec::with_capacity(partition.len());
    for p in partition.patches() {
        let z = match mode {
            AssignmentMode::NearestSingle => lattice.nearest_site(&p.anchor),
            AssignmentMode::CoverGraphBoundary => lattice
                .nearest_site_where(&p.anchor, |s| lattice.is_boundary(s))
                .ok_or(Error::AlphaTooSmall { patch: p.id, alpha: alpha.as_f64() })?,
        };
        if p.distance(lattice.position(z)) > reach {
            return Err(Error::AlphaTooSmall { patch: p.id, alpha: alpha.as_f64() });
        }
        sets.push(vec![z]);
    }
    if mode == AssignmentMode::CoverGraphBoundary {
        let buckets = AnchorBuckets::new(partition, h);
        let extra = T::count(partition.dim.saturating_sub(1)).sqrt() + alpha;
        for z in lattice.boundary_sites() {
            let pos = lattice.position(z);
            let mut best: Option<(T, usize)> = None;
            for id in buckets.near(pos, extra * h) {
                let patch = &partition.patches[id];
                if patch.distance(pos) <= reach {
                    let d = dist2(&patch.anchor, pos);
                    match best {
                        Some((bd, bid)) if bd < d || (bd == d && bid < id) => {}
                        _ => best = Some((d, id)),
                    }
                }
            }
            let (_, id) = best.ok_or(Error::ModeUnsatisfiable { site: z })?;
            sets[id].push(z);
        }
        for set in &mut sets {
            set.sort_unstable();
            set.dedup();
        }
    }
    let mut sigma_k = vec![T::zero(); lattice.len()];
    for (p, set) in partition.patches().iter().zip(&sets) {
        let share = p.sigma / T::count(set.len());
        for &z in set {
            sigma_k[z] = sigma_k[z] + share;
        }
    }
    Ok(Assignment {
        level: lattice.level(),
        alpha,
        mode,
        sigmas: partition.patches().iter().map(|p| p.sigma).collect(),
        sets,
        sigma_k,
    })
}

/// Patch anchors bucketed on the `h`-grid for radius queries.
struct AnchorBuckets {
    cells: HashMap<[i64; 3], Vec<usize>>,
    dim: usize,
    inv_h: f64,
}

impl AnchorBuckets {
    fn new<T: Scalar>(partition: &Partition<T>, h: T) -> Self {
        let inv_h = 1.0 / h.as_f64();
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for p in partition.patches() {
            let mut key = [0i64; 3];
            for (i, x) in p.anchor.iter().enumerate() {
                key[i] = (x.as_f64() * inv_h).floor() as i64;
            }
            cells.entry(key).or_default().push(p.id);
        }
        Self { cells, dim: partition.dim, inv_h }
    }

    /// Patch ids whose anchors may lie within `radius` of `p`, sorted.
    fn near<T: Scalar>(&self, p: &[T], radius: T) -> Vec<usize> {
        let r = (radius.as_f64() * self.inv_h).ceil() as i64 + 1;
        let base: Vec<i64> = p.iter().map(|x| (x.as_f64() * self.inv_h).floor() as i64).collect();
        let mut out = Vec::new();
        let mut off = vec![-r; self.dim];
        loop {
            let mut key = [0i64; 3];
            for i in 0..self.dim {
                key[i] = base[i] + off[i];
            }
            if let Some(ids) = self.cells.get(&key) {
                out.extend_from_slice(ids);
            }
            let mut axis = self.dim;
            loop {
                if axis == 0 {
                    out.sort_unstable();
                    return out;
                }
                axis -= 1;
                off[axis] += 1;
                if off[axis] <= r {
                    break;
                }
                off[axis] = -r;
            }
        }
    }
}

impl<T: Scalar> Assignment<T> {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn mode(&self) -> AssignmentMode {
        self.mode
    }

    /// `D^(k)_λ` for every patch, sites sorted by index.
    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn patch_masses(&self) -> &[T] {
        &self.sigmas
    }

    /// `σ_k(z)` for every site (zero off `∂^(k)`).
    pub fn sigma_k(&self) -> &[T] {
        &self.sigma_k
    }

    pub fn total_mass(&self) -> T {
        self.sigma_k.iter().copied().sum()
    }

    /// `∂^(k)`: sites carrying positive mass.
    pub fn assigned_sites(&self) -> Vec<usize> {
        (0..self.sigma_k.len()).filter(|&z| self.sigma_k[z] > T::zero()).collect()
    }

    pub fn max_set_size(&self) -> usize {
        self.sets.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Local-time slope `½ σ_k(z) / m_k(z)` per site.
    pub fn slopes(&self, lattice: &LatticeDomain<T>) -> Vec<T> {
        let half = T::lit(0.5);
        self.sigma_k
            .iter()
            .enumerate()
            .map(|(z, &s)| if s > T::zero() { half * s / lattice.measure(z) } else { T::zero() })
            .collect()
    }

    /// `max_{λ, z ∈ D_λ} dist(z, λ) / 2^{-k}`.
    pub fn max_distance_ratio(&self, partition: &Partition<T>, lattice: &LatticeDomain<T>) -> T {
        let h = lattice.spacing();
        partition
            .patches()
            .iter()
            .zip(&self.sets)
            .flat_map(|(p, set)| set.iter().map(move |&z| p.distance(lattice.position(z)) / h))
            .fold(T::zero(), T::max)
    }

    /// One row per site of `∂^(k)`: index, `σ_k(z)`, patch ids separated by `;`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut owners: Vec<Vec<usize>> = vec![Vec::new(); self.sigma_k.len()];
        for (id, set) in self.sets.iter().enumerate() {
            for &z in set {
                owners[z].push(id);
            }
        }
        writeln!(w, "site,sigma_k,patches")?;
        for z in self.assigned_sites() {
            let ids: Vec<String> = owners[z].iter().map(|i| i.to_string()).collect();
            writeln!(w, "{z},{},{}", self.sigma_k[z], ids.join(";"))?;
        }
        Ok(())
    }
}

/// `∫_{∂D} F dσ` by adaptive quadrature over every boundary piece.
pub fn boundary_integral<T: Scalar>(domain: &Domain<T>, f: impl Fn(&[T]) -> T, opts: QuadOptions<T>) -> T {
    let mut total = T::zero();
    for piece in domain.boundary_pieces() {
        total = total
            + match &piece {
                BoundaryPiece::Point { position } => f(position),
                BoundaryPiece::Edge { start, end } => {
                    let len = piece.measure();
                    let r = integrate(
                        |s: T| f(&[start[0] + (end[0] - start[0]) * s, start[1] + (end[1] - start[1]) * s]),
                        T::zero(),
                        T::one(),
                        opts,
                    );
                    r.value * len
                }
                BoundaryPiece::Face { axis, value, lows, highs } => {
                    let free: Vec<usize> = (0..lows.len()).filter(|i| i != axis).collect();
                    let mut point = vec![*value; lows.len()];
                    face_integral(&f, &free, lows, highs, &mut point, opts)
                }
            };
    }
    total
}

fn face_integral<T: Scalar>(
    f: &impl Fn(&[T]) -> T,
    free: &[usize],
    lows: &[T],
    highs: &[T],
    point: &mut [T],
    opts: QuadOptions<T>,
) -> T {
    let Some((&i, rest)) = free.split_first() else {
        return f(point);
    };
    let mut scratch = point.to_vec();
    integrate(
        |s: T| {
            scratch[i] = s;
            let mut inner = scratch.clone();
            face_integral(f, rest, lows, highs, &mut inner, opts)
        },
        lows[i],
        highs[i],
        opts,
    )
    .value
}

/// `e_k = |Σ_z F(z) σ_k(z) − ∫_{∂D} F dσ|` for each supplied level.
pub fn check_weak_convergence<T: Scalar>(
    domain: &Domain<T>,
    levels: &[(&LatticeDomain<T>, &Assignment<T>)],
    f: impl Fn(&[T]) -> T,
) -> Vec<T> {
    let exact = boundary_integral(domain, &f, QuadOptions::new(T::lit(1e-13), T::lit(1e-12)));
    levels
        .iter()
        .map(|(lattice, assignment)| {
            let discrete: T = assignment
                .sigma_k()
                .iter()
                .enumerate()
                .filter(|(_, &s)| s > T::zero())
                .map(|(z, &s)| f(lattice.position(z)) * s)
                .sum();
            (discrete - exact).abs()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_lattice;

    fn setup(domain: &Domain<f64>, k: u32, mode: AssignmentMode) -> (LatticeDomain<f64>, Partition<f64>, Assignment<f64>) {
        let lat = build_lattice(domain, k).unwrap();
        let part = build_partition(domain, k).unwrap();
        let asg = assign_patches(&part, &lat, default_alpha(domain), mode).unwrap();
        (lat, part, asg)
    }

    #[test]
    fn interval_patches() {
        let d = Domain::unit_interval();
        let (lat, part, asg) = setup(&d, 3, AssignmentMode::NearestSingle);
        assert_eq!(part.len(), 2);
        assert_eq!(part.total_mass(), 2.0);
        assert_eq!(asg.sets(), &[vec![0], vec![lat.len() - 1]]);
        assert_eq!(asg.sigma_k()[0], 1.0);
        assert_eq!(asg.sigma_k()[6], 1.0);
        // Dwell τ at 1/8 contributes τ·2^k.
        assert_eq!(asg.slopes(&lat)[0], 8.0);
    }

    #[test]
    fn unit_square_patches() {
        let d = Domain::unit_square();
        let (lat, part, asg) = setup(&d, 3, AssignmentMode::NearestSingle);
        assert_eq!(part.len(), 32);
        assert!(part.patches().iter().all(|p| p.sigma == 0.125));
        assert_eq!(part.total_mass(), 4.0);
        assert_eq!(asg.total_mass(), 4.0);
        for set in asg.sets() {
            assert_eq!(set.len(), 1);
            assert!(lat.is_boundary(set[0]));
        }
        // A side-adjacent site (not a corner) receives one patch of mass 1/8.
        let z = lat.site_at(&[3, 1]).unwrap();
        assert_eq!(lat.degree(z), 3);
        assert_eq!(asg.sigma_k()[z], 0.125);
        let slope = 0.5 * 0.125 / (3.0 / 4.0 / 64.0);
        assert!((asg.slopes(&lat)[z] - slope).abs() < 1e-12);
        assert!((slope - 16.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_square_cover_mode() {
        let d = Domain::rotated_square();
        let (lat, part, asg) = setup(&d, 5, AssignmentMode::CoverGraphBoundary);
        let sqrt2 = 2f64.sqrt();
        assert!((part.total_mass() - 4.0 * sqrt2).abs() < 1e-12);
        assert!((asg.total_mass() - 4.0 * sqrt2).abs() / (4.0 * sqrt2) < 1e-12);
        let mut covered: Vec<usize> = asg.sets().iter().flatten().copied().collect();
        covered.sort_unstable();
        covered.dedup();
        assert_eq!(covered, lat.boundary_sites());
        assert!(asg.max_distance_ratio(&part, &lat) <= asg.alpha());
    }

    #[test]
    fn alpha_must_exceed_threshold() {
        let d = Domain::unit_square();
        let lat = build_lattice(&d, 3).unwrap();
        let part = build_partition(&d, 3).unwrap();
        assert!(assign_patches(&part, &lat, 2f64.sqrt(), AssignmentMode::NearestSingle).is_err());
    }

    #[test]
    fn mismatched_levels() {
        let d = Domain::unit_square();
        let lat = build_lattice(&d, 3).unwrap();
        let part = build_partition(&d, 4).unwrap();
        let err = assign_patches(&part, &lat, 1.5, AssignmentMode::NearestSingle).unwrap_err();
        assert!(matches!(err, Error::MismatchedLevel(_)));
    }

    #[test]
    fn weak_convergence_of_x_on_square() {
        let d = Domain::unit_square();
        let built: Vec<_> = (2..=8).map(|k| setup(&d, k, AssignmentMode::NearestSingle)).collect();
        let levels: Vec<_> = built.iter().map(|(l, _, a)| (l, a)).collect();
        let errs = check_weak_convergence(&d, &levels, |p| p[0]);
        for (i, e) in errs.iter().enumerate() {
            let k = i as i32 + 2;
            assert!(*e < 10.0 * 2f64.powi(-k), "k={k} e={e}");
        }
        let ones = check_weak_convergence(&d, &levels, |_| 1.0);
        assert!(ones.iter().all(|e| *e < 1e-12));
    }

    #[test]
    fn weak_convergence_on_rotated_square() {
        let d = Domain::rotated_square();
        let built: Vec<_> = (3..=7).map(|k| setup(&d, k, AssignmentMode::NearestSingle)).collect();
        let levels: Vec<_> = built.iter().map(|(l, _, a)| (l, a)).collect();
        let errs = check_weak_convergence(&d, &levels, |p| p[0] * p[0]);
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "{errs:?}");
        }
    }

    #[test]
    fn boundary_integral_of_x() {
        let v = boundary_integral(&Domain::unit_square(), |p: &[f64]| p[0], QuadOptions::default());
        assert!((v - 2.0).abs() < 1e-12);
        // ∫ x² over the four edges of |x|+|y|=1: 4·√2·∫_0^1 s² ds.
        let w = boundary_integral(&Domain::rotated_square(), |p: &[f64]| p[0] * p[0], QuadOptions::default());
        assert!((w - 4.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cube_faces() {
        let d = Domain::<f64>::axis_box(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let part = build_partition(&d, 2).unwrap();
        assert_eq!(part.len(), 6 * 16);
        assert!((part.total_mass() - 6.0).abs() < 1e-14);
        let v = boundary_integral(&d, |p: &[f64]| p[2], QuadOptions::default());
        assert!((v - 3.0).abs() < 1e-12);
        let (_, _, asg) = setup(&d, 3, AssignmentMode::CoverGraphBoundary);
        assert!((asg.total_mass() - 6.0).abs() < 1e-12);
    }
}
