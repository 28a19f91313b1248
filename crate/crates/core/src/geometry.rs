//! Supported domains and their lattice approximations `D ∩ 2^{-k} Z^d`.
//!
//! The domain family is deliberately small: open intervals, axis-aligned boxes
//! in up to three dimensions and strictly convex polygons in the plane. All of
//! them admit exact inside tests, exact distances to the boundary and closed
//! form surface measures, which the reference computations rely on.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::scalar::{dist2, Scalar};

/// Sentinel stored in the neighbor table for a missing lattice neighbor.
pub const NO_SITE: usize = usize::MAX;

/// Geometric description of a bounded domain.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind<T> {
    Interval { a: T, b: T },
    /// Axis-aligned box `(lows[0], highs[0]) × … ` with `1 ≤ d ≤ 3`.
    Box { lows: Vec<T>, highs: Vec<T> },
    /// Strictly convex polygon, vertices listed counterclockwise.
    Polygon { vertices: Vec<[T; 2]> },
}

/// A bounded Lipschitz domain together with its boundary chart constant `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T> {
    kind: DomainKind<T>,
    lipschitz: T,
}

/// One flat piece of `∂D`: an endpoint, a box face or a polygon edge.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryPiece<T> {
    Point { position: Vec<T> },
    /// Face `{x : x[axis] = value}` of a box; `lows`/`highs` are the full box bounds.
    Face { axis: usize, value: T, lows: Vec<T>, highs: Vec<T> },
    Edge { start: [T; 2], end: [T; 2] },
}

impl<T: Scalar> BoundaryPiece<T> {
    /// (d−1)-dimensional measure of the piece (counting measure for points).
    pub fn measure(&self) -> T {
        match self {
            BoundaryPiece::Point { .. } => T::one(),
            BoundaryPiece::Face { axis, lows, highs, .. } => (0..lows.len())
                .filter(|i| i != axis)
                .fold(T::one(), |acc, i| acc * (highs[i] - lows[i])),
            BoundaryPiece::Edge { start, end } => segment_length(start, end),
        }
    }

    /// Euclidean distance from `p` to the piece.
    pub fn distance(&self, p: &[T]) -> T {
        match self {
            BoundaryPiece::Point { position } => dist2(position, p).sqrt(),
            BoundaryPiece::Face { axis, value, lows, highs } => {
                let mut acc = T::zero();
                for i in 0..lows.len() {
                    let gap = if i == *axis {
                        p[i] - *value
                    } else if p[i] < lows[i] {
                        lows[i] - p[i]
                    } else if p[i] > highs[i] {
                        p[i] - highs[i]
                    } else {
                        T::zero()
                    };
                    acc = acc + gap * gap;
                }
                acc.sqrt()
            }
            BoundaryPiece::Edge { start, end } => {
                let q = closest_on_segment(start, end, [p[0], p[1]]);
                dist2(&q, p).sqrt()
            }
        }
    }
}

fn segment_length<T: Scalar>(a: &[T; 2], b: &[T; 2]) -> T {
    ((b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1])).sqrt()
}

pub(crate) fn closest_on_segment<T: Scalar>(a: &[T; 2], b: &[T; 2], p: [T; 2]) -> [T; 2] {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let s = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2)
        .max(T::zero())
        .min(T::one());
    [a[0] + s * dx, a[1] + s * dy]
}

impl<T: Scalar> Domain<T> {
    pub fn interval(a: T, b: T) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidDomain(format!("interval needs a < b, got ({a}, {b})")));
        }
        Ok(Self { kind: DomainKind::Interval { a, b }, lipschitz: T::zero() })
    }

    pub fn unit_interval() -> Self {
        Self::interval(T::zero(), T::one()).expect("valid")
    }

    /// Axis-aligned box; `M = 1` is recorded as its chart constant.
    pub fn axis_box(lows: Vec<T>, highs: Vec<T>) -> Result<Self> {
        let d = lows.len();
        if d == 0 || d > 3 || highs.len() != d {
            return Err(Error::InvalidDomain(format!(
                "box needs 1..=3 matching bounds, got {} lows and {} highs",
                lows.len(),
                highs.len()
            )));
        }
        if lows.iter().zip(&highs).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidDomain("box needs lows[i] < highs[i]".into()));
        }
        if d == 1 {
            return Self::interval(lows[0], highs[0]);
        }
        Ok(Self { kind: DomainKind::Box { lows, highs }, lipschitz: T::one() })
    }

    pub fn unit_square() -> Self {
        Self::axis_box(vec![T::zero(); 2], vec![T::one(); 2]).expect("valid")
    }

    /// Strictly convex polygon with counterclockwise vertices.
    pub fn polygon(vertices: Vec<[T; 2]>, lipschitz: T) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidDomain("polygon needs at least 3 vertices".into()));
        }
        if !(lipschitz >= T::zero()) || !lipschitz.is_finite() {
            return Err(Error::InvalidDomain("Lipschitz constant must be finite and >= 0".into()));
        }
        for i in 0..n {
            let (a, b, c) = (vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if !(cross > T::zero()) {
                return Err(Error::InvalidDomain(format!(
                    "polygon must be strictly convex and counterclockwise (turn at vertex {})",
                    (i + 1) % n
                )));
            }
        }
        Ok(Self { kind: DomainKind::Polygon { vertices }, lipschitz })
    }

    /// The square with vertices `(±1, 0)`, `(0, ±1)`.
    pub fn rotated_square() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self::polygon(vec![[o, z], [z, o], [-o, z], [z, -o]], T::one()).expect("valid")
    }

    pub fn kind(&self) -> &DomainKind<T> {
        &self.kind
    }

    pub fn lipschitz(&self) -> T {
        self.lipschitz
    }

    pub fn with_lipschitz(mut self, m: T) -> Result<Self> {
        if !(m >= T::zero()) || !m.is_finite() {
            return Err(Error::InvalidDomain("Lipschitz constant must be finite and >= 0".into()));
        }
        self.lipschitz = m;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DomainKind::Interval { .. } => 1,
            DomainKind::Box { lows, .. } => lows.len(),
            DomainKind::Polygon { .. } => 2,
        }
    }

    /// Smallest admissible `α` is anything strictly above this value.
    pub fn alpha_threshold(&self) -> T {
        (T::one() + self.lipschitz * self.lipschitz).sqrt()
    }

    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        match &self.kind {
            DomainKind::Interval { a, b } => (vec![*a], vec![*b]),
            DomainKind::Box { lows, highs } => (lows.clone(), highs.clone()),
            DomainKind::Polygon { vertices } => {
                let mut lo = vec![T::infinity(); 2];
                let mut hi = vec![T::neg_infinity(); 2];
                for v in vertices {
                    for i in 0..2 {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn volume(&self) -> T {
        match &self.kind {
            DomainKind::Interval { a, b } => *b - *a,
            DomainKind::Box { lows, highs } => {
                lows.iter().zip(highs).fold(T::one(), |acc, (l, h)| acc * (*h - *l))
            }
            DomainKind::Polygon { vertices } => {
                let n = vertices.len();
                let twice = (0..n).fold(T::zero(), |acc, i| {
                    let (p, q) = (vertices[i], vertices[(i + 1) % n]);
                    acc + p[0] * q[1] - q[0] * p[1]
                });
                twice / T::lit(2.0)
            }
        }
    }

    /// Flat pieces of the boundary, in a fixed order.
    pub fn boundary_pieces(&self) -> Vec<BoundaryPiece<T>> {
        match &self.kind {
            DomainKind::Interval { a, b } => vec![
                BoundaryPiece::Point { position: vec![*a] },
                BoundaryPiece::Point { position: vec![*b] },
            ],
            DomainKind::Box { lows, highs } => {
                let mut out = Vec::with_capacity(2 * lows.len());
                for axis in 0..lows.len() {
                    for value in [lows[axis], highs[axis]] {
                        out.push(BoundaryPiece::Face {
                            axis,
                            value,
                            lows: lows.clone(),
                            highs: highs.clone(),
                        });
                    }
                }
                out
            }
            DomainKind::Polygon { vertices } => (0..vertices.len())
                .map(|i| BoundaryPiece::Edge {
                    start: vertices[i],
                    end: vertices[(i + 1) % vertices.len()],
                })
                .collect(),
        }
    }

    /// `σ(∂D)`; counting measure of the endpoints in one dimension.
    pub fn surface_measure(&self) -> T {
        self.boundary_pieces().iter().map(BoundaryPiece::measure).sum()
    }

    /// Strict membership in the open domain. Polygon half-planes are tested
    /// with the absolute slack `tol`.
    pub fn contains_with_tol(&self, p: &[T], tol: T) -> bool {
        match &self.kind {
            DomainKind::Interval { a, b } => *a < p[0] && p[0] < *b,
            DomainKind::Box { lows, highs } => {
                (0..lows.len()).all(|i| lows[i] < p[i] && p[i] < highs[i])
            }
            DomainKind::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| signed_edge_distance(&vertices[i], &vertices[(i + 1) % n], p) > tol)
            }
        }
    }

    pub fn contains(&self, p: &[T]) -> bool {
        self.contains_with_tol(p, T::zero())
    }

    /// Euclidean distance from a point of the closure to `∂D`.
    pub fn dist_to_boundary(&self, p: &[T]) -> T {
        match &self.kind {
            DomainKind::Interval { a, b } => (p[0] - *a).abs().min((*b - p[0]).abs()),
            DomainKind::Box { lows, highs } => (0..lows.len()).fold(T::infinity(), |acc, i| {
                acc.min((p[i] - lows[i]).abs()).min((highs[i] - p[i]).abs())
            }),
            DomainKind::Polygon { .. } => self
                .boundary_pieces()
                .iter()
                .fold(T::infinity(), |acc, piece| acc.min(piece.distance(p))),
        }
    }

    /// Nearest point of `∂D` to `p` (ties resolved towards the first piece).
    pub fn project_to_boundary(&self, p: &[T]) -> Vec<T> {
        match &self.kind {
            DomainKind::Interval { a, b } => {
                if (p[0] - *a).abs() <= (*b - p[0]).abs() {
                    vec![*a]
                } else {
                    vec![*b]
                }
            }
            DomainKind::Box { lows, highs } => {
                let mut q: Vec<T> = (0..lows.len()).map(|i| p[i].max(lows[i]).min(highs[i])).collect();
                let mut best = (T::infinity(), 0usize, lows[0]);
                for i in 0..lows.len() {
                    for v in [lows[i], highs[i]] {
                        let gap = (q[i] - v).abs();
                        if gap < best.0 {
                            best = (gap, i, v);
                        }
                    }
                }
                q[best.1] = best.2;
                q
            }
            DomainKind::Polygon { vertices } => {
                let n = vertices.len();
                let mut best = (T::infinity(), [p[0], p[1]]);
                for i in 0..n {
                    let q = closest_on_segment(&vertices[i], &vertices[(i + 1) % n], [p[0], p[1]]);
                    let d = dist2(&q, p);
                    if d < best.0 {
                        best = (d, q);
                    }
                }
                best.1.to_vec()
            }
        }
    }
}

/// Distance of `p` to the line through `a → b`, positive on the left (inside
/// for counterclockwise polygons).
fn signed_edge_distance<T: Scalar>(a: &[T; 2], b: &[T; 2], p: &[T]) -> T {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    (dx * (p[1] - a[1]) - dy * (p[0] - a[0])) / (dx * dx + dy * dy).sqrt()
}

type Key = [i64; 3];

fn key_of(idx: &[i64]) -> Key {
    let mut k = [0i64; 3];
    k[..idx.len()].copy_from_slice(idx);
    k
}

/// The nearest-neighbor graph `D^(k)` with degrees, graph boundary and the
/// vertex measure `m_k(x) = 2^{-kd} v_k(x) / (2d)`.
#[derive(Debug, Clone)]
pub struct LatticeDomain<T> {
    level: u32,
    dim: usize,
    spacing: T,
    indices: Vec<i64>,
    positions: Vec<T>,
    neighbors: Vec<usize>,
    degree: Vec<u8>,
    boundary: Vec<bool>,
    measure: Vec<T>,
    lookup: HashMap<Key, usize>,
    discarded: usize,
}

/// Builds `D^(k)`. Disconnected site sets keep only their largest component
/// (earliest in lexicographic order on ties) and report the discarded count
/// through [`LatticeDomain::discarded_sites`].
pub fn build_lattice<T: Scalar>(domain: &Domain<T>, k: u32) -> Result<LatticeDomain<T>> {
    if k == 0 || k > 24 {
        return Err(Error::InvalidArgument(format!("lattice level must be in 1..=24, got {k}")));
    }
    let d = domain.dim();
    let h = T::dyadic(k);
    let tol = h * T::lit(1e-9);
    let (lo, hi) = domain.bounding_box();
    let ranges: Vec<(i64, i64)> = (0..d)
        .map(|i| {
            let a = (lo[i] / h).floor().to_i64().unwrap_or(0) - 1;
            let b = (hi[i] / h).ceil().to_i64().unwrap_or(0) + 1;
            (a, b)
        })
        .collect();

    // Lexicographic scan: first coordinate outermost.
    let mut candidates: Vec<Vec<i64>> = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut point = vec![T::zero(); d];
    'scan: loop {
        for i in 0..d {
            point[i] = T::from_i64(idx[i]).expect("index") * h;
        }
        if domain.contains_with_tol(&point, tol) {
            candidates.push(idx.clone());
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                break 'scan;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] <= ranges[axis].1 {
                break;
            }
            idx[axis] = ranges[axis].0;
        }
    }

    let cand_lookup: HashMap<Key, usize> =
        candidates.iter().enumerate().map(|(i, c)| (key_of(c), i)).collect();
    let neighbor_of = |c: &[i64], axis: usize, step: i64| -> Option<usize> {
        let mut q = key_of(c);
        q[axis] += step;
        cand_lookup.get(&q).copied()
    };

    // Connected components by BFS in scan order.
    let mut component = vec![usize::MAX; candidates.len()];
    let mut sizes: Vec<usize> = Vec::new();
    for start in 0..candidates.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        component[start] = id;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for axis in 0..d {
                for step in [-1i64, 1] {
                    if let Some(v) = neighbor_of(&candidates[u], axis, step) {
                        if component[v] == usize::MAX {
                            component[v] = id;
                            queue.push_back(v);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    let best = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (id, &s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((id, s)),
        });
    let (keep, kept) = match best {
        Some((id, s)) if s >= 2 => (id, s),
        _ => return Err(Error::EmptyLattice { level: k }),
    };

    let mut indices = Vec::with_capacity(kept * d);
    let mut lookup = HashMap::with_capacity(kept);
    for (i, c) in candidates.iter().enumerate() {
        if component[i] == keep {
            lookup.insert(key_of(c), indices.len() / d);
            indices.extend_from_slice(c);
        }
    }
    let n = kept;
    let mut neighbors = vec![NO_SITE; n * 2 * d];
    let mut degree = vec![0u8; n];
    for s in 0..n {
        let c = &indices[s * d..(s + 1) * d];
        for axis in 0..d {
            for (slot, step) in [(0usize, -1i64), (1, 1)] {
                let mut q = key_of(c);
                q[axis] += step;
                if let Some(&t) = lookup.get(&q) {
                    neighbors[s * 2 * d + 2 * axis + slot] = t;
                    degree[s] += 1;
                }
            }
        }
    }
    let positions: Vec<T> = indices.iter().map(|&i| T::from_i64(i).expect("index") * h).collect();
    let cell = h.powi(d as i32);
    let two_d = T::count(2 * d);
    let measure = degree.iter().map(|&v| cell * T::count(v as usize) / two_d).collect();
    let boundary = degree.iter().map(|&v| (v as usize) < 2 * d).collect();
    Ok(LatticeDomain {
        level: k,
        dim: d,
        spacing: h,
        indices,
        positions,
        neighbors,
        degree,
        boundary,
        measure,
        lookup,
        discarded: candidates.len() - n,
    })
}

impl<T: Scalar> LatticeDomain<T> {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lattice spacing `2^{-k}`.
    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn position(&self, site: usize) -> &[T] {
        &self.positions[site * self.dim..(site + 1) * self.dim]
    }

    pub fn lattice_index(&self, site: usize) -> &[i64] {
        &self.indices[site * self.dim..(site + 1) * self.dim]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.degree[site] as usize
    }

    pub fn is_boundary(&self, site: usize) -> bool {
        self.boundary[site]
    }

    /// `m_k(x)`.
    pub fn measure(&self, site: usize) -> T {
        self.measure[site]
    }

    pub fn measures(&self) -> &[T] {
        &self.measure
    }

    pub fn total_measure(&self) -> T {
        self.measure.iter().copied().sum()
    }

    /// Neighbor in direction `±e_axis` (`positive` selects `+`).
    pub fn neighbor(&self, site: usize, axis: usize, positive: bool) -> Option<usize> {
        let s = self.neighbors[site * 2 * self.dim + 2 * axis + positive as usize];
        (s != NO_SITE).then_some(s)
    }

    /// Raw neighbor slots of a site, `NO_SITE` where the neighbor is missing.
    /// Slot `2*axis` is `-e_axis`, slot `2*axis + 1` is `+e_axis`.
    pub fn neighbor_slots(&self, site: usize) -> &[usize] {
        &self.neighbors[site * 2 * self.dim..(site + 1) * 2 * self.dim]
    }

    pub fn neighbors(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbor_slots(site).iter().copied().filter(|&s| s != NO_SITE)
    }

    /// Sites of the graph boundary `∂D^(k) = {v_k < 2d}` in index order.
    pub fn boundary_sites(&self) -> Vec<usize> {
        (0..self.len()).filter(|&s| self.boundary[s]).collect()
    }

    /// Number of lattice points inside `D` dropped because they were not in
    /// the retained connected component.
    pub fn discarded_sites(&self) -> usize {
        self.discarded
    }

    pub fn is_pruned(&self) -> bool {
        self.discarded > 0
    }

    pub fn site_at(&self, idx: &[i64]) -> Option<usize> {
        self.lookup.get(&key_of(idx)).copied()
    }

    /// Sites whose Euclidean distance to `p` is at most `radius`, in index order.
    pub fn sites_within(&self, p: &[T], radius: T) -> Vec<usize> {
        let h = self.spacing;
        let d = self.dim;
        let lo: Vec<i64> = (0..d).map(|i| ((p[i] - radius) / h).floor().to_i64().unwrap_or(0)).collect();
        let hi: Vec<i64> = (0..d).map(|i| ((p[i] + radius) / h).ceil().to_i64().unwrap_or(0)).collect();
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut idx = lo.clone();
        loop {
            if let Some(s) = self.site_at(&idx) {
                if dist2(self.position(s), p) <= r2 {
                    out.push(s);
                }
            }
            let mut axis = d;
            loop {
                if axis == 0 {
                    out.sort_unstable();
                    return out;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] <= hi[axis] {
                    break;
                }
                idx[axis] = lo[axis];
            }
        }
    }

    /// Site nearest to `p`; ties go to the lexicographically smallest site.
    pub fn nearest_site(&self, p: &[T]) -> usize {
        self.nearest_site_where(p, |_| true).expect("lattice is nonempty")
    }

    /// Nearest site satisfying `accept`, searched in growing shells.
    pub fn nearest_site_where(&self, p: &[T], accept: impl Fn(usize) -> bool) -> Option<usize> {
        let h = self.spacing;
        let d = self.dim;
        let base: Vec<i64> = (0..d).map(|i| (p[i] / h).round().to_i64().unwrap_or(0)).collect();
        let max_extent = (0..d)
            .map(|i| {
                let (mn, mx) = (0..self.len()).fold((i64::MAX, i64::MIN), |(a, b), s| {
                    let v = self.indices[s * d + i];
                    (a.min(v), b.max(v))
                });
                (mn - base[i]).abs().max((mx - base[i]).abs())
            })
            .max()
            .unwrap_or(0);
        let mut best: Option<(T, usize)> = None;
        let half = T::lit(0.5);
        for r in 0..=max_extent + 1 {
            if let Some((bd, _)) = best {
                let reach = (T::from_i64(r).expect("radius") - half) * h;
                if reach > T::zero() && reach * reach > bd {
                    break;
                }
            }
            for_each_shell_point(&base, r, |idx| {
                if let Some(s) = self.site_at(idx) {
                    if accept(s) {
                        let dd = dist2(self.position(s), p);
                        match best {
                            Some((bd, bs)) if bd < dd || (bd == dd && bs < s) => {}
                            _ => best = Some((dd, s)),
                        }
                    }
                }
            });
        }
        best.map(|(_, s)| s)
    }

    /// One CSV row per site: index, coordinates, degree, boundary flag, `m_k`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let coords: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "index,{},degree,boundary,m_k", coords.join(","))?;
        for s in 0..self.len() {
            let pos: Vec<String> = self.position(s).iter().map(|v| format!("{v}")).collect();
            writeln!(
                w,
                "{s},{},{},{},{}",
                pos.join(","),
                self.degree(s),
                self.boundary[s] as u8,
                self.measure[s]
            )?;
        }
        Ok(())
    }
}

/// Visits the integer points at Chebyshev distance exactly `r` from `base`.
fn for_each_shell_point(base: &[i64], r: i64, mut f: impl FnMut(&[i64])) {
    let d = base.len();
    let mut off = vec![-r; d];
    let mut idx = vec![0i64; d];
    loop {
        if off.iter().any(|o| o.abs() == r) {
            for i in 0..d {
                idx[i] = base[i] + off[i];
            }
            f(&idx);
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
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
