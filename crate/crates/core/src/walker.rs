//! Simple and biased nearest-neighbor walks on `D^(k)` and their paths.

use std::io::{self, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{LatticeDomain, NO_SITE};
use crate::scalar::Scalar;

/// How time advances between jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMode {
    /// Exponential holding times with the site's total rate.
    #[default]
    Continuous,
    /// One jump per deterministic tick of length `1 / rate`.
    DiscreteInterpolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkKind {
    Simple,
    Biased,
}

/// Symmetric edge weights `μ_xy` of the biased walk, stored per neighbor slot.
#[derive(Debug, Clone)]
pub struct Conductances<T> {
    dim: usize,
    weights: Vec<T>,
    totals: Vec<T>,
}

/// Builds the conductances for the potential `h`.
///
/// An edge between two graph-boundary sites gets `ε^{d-2}/2`; every other edge
/// `{x, x + ε e_i}` gets
/// `(1 + h(x + ε e_i) − h(x)) · (e^{2h(x)} + e^{2h(x + ε e_i)})/2 · ε^{d-2}/2`,
/// evaluated once per edge so that `μ_xy = μ_yx` holds bit for bit.
pub fn build_conductances<T: Scalar>(
    lattice: &LatticeDomain<T>,
    h: impl Fn(&[T]) -> T,
) -> Result<Conductances<T>> {
    let d = lattice.dim();
    let n = lattice.len();
    let eps = lattice.spacing();
    let base = eps.powi(d as i32 - 2) / T::lit(2.0);
    let hv: Vec<T> = (0..n).map(|s| h(lattice.position(s))).collect();
    let two = T::lit(2.0);
    let mut weights = vec![T::zero(); n * 2 * d];
    for x in 0..n {
        for axis in 0..d {
            let Some(y) = lattice.neighbor(x, axis, true) else { continue };
            let w = if lattice.is_boundary(x) && lattice.is_boundary(y) {
                base
            } else {
                let incr = T::one() + hv[y] - hv[x];
                incr * (((two * hv[x]).exp() + (two * hv[y]).exp()) / two) * base
            };
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::NonpositiveWeight { from: x, to: y });
            }
            weights[x * 2 * d + 2 * axis + 1] = w;
            weights[y * 2 * d + 2 * axis] = w;
        }
    }
    let totals = (0..n)
        .map(|x| weights[x * 2 * d..(x + 1) * 2 * d].iter().copied().sum())
        .collect();
    Ok(Conductances { dim: d, weights, totals })
}

impl<T: Scalar> Conductances<T> {
    /// `μ_xy` for the neighbor in slot `slot` (`2*axis` is `−e_axis`).
    pub fn slot_weight(&self, x: usize, slot: usize) -> T {
        self.weights[x * 2 * self.dim + slot]
    }

    pub fn slot_weights(&self, x: usize) -> &[T] {
        &self.weights[x * 2 * self.dim..(x + 1) * 2 * self.dim]
    }

    /// `μ(x) = Σ_y μ_xy`.
    pub fn total(&self, x: usize) -> T {
        self.totals[x]
    }
}

/// Jump rates, one-step law and symmetrizing measure of a nearest-neighbor chain.
#[derive(Debug, Clone)]
pub struct JumpChain<T> {
    rates: Vec<T>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<T>,
    measure: Vec<T>,
    uniform: bool,
    stationary_cdf: Vec<f64>,
}

impl<T: Scalar> JumpChain<T> {
    fn from_parts(lattice: &LatticeDomain<T>, rates: Vec<T>, weights: impl Fn(usize) -> Vec<T>, measure: Vec<T>) -> Self {
        let n = lattice.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        let mut uniform = true;
        offsets.push(0);
        for x in 0..n {
            let w = weights(x);
            let total: T = w.iter().copied().sum();
            let v = lattice.degree(x);
            for (slot, &y) in lattice.neighbor_slots(x).iter().enumerate() {
                if y != NO_SITE {
                    let p = w[slot] / total;
                    uniform &= p == T::one() / T::count(v);
                    targets.push(y);
                    probs.push(p);
                }
            }
            offsets.push(targets.len());
        }
        let mut stationary_cdf = Vec::with_capacity(n);
        let total: f64 = measure.iter().map(|m| m.as_f64()).sum();
        let mut acc = 0.0;
        for m in &measure {
            acc += m.as_f64() / total;
            stationary_cdf.push(acc);
        }
        if let Some(last) = stationary_cdf.last_mut() {
            *last = 1.0;
        }
        Self { rates, offsets, targets, probs, measure, uniform, stationary_cdf }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Total jump rate at `x`.
    pub fn rate(&self, x: usize) -> T {
        self.rates[x]
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    /// Neighbors of `x` and the one-step probabilities to reach them.
    pub fn row(&self, x: usize) -> (&[usize], &[T]) {
        let r = self.offsets[x]..self.offsets[x + 1];
        (&self.targets[r.clone()], &self.probs[r])
    }

    /// `p_xy`, zero if `y` is not a neighbor.
    pub fn prob(&self, x: usize, y: usize) -> T {
        let (t, p) = self.row(x);
        t.iter().position(|&s| s == y).map_or(T::zero(), |i| p[i])
    }

    /// Reversing measure (`m_k` for the simple walk, `m_ε = μ/λ` for the biased one).
    pub fn measure(&self) -> &[T] {
        &self.measure
    }

    /// Whether every row is the uniform law over the neighbors.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub(crate) fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub(crate) fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub(crate) fn probs(&self) -> &[T] {
        &self.probs
    }

    fn next_site<R: Rng>(&self, x: usize, rng: &mut R) -> usize {
        let (t, p) = self.row(x);
        if self.uniform {
            return t[rng.random_range(0..t.len())];
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi.as_f64();
            if u < acc {
                return t[i];
            }
        }
        t[t.len() - 1]
    }

    fn stationary_site<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.stationary_cdf.partition_point(|&c| c <= u).min(self.len() - 1)
    }
}

/// A fully specified walk on a fixed lattice.
#[derive(Debug, Clone)]
pub struct WalkConfig<T> {
    lattice: Arc<LatticeDomain<T>>,
    mode: TimeMode,
    kind: WalkKind,
    chain: JumpChain<T>,
    conductances: Option<Conductances<T>>,
}

impl<T: Scalar> WalkConfig<T> {
    /// Simple walk: rate `d 2^{2k}`, uniform choice among the `v_k(x)` neighbors.
    pub fn simple(lattice: Arc<LatticeDomain<T>>, mode: TimeMode) -> Self {
        let h = lattice.spacing();
        let rate = T::count(lattice.dim()) / (h * h);
        let rates = vec![rate; lattice.len()];
        let measure = lattice.measures().to_vec();
        let chain = JumpChain::from_parts(
            &lattice,
            rates,
            |x| {
                lattice
                    .neighbor_slots(x)
                    .iter()
                    .map(|&y| if y == NO_SITE { T::zero() } else { T::one() })
                    .collect()
            },
            measure,
        );
        Self { lattice, mode, kind: WalkKind::Simple, chain, conductances: None }
    }

    /// Biased walk `Y^ε` with jump rate `a(x) d / ε²` and one-step law `μ_xy / μ(x)`.
    pub fn biased(
        lattice: Arc<LatticeDomain<T>>,
        mode: TimeMode,
        a: impl Fn(&[T]) -> T,
        h: impl Fn(&[T]) -> T,
    ) -> Result<Self> {
        let cond = build_conductances(&lattice, h)?;
        let eps = lattice.spacing();
        let d = T::count(lattice.dim());
        let mut rates = Vec::with_capacity(lattice.len());
        for x in 0..lattice.len() {
            let ax = a(lattice.position(x));
            if !(ax > T::zero()) || !ax.is_finite() {
                return Err(Error::InvalidArgument(format!("a(x) must be positive, got {ax} at site {x}")));
            }
            rates.push(ax * d / (eps * eps));
        }
        let measure = (0..lattice.len()).map(|x| cond.total(x) / rates[x]).collect();
        let chain = JumpChain::from_parts(&lattice, rates, |x| cond.slot_weights(x).to_vec(), measure);
        Ok(Self { lattice, mode, kind: WalkKind::Biased, chain, conductances: Some(cond) })
    }

    pub fn lattice(&self) -> &LatticeDomain<T> {
        &self.lattice
    }

    pub fn lattice_arc(&self) -> &Arc<LatticeDomain<T>> {
        &self.lattice
    }

    pub fn mode(&self) -> TimeMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: TimeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn kind(&self) -> WalkKind {
        self.kind
    }

    pub fn chain(&self) -> &JumpChain<T> {
        &self.chain
    }

    pub fn conductances(&self) -> Option<&Conductances<T>> {
        self.conductances.as_ref()
    }

    /// Symmetrizing measure of the walk.
    pub fn measure(&self) -> &[T] {
        self.chain.measure()
    }
}

/// Starting law of a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Site(usize),
    Stationary,
}

/// Càdlàg record of one realization: the walk sits at `sites[i]` on
/// `[jump_times[i-1], jump_times[i])`, with `jump_times[-1] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path<T> {
    pub jump_times: Vec<T>,
    pub sites: Vec<usize>,
    pub horizon: T,
}

/// One constant-site stretch of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub site: usize,
    pub start: T,
    pub end: T,
}

impl<T: Scalar> Segment<T> {
    pub fn duration(&self) -> T {
        self.end - self.start
    }
}

impl<T: Scalar> Path<T> {
    pub fn constant(site: usize, horizon: T) -> Self {
        Self { jump_times: Vec::new(), sites: vec![site], horizon }
    }

    pub fn jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn start_site(&self) -> usize {
        self.sites[0]
    }

    pub fn end_site(&self) -> usize {
        *self.sites.last().expect("path has a site")
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment<T>> + '_ {
        self.sites.iter().enumerate().map(move |(i, &site)| Segment {
            site,
            start: if i == 0 { T::zero() } else { self.jump_times[i - 1] },
            end: self.jump_times.get(i).copied().unwrap_or(self.horizon),
        })
    }

    /// Site occupied at time `t` (right-continuous).
    pub fn site_at(&self, t: T) -> usize {
        self.sites[self.jump_times.partition_point(|&s| s <= t)]
    }

    /// Total time spent at each site, indexed by site.
    pub fn occupation(&self, n_sites: usize) -> Vec<T> {
        let mut occ = vec![T::zero(); n_sites];
        for seg in self.segments() {
            occ[seg.site] = occ[seg.site] + seg.duration();
        }
        occ
    }

    /// The path restricted to `[0, t]`.
    pub fn truncate(&self, t: T) -> Self {
        let keep = self.jump_times.partition_point(|&s| s <= t);
        Self {
            jump_times: self.jump_times[..keep].to_vec(),
            sites: self.sites[..=keep].to_vec(),
            horizon: t.min(self.horizon),
        }
    }

    /// The shifted path `θ_t ω`: `s ↦ ω(t + s)` on `[0, T − t]`.
    pub fn shift(&self, t: T) -> Self {
        let first = self.jump_times.partition_point(|&s| s <= t);
        Self {
            jump_times: self.jump_times[first..].iter().map(|&s| s - t).collect(),
            sites: self.sites[first..].to_vec(),
            horizon: self.horizon - t,
        }
    }

    /// Path CSV: one row per segment start.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,site")?;
        for seg in self.segments() {
            writeln!(w, "{},{}", seg.start, seg.site)?;
        }
        writeln!(w, "{},{}", self.horizon, self.end_site())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for path `path_index` under master `seed`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    rng.set_stream(path_index);
    rng
}

/// Samples a site from the normalized symmetrizing measure.
pub fn stationary_sample<T: Scalar>(config: &WalkConfig<T>, seed: u64) -> usize {
    config.chain.stationary_site(&mut path_rng(seed, u64::MAX))
}

/// Simulates one path on `[0, horizon]`.
pub fn simulate_path<T: Scalar>(
    config: &WalkConfig<T>,
    start: Start,
    horizon: T,
    seed: u64,
    path_index: u64,
) -> Path<T> {
    let mut rng = path_rng(seed, path_index);
    simulate_with(config, start, horizon, &mut rng)
}

/// Simulates one path drawing from the supplied generator.
pub fn simulate_with<T: Scalar, R: Rng>(config: &WalkConfig<T>, start: Start, horizon: T, rng: &mut R) -> Path<T> {
    let chain = &config.chain;
    let mut x = match start {
        Start::Site(s) => s,
        Start::Stationary => chain.stationary_site(rng),
    };
    let mut path = Path::constant(x, horizon);
    if !(horizon > T::zero()) {
        path.horizon = T::zero();
        return path;
    }
    match config.mode {
        TimeMode::Continuous => {
            let mut t = T::zero();
            loop {
                let u: f64 = rng.random();
                let hold = T::lit(-(1.0 - u).ln()) / chain.rate(x);
                t = t + hold;
                if t > horizon {
                    break;
                }
                x = chain.next_site(x, rng);
                path.jump_times.push(t);
                path.sites.push(x);
            }
        }
        TimeMode::DiscreteInterpolated if chain.uniform => {
            // Constant rate: ticks are exact multiples of the tick length.
            let tick = T::one() / chain.rate(x);
            let mut i = 1usize;
            while T::count(i) * tick <= horizon {
                x = chain.next_site(x, rng);
                path.jump_times.push(T::count(i) * tick);
                path.sites.push(x);
                i += 1;
            }
        }
        TimeMode::DiscreteInterpolated => {
            let mut t = T::zero();
            loop {
                t = t + T::one() / chain.rate(x);
                if t > horizon {
                    break;
                }
                x = chain.next_site(x, rng);
                path.jump_times.push(t);
                path.sites.push(x);
            }
        }
    }
    path
}

/// Runs `f(path_index)` for `0..n` in parallel and returns results in index order.
pub fn par_paths<R: Send>(n: usize, f: impl Fn(u64) -> R + Sync + Send) -> Vec<R> {
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Sample mean and standard error of the mean, reduced sequentially.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
