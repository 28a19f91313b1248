//! Subcommand implementations. Each returns a [`Report`] that `main` writes
//! to the output directory.

use std::sync::Arc;

use dlt_core::fk_solver::convergence_study_with;
use dlt_core::kernel::{llt_error_of, DEFAULT_SITE_CAP};
use dlt_core::moments::{example54_monte_carlo, stationary_mean_local_time};
use dlt_core::partition::check_weak_convergence;
use dlt_core::walker::{mean_and_se, par_paths};
use dlt_core::{
    accumulate, assign_patches, build_lattice, build_partition, default_alpha, estimate_u, exact_moment_continuum,
    exact_moment_discrete, exact_u, example54_ratios, fd_oracle, graph_boundary_sum, increment_scaling, mc_moment,
    parity_averaged_density, simulate_path, transition_density, verify_bounds, Assignment, BoundaryData,
    BoundaryWeights, BoundsOptions, Coefficient, Domain, DomainKind, Error, FdOptions, FkDiscretization,
    LatticeDomain, MomentSpec, Partition, ReferenceKernel, RobinProblem, Start, StartLaw, TimeMode, WalkConfig,
};
use serde_json::json;

use crate::config::{ConfigError, ExperimentConfig, StartChoice, WalkerChoice};
use crate::expr::Expr;
use crate::report::{coords, opt, Csv, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for I/O, 2 for invalid input, 3 when a solver failed to converge.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Core(Error::NoConvergence(_)) => 3,
            Self::Config(_) | Self::Core(_) | Self::Invalid(_) => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Everything built for one lattice level.
struct Level {
    lattice: Arc<LatticeDomain<f64>>,
    partition: Partition<f64>,
    assignment: Assignment<f64>,
    weights: BoundaryWeights<f64>,
    walk: WalkConfig<f64>,
}

fn domain_or(cfg: &ExperimentConfig, default: fn() -> Domain<f64>) -> CliResult<Domain<f64>> {
    let domain = cfg.domain.clone().unwrap_or_else(default);
    let dim = domain.dim();
    if let WalkerChoice::Biased { a, h } = &cfg.walker {
        check_coordinates(a, "walker.a", dim)?;
        check_coordinates(h, "walker.h", dim)?;
    }
    Ok(domain)
}

fn check_coordinates(e: &Expr, name: &str, dim: usize) -> CliResult<()> {
    match e.max_coordinate() {
        Some(i) if i >= dim => Err(CliError::Invalid(format!(
            "{name} = \"{e}\" uses coordinate {} but the domain has dimension {dim}",
            ["x", "y", "z"][i]
        ))),
        _ => Ok(()),
    }
}

fn check_point(p: &[f64], name: &str, domain: &Domain<f64>) -> CliResult<()> {
    if p.len() != domain.dim() {
        return Err(CliError::Invalid(format!("{name} has {} coordinates, the domain has dimension {}", p.len(), domain.dim())));
    }
    if !domain.contains_with_tol(p, 1e-12) {
        return Err(CliError::Invalid(format!("{name} = [{}] lies outside the domain", coords(p))));
    }
    Ok(())
}

fn levels_or(cfg: &ExperimentConfig, default: &[u32]) -> Vec<u32> {
    cfg.levels.clone().unwrap_or_else(|| default.to_vec())
}

fn simple_only(cfg: &ExperimentConfig, command: &str) -> CliResult<()> {
    match cfg.walker {
        WalkerChoice::Simple => Ok(()),
        WalkerChoice::Biased { .. } => {
            Err(CliError::Invalid(format!("{command} compares against the Brownian kernel and needs walker.kind = \"simple\"")))
        }
    }
}

fn build_level(cfg: &ExperimentConfig, domain: &Domain<f64>, k: u32) -> CliResult<Level> {
    let lattice = Arc::new(build_lattice(domain, k)?);
    let partition = build_partition(domain, k)?;
    let alpha = cfg.alpha.unwrap_or_else(|| default_alpha(domain));
    let assignment = assign_patches(&partition, &lattice, alpha, cfg.assignment)?;
    let weights = BoundaryWeights::new(&assignment, &lattice)?;
    let walk = match &cfg.walker {
        WalkerChoice::Simple => WalkConfig::simple(lattice.clone(), cfg.mode),
        WalkerChoice::Biased { a, h } => {
            WalkConfig::biased(lattice.clone(), cfg.mode, |x| a.eval(x, 0.0), |x| h.eval(x, 0.0))?
        }
    };
    Ok(Level { lattice, partition, assignment, weights, walk })
}

fn coefficient(e: &Expr) -> Coefficient<f64> {
    if e.is_constant() {
        Coefficient::Constant(e.eval(&[], 0.0))
    } else if e.uses_time() {
        let e = e.clone();
        Coefficient::space_time(move |t, x| e.eval(x, t))
    } else {
        let e = e.clone();
        Coefficient::space(move |x| e.eval(x, 0.0))
    }
}

fn robin_problem(cfg: &ExperimentConfig, domain: &Domain<f64>, horizon: f64) -> CliResult<RobinProblem<f64>> {
    let r = &cfg.robin;
    let dim = domain.dim();
    check_coordinates(&r.initial, "robin.initial", dim)?;
    check_coordinates(&r.g, "robin.g", dim)?;
    check_coordinates(&r.h, "robin.h", dim)?;
    let initial = r.initial.clone();
    Ok(RobinProblem::neumann(domain.clone(), move |x| initial.eval(x, 0.0), horizon)
        .with_g(coefficient(&r.g))
        .with_h(coefficient(&r.h)))
}

fn robin_target(cfg: &ExperimentConfig, domain: &Domain<f64>) -> CliResult<Vec<f64>> {
    match &cfg.robin.target {
        Some(p) => {
            check_point(p, "robin.target", domain)?;
            Ok(p.clone())
        }
        None => {
            let (lo, hi) = domain.bounding_box();
            Ok(lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect())
        }
    }
}

fn has_fd_oracle(cfg: &ExperimentConfig, domain: &Domain<f64>) -> bool {
    matches!(cfg.walker, WalkerChoice::Simple) && !matches!(domain.kind(), DomainKind::Polygon { .. })
}

fn mode_name(mode: TimeMode) -> &'static str {
    match mode {
        TimeMode::Continuous => "continuous",
        TimeMode::DiscreteInterpolated => "discrete-interpolated",
    }
}

fn domain_json(domain: &Domain<f64>) -> serde_json::Value {
    let (lo, hi) = domain.bounding_box();
    let kind = match domain.kind() {
        DomainKind::Interval { .. } => "interval",
        DomainKind::Box { .. } => "box",
        DomainKind::Polygon { .. } => "polygon",
    };
    json!({
        "kind": kind,
        "dim": domain.dim(),
        "bounding_box": [lo, hi],
        "volume": domain.volume(),
        "surface_measure": domain.surface_measure(),
    })
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CliError::Invalid(e.to_string()))
}

fn s(v: impl ToString) -> String {
    v.to_string()
}

pub fn lattice_info(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let levels = levels_or(cfg, &[3, 4, 5]);
    let mut csv = Csv::new(&["k", "spacing", "sites", "boundary_sites", "discarded_sites", "total_measure", "volume"]);
    let mut rows = Vec::new();
    let mut last = None;
    for &k in &levels {
        let lat = build_lattice(&domain, k)?;
        let boundary = lat.boundary_sites().len();
        csv.row(&[
            s(k),
            s(lat.spacing()),
            s(lat.len()),
            s(boundary),
            s(lat.discarded_sites()),
            s(lat.total_measure()),
            s(domain.volume()),
        ]);
        rows.push(json!({
            "k": k,
            "spacing": lat.spacing(),
            "sites": lat.len(),
            "boundary_sites": boundary,
            "discarded_sites": lat.discarded_sites(),
            "total_measure": lat.total_measure(),
        }));
        last = Some(lat);
    }
    let lat = last.expect("levels are nonempty");
    let sites = csv_bytes(|w| lat.write_csv(w))?;
    let summary = format!(
        "lattice-info: k={} has {} sites, {} on the graph boundary",
        lat.level(),
        lat.len(),
        lat.boundary_sites().len()
    );
    Ok(Report::new("lattice_info", json!({ "domain": domain_json(&domain), "levels": rows }), summary)
        .table("lattice_info", csv)
        .raw_table(format!("lattice_sites_k{}", lat.level()), sites))
}

pub fn partition_check(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_square)?;
    let levels = levels_or(cfg, &[3, 4, 5]);
    let test_fn = |x: &[f64]| 1.0 + x.iter().map(|v| v * v).sum::<f64>();
    let built: Vec<Level> = levels.iter().map(|&k| build_level(cfg, &domain, k)).collect::<CliResult<_>>()?;
    let pairs: Vec<(&LatticeDomain<f64>, &Assignment<f64>)> =
        built.iter().map(|l| (l.lattice.as_ref(), &l.assignment)).collect();
    let weak = check_weak_convergence(&domain, &pairs, test_fn);
    let surface = domain.surface_measure();
    let mut csv = Csv::new(&[
        "k",
        "patches",
        "partition_constant",
        "alpha",
        "max_distance_ratio",
        "max_set_size",
        "assigned_sites",
        "sigma_total",
        "weak_error",
    ]);
    let mut rows = Vec::new();
    let mut passed = true;
    for (l, &err) in built.iter().zip(&weak) {
        let ratio = l.assignment.max_distance_ratio(&l.partition, &l.lattice);
        let total = l.assignment.total_mass();
        passed &= ratio <= l.assignment.alpha() + 1e-12;
        passed &= (total - surface).abs() <= 1e-9 * surface;
        csv.row(&[
            s(l.lattice.level()),
            s(l.partition.len()),
            s(l.partition.constant()),
            s(l.assignment.alpha()),
            s(ratio),
            s(l.assignment.max_set_size()),
            s(l.assignment.assigned_sites().len()),
            s(total),
            s(err),
        ]);
        rows.push(json!({
            "k": l.lattice.level(),
            "patches": l.partition.len(),
            "partition_constant": l.partition.constant(),
            "alpha": l.assignment.alpha(),
            "max_distance_ratio": ratio,
            "max_set_size": l.assignment.max_set_size(),
            "sigma_total": total,
            "weak_error": err,
        }));
    }
    if weak.len() >= 2 {
        passed &= weak[weak.len() - 1] <= weak[0];
    }
    let top = built.last().expect("levels are nonempty");
    let assignment = csv_bytes(|w| top.assignment.write_csv(w))?;
    let summary = format!(
        "partition-check: {} levels, weak error {:.3e} -> {:.3e}, surface measure {surface}",
        built.len(),
        weak[0],
        weak[weak.len() - 1]
    );
    Ok(Report::new(
        "partition_check",
        json!({
            "domain": domain_json(&domain),
            "assignment_mode": cfg.assignment,
            "test_function": "1 + |x|^2",
            "levels": rows,
        }),
        summary,
    )
    .table("partition_check", csv)
    .raw_table(format!("assignment_k{}", top.lattice.level()), assignment)
    .check(passed))
}

pub fn simulate(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let k = *levels_or(cfg, &[5]).last().expect("levels are nonempty");
    let horizon = cfg.horizon.unwrap_or(1.0);
    let paths = cfg.paths.unwrap_or(1000);
    let level = build_level(cfg, &domain, k)?;
    let start = match &cfg.simulate_start {
        StartChoice::Stationary => Start::Stationary,
        StartChoice::Point(p) => {
            check_point(p, "simulate.start", &domain)?;
            Start::Site(level.lattice.nearest_site(p))
        }
    };
    let seed = cfg.seed;
    let results: Vec<(usize, usize, usize, f64)> = par_paths(paths, |i| {
        let path = simulate_path(&level.walk, start, horizon, seed, i);
        let l = accumulate(&path, &level.weights).final_value();
        (path.start_site(), path.jumps(), path.end_site(), l)
    });
    let mut csv = Csv::new(&["path", "start_site", "jumps", "end_site", "local_time"]);
    for (i, (a, j, b, l)) in results.iter().enumerate() {
        csv.row(&[s(i), s(a), s(j), s(b), s(l)]);
    }
    let values: Vec<f64> = results.iter().map(|r| r.3).collect();
    let (mean, se) = mean_and_se(&values);
    let exact = matches!(start, Start::Stationary)
        .then(|| stationary_mean_local_time(&level.walk, &level.weights, horizon));
    let first = simulate_path(&level.walk, start, horizon, seed, 0);
    let path_csv = csv_bytes(|w| first.write_csv(w))?;
    let lt_csv = csv_bytes(|w| accumulate(&first, &level.weights).write_csv(w))?;
    let summary = format!("simulate: k={k}, {paths} paths to t={horizon}, mean L = {mean:.6} +/- {se:.6}");
    Ok(Report::new(
        "simulate",
        json!({
            "domain": domain_json(&domain),
            "k": k,
            "horizon": horizon,
            "paths": paths,
            "seed": seed,
            "mode": mode_name(cfg.mode),
            "mean_local_time": mean,
            "se": se,
            "exact_stationary_mean": exact,
        }),
        summary,
    )
    .table("simulate", csv)
    .raw_table("path_0", path_csv)
    .raw_table("local_time_0", lt_csv))
}

pub fn localtime_convergence(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let levels = levels_or(cfg, &[3, 4, 5, 6, 7]);
    let horizon = cfg.horizon.unwrap_or(1.0);
    let paths = cfg.paths.unwrap_or(2000);
    let continuum = horizon * domain.surface_measure() / (2.0 * domain.volume());
    let mut csv = Csv::new(&["k", "exact_discrete", "mc_mean", "mc_se", "z", "continuum", "rel_gap"]);
    let mut rows = Vec::new();
    let mut passed = true;
    for &k in &levels {
        let level = build_level(cfg, &domain, k)?;
        let exact = stationary_mean_local_time(&level.walk, &level.weights, horizon);
        let values = par_paths(paths, |i| {
            let path = simulate_path(&level.walk, Start::Stationary, horizon, cfg.seed, i);
            accumulate(&path, &level.weights).final_value()
        });
        let (mean, se) = mean_and_se(&values);
        let z = (mean - exact).abs() / se.max(f64::MIN_POSITIVE);
        passed &= z <= 3.0;
        let gap = (exact - continuum).abs() / continuum;
        csv.row(&[s(k), s(exact), s(mean), s(se), s(z), s(continuum), s(gap)]);
        rows.push(json!({
            "k": k, "exact_discrete": exact, "mc_mean": mean, "mc_se": se, "z": z,
            "continuum": continuum, "rel_gap": gap,
        }));
    }
    let summary = format!("localtime-convergence: {} levels, stationary E[L_t] vs continuum {continuum:.6}", levels.len());
    Ok(Report::new(
        "localtime_convergence",
        json!({ "domain": domain_json(&domain), "horizon": horizon, "paths": paths, "seed": cfg.seed, "levels": rows }),
        summary,
    )
    .table("localtime_convergence", csv)
    .check(passed))
}

pub fn llt_check(cfg: &ExperimentConfig) -> CliResult<Report> {
    simple_only(cfg, "llt-check")?;
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let levels = levels_or(cfg, &[3, 4, 5, 6, 7]);
    let times = cfg.llt_times.clone().unwrap_or_else(|| vec![0.2, 0.5, 1.0]);
    let reference = ReferenceKernel::new(&domain)?;
    let mut csv = Csv::new(&["k", "t", "sites", "error"]);
    let mut errors = vec![Vec::new(); times.len()];
    for &k in &levels {
        let level = build_level(cfg, &domain, k)?;
        for (i, &t) in times.iter().enumerate() {
            let kernel = match cfg.mode {
                TimeMode::Continuous => transition_density(&level.walk, t, DEFAULT_SITE_CAP)?,
                TimeMode::DiscreteInterpolated => parity_averaged_density(&level.walk, t, DEFAULT_SITE_CAP)?,
            };
            let err = llt_error_of(&kernel, &level.walk, &reference);
            csv.row(&[s(k), s(t), s(level.lattice.len()), s(err)]);
            errors[i].push(err);
        }
    }
    let per_time: Vec<_> = times
        .iter()
        .zip(&errors)
        .map(|(t, e)| json!({ "t": t, "errors": e, "decreasing": e.last() <= e.first() }))
        .collect();
    let passed = errors.iter().all(|e| e.last() <= e.first());
    let worst = errors.iter().filter_map(|e| e.last().copied()).fold(0.0, f64::max);
    let summary = format!("llt-check: sup error at k={} is {worst:.3e}", levels[levels.len() - 1]);
    Ok(Report::new(
        "llt_check",
        json!({ "domain": domain_json(&domain), "mode": mode_name(cfg.mode), "levels": levels, "times": per_time }),
        summary,
    )
    .table("llt_check", csv)
    .check(passed))
}

pub fn bounds_check(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let levels = levels_or(cfg, &[3, 4, 5]);
    let times = cfg.bounds_times.clone().unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.5]);
    let opts = BoundsOptions { seed: cfg.seed, ..BoundsOptions::default() };
    let mut csv = Csv::new(&["k", "upper_constant", "lower_constant", "holder_constant", "exit_slope", "exit_intercept"]);
    let mut reports = Vec::new();
    for &k in &levels {
        let level = build_level(cfg, &domain, k)?;
        let r = verify_bounds(&level.walk, &times, &opts)?;
        csv.row(&[
            s(r.level),
            s(r.upper_constant),
            s(r.lower_constant),
            s(r.holder_constant),
            s(r.exit_slope),
            s(r.exit_intercept),
        ]);
        reports.push(r);
    }
    let spread = |f: fn(&dlt_core::BoundsReport) -> f64| {
        let (lo, hi) = reports.iter().map(f).fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi / lo
    };
    let upper_spread = spread(|r| r.upper_constant);
    let lower_spread = spread(|r| r.lower_constant);
    let passed = upper_spread <= 2.0 && lower_spread <= 2.0 && reports.iter().all(|r| r.exit_slope < 0.0);
    let summary = format!(
        "bounds-check: upper constants within x{upper_spread:.3}, lower within x{lower_spread:.3} across {} levels",
        reports.len()
    );
    Ok(Report::new(
        "bounds_check",
        json!({
            "domain": domain_json(&domain),
            "times": times,
            "upper_exponent": opts.upper_exponent,
            "lower_exponent": opts.lower_exponent,
            "upper_spread": upper_spread,
            "lower_spread": lower_spread,
            "levels": reports,
        }),
        summary,
    )
    .table("bounds_check", csv)
    .check(passed))
}

pub fn boundary_sum(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let levels = levels_or(cfg, &[3, 4, 5, 6, 7]);
    let times = cfg.boundary_sum_times.clone().unwrap_or_else(|| vec![0.01, 0.1, 1.0]);
    let mut csv = Csv::new(&["k", "t", "sum"]);
    let mut sums = vec![Vec::new(); times.len()];
    for &k in &levels {
        let level = build_level(cfg, &domain, k)?;
        for (i, &t) in times.iter().enumerate() {
            let v = graph_boundary_sum(&level.walk, t);
            csv.row(&[s(k), s(t), s(v)]);
            sums[i].push(v);
        }
    }
    let ratios: Vec<f64> = sums
        .iter()
        .map(|v| v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let passed = ratios.iter().all(|&r| r < 3.0);
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let per_time: Vec<_> = times
        .iter()
        .zip(&sums)
        .zip(&ratios)
        .map(|((t, v), r)| json!({ "t": t, "sums": v, "max_over_min": r }))
        .collect();
    let summary = format!("boundary-sum: max/min across levels at most {worst:.3}");
    Ok(Report::new("boundary_sum", json!({ "domain": domain_json(&domain), "levels": levels, "times": per_time }), summary)
        .table("boundary_sum", csv)
        .check(passed))
}

pub fn moments_check(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let levels = levels_or(cfg, &[3, 4]);
    let paths = cfg.paths.unwrap_or(4000);
    let m = &cfg.moments;
    check_coordinates(&m.integrand, "moments.integrand", domain.dim())?;
    let start = match &m.start {
        StartChoice::Stationary => StartLaw::Stationary,
        StartChoice::Point(p) => {
            check_point(p, "moments.start", &domain)?;
            StartLaw::Point(p.clone())
        }
    };
    let integrand = |x: &[f64]| m.integrand.eval(x, 0.0);
    let mut csv = Csv::new(&["k", "order", "a", "b", "exact_discrete", "mc_mean", "mc_se", "z", "continuum"]);
    let mut rows = Vec::new();
    let mut passed = true;
    let mut worst = 0.0f64;
    for &k in &levels {
        let level = build_level(cfg, &domain, k)?;
        for &order in &m.orders {
            for &[a, b] in &m.windows {
                let spec = MomentSpec::new(order, a, b, start.clone())?;
                let exact = exact_moment_discrete(&spec, &level.weights, &level.walk, integrand)?;
                let (mean, se) = mc_moment(&spec, &level.weights, &level.walk, integrand, paths, cfg.seed)?;
                let z = if se > 0.0 { (mean - exact).abs() / se } else if mean == exact { 0.0 } else { f64::INFINITY };
                passed &= z <= 3.0;
                worst = worst.max(z);
                let continuum = match exact_moment_continuum(&spec, &domain, BoundaryData::General(&integrand)) {
                    Ok(v) => Some(v),
                    Err(Error::Unsupported(_) | Error::UnsupportedDomain(_)) => None,
                    Err(e) => return Err(e.into()),
                };
                csv.row(&[s(k), s(order), s(a), s(b), s(exact), s(mean), s(se), s(z), opt(continuum)]);
                rows.push(json!({
                    "k": k, "order": order, "a": a, "b": b, "exact_discrete": exact,
                    "mc_mean": mean, "mc_se": se, "z": z, "continuum": continuum,
                }));
            }
        }
    }
    let summary = format!("moments-check: {} cases, largest |z| = {worst:.2}", rows.len());
    Ok(Report::new(
        "moments_check",
        json!({
            "domain": domain_json(&domain),
            "integrand": m.integrand.source(),
            "paths": paths,
            "seed": cfg.seed,
            "cases": rows,
        }),
        summary,
    )
    .table("moments_check", csv)
    .check(passed))
}

pub fn increment_scaling_cmd(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let levels = levels_or(cfg, &[3, 4, 5]);
    let widths = cfg.scaling_widths.clone().unwrap_or_else(|| vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5]);
    let order = cfg.scaling_order;
    let mut csv = Csv::new(&["k", "order", "width", "moment", "constant"]);
    let mut fits = Csv::new(&["k", "order", "slope", "intercept"]);
    let mut reports = Vec::new();
    for &k in &levels {
        let level = build_level(cfg, &domain, k)?;
        let r = increment_scaling(&level.walk, &level.weights, order, &widths)?;
        for ((w, mom), c) in r.widths.iter().zip(&r.moments).zip(&r.constants) {
            csv.row(&[s(k), s(order), s(w), s(mom), s(c)]);
        }
        fits.row(&[s(k), s(order), s(r.slope), s(r.intercept)]);
        reports.push(r);
    }
    let top = reports.last().expect("levels are nonempty");
    let summary = format!("increment-scaling: order {order}, log-log slope {:.4} at k={}", top.slope, top.level);
    Ok(Report::new(
        "increment_scaling",
        json!({ "domain": domain_json(&domain), "order": order, "levels": reports }),
        summary,
    )
    .table("increment_scaling", csv)
    .table("increment_scaling_fit", fits))
}

pub fn example54(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::rotated_square)?;
    let levels = levels_or(cfg, &[4, 5, 6, 7]);
    let (t, c) = (cfg.example54_t, cfg.example54_c);
    let mut csv = Csv::new(&[
        "k",
        "mean_local_time",
        "mean_occupation",
        "mean_naive",
        "ratio_occupation",
        "ratio_naive",
        "mc_local_time",
        "mc_local_time_se",
    ]);
    let mut rows = Vec::new();
    for &k in &levels {
        let r = example54_ratios(&domain, k, t, c)?;
        let mc = match cfg.paths {
            Some(paths) => {
                let level = build_level(cfg, &domain, k)?;
                let delta = c * level.lattice.spacing();
                Some(example54_monte_carlo(&domain, &level.walk, &level.weights, t, delta, paths, cfg.seed))
            }
            None => None,
        };
        csv.row(&[
            s(k),
            s(r.mean_local_time),
            s(r.mean_occupation),
            s(r.mean_naive),
            s(r.ratio_occupation),
            s(r.ratio_naive),
            opt(mc.map(|m| m[0].0)),
            opt(mc.map(|m| m[0].1)),
        ]);
        let mut row = serde_json::to_value(&r).map_err(|e| CliError::Invalid(e.to_string()))?;
        if let (Some(m), serde_json::Value::Object(map)) = (mc, &mut row) {
            map.insert(
                "monte_carlo".into(),
                json!({
                    "local_time": m[0], "occupation": m[1], "naive": m[2],
                }),
            );
        }
        rows.push((r, row));
    }
    let last = &rows.last().expect("levels are nonempty").0;
    let summary = format!(
        "example54: k={} occupation ratio {:.4}, naive ratio {:.4}",
        last.level, last.ratio_occupation, last.ratio_naive
    );
    Ok(Report::new(
        "example54",
        json!({
            "domain": domain_json(&domain),
            "t": t,
            "c": c,
            "levels": rows.into_iter().map(|(_, v)| v).collect::<Vec<_>>(),
        }),
        summary,
    )
    .table("example54", csv))
}

fn discretization(cfg: &ExperimentConfig, domain: &Domain<f64>, k: u32) -> CliResult<FkDiscretization<f64>> {
    let level = build_level(cfg, domain, k)?;
    Ok(FkDiscretization::from_parts(domain, level.walk, level.weights))
}

pub fn robin_solve(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let k = *levels_or(cfg, &[6]).last().expect("levels are nonempty");
    let horizon = cfg.horizon.unwrap_or(0.5);
    let paths = cfg.paths.unwrap_or(10_000);
    let problem = robin_problem(cfg, &domain, horizon)?;
    let target = robin_target(cfg, &domain)?;
    let disc = discretization(cfg, &domain, k)?;
    let lattice = disc.lattice();
    let site = lattice.nearest_site(&target);
    let est = estimate_u(&problem, &disc, site, paths, cfg.seed)?;
    let exact = match exact_u(&problem, &disc) {
        Ok(v) => Some(v),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let fd = if has_fd_oracle(cfg, &domain) { Some(fd_oracle(&problem, &FdOptions::default())?) } else { None };
    let position = lattice.position(site).to_vec();
    let oracle = fd.as_ref().map(|f| f.value_at(&position));
    let rel_err = oracle.map(|o| (est.estimate - o).abs() / o.abs().max(f64::MIN_POSITIVE));
    let exact_here = exact.as_ref().map(|v| v[site]);

    let mut header: Vec<String> = vec!["site".into()];
    header.extend((0..domain.dim()).map(|i| format!("x{i}")));
    header.extend(["exact_discrete".into(), "oracle".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut sites = Csv::new(&header);
    for z in 0..lattice.len() {
        let p = lattice.position(z);
        let mut row = vec![s(z)];
        row.extend(p.iter().map(s));
        row.push(opt(exact.as_ref().map(|v| v[z])));
        row.push(opt(fd.as_ref().map(|f| f.value_at(p))));
        sites.row(&row);
    }
    let summary = format!(
        "robin-solve: u({}, [{}]) ~ {:.6} +/- {:.6} at k={k}{}",
        horizon,
        coords(&position),
        est.estimate,
        est.se,
        oracle.map_or_else(String::new, |o| format!(", oracle {o:.6}"))
    );
    Ok(Report::new(
        "robin_solve",
        json!({
            "domain": domain_json(&domain),
            "initial": cfg.robin.initial.source(),
            "g": cfg.robin.g.source(),
            "h": cfg.robin.h.source(),
            "horizon": horizon,
            "k": k,
            "site": site,
            "x": position,
            "estimate": est.estimate,
            "se": est.se,
            "paths": paths,
            "seed": cfg.seed,
            "oracle": oracle,
            "rel_err": rel_err,
            "exact_discrete": exact_here,
            "fd_refinement_diffs": fd.as_ref().map(|f| f.refinement_diffs.clone()),
        }),
        summary,
    )
    .table("robin_sites", sites))
}

pub fn convergence_study(cfg: &ExperimentConfig) -> CliResult<Report> {
    let domain = domain_or(cfg, Domain::unit_interval)?;
    let levels = levels_or(cfg, &[3, 4, 5, 6]);
    let horizon = cfg.horizon.unwrap_or(0.5);
    let paths = cfg.paths.unwrap_or(10_000);
    let problem = robin_problem(cfg, &domain, horizon)?;
    let target = robin_target(cfg, &domain)?;
    let oracle = if has_fd_oracle(cfg, &domain) {
        Some(fd_oracle(&problem, &FdOptions::default())?.value_at(&target))
    } else {
        None
    };
    let table = convergence_study_with(&problem, &levels, &target, paths, cfg.seed, oracle, |k| {
        discretization(cfg, &domain, k).map_err(|e| match e {
            CliError::Core(e) => e,
            other => Error::InvalidArgument(other.to_string()),
        })
    })?;
    let mut csv = Csv::new(&["k", "site", "position", "estimate", "se", "exact_discrete", "oracle", "abs_error", "rel_error"]);
    for r in &table.rows {
        csv.row(&[
            s(r.k),
            s(r.site),
            coords(&r.position),
            s(r.estimate),
            s(r.se),
            opt(r.exact_discrete),
            opt(r.oracle),
            opt(r.abs_error),
            opt(r.rel_error),
        ]);
    }
    let last = table.rows.last().expect("levels are nonempty");
    let summary = format!(
        "convergence-study: {} levels, final estimate {:.6} +/- {:.6}{}",
        table.rows.len(),
        last.estimate,
        last.se,
        last.rel_error.map_or_else(String::new, |e| format!(", relative error {e:.3e}"))
    );
    let passed = table.trend_nonincreasing;
    Ok(Report::new(
        "convergence_study",
        json!({
            "domain": domain_json(&domain),
            "initial": cfg.robin.initial.source(),
            "g": cfg.robin.g.source(),
            "h": cfg.robin.h.source(),
            "horizon": horizon,
            "paths": paths,
            "seed": cfg.seed,
            "table": table,
        }),
        summary,
    )
    .table("convergence_study", csv)
    .check(passed))
}
