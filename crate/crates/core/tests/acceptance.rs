//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! and then asserts the criterion at its stated tolerance.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;
use std::time::Instant;

use dlt_core::fk_solver::{FkDiscretization, WalkerSpec};
use dlt_core::geometry::{build_lattice, NO_SITE};
use dlt_core::kernel::{
    graph_boundary_sum, llt_error, transition_density, transition_row, DEFAULT_SITE_CAP,
};
use dlt_core::localtime::{accumulate, BoundaryWeights};
use dlt_core::moments::{
    example54_ratios, exact_moment_continuum, exact_moment_discrete, increment_scaling, mc_moment, BoundaryData,
    MomentSpec, StartLaw,
};
use dlt_core::partition::{assign_patches, build_partition, default_alpha, AssignmentMode};
use dlt_core::walker::{simulate_path, Start, TimeMode, WalkConfig};
use dlt_core::{estimate_u, fd_oracle, Coefficient, Domain, FdOptions, RobinProblem};

fn report(n: u32, pass: bool, detail: &str, started: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} ({:.1}s) {detail}", started.elapsed().as_secs_f64());
}

fn setup(domain: &Domain<f64>, k: u32) -> (WalkConfig<f64>, BoundaryWeights<f64>) {
    let lattice = Arc::new(build_lattice(domain, k).unwrap());
    let partition = build_partition(domain, k).unwrap();
    let assignment = assign_patches(&partition, &lattice, default_alpha(domain), AssignmentMode::NearestSingle).unwrap();
    let weights = BoundaryWeights::new(&assignment, &lattice).unwrap();
    (WalkConfig::simple(lattice, TimeMode::Continuous), weights)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_1_rejected_candidates_on_rotated_square() {
    let started = Instant::now();
    let domain = Domain::rotated_square();
    let naive_limit = 1.0 / SQRT_2;
    let occ_limit = 3.0 / (2.0 * SQRT_2);
    let rows: Vec<_> = (4..=7).map(|k| example54_ratios(&domain, k, 1.0, 2.0).unwrap()).collect();
    let top = rows.last().unwrap();
    let near = rel(top.ratio_naive, naive_limit) < 0.03 && rel(top.ratio_occupation, occ_limit) < 0.03;
    let monotone = rows.windows(2).all(|w| {
        (w[1].ratio_naive - naive_limit).abs() < (w[0].ratio_naive - naive_limit).abs()
            && (w[1].ratio_occupation - occ_limit).abs() < (w[0].ratio_occupation - occ_limit).abs()
    });
    let ladder: Vec<String> =
        rows.iter().map(|r| format!("k={} naive={:.4} occ={:.4}", r.level, r.ratio_naive, r.ratio_occupation)).collect();
    let pass = near && monotone;
    report(1, pass, &format!("{}; limits {naive_limit:.5} / {occ_limit:.5}", ladder.join(", ")), started);
    assert!(pass);
}

#[test]
fn criterion_2_local_limit_theorem() {
    let started = Instant::now();
    let interval = Domain::unit_interval();
    let mut pass = true;
    let mut detail = Vec::new();
    for &t in &[0.2, 0.5, 1.0] {
        let errs: Vec<f64> = (3..=7)
            .map(|k| {
                let (cfg, _) = setup(&interval, k);
                llt_error(&cfg, &interval, t).unwrap()
            })
            .collect();
        let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
        pass &= decreasing && errs[4] < 0.05;
        detail.push(format!("t={t}: {:.4?}", errs));
    }
    let square = Domain::unit_square();
    let e3 = llt_error(&setup(&square, 3).0, &square, 0.5).unwrap();
    let e5 = llt_error(&setup(&square, 5).0, &square, 0.5).unwrap();
    pass &= e5 < e3;
    detail.push(format!("square t=0.5: k3={e3:.4} k5={e5:.4}"));
    report(2, pass, &detail.join("; "), started);
    assert!(pass);
}

#[test]
fn criterion_3_mean_local_time() {
    let started = Instant::now();
    let spec = MomentSpec::new(1, 0.0, 1.0, StartLaw::Stationary).unwrap();
    let interval = Domain::unit_interval();
    let (cfg, w) = setup(&interval, 7);
    let e_interval = exact_moment_discrete(&spec, &w, &cfg, |_| 1.0).unwrap();
    let square = Domain::rotated_square();
    let (cfg, w) = setup(&square, 6);
    let e_square = exact_moment_discrete(&spec, &w, &cfg, |_| 1.0).unwrap();
    let pass = rel(e_interval, 1.0) < 0.02 && rel(e_square, SQRT_2) < 0.03;
    report(
        3,
        pass,
        &format!(
            "interval k=7 E[L_1]={e_interval:.5} (rel {:.4}); rotated square k=6 E[L_1]={e_square:.5} (rel {:.4})",
            rel(e_interval, 1.0),
            rel(e_square, SQRT_2)
        ),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_4_moment_oracle_triangle() {
    let started = Instant::now();
    let interval = Domain::unit_interval();
    let windows = [(0.0, 0.5), (0.25, 0.75)];
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [3, 4] {
        let (cfg, w) = setup(&interval, k);
        for order in [1, 2] {
            for (i, &(a, b)) in windows.iter().enumerate() {
                let spec = MomentSpec::new(order, a, b, StartLaw::Stationary).unwrap();
                let exact = exact_moment_discrete(&spec, &w, &cfg, |_| 1.0).unwrap();
                let seed = 1000 + 10 * k as u64 + 2 * order as u64 + i as u64;
                let (mc, se) = mc_moment(&spec, &w, &cfg, |_| 1.0, 100_000, seed).unwrap();
                let z = (mc - exact).abs() / se;
                pass &= z <= 3.0;
                detail.push(format!("k={k} l={order} [{a},{b}] z={z:.2}"));
            }
        }
    }
    let (cfg, w) = setup(&interval, 6);
    for order in [1, 2] {
        for &(a, b) in &windows {
            let spec = MomentSpec::new(order, a, b, StartLaw::Stationary).unwrap();
            let exact = exact_moment_discrete(&spec, &w, &cfg, |_| 1.0).unwrap();
            let cont = exact_moment_continuum(&spec, &interval, BoundaryData::Constant(1.0)).unwrap();
            let r = rel(exact, cont);
            pass &= r < 0.05;
            detail.push(format!("k=6 l={order} [{a},{b}] discrete={exact:.5} continuum={cont:.5} rel={r:.4}"));
        }
    }
    report(4, pass, &detail.join("; "), started);
    assert!(pass);
}

#[test]
fn criterion_5_tightness_scaling() {
    let started = Instant::now();
    let interval = Domain::unit_interval();
    let widths: Vec<f64> = (2..=6).rev().map(|j| 2f64.powi(-j)).collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [3, 4, 5] {
        let (cfg, w) = setup(&interval, k);
        let rep = increment_scaling(&cfg, &w, 2, &widths).unwrap();
        pass &= (0.9..=1.1).contains(&rep.slope);
        detail.push(format!("k={k} slope={:.3}", rep.slope));
    }
    report(5, pass, &detail.join("; "), started);
    assert!(pass);
}

#[test]
fn criterion_6_boundary_sum_bound() {
    let started = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    let mut all = Vec::new();
    for domain in [Domain::unit_interval(), Domain::unit_square()] {
        let mut values = Vec::new();
        for k in 3..=7 {
            let (cfg, _) = setup(&domain, k);
            let eps = cfg.lattice().spacing();
            for &t in &[0.01, 0.1, 1.0] {
                values.push(graph_boundary_sum(&cfg, t) * eps.max(f64::sqrt(t)));
            }
        }
        let max = values.iter().copied().fold(f64::MIN, f64::max);
        let min = values.iter().copied().fold(f64::MAX, f64::min);
        pass &= max / min < 3.0;
        detail.push(format!("d={} range [{min:.4}, {max:.4}] ratio {:.3}", domain.dim(), max / min));
        all.extend(values);
    }
    let max = all.iter().copied().fold(f64::MIN, f64::max);
    let min = all.iter().copied().fold(f64::MAX, f64::min);
    detail.push(format!("joint ratio {:.3}", max / min));
    report(6, pass, &detail.join("; "), started);
    assert!(pass);
}

#[test]
fn criterion_7_robin_feynman_kac() {
    let started = Instant::now();
    let interval = Domain::unit_interval();
    let t = 0.5;
    let disc = FkDiscretization::build(&interval, 6, &WalkerSpec::Simple, TimeMode::Continuous, AssignmentMode::NearestSingle)
        .unwrap();
    let robin = RobinProblem::neumann(interval.clone(), |_| 1.0, t).with_g(Coefficient::Constant(1.0));
    let oracle_solution = fd_oracle(&robin, &FdOptions::default()).unwrap();
    let site = disc.lattice().nearest_site(&[0.5]);
    let x = disc.lattice().position(site)[0];
    let oracle = oracle_solution.value_at(&[x]);
    let est = estimate_u(&robin, &disc, site, 100_000, 71).unwrap();
    let exact = dlt_core::exact_u(&robin, &disc).unwrap()[site];
    let robin_ok = rel(est.estimate, oracle) < 0.02 && (est.estimate - oracle).abs() <= 3.0 * est.se;

    let cosine = RobinProblem::neumann(interval.clone(), |x| (PI * x[0]).cos(), t);
    let site_c = disc.lattice().nearest_site(&[0.25]);
    let xc = disc.lattice().position(site_c)[0];
    let target = (-PI * PI * t / 2.0).exp() * (PI * xc).cos();
    let est_c = estimate_u(&cosine, &disc, site_c, 100_000, 72).unwrap();
    let exact_c = dlt_core::exact_u(&cosine, &disc).unwrap()[site_c];
    let cosine_ok = (est_c.estimate - target).abs() <= 3.0 * est_c.se;
    let pass = robin_ok && cosine_ok;
    report(
        7,
        pass,
        &format!(
            "g=1: x={x} mc={:.5}±{:.5} oracle={oracle:.5} rel={:.4} z={:.1} exact_discrete={exact:.5}; cos: x={xc} mc={:.5}±{:.5} target={target:.5} z={:.1} exact_discrete={exact_c:.5}",
            est.estimate,
            est.se,
            rel(est.estimate, oracle),
            (est.estimate - oracle).abs() / est.se,
            est_c.estimate,
            est_c.se,
            (est_c.estimate - target).abs() / est_c.se
        ),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_8_biased_walk() {
    let started = Instant::now();
    let mut detail = Vec::new();
    let square: Domain<f64> = Domain::unit_square();
    let lattice = Arc::new(build_lattice(&square, 4).unwrap());
    let biased = WalkConfig::biased(lattice.clone(), TimeMode::Continuous, |_| 1.0, |x| 0.3 * x[0] - 0.2 * x[1]).unwrap();
    let cond = biased.conductances().unwrap();
    let chain = biased.chain();
    let mut symmetric = true;
    let mut balance = 0.0f64;
    for x in 0..lattice.len() {
        for (slot, &y) in lattice.neighbor_slots(x).iter().enumerate() {
            if y == NO_SITE {
                continue;
            }
            let back = slot ^ 1;
            symmetric &= cond.slot_weight(x, slot) == cond.slot_weight(y, back);
            let flow_xy = chain.measure()[x] * chain.rate(x) * chain.prob(x, y);
            let flow_yx = chain.measure()[y] * chain.rate(y) * chain.prob(y, x);
            balance = balance.max((flow_xy - flow_yx).abs() / flow_xy.abs());
        }
    }
    detail.push(format!("conductance symmetry exact={symmetric}; detailed balance {balance:.2e}"));

    let flat = WalkConfig::biased(lattice.clone(), TimeMode::Continuous, |_| 1.0, |_| 0.0).unwrap();
    let simple = WalkConfig::simple(lattice.clone(), TimeMode::Continuous);
    let bitwise = (0..lattice.len()).all(|x| {
        let (ta, pa) = flat.chain().row(x);
        let (tb, pb) = simple.chain().row(x);
        ta == tb
            && pa.iter().zip(pb).all(|(a, b)| a.to_bits() == b.to_bits())
            && flat.chain().rate(x).to_bits() == simple.chain().rate(x).to_bits()
    });
    detail.push(format!("h=0 one-step law bit-identical={bitwise}"));

    let kernel = transition_density(&biased, 0.2, DEFAULT_SITE_CAP).unwrap();
    let cons = kernel.conservation_error();
    let sym = kernel.symmetry_error();
    detail.push(format!("kernel conservation {cons:.2e} symmetry {sym:.2e}"));

    let interval = Domain::unit_interval();
    let spec = WalkerSpec::Biased { a: Arc::new(|_: &[f64]| 1.0), h: Arc::new(|x: &[f64]| x[0]) };
    let disc = FkDiscretization::build(&interval, 5, &spec, TimeMode::Continuous, AssignmentMode::NearestSingle).unwrap();
    let f = |x: &[f64]| (PI * x[0]).cos();
    let t = 0.3;
    let problem = RobinProblem::neumann(interval, f, t);
    let site = disc.lattice().nearest_site(&[0.3]);
    let row = transition_row(disc.config(), t, site);
    let lat = disc.lattice();
    let semigroup: f64 = (0..lat.len()).map(|y| row[y] * f(lat.position(y)) * disc.config().measure()[y]).sum();
    let est = estimate_u(&problem, &disc, site, 100_000, 81).unwrap();
    let z = (est.estimate - semigroup).abs() / est.se;
    detail.push(format!("biased FK mc={:.5}±{:.5} semigroup={semigroup:.5} z={z:.2}", est.estimate, est.se));

    let pass = symmetric && balance < 1e-12 && bitwise && cons < 1e-10 && sym < 1e-10 && z <= 3.0;
    report(8, pass, &detail.join("; "), started);
    assert!(pass);
}

#[test]
fn criterion_9_structural_invariants() {
    let started = Instant::now();
    let mut detail = Vec::new();
    let mut pass = true;

    let domains = [Domain::unit_interval(), Domain::unit_square(), Domain::rotated_square()];
    let mut mass_err = 0.0f64;
    let mut alpha_ok = true;
    for domain in &domains {
        for k in 3..=6 {
            let lattice = build_lattice(domain, k).unwrap();
            let partition = build_partition(domain, k).unwrap();
            let alpha = default_alpha(domain);
            for mode in [AssignmentMode::NearestSingle, AssignmentMode::CoverGraphBoundary] {
                let Ok(asg) = assign_patches(&partition, &lattice, alpha, mode) else {
                    continue;
                };
                let total: f64 = asg.sigma_k().iter().sum();
                mass_err = mass_err.max((total - domain.surface_measure()).abs() / domain.surface_measure());
                alpha_ok &= asg.max_distance_ratio(&partition, &lattice) <= alpha;
            }
        }
    }
    pass &= mass_err < 1e-12 && alpha_ok;
    detail.push(format!("mass {mass_err:.1e}; alpha-distance ok={alpha_ok}"));

    let (cfg, w) = setup(&Domain::unit_square(), 4);
    let mut flat_ok = true;
    let mut additivity = 0.0f64;
    for i in 0..1000 {
        let path = simulate_path(&cfg, Start::Stationary, 1.0, 91, i);
        let tr = accumulate(&path, &w);
        for (j, seg) in path.segments().enumerate() {
            if w.slope(seg.site) == 0.0 {
                flat_ok &= tr.values[j + 1] == tr.values[j];
            }
        }
        let s = 0.37;
        let head = accumulate(&path.truncate(s), &w).final_value();
        let tail = accumulate(&path.shift(s), &w).final_value();
        additivity = additivity.max((head + tail - tr.final_value()).abs());
    }
    pass &= flat_ok && additivity < 1e-12;
    detail.push(format!("flat off boundary={flat_ok}; additivity {additivity:.1e}"));

    let (cfg, _) = setup(&Domain::unit_square(), 3);
    let p1 = transition_density(&cfg, 0.1, DEFAULT_SITE_CAP).unwrap();
    let p2 = transition_density(&cfg, 0.15, DEFAULT_SITE_CAP).unwrap();
    let p12 = transition_density(&cfg, 0.25, DEFAULT_SITE_CAP).unwrap();
    let ck = p12.chapman_kolmogorov_error(&p1, &p2);
    pass &= ck < 1e-8;
    detail.push(format!("Chapman-Kolmogorov {ck:.1e}"));

    let (cfg, w) = setup(&Domain::unit_interval(), 4);
    let spec = MomentSpec::new(2, 0.0, 0.5, StartLaw::Site(5)).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_moment(&spec, &w, &cfg, |_| 1.0, 5000, 17).unwrap())
    };
    let (a, b, c) = (run(1), run(3), run(8));
    let replay = a.0.to_bits() == b.0.to_bits() && a.0.to_bits() == c.0.to_bits() && a.1.to_bits() == c.1.to_bits();
    pass &= replay;
    detail.push(format!("replay across thread counts={replay}"));

    report(9, pass, &detail.join("; "), started);
    assert!(pass);
}
