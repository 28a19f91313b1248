use std::sync::Arc;

use dlt_core::fk_solver::{convergence_study, WalkerSpec};
use dlt_core::geometry::build_lattice;
use dlt_core::kernel::{verify_bounds, BoundsOptions};
use dlt_core::localtime::{accumulate, local_time_by_patches, BoundaryWeights};
use dlt_core::moments::{example54_monte_carlo, example54_ratios, increment_scaling};
use dlt_core::partition::{assign_patches, build_partition, default_alpha, AssignmentMode};
use dlt_core::walker::{simulate_path, Start, TimeMode, WalkConfig};
use dlt_core::{Coefficient, Domain, RobinProblem};

#[test]
fn single_precision_pipeline() {
    let domain: Domain<f32> = Domain::unit_square();
    let lattice = Arc::new(build_lattice(&domain, 4).unwrap());
    let partition = build_partition(&domain, 4).unwrap();
    let asg = assign_patches(&partition, &lattice, default_alpha(&domain), AssignmentMode::NearestSingle).unwrap();
    let w = BoundaryWeights::new(&asg, &lattice).unwrap();
    let cfg = WalkConfig::simple(lattice.clone(), TimeMode::Continuous);
    let path = simulate_path(&cfg, Start::Site(0), 0.5f32, 3, 0);
    let direct = accumulate(&path, &w).final_value();
    let by_patches = local_time_by_patches(&path, &asg, &lattice).unwrap();
    assert!((direct - by_patches).abs() <= 1e-4 * (1.0 + direct));
    let total: f32 = asg.sigma_k().iter().sum();
    assert!((total - 4.0).abs() < 1e-5);
}

#[test]
fn hexagon_cover_assignment() {
    let vertices: Vec<[f64; 2]> = (0..6)
        .map(|i| {
            let a = std::f64::consts::PI / 3.0 * i as f64 + 0.1;
            [0.8 * a.cos(), 0.8 * a.sin()]
        })
        .collect();
    let domain = Domain::polygon(vertices, 2.0).unwrap();
    for k in 3..=6 {
        let lattice = build_lattice(&domain, k).unwrap();
        let partition = build_partition(&domain, k).unwrap();
        let alpha = default_alpha(&domain);
        let asg = assign_patches(&partition, &lattice, alpha, AssignmentMode::CoverGraphBoundary).unwrap();
        let covered = asg.assigned_sites();
        assert!(lattice.boundary_sites().iter().all(|s| covered.binary_search(s).is_ok()));
        assert!(asg.max_distance_ratio(&partition, &lattice) <= alpha);
    }
}

#[test]
fn example54_monte_carlo_agrees_with_exact_expectations() {
    let domain = Domain::rotated_square();
    let k = 4;
    let exact = example54_ratios(&domain, k, 1.0, 2.0).unwrap();
    let lattice = Arc::new(build_lattice(&domain, k).unwrap());
    let partition = build_partition(&domain, k).unwrap();
    let asg = assign_patches(&partition, &lattice, default_alpha(&domain), AssignmentMode::NearestSingle).unwrap();
    let w = BoundaryWeights::new(&asg, &lattice).unwrap();
    let cfg = WalkConfig::simple(lattice.clone(), TimeMode::Continuous);
    let [l, a, n] = example54_monte_carlo(&domain, &cfg, &w, 1.0, 2.0 * lattice.spacing(), 4000, 5);
    assert!((l.0 - exact.mean_local_time).abs() < 4.0 * l.1);
    assert!((a.0 - exact.mean_occupation).abs() < 4.0 * a.1);
    assert!((n.0 - exact.mean_naive).abs() < 4.0 * n.1);
}

#[test]
fn reports_serialize_to_json() {
    let domain = Domain::unit_interval();
    let lattice = Arc::new(build_lattice(&domain, 3).unwrap());
    let partition = build_partition(&domain, 3).unwrap();
    let asg = assign_patches(&partition, &lattice, default_alpha(&domain), AssignmentMode::NearestSingle).unwrap();
    let w = BoundaryWeights::new(&asg, &lattice).unwrap();
    let cfg = WalkConfig::simple(lattice, TimeMode::Continuous);
    let rep = increment_scaling(&cfg, &w, 2, &[0.125, 0.25]).unwrap();
    let json = serde_json::to_value(&rep).unwrap();
    assert_eq!(json["order"], 2);
    assert_eq!(json["moments"].as_array().unwrap().len(), 2);

    let bounds = verify_bounds(&cfg, &[0.05, 0.2], &BoundsOptions { exit_paths: 200, ..BoundsOptions::default() }).unwrap();
    let json = serde_json::to_value(&bounds).unwrap();
    assert!(json["upper_constant"].as_f64().unwrap() > 0.0);
}

#[test]
fn convergence_study_without_boundary_effect_is_exact() {
    let problem = RobinProblem::neumann(Domain::unit_interval(), |_| 1.0, 0.3);
    let table = convergence_study(&problem, &WalkerSpec::Simple, &[3, 4, 5], &[0.4], 200, 1).unwrap();
    for row in &table.rows {
        assert_eq!(row.estimate, 1.0);
        assert!(row.abs_error.unwrap() < 1e-4);
    }
    assert!(table.trend_nonincreasing);
}

#[test]
fn robin_convergence_trend() {
    let problem = RobinProblem::neumann(Domain::unit_interval(), |_| 1.0, 0.5).with_g(Coefficient::Constant(1.0));
    let table = convergence_study(&problem, &WalkerSpec::Simple, &[3, 4, 5, 6], &[0.5], 20_000, 2).unwrap();
    assert!(table.trend_nonincreasing, "{table:?}");
    let last = table.rows.last().unwrap();
    assert!(last.rel_error.unwrap() < 0.03);
    for row in &table.rows {
        let exact = row.exact_discrete.unwrap();
        assert!((row.estimate - exact).abs() < 4.0 * row.se);
    }
}
