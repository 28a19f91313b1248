//! `dlt`: experiments with lattice random walks and their boundary local time.

mod commands;
mod config;
mod expr;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::CliError;
use crate::config::ExperimentConfig;
use crate::report::Report;

#[derive(Debug, Parser)]
#[command(name = "dlt", version, about = "Lattice random walks and discrete boundary local time")]
struct Cli {
    /// TOML experiment configuration. Every key is optional.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding `output` in the config (default `out`).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for Monte Carlo. Results do not depend on this value.
    #[arg(long, global = true, env = "DLT_THREADS")]
    threads: Option<usize>,

    /// Master seed, overriding `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lattice sizes per level.
    ///
    /// Writes lattice_info.csv (k, spacing, sites, boundary_sites,
    /// discarded_sites, total_measure, volume) and lattice_sites_k<K>.csv
    /// (index, x0.., degree, boundary, m_k) for the last level.
    LatticeInfo,

    /// Boundary partition and patch assignment diagnostics.
    ///
    /// Writes partition_check.csv (k, patches, partition_constant, alpha,
    /// max_distance_ratio, max_set_size, assigned_sites, sigma_total,
    /// weak_error) and assignment_k<K>.csv (site, sigma_k, patches). Fails
    /// when a site sits farther than alpha*2^-k from its patch, when the
    /// site masses do not sum to the surface measure, or when the weak error
    /// grows from the first level to the last.
    PartitionCheck,

    /// Simulates paths and their local time at the last configured level.
    ///
    /// Writes simulate.csv (path, start_site, jumps, end_site, local_time),
    /// path_0.csv (time, site) and local_time_0.csv (t, local_time).
    Simulate,

    /// Stationary mean local time: exact discrete, Monte Carlo and continuum.
    ///
    /// Writes localtime_convergence.csv (k, exact_discrete, mc_mean, mc_se,
    /// z, continuum, rel_gap). Fails when a Monte Carlo mean is more than
    /// three standard errors from the exact value.
    LocaltimeConvergence,

    /// Sup-norm distance between the walk kernel and the Neumann heat kernel.
    ///
    /// Writes llt_check.csv (k, t, sites, error). Fails unless the error at
    /// the last level is no larger than at the first, for every time.
    LltCheck,

    /// Empirical Gaussian bound, Hölder and exit-time constants.
    ///
    /// Writes bounds_check.csv (k, upper_constant, lower_constant,
    /// holder_constant, exit_slope, exit_intercept). Fails when the upper or
    /// lower constants vary by more than a factor two across levels or an
    /// exit slope is nonnegative.
    BoundsCheck,

    /// Boundary mass sup_x eps^(d-1) sum over graph-boundary sites of p(t,x,y).
    ///
    /// Writes boundary_sum.csv (k, t, sum). Fails when the ratio of the
    /// largest to the smallest value across levels reaches 3 at some time.
    BoundarySum,

    /// Moments of windowed local-time integrals: exact, Monte Carlo, continuum.
    ///
    /// Writes moments_check.csv (k, order, a, b, exact_discrete, mc_mean,
    /// mc_se, z, continuum). The continuum column is empty where no closed
    /// form is available. Fails when some |z| exceeds 3.
    MomentsCheck,

    /// Stationary increment moments over a ladder of window widths.
    ///
    /// Writes increment_scaling.csv (k, order, width, moment, constant) and
    /// increment_scaling_fit.csv (k, order, slope, intercept).
    IncrementScaling,

    /// Ratios of the occupation and naive boundary-time candidates to L.
    ///
    /// Writes example54.csv (k, mean_local_time, mean_occupation,
    /// mean_naive, ratio_occupation, ratio_naive, mc_local_time,
    /// mc_local_time_se). Monte Carlo columns are filled when `paths` is set.
    Example54,

    /// Feynman-Kac estimate of the Robin heat problem at one point.
    ///
    /// Writes robin_solve.json and robin_sites.csv (site, x0.., exact_discrete,
    /// oracle) with the exact discrete solution and the finite-difference
    /// reference at every site where they are available.
    RobinSolve,

    /// Feynman-Kac estimates across levels against the reference solution.
    ///
    /// Writes convergence_study.csv (k, site, position, estimate, se,
    /// exact_discrete, oracle, abs_error, rel_error). Fails when the error
    /// grows by more than three combined standard errors between levels.
    ConvergenceStudy,
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("cannot start thread pool: {e}")))?;
    }
    let report = match cli.command {
        Command::LatticeInfo => commands::lattice_info(&cfg),
        Command::PartitionCheck => commands::partition_check(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::LocaltimeConvergence => commands::localtime_convergence(&cfg),
        Command::LltCheck => commands::llt_check(&cfg),
        Command::BoundsCheck => commands::bounds_check(&cfg),
        Command::BoundarySum => commands::boundary_sum(&cfg),
        Command::MomentsCheck => commands::moments_check(&cfg),
        Command::IncrementScaling => commands::increment_scaling_cmd(&cfg),
        Command::Example54 => commands::example54(&cfg),
        Command::RobinSolve => commands::robin_solve(&cfg),
        Command::ConvergenceStudy => commands::convergence_study(&cfg),
    }?;
    let dir = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    report.write(&dir)?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let verdict = match report.passed {
                Some(true) => " [PASS]",
                Some(false) => " [FAIL]",
                None => "",
            };
            println!("{}{verdict}", report.summary);
            if report.passed == Some(false) {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
