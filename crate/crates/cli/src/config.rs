//! Experiment configuration files.
//!
//! A config is a TOML document. Every key is optional; subcommands fill in
//! their own defaults. Expression-valued keys are parsed with [`crate::expr`].
//!
//! ```toml
//! levels = [3, 4, 5]
//! horizon = 1.0
//! seed = 7
//! paths = 10000
//! output = "out"
//!
//! [domain]
//! kind = "interval"          # interval | box | polygon | unit-interval | unit-square | rotated-square
//! a = 0.0
//! b = 1.0
//!
//! [walker]
//! kind = "biased"            # simple | biased
//! mode = "continuous"        # continuous | discrete-interpolated
//! a = "1"
//! h = "0.5 * x"
//!
//! [assignment]
//! mode = "nearest-single"    # nearest-single | cover-graph-boundary
//! alpha = 1.5
//!
//! [robin]
//! initial = "1"
//! g = "1"
//! h = "0"
//! target = [0.5]
//! ```

use std::path::{Path, PathBuf};

use dlt_core::{AssignmentMode, Domain, TimeMode};
use serde::Deserialize;
use toml::Spanned;

use crate::expr::Expr;

/// A configuration problem, with the 1-based line it was found on.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{message}", location(.file, .line))]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

fn location(file: &Option<PathBuf>, line: &Option<usize>) -> String {
    match (file, line) {
        (Some(f), Some(l)) => format!("{}:{l}: ", f.display()),
        (Some(f), None) => format!("{}: ", f.display()),
        (None, Some(l)) => format!("line {l}: "),
        (None, None) => String::new(),
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: Option<Spanned<RawDomain>>,
    walker: Option<Spanned<RawWalker>>,
    assignment: Option<Spanned<RawAssignment>>,
    levels: Option<Spanned<Vec<u32>>>,
    horizon: Option<Spanned<f64>>,
    seed: Option<u64>,
    paths: Option<Spanned<usize>>,
    output: Option<PathBuf>,
    simulate: Option<RawSimulate>,
    moments: Option<Spanned<RawMoments>>,
    robin: Option<Spanned<RawRobin>>,
    llt: Option<RawTimes>,
    bounds: Option<RawTimes>,
    #[serde(rename = "boundary-sum")]
    boundary_sum: Option<RawTimes>,
    scaling: Option<Spanned<RawScaling>>,
    example54: Option<Spanned<RawExample54>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawDomain {
    Interval { a: f64, b: f64 },
    Box { lows: Vec<f64>, highs: Vec<f64> },
    Polygon { vertices: Vec<[f64; 2]>, lipschitz: f64 },
    UnitInterval,
    UnitSquare,
    RotatedSquare,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWalker {
    kind: Option<String>,
    mode: Option<String>,
    a: Option<Spanned<String>>,
    h: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAssignment {
    mode: Option<String>,
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawStart {
    Name(String),
    Point(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    start: Option<Spanned<RawStart>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMoments {
    orders: Option<Vec<usize>>,
    windows: Option<Vec<[f64; 2]>>,
    start: Option<Spanned<RawStart>>,
    integrand: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobin {
    initial: Option<Spanned<String>>,
    g: Option<Spanned<String>>,
    h: Option<Spanned<String>>,
    target: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTimes {
    times: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScaling {
    order: Option<usize>,
    widths: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExample54 {
    t: Option<f64>,
    c: Option<f64>,
}

/// Walk family chosen in the config.
#[derive(Debug, Clone, PartialEq)]
pub enum WalkerChoice {
    Simple,
    Biased { a: Expr, h: Expr },
}

/// Initial law named in the config.
#[derive(Debug, Clone, PartialEq)]
pub enum StartChoice {
    Stationary,
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentsConfig {
    pub orders: Vec<usize>,
    pub windows: Vec<[f64; 2]>,
    pub start: StartChoice,
    pub integrand: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobinConfig {
    pub initial: Expr,
    pub g: Expr,
    pub h: Expr,
    pub target: Option<Vec<f64>>,
}

/// Fully validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub domain: Option<Domain<f64>>,
    pub walker: WalkerChoice,
    pub mode: TimeMode,
    pub assignment: AssignmentMode,
    pub alpha: Option<f64>,
    pub levels: Option<Vec<u32>>,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub paths: Option<usize>,
    pub output: Option<PathBuf>,
    pub simulate_start: StartChoice,
    pub moments: MomentsConfig,
    pub robin: RobinConfig,
    pub llt_times: Option<Vec<f64>>,
    pub bounds_times: Option<Vec<f64>>,
    pub boundary_sum_times: Option<Vec<f64>>,
    pub scaling_order: usize,
    pub scaling_widths: Option<Vec<f64>>,
    pub example54_t: f64,
    pub example54_c: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_source("", None).expect("empty config is valid")
    }
}

struct Ctx<'a> {
    source: &'a str,
    file: Option<PathBuf>,
}

impl Ctx<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.source[..offset.min(self.source.len())].matches('\n').count() + 1
    }

    fn error_at(&self, span: std::ops::Range<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError { file: self.file.clone(), line: Some(self.line_of(span.start)), message: message.into() }
    }

    fn expr(&self, raw: &Option<Spanned<String>>, key: &str, default: &str) -> Result<Expr, ConfigError> {
        match raw {
            None => Ok(Expr::parse(default).expect("default expression parses")),
            Some(s) => Expr::parse(s.get_ref())
                .map_err(|e| self.error_at(s.span(), format!("invalid expression for {key} '{}': {e}", s.get_ref()))),
        }
    }

    fn start(&self, raw: &Option<Spanned<RawStart>>) -> Result<StartChoice, ConfigError> {
        match raw {
            None => Ok(StartChoice::Stationary),
            Some(s) => match s.get_ref() {
                RawStart::Name(n) if n == "stationary" => Ok(StartChoice::Stationary),
                RawStart::Name(n) => {
                    Err(self.error_at(s.span(), format!("start must be \"stationary\" or a point, got \"{n}\"")))
                }
                RawStart::Point(p) => Ok(StartChoice::Point(p.clone())),
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::from_source(&source, Some(path.to_path_buf()))
    }

    pub fn from_source(source: &str, file: Option<PathBuf>) -> Result<Self, ConfigError> {
        let ctx = Ctx { source, file: file.clone() };
        let raw: RawConfig = toml::from_str(source).map_err(|e| ConfigError {
            file: file.clone(),
            line: e.span().map(|s| ctx.line_of(s.start)),
            message: e.message().trim().to_string(),
        })?;

        let domain = match &raw.domain {
            None => None,
            Some(d) => Some(build_domain(d.get_ref()).map_err(|e| ctx.error_at(d.span(), e.to_string()))?),
        };

        let (walker, mode) = match &raw.walker {
            None => (WalkerChoice::Simple, TimeMode::Continuous),
            Some(w) => {
                let span = w.span();
                let w = w.get_ref();
                let mode = match w.mode.as_deref() {
                    None | Some("continuous") => TimeMode::Continuous,
                    Some("discrete-interpolated") => TimeMode::DiscreteInterpolated,
                    Some(other) => return Err(ctx.error_at(span, format!("unknown walker mode \"{other}\""))),
                };
                let walker = match w.kind.as_deref() {
                    None | Some("simple") => {
                        if w.a.is_some() || w.h.is_some() {
                            return Err(ctx.error_at(span, "a and h are only allowed for the biased walker"));
                        }
                        WalkerChoice::Simple
                    }
                    Some("biased") => {
                        let a = ctx.expr(&w.a, "walker.a", "1")?;
                        let h = ctx.expr(&w.h, "walker.h", "0")?;
                        for (name, e, raw) in [("walker.a", &a, &w.a), ("walker.h", &h, &w.h)] {
                            if e.uses_time() {
                                let s = raw.as_ref().map_or(span.clone(), |r| r.span());
                                return Err(ctx.error_at(s, format!("{name} cannot depend on t")));
                            }
                        }
                        WalkerChoice::Biased { a, h }
                    }
                    Some(other) => return Err(ctx.error_at(span, format!("unknown walker kind \"{other}\""))),
                };
                (walker, mode)
            }
        };

        let (assignment, alpha) = match &raw.assignment {
            None => (AssignmentMode::NearestSingle, None),
            Some(a) => {
                let span = a.span();
                let a = a.get_ref();
                let mode = match a.mode.as_deref() {
                    None | Some("nearest-single") => AssignmentMode::NearestSingle,
                    Some("cover-graph-boundary") => AssignmentMode::CoverGraphBoundary,
                    Some(other) => return Err(ctx.error_at(span, format!("unknown assignment mode \"{other}\""))),
                };
                if let (Some(alpha), Some(d)) = (a.alpha, &domain) {
                    if alpha <= d.alpha_threshold() {
                        return Err(ctx.error_at(
                            span,
                            format!("alpha must exceed sqrt(1 + M^2) = {}, got {alpha}", d.alpha_threshold()),
                        ));
                    }
                }
                (mode, a.alpha)
            }
        };

        let levels = match &raw.levels {
            None => None,
            Some(l) => {
                let v = l.get_ref();
                if v.is_empty() || v.iter().any(|&k| k == 0 || k > 24) {
                    return Err(ctx.error_at(l.span(), "levels must be a nonempty list of integers in 1..=24"));
                }
                Some(v.clone())
            }
        };
        let horizon = match &raw.horizon {
            None => None,
            Some(h) if *h.get_ref() > 0.0 && h.get_ref().is_finite() => Some(*h.get_ref()),
            Some(h) => return Err(ctx.error_at(h.span(), "horizon must be positive")),
        };
        let paths = match &raw.paths {
            None => None,
            Some(p) if *p.get_ref() > 0 => Some(*p.get_ref()),
            Some(p) => return Err(ctx.error_at(p.span(), "paths must be positive")),
        };

        let simulate_start = ctx.start(&raw.simulate.as_ref().and_then(|s| s.start.clone()))?;

        let moments = match &raw.moments {
            None => MomentsConfig {
                orders: vec![1, 2],
                windows: vec![[0.0, 0.5], [0.25, 0.75]],
                start: StartChoice::Stationary,
                integrand: Expr::parse("1").expect("valid"),
            },
            Some(m) => {
                let span = m.span();
                let m = m.get_ref();
                let orders = m.orders.clone().unwrap_or_else(|| vec![1, 2]);
                if orders.is_empty() || orders.iter().any(|&o| o == 0 || o > 3) {
                    return Err(ctx.error_at(span, "moments.orders must be a nonempty list drawn from 1, 2, 3"));
                }
                let windows = m.windows.clone().unwrap_or_else(|| vec![[0.0, 0.5], [0.25, 0.75]]);
                if windows.iter().any(|w| !(w[0] >= 0.0 && w[0] <= w[1])) {
                    return Err(ctx.error_at(span, "moments.windows entries need 0 <= a <= b"));
                }
                let integrand = ctx.expr(&m.integrand, "moments.integrand", "1")?;
                if integrand.uses_time() {
                    return Err(ctx.error_at(span, "moments.integrand cannot depend on t"));
                }
                MomentsConfig { orders, windows, start: ctx.start(&m.start)?, integrand }
            }
        };

        let robin = match &raw.robin {
            None => RobinConfig {
                initial: Expr::parse("1").expect("valid"),
                g: Expr::parse("1").expect("valid"),
                h: Expr::parse("0").expect("valid"),
                target: None,
            },
            Some(r) => {
                let span = r.span();
                let r = r.get_ref();
                let initial = ctx.expr(&r.initial, "robin.initial", "1")?;
                if initial.uses_time() {
                    return Err(ctx.error_at(span, "robin.initial cannot depend on t"));
                }
                RobinConfig {
                    initial,
                    g: ctx.expr(&r.g, "robin.g", "1")?,
                    h: ctx.expr(&r.h, "robin.h", "0")?,
                    target: r.target.clone(),
                }
            }
        };

        let (scaling_order, scaling_widths) = match &raw.scaling {
            None => (2, None),
            Some(s) => {
                let span = s.span();
                let s = s.get_ref();
                let order = s.order.unwrap_or(2);
                if order == 0 || order > 3 {
                    return Err(ctx.error_at(span, "scaling.order must be 1, 2 or 3"));
                }
                if s.widths.as_ref().is_some_and(|w| w.len() < 2 || w.iter().any(|&v| !(v > 0.0))) {
                    return Err(ctx.error_at(span, "scaling.widths needs at least two positive widths"));
                }
                (order, s.widths.clone())
            }
        };

        let (example54_t, example54_c) = match &raw.example54 {
            None => (1.0, 2.0),
            Some(e) => {
                let span = e.span();
                let e = e.get_ref();
                let t = e.t.unwrap_or(1.0);
                let c = e.c.unwrap_or(2.0);
                if !(t > 0.0) || !(c > 0.0) {
                    return Err(ctx.error_at(span, "example54.t and example54.c must be positive"));
                }
                (t, c)
            }
        };

        let times = |raw: &Option<RawTimes>| raw.as_ref().and_then(|r| r.times.clone());
        for (name, t) in [("llt", times(&raw.llt)), ("bounds", times(&raw.bounds)), ("boundary-sum", times(&raw.boundary_sum))] {
            if t.as_ref().is_some_and(|t| t.is_empty() || t.iter().any(|&v| !(v > 0.0))) {
                return Err(ConfigError { file: file.clone(), line: None, message: format!("{name}.times must be positive") });
            }
        }

        Ok(Self {
            domain,
            walker,
            mode,
            assignment,
            alpha,
            levels,
            horizon,
            seed: raw.seed.unwrap_or(7),
            paths,
            output: raw.output,
            simulate_start,
            moments,
            robin,
            llt_times: times(&raw.llt),
            bounds_times: times(&raw.bounds),
            boundary_sum_times: times(&raw.boundary_sum),
            scaling_order,
            scaling_widths,
            example54_t,
            example54_c,
        })
    }
}

fn build_domain(raw: &RawDomain) -> dlt_core::Result<Domain<f64>> {
    match raw {
        RawDomain::Interval { a, b } => Domain::interval(*a, *b),
        RawDomain::Box { lows, highs } => Domain::axis_box(lows.clone(), highs.clone()),
        RawDomain::Polygon { vertices, lipschitz } => Domain::polygon(vertices.clone(), *lipschitz),
        RawDomain::UnitInterval => Ok(Domain::unit_interval()),
        RawDomain::UnitSquare => Ok(Domain::unit_square()),
        RawDomain::RotatedSquare => Ok(Domain::rotated_square()),
    }
}
