//! Batch front end: `gds <subcommand> --config job.json [flags]`.
//!
//! Exit codes: 0 success, 1 the mathematics said no (a negative or
//! inconclusive verdict, a failed hypothesis), 2 usage or config error,
//! 3 numeric failure. Reports are JSON on stdout or `--report`; `--out`
//! receives the primary artifact (CSV for grids and clouds, JSON otherwise).

mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

pub use config::{load_config, parse_config, Budgets, ConfigError, JobConfig, OverdetEquation, Problem, Scalar};

use crate::bvp::{self, BoundaryProblem, BvpError, SolvabilityVerdict};
use crate::cauchy::{self, CauchyError, ConsistencyVerdict, HShape, OverdetProblem};
use crate::exprlang::Expression;
use crate::funceq::{self, FunceqError, FunceqSystem, GridFunction};
use crate::gds::{self, GdsError, GuidedSystem, MinimalityVerdict, OrbitOptions, StateSpace, WeakAttractorVerdict};
use crate::pconf::{self, HData, IvpProblem, PconfError};

#[derive(Debug, Parser)]
#[command(name = "gds", version, about = "Guided dynamical systems and Cauchy-type functional equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Primary artifact (CSV grid/cloud, or the JSON report).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report destination; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Leave the volatile meta block (version, timestamp) out of reports.
    #[arg(long)]
    no_meta: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Λ-proper orbit cloud of one point.
    Orbit {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<f64>,
    },
    /// Λ-minimality probe.
    Probe {
        #[command(flatten)]
        common: Common,
    },
    /// Whether every point has a Λ-proper orbit reaching the ε-ball around x0
    WeakAttractor {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<f64>,
    },
    /// Cycles inside the union of guiding sets.
    Cycles {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Terminal strongly connected components of the orbit graph.
    GraphMin {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cells: Option<usize>,
    },
    /// Contraction certificate sup g_m < 1.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m_max: Option<usize>,
    },
    /// Neumann solve of f − Σ aᵢ f∘δᵢ = h.
    SolveFe {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        h: Option<String>,
    },
    /// Collocation solve of f − Σ f∘δᵢ = h with f(c) = 0, f′(c) = μ.
    SolveIvp {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        h: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        c: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
    },
    /// Checks the P-configuration axioms for the maps and anchors
    ValidatePconf {
        #[command(flatten)]
        common: Common,
    },
    /// Value propagation and consistency check for an overdetermined equation.
    Overdet {
        #[command(flatten)]
        common: Common,
    },
    /// Derived maps, fixed points and invariant balls of an affine Cauchy problem
    AffineAnalyze {
        #[command(flatten)]
        common: Common,
    },
    /// Boundary dynamical system and its conjugation to a P-configuration
    BuildBvp {
        #[command(flatten)]
        common: Common,
    },
    /// Layered solvability analysis of the boundary problem
    AnalyzeBvp {
        #[command(flatten)]
        common: Common,
    },
    /// Solves the boundary problem and verifies u on a lattice
    SolveBvp {
        #[command(flatten)]
        common: Common,
        /// Spacing 1/L of the exported lattice and of the FD residual.
        #[arg(long)]
        lattice: Option<usize>,
        /// χ′(0).
        #[arg(long, allow_hyphen_values = true)]
        gauge: Option<f64>,
    },
    /// ω-conjugation between the boundary system and its P-configuration.
    VerifyConjugacy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Orbit { .. } => "orbit",
            Command::Probe { .. } => "probe",
            Command::WeakAttractor { .. } => "weak-attractor",
            Command::Cycles { .. } => "cycles",
            Command::GraphMin { .. } => "graph-min",
            Command::Certify { .. } => "certify",
            Command::SolveFe { .. } => "solve-fe",
            Command::SolveIvp { .. } => "solve-ivp",
            Command::ValidatePconf { .. } => "validate-pconf",
            Command::Overdet { .. } => "overdet",
            Command::AffineAnalyze { .. } => "affine-analyze",
            Command::BuildBvp { .. } => "build-bvp",
            Command::AnalyzeBvp { .. } => "analyze-bvp",
            Command::SolveBvp { .. } => "solve-bvp",
            Command::VerifyConjugacy { .. } => "verify-conjugacy",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Orbit { common, .. }
            | Command::Probe { common }
            | Command::WeakAttractor { common, .. }
            | Command::Cycles { common, .. }
            | Command::GraphMin { common, .. }
            | Command::Certify { common, .. }
            | Command::SolveFe { common, .. }
            | Command::SolveIvp { common, .. }
            | Command::ValidatePconf { common }
            | Command::Overdet { common }
            | Command::AffineAnalyze { common }
            | Command::BuildBvp { common }
            | Command::AnalyzeBvp { common }
            | Command::SolveBvp { common, .. }
            | Command::VerifyConjugacy { common, .. } => common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Negative = 1,
    Usage = 2,
    Numeric = 3,
}

/// A failure classified by exit code.
#[derive(Debug)]
struct Failure {
    code: ExitCode,
    message: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure {
            code: ExitCode::Usage,
            message: msg.into(),
        }
    }

    fn negative(msg: impl ToString) -> Self {
        Failure {
            code: ExitCode::Negative,
            message: msg.to_string(),
        }
    }

    fn numeric(msg: impl ToString) -> Self {
        Failure {
            code: ExitCode::Numeric,
            message: msg.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<GdsError> for Failure {
    fn from(e: GdsError) -> Self {
        match e {
            GdsError::Domain(_) => Failure::numeric(e),
            _ => Failure::usage(e.to_string()),
        }
    }
}

impl From<FunceqError> for Failure {
    fn from(e: FunceqError) -> Self {
        match e {
            FunceqError::Shape(_) => Failure::usage(e.to_string()),
            FunceqError::Gds(g) => g.into(),
            FunceqError::NotCertified { .. } | FunceqError::HypothesisFailure { .. } | FunceqError::MapEscape { .. } => {
                Failure::negative(e)
            }
            _ => Failure::numeric(e),
        }
    }
}

impl From<PconfError> for Failure {
    fn from(e: PconfError) -> Self {
        match e {
            PconfError::Shape(_) => Failure::usage(e.to_string()),
            PconfError::Violation { .. } | PconfError::NoDerivative(_) | PconfError::DataMismatch { .. } => {
                Failure::negative(e)
            }
            PconfError::Gds(g) => g.into(),
            PconfError::Funceq(f) => f.into(),
            _ => Failure::numeric(e),
        }
    }
}

impl From<CauchyError> for Failure {
    fn from(e: CauchyError) -> Self {
        match e {
            CauchyError::Shape(_) => Failure::usage(e.to_string()),
            CauchyError::HypothesisFailure { .. } => Failure::negative(e),
            _ => Failure::numeric(e),
        }
    }
}

impl From<BvpError> for Failure {
    fn from(e: BvpError) -> Self {
        match e {
            BvpError::Shape(_) | BvpError::Syntax(_) => Failure::usage(e.to_string()),
            BvpError::Pconf(p) => p.into(),
            BvpError::Gds(g) => g.into(),
            BvpError::Funceq(f) => f.into(),
            BvpError::Geometry { .. }
            | BvpError::DegenerateParametrization { .. }
            | BvpError::CornerMismatch { .. }
            | BvpError::OffCurve { .. }
            | BvpError::Conjugacy(_) => Failure::negative(e),
            _ => Failure::numeric(e),
        }
    }
}

/// Successful outcome of a subcommand.
struct Outcome {
    code: ExitCode,
    report: Value,
    /// Primary artifact when it is not the report itself.
    artifact: Option<String>,
}

impl Outcome {
    fn new(ok: bool, report: Value) -> Self {
        Outcome {
            code: if ok { ExitCode::Success } else { ExitCode::Negative },
            report,
            artifact: None,
        }
    }

    fn with_artifact(mut self, artifact: String) -> Self {
        self.artifact = Some(artifact);
        self
    }
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Usage as i32 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let name = cli.command.name();
    let common = cli.command.common().clone();
    // Numeric code may panic on pathological inputs; report it as a numeric failure.
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(&cli.command)))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "internal error".into());
            Err(Failure::numeric(msg))
        });
    let (code, mut report, artifact) = match result {
        Ok(o) => (o.code, json!({"status": status(o.code), "result": o.report}), o.artifact),
        Err(f) => {
            let _ = writeln!(err, "gds {name}: {}", f.message);
            (f.code, json!({"status": "error", "error": f.message}), None)
        }
    };
    let obj = report.as_object_mut().expect("report is an object");
    obj.insert("command".into(), json!(name));
    obj.insert("exitCode".into(), json!(code as i32));
    if !common.no_meta {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        obj.insert(
            "meta".into(),
            json!({"tool": "gds", "version": env!("CARGO_PKG_VERSION"), "seed": common.seed, "timestamp": timestamp}),
        );
    }
    let text = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
    let write = |path: &PathBuf, body: &str| std::fs::write(path, body).map_err(|e| format!("{}: {e}", path.display()));
    let mut io_failed = None;
    match (&artifact, &common.out) {
        (Some(a), Some(path)) => io_failed = write(path, a).err(),
        (None, Some(path)) if common.report.is_none() => io_failed = write(path, &text).err(),
        _ => {}
    }
    match &common.report {
        Some(path) => io_failed = io_failed.or(write(path, &text).err()),
        None if artifact.is_some() || common.out.is_none() => {
            let _ = out.write_all(text.as_bytes());
        }
        None => {}
    }
    if let Some(msg) = io_failed {
        let _ = writeln!(err, "gds {name}: cannot write {msg}");
        return ExitCode::Usage as i32;
    }
    code as i32
}

fn status(code: ExitCode) -> &'static str {
    match code {
        ExitCode::Success => "ok",
        ExitCode::Negative => "negative",
        _ => "error",
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn system(cfg: &JobConfig) -> Result<GuidedSystem, Failure> {
    let space = cfg.space.ok_or_else(|| Failure::usage("config has no \"space\" section"))?;
    if cfg.maps.is_empty() {
        return Err(Failure::usage("config has no \"maps\""));
    }
    let sys = GuidedSystem::new(space, cfg.maps.clone(), cfg.guiding.clone(), cfg.tolerances)?;
    if cfg.coeffs.is_empty() {
        Ok(sys)
    } else {
        Ok(sys.with_coeffs(cfg.coeffs.clone())?)
    }
}

fn start_point(flag: Option<f64>, cfg: &JobConfig, space: &StateSpace) -> f64 {
    flag.or(match cfg.problem {
        Some(Problem::Orbit { x0 }) => Some(x0),
        _ => None,
    })
    .unwrap_or_else(|| space.extent().0)
}

fn unexpected(cfg: &JobConfig, wanted: &str) -> Failure {
    Failure::usage(match &cfg.problem {
        Some(p) => format!("problem kind \"{}\" does not fit this subcommand (expected \"{wanted}\")", p.kind()),
        None => format!("config needs a \"problem\" section of kind \"{wanted}\""),
    })
}

fn parse_flag_expr(src: &str) -> Result<Expression, Failure> {
    crate::exprlang::parse(src).map_err(|e| Failure::usage(format!("--h: {e}")))
}

fn pconfiguration(cfg: &JobConfig, tol: Option<f64>) -> Result<pconf::PConfiguration, Failure> {
    let Some(Problem::Pconf { anchors, .. }) = &cfg.problem else {
        return Err(unexpected(cfg, "pconf"));
    };
    Ok(pconf::validate_pconfiguration(
        cfg.maps.clone(),
        anchors.clone(),
        tol.unwrap_or(1e-9),
    )?)
}

fn boundary_problem(cfg: &JobConfig) -> Result<BoundaryProblem, Failure> {
    let Some(Problem::Bvp {
        alpha1,
        alpha2,
        m,
        n,
        g1,
        g2,
        g_gamma,
    }) = &cfg.problem
    else {
        return Err(unexpected(cfg, "bvp"));
    };
    Ok(BoundaryProblem::parse(alpha1, alpha2, *m, *n, g1, g2, g_gamma)?)
}

fn system_report(sys: &bvp::BoundarySystem) -> Value {
    let (a, b) = sys.interval();
    json!({
        "interval": [a, b],
        "z0": sys.z0,
        "lambda": to_value(&sys.lambda()),
        "omega": to_value(&sys.omega_sets()),
        "conjugacy": to_value(&sys.conjugacy),
        "cornerTangencies": to_value(&sys.corner_tangencies),
    })
}

fn dispatch(cmd: &Command) -> Result<Outcome, Failure> {
    let c = cmd.common();
    let cfg = load_config(&c.config)?;
    let opts = OrbitOptions {
        max_cells: cfg.budgets.max_cells,
    };
    let eps = c.eps.unwrap_or(0.01);
    if !(eps > 0.0) {
        return Err(Failure::usage("--eps must be positive"));
    }
    match cmd {
        Command::Orbit { x0, .. } => {
            let sys = system(&cfg)?;
            let x0 = start_point(*x0, &cfg, &sys.space);
            let cloud = gds::guided_orbit_set(&sys, x0, c.depth.unwrap_or(10_000), eps, &opts);
            let report = json!({
                "x0": x0,
                "points": cloud.points.len(),
                "coverage": cloud.coverage,
                "exhausted": cloud.exhausted,
                "partial": cloud.partial,
                "stable": cloud.stable,
            });
            Ok(Outcome::new(true, report).with_artifact(gds::cloud_to_csv(&cloud)))
        }
        Command::Probe { .. } => {
            let sys = system(&cfg)?;
            let v = gds::probe_minimality(&sys, eps, c.depth.unwrap_or(100_000), &opts);
            Ok(Outcome::new(v.is_minimal_evidence(), to_value(&v)))
        }
        Command::WeakAttractor { x0, .. } => {
            let sys = system(&cfg)?;
            let x0 = start_point(*x0, &cfg, &sys.space);
            let v = gds::probe_weak_attractor(&sys, x0, eps, c.depth.unwrap_or(100_000), &opts);
            let yes = matches!(v, WeakAttractorVerdict::Yes { .. });
            Ok(Outcome::new(yes, json!({"x0": x0, "verdict": to_value(&v)})))
        }
        Command::Cycles { max_len, .. } => {
            let sys = system(&cfg)?;
            let r = gds::find_guided_cycles(&sys, max_len.unwrap_or(cfg.budgets.cycle_len));
            Ok(Outcome::new(true, to_value(&r)))
        }
        Command::GraphMin { cells, .. } => {
            let sys = system(&cfg)?;
            let g = gds::build_orbit_graph(&sys, cells.unwrap_or(cfg.budgets.cells));
            let mins = gds::minimal_subsystems(&g);
            let report = json!({"nodes": g.nodes, "edges": g.edges.len(), "approximate": g.approximate, "minimal": mins});
            Ok(Outcome::new(true, report).with_artifact(g.to_edge_list()))
        }
        Command::Certify { m_max, .. } => {
            let fe = FunceqSystem::new(system(&cfg)?)?;
            let grid = c.grid.unwrap_or(1024);
            match funceq::certify_contraction(&fe, grid, m_max.unwrap_or(cfg.budgets.m_max))? {
                Ok(cert) => Ok(Outcome::new(true, json!({"certified": true, "certificate": to_value(&cert)}))),
                Err(fail) => Ok(Outcome::new(false, json!({"certified": false, "failure": to_value(&fail)}))),
            }
        }
        Command::SolveFe { h, .. } => {
            let h = match (h, &cfg.problem) {
                (Some(src), _) => parse_flag_expr(src)?,
                (None, Some(Problem::Funceq { h: Some(h) })) => h.clone(),
                _ => return Err(Failure::usage("no right-hand side: pass --h or a funceq problem with \"h\"")),
            };
            let sys = system(&cfg)?;
            let space = sys.space;
            let fe = FunceqSystem::new(sys)?;
            let hg = GridFunction::from_expr(space, c.grid.unwrap_or(1024), &h)?;
            let (f, report) = funceq::solve_neumann(&fe, &hg, c.tol.unwrap_or(1e-12), cfg.budgets.max_iter)?;
            Ok(Outcome::new(true, to_value(&report)).with_artifact(f.to_csv()))
        }
        Command::SolveIvp { h, c: point, mu, .. } => {
            let pc = pconfiguration(&cfg, None)?;
            let Some(Problem::Pconf { h: ch, c: cc, mu: cmu, .. }) = &cfg.problem else {
                unreachable!("checked by pconfiguration")
            };
            let h = match (h, ch) {
                (Some(src), _) => parse_flag_expr(src)?,
                (None, Some(h)) => h.clone(),
                (None, None) => return Err(Failure::usage("no right-hand side: pass --h or set problem.h")),
            };
            let mut problem = IvpProblem::new(
                pc,
                HData::Expr(h),
                point.or(*cc).unwrap_or(0.0),
                mu.or(*cmu).unwrap_or(0.0),
            );
            if let Some(tol) = c.tol {
                problem.tol = tol;
            }
            let (f, diag) = pconf::solve_ivp(&problem, c.grid.unwrap_or(1024))?;
            Ok(Outcome::new(true, to_value(&diag)).with_artifact(f.to_csv()))
        }
        Command::ValidatePconf { .. } => match pconfiguration(&cfg, c.tol) {
            Ok(pc) => {
                let report = json!({
                    "valid": true,
                    "anchors": pc.anchors,
                    "shift": pc.shift(),
                    "guiding": to_value(&pc.guiding()),
                });
                Ok(Outcome::new(true, report))
            }
            Err(f) if f.code == ExitCode::Negative => Ok(Outcome::new(false, json!({"valid": false, "error": f.message}))),
            Err(f) => Err(f),
        },
        Command::Overdet { .. } => {
            let problem = match cfg.problem.clone() {
                Some(Problem::Overdet {
                    a,
                    b,
                    alpha,
                    beta,
                    equation,
                    value_a,
                    value_b,
                }) => {
                    let h = match equation {
                        OverdetEquation::Jensen => HShape::Jensen,
                        OverdetEquation::Cauchy => HShape::Cauchy,
                        OverdetEquation::Affine { p, q, r } => HShape::Affine { p, q, r },
                    };
                    OverdetProblem::new(a, b, alpha, beta, h, value_a, value_b)?
                }
                Some(Problem::GammaStar { value_b }) => OverdetProblem::cauchy_gamma_star(value_b)?,
                _ => return Err(unexpected(&cfg, "overdet")),
            };
            let depth = c.depth.unwrap_or(14);
            let eps = c.eps.unwrap_or(1.0 / 4096.0);
            let cloud = cauchy::propagate_values(&problem, depth, eps)?;
            let check = cauchy::check_consistency(&cloud, eps, c.tol.unwrap_or(1e-9));
            let ok = matches!(check.verdict, ConsistencyVerdict::Consistent);
            let report = json!({
                "points": cloud.entries.len(),
                "coverage": cloud.coverage,
                "stop": to_value(&cloud.stop),
                "collisions": cloud.collisions.len(),
                "consistency": to_value(&check),
            });
            Ok(Outcome::new(ok, report).with_artifact(cloud.to_csv()))
        }
        Command::AffineAnalyze { .. } => {
            if let Some(Problem::L1Ball { c: lin }) = &cfg.problem {
                let r = cauchy::verify_l1_ball(lin, cfg.budgets.samples, c.seed);
                let ok = r.residual < c.tol.unwrap_or(1e-12);
                return Ok(Outcome::new(ok, json!({"linearSolution": to_value(&r)})));
            }
            let Some(Problem::Affine { a1, a2, b1, b2, c: lin }) = &cfg.problem else {
                return Err(unexpected(&cfg, "affine"));
            };
            let n = b1.len();
            let mat = |rows: &Vec<Vec<f64>>, name: &str| -> Result<DMatrix<f64>, Failure> {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Failure::usage(format!("/problem/{name} must be {n}×{n}")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            };
            if b2.len() != n {
                return Err(Failure::usage(format!("/problem/b2 must have length {n}")));
            }
            let analysis = match cauchy::analyze_affine(
                &mat(a1, "a1")?,
                &mat(a2, "a2")?,
                &DVector::from_vec(b1.clone()),
                &DVector::from_vec(b2.clone()),
            ) {
                Ok(a) => a,
                Err(e @ CauchyError::HypothesisFailure { .. }) => {
                    return Ok(Outcome::new(false, json!({"hypotheses": false, "error": e.to_string()})))
                }
                Err(e) => return Err(e.into()),
            };
            let mut report = json!({"hypotheses": true, "analysis": to_value(&analysis)});
            let mut ok = true;
            if let Some(lin) = lin {
                if lin.len() != n {
                    return Err(Failure::usage(format!("/problem/c must have length {n}")));
                }
                let r = cauchy::verify_linear_solution(&analysis, lin, cfg.budgets.samples, c.seed);
                ok = r.residual < c.tol.unwrap_or(1e-9);
                report["linearSolution"] = to_value(&r);
            }
            Ok(Outcome::new(ok, report))
        }
        Command::BuildBvp { .. } => {
            let sys = bvp::build_boundary_system(&boundary_problem(&cfg)?)?;
            Ok(Outcome::new(true, system_report(&sys)))
        }
        Command::AnalyzeBvp { .. } => {
            let sys = bvp::build_boundary_system(&boundary_problem(&cfg)?)?;
            let r = bvp::analyze_solvability(&sys, eps, c.depth.unwrap_or(100_000));
            let ok = match &r.verdict {
                SolvabilityVerdict::Solvable => true,
                SolvabilityVerdict::NotSolvable { .. } => false,
                SolvabilityVerdict::Evidence { probe } => matches!(probe, MinimalityVerdict::MinimalEvidence { .. }),
            };
            Ok(Outcome::new(ok, json!({"system": system_report(&sys), "solvability": to_value(&r)})))
        }
        Command::SolveBvp { lattice, gauge, .. } => {
            let sys = bvp::build_boundary_system(&boundary_problem(&cfg)?)?;
            let mut sol = bvp::solve_bvp_with_gauge(&sys, c.grid.unwrap_or(512), gauge.unwrap_or(0.0))?;
            let lattice = lattice.unwrap_or(bvp::DEFAULT_LATTICE);
            if lattice != sol.verification.lattice {
                sol.reverify(lattice);
            }
            let v = &sol.verification;
            let report = json!({
                "boundary_defect": v.boundary_defect,
                "pde_residual": v.pde_residual,
                "verdict": v.verdict,
                "verification": to_value(v),
                "diagnostics": to_value(&sol.diagnostics),
            });
            let code = if v.verdict == "pass" { ExitCode::Success } else { ExitCode::Numeric };
            Ok(Outcome {
                code,
                report,
                artifact: Some(sol.lattice_csv(lattice)),
            })
        }
        Command::VerifyConjugacy { samples, .. } => {
            let sys = bvp::build_boundary_system(&boundary_problem(&cfg)?)?;
            let r = gds::verify_conjugacy(
                &sys.zeta,
                &sys.pconf.system,
                &sys.omega,
                &sys.omega_inv,
                samples.unwrap_or(cfg.budgets.samples),
                c.seed,
                c.tol.unwrap_or(1e-9),
            )?;
            Ok(Outcome::new(r.passed, to_value(&r)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(std::iter::once("gds").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn missing_config_is_usage_error() {
        let (code, _, err) = run_capture(&["solve-bvp", "--config", "/nonexistent/missing.json"]);
        assert_eq!(code, 2);
        assert!(err.contains("cannot read"));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&["probe"]).0, 2);
        assert_eq!(run_capture(&["probe", "--config", "x.json", "--eps", "abc"]).0, 2);
        assert_eq!(run_capture(&["--help"]).0, 0);
    }

    #[test]
    fn wrong_problem_kind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"space": {"type": "interval", "a": 0, "b": 1}, "maps": ["t/2"]}"#).unwrap();
        let (code, out, _) = run_capture(&["solve-bvp", "--config", path.to_str().unwrap(), "--no-meta"]);
        assert_eq!(code, 2);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["status"], "error");
        assert!(v.get("meta").is_none());
    }
}
