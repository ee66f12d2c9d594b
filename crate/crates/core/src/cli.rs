//! Command-line front end: read a problem file, run the hierarchy, write a
//! JSON result document.
//!
//! Exit codes: 0 certified, 1 usage or input error, 2 orders exhausted
//! without a certificate, 3 solver failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::driver::{
    compare_flavors, run_hierarchy, AttemptOutcome, DominanceCheck, HierarchyOptions, HierarchyRun,
    Outcome, TraceEntry, DEFAULT_ORDER_SPAN,
};
use crate::error::{Error, Result};
use crate::extraction::AtomCheck;
use crate::problem_file::{format_problem_file, parse_problem_file, ProblemFile};
use crate::relaxation::{build, minimum_order, Flavor, Problem};
use crate::sdp::{write_sdpa, SdpStatus};

pub const TOOL_NAME: &str = "lasserre";
/// Bumped whenever a field of [`ResultDocument`] changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Certified = 0,
    Usage = 1,
    Exhausted = 2,
    SolverFailed = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of(outcome: &Outcome) -> Self {
        match outcome {
            Outcome::Certified { .. } => ExitStatus::Certified,
            Outcome::Exhausted { .. } => ExitStatus::Exhausted,
            Outcome::SolverFailed { .. } => ExitStatus::SolverFailed,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "lasserre",
    version,
    about = "Global polynomial optimization by moment relaxations with flat-truncation certificates"
)]
pub struct Args {
    /// Problem file.
    pub problem: PathBuf,
    /// putinar, schmudgen, sos, gradient or jacobian.
    #[arg(long, default_value = "putinar", value_parser = parse_flavor)]
    pub flavor: Flavor,
    /// First relaxation order; defaults to the smallest valid one.
    #[arg(long)]
    pub order_min: Option<u32>,
    /// Last relaxation order; defaults to order-min + 4.
    #[arg(long)]
    pub order_max: Option<u32>,
    /// Relative eigenvalue threshold for numerical rank.
    #[arg(long, default_value_t = 1e-6)]
    pub rank_tol: f64,
    /// Gap and feasibility tolerance of the SDP solver.
    #[arg(long, default_value_t = 1e-8)]
    pub solver_tol: f64,
    /// Seed for the random combination used in atom extraction.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Degree half t0 of the moment trace; defaults to max(d_f, d_g + r - 1).
    #[arg(long)]
    pub monitor_degree: Option<u32>,
    /// Also compare the bounds of every applicable flavor over the order range.
    #[arg(long)]
    pub compare: bool,
    /// Write the last solved relaxation in SDPA sparse format.
    #[arg(long, value_name = "PATH")]
    pub export_sdp: Option<PathBuf>,
    /// Result document path; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn parse_flavor(s: &str) -> std::result::Result<Flavor, String> {
    s.parse::<Flavor>()
        .map_err(|_| "expected one of putinar, schmudgen, sos, gradient, jacobian".to_string())
}

impl Args {
    pub fn hierarchy_options(&self) -> HierarchyOptions {
        HierarchyOptions {
            k_min: self.order_min,
            k_max: self.order_max,
            rank_tol: self.rank_tol,
            solver_tol: self.solver_tol,
            seed: self.seed,
            monitor_degree: self.monitor_degree,
            ..HierarchyOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEcho {
    pub vars: Vec<String>,
    pub minimize: String,
    pub inequalities: Vec<String>,
    pub equalities: Vec<String>,
    pub ball_radius: Option<f64>,
    /// The file as reprinted by the tool.
    pub text: String,
}

impl ProblemEcho {
    fn new(file: &ProblemFile) -> Self {
        let p = &file.problem;
        let show = |q: &crate::polynomial::Polynomial| q.display_with(&p.names).to_string();
        ProblemEcho {
            vars: p.names.names().to_vec(),
            minimize: show(&p.objective),
            inequalities: p.inequalities.iter().map(show).collect(),
            equalities: p.equalities.iter().map(show).collect(),
            ball_radius: file.ball_radius,
            text: format_problem_file(file),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rank: f64,
    pub solver: f64,
    pub verify: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRow {
    pub t: u32,
    pub rank: usize,
    /// `verified`, `rejected` or `failed`.
    pub result: String,
    pub atoms: Option<usize>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub k: u32,
    pub status: SdpStatus,
    pub diagnostic: Option<String>,
    pub iterations: usize,
    pub f_star: Option<f64>,
    pub f_sos: Option<f64>,
    pub gap: Option<f64>,
    pub moment_accuracy: f64,
    /// Rank tolerance after noise adaptation; absent when unusable.
    pub rank_tolerance: Option<f64>,
    /// `rank M_0, …, rank M_k`.
    pub ranks: Option<Vec<usize>>,
    pub flat_t: Option<u32>,
    pub attempts: Vec<AttemptRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub order: u32,
    pub flat_order: u32,
    pub f_min: f64,
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `‖z − Σ λ_j [u_j]‖∞` from extraction.
    pub extraction_residual: f64,
    pub verification_residual: f64,
    pub verify_tolerance: f64,
    pub atom_checks: Vec<AtomCheck>,
    /// The certified truncation as `(exponent, value)` pairs in graded-lex order.
    pub moments: Vec<(Vec<u32>, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    /// `certified`, `exhausted` or `solver_failed`.
    pub kind: String,
    pub order: u32,
    pub f_min: Option<f64>,
    pub f_star: Option<f64>,
    pub f_sos: Option<f64>,
    pub status: Option<SdpStatus>,
    pub diagnostic: Option<String>,
    /// Rank profile of the last usable order; persistent rank growth points
    /// to infinitely many minimizers rather than a low order.
    pub rank_profile: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub flavor: Flavor,
    pub k: u32,
    pub status: SdpStatus,
    pub bound: Option<f64>,
    pub flat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDoc {
    pub rows: Vec<ComparisonRow>,
    pub checks: Vec<DominanceCheck>,
    pub all_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTiming {
    pub k: u32,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTiming {
    pub flavor: Flavor,
    pub k: u32,
    pub seconds: f64,
}

/// Every wall-clock value of a run; the rest of the document is a
/// function of the input file and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub orders: Vec<OrderTiming>,
    pub comparison: Vec<ComparisonTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub tool: String,
    pub version: String,
    pub schema: u32,
    pub problem: ProblemEcho,
    pub flavor: Flavor,
    pub status: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub k_min: u32,
    pub k_max: u32,
    pub d_f: u32,
    pub d_g: u32,
    pub orders: Vec<OrderRow>,
    /// Present iff `status` is `certified`.
    pub certificate: Option<Certificate>,
    pub outcome: OutcomeSummary,
    pub monitor_degree: u32,
    pub trace: Vec<TraceEntry>,
    pub comparison: Option<ComparisonDoc>,
    pub timings: Timings,
}

impl ResultDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result document serializes")
    }

    /// The document with `timings` zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> ResultDocument {
        ResultDocument {
            timings: Timings {
                total_seconds: 0.0,
                orders: Vec::new(),
                comparison: Vec::new(),
            },
            ..self.clone()
        }
    }
}

fn order_rows(run: &HierarchyRun) -> Vec<OrderRow> {
    run.records
        .iter()
        .map(|r| OrderRow {
            k: r.k,
            status: r.status,
            diagnostic: r.diagnostic.clone(),
            iterations: r.iterations,
            f_star: r.f_star,
            f_sos: r.f_sos,
            gap: r.gap,
            moment_accuracy: r.moment_accuracy,
            rank_tolerance: r.flatness.as_ref().map(|f| f.rank_tolerance),
            ranks: r.flatness.as_ref().map(|f| f.rank_profile.clone()),
            flat_t: r.flatness.as_ref().and_then(|f| f.flat_order),
            attempts: r
                .attempts
                .iter()
                .map(|a| {
                    let (result, atoms, message) = match &a.outcome {
                        AttemptOutcome::Verified { measure, .. } => {
                            ("verified", Some(measure.len()), None)
                        }
                        AttemptOutcome::Rejected { measure, .. } => (
                            "rejected",
                            Some(measure.len()),
                            Some("atoms failed verification".to_string()),
                        ),
                        AttemptOutcome::Failed { message } => {
                            ("failed", None, Some(message.clone()))
                        }
                    };
                    AttemptRow {
                        t: a.t,
                        rank: a.rank,
                        result: result.into(),
                        atoms,
                        message,
                    }
                })
                .collect(),
        })
        .collect()
}

fn certificate(run: &HierarchyRun) -> Result<Option<Certificate>> {
    let Outcome::Certified {
        measure,
        verification,
        f_min,
        order,
        flat_order,
    } = &run.outcome
    else {
        return Ok(None);
    };
    let moments = match run.record(*order).and_then(|r| r.moments.as_ref()) {
        Some(y) => y.truncate(*flat_order)?.pairs(),
        None => Vec::new(),
    };
    Ok(Some(Certificate {
        order: *order,
        flat_order: *flat_order,
        f_min: *f_min,
        atoms: measure.atoms.clone(),
        weights: measure.weights.clone(),
        extraction_residual: measure.residual,
        verification_residual: verification.moment_residual,
        verify_tolerance: verification.tolerance,
        atom_checks: verification.atoms.clone(),
        moments,
    }))
}

fn outcome_summary(run: &HierarchyRun) -> OutcomeSummary {
    let rank_profile = run
        .records
        .iter()
        .rev()
        .find_map(|r| r.flatness.as_ref().map(|f| f.rank_profile.clone()));
    let mut s = OutcomeSummary {
        kind: run.outcome.kind().into(),
        order: 0,
        f_min: None,
        f_star: None,
        f_sos: None,
        status: None,
        diagnostic: None,
        rank_profile,
    };
    match &run.outcome {
        Outcome::Certified { f_min, order, .. } => {
            s.order = *order;
            s.f_min = Some(*f_min);
        }
        Outcome::Exhausted {
            max_order,
            f_star,
            f_sos,
        } => {
            s.order = *max_order;
            s.f_star = *f_star;
            s.f_sos = *f_sos;
        }
        Outcome::SolverFailed {
            order,
            status,
            diagnostic,
        } => {
            s.order = *order;
            s.status = Some(*status);
            s.diagnostic = diagnostic.clone();
        }
    }
    s
}

/// Flavors that apply to `prob`, in [`Flavor::ALL`] order.
pub fn applicable_flavors(prob: &Problem) -> Vec<Flavor> {
    Flavor::ALL
        .into_iter()
        .filter(|f| f.applies_to(prob))
        .collect()
}

fn comparison(
    prob: &Problem,
    opts: &HierarchyOptions,
) -> Result<(ComparisonDoc, Vec<ComparisonTiming>)> {
    let flavors = applicable_flavors(prob);
    let floor = flavors
        .iter()
        .map(|f| minimum_order(prob, *f))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min()
        .unwrap_or(1);
    let k_min = opts.k_min.unwrap_or(floor);
    let k_max = opts.k_max.unwrap_or(k_min + DEFAULT_ORDER_SPAN);
    let table = compare_flavors(prob, &flavors, k_min..=k_max, opts)?;
    let all_hold = table.all_hold();
    let timings = table
        .cells
        .iter()
        .map(|c| ComparisonTiming {
            flavor: c.flavor,
            k: c.k,
            seconds: c.seconds,
        })
        .collect();
    let rows = table
        .cells
        .into_iter()
        .map(|c| ComparisonRow {
            flavor: c.flavor,
            k: c.k,
            status: c.status,
            bound: c.bound,
            flat: c.flat,
        })
        .collect();
    Ok((
        ComparisonDoc {
            rows,
            checks: table.checks,
            all_hold,
        },
        timings,
    ))
}

fn export_sdp(prob: &Problem, run: &HierarchyRun, path: &Path) -> Result<()> {
    let k = run.records.last().map_or(run.k_min, |r| r.k);
    let sdp = build(prob, run.flavor, k)?.to_sdp_problem();
    let io_err = |e: io::Error| Error::Domain(format!("{}: {e}", path.display()));
    let mut file = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    write_sdpa(&sdp, &mut file).map_err(io_err)?;
    file.flush().map_err(io_err)
}

/// Runs the tool on already-parsed input and returns the document and the
/// exit status. Exports the relaxation when asked.
pub fn execute(file: &ProblemFile, args: &Args) -> Result<(ResultDocument, ExitStatus)> {
    let clock = Instant::now();
    let prob = file.to_problem()?;
    let opts = args.hierarchy_options();
    let run = run_hierarchy(&prob, args.flavor, &opts)?;
    if let Some(path) = &args.export_sdp {
        export_sdp(&prob, &run, path)?;
    }
    let compared = if args.compare {
        Some(comparison(&prob, &opts)?)
    } else {
        None
    };
    let doc = result_document(file, &run, compared, clock.elapsed().as_secs_f64())?;
    Ok((doc, ExitStatus::of(&run.outcome)))
}

/// Assembles the document for a finished run of `file`.
pub fn result_document(
    file: &ProblemFile,
    run: &HierarchyRun,
    compared: Option<(ComparisonDoc, Vec<ComparisonTiming>)>,
    total_seconds: f64,
) -> Result<ResultDocument> {
    let opts = &run.options;
    let (comparison, comparison_timings) = match compared {
        Some((doc, t)) => (Some(doc), t),
        None => (None, Vec::new()),
    };
    Ok(ResultDocument {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema: SCHEMA_VERSION,
        problem: ProblemEcho::new(file),
        flavor: run.flavor,
        status: run.outcome.kind().into(),
        seed: opts.seed,
        tolerances: Tolerances {
            rank: opts.rank_tol,
            solver: opts.solver_tol,
            verify: opts.verify_tol,
        },
        k_min: run.k_min,
        k_max: run.k_max,
        d_f: run.d_f,
        d_g: run.d_g,
        orders: order_rows(run),
        certificate: certificate(run)?,
        outcome: outcome_summary(run),
        monitor_degree: run.monitor_degree,
        trace: run.trace.clone(),
        comparison,
        timings: Timings {
            total_seconds,
            orders: run
                .records
                .iter()
                .map(|r| OrderTiming {
                    k: r.k,
                    seconds: r.seconds,
                })
                .collect(),
            comparison: comparison_timings,
        },
    })
}

fn verdict_line(doc: &ResultDocument) -> String {
    let o = &doc.outcome;
    match o.kind.as_str() {
        "certified" => format!(
            "certified at order {}: f_min = {:.9}, {} atom(s)",
            o.order,
            o.f_min.unwrap_or(f64::NAN),
            doc.certificate.as_ref().map_or(0, |c| c.atoms.len())
        ),
        "exhausted" => format!(
            "no certificate up to order {}: f* = {:?}, f_sos = {:?}, ranks {:?}",
            o.order, o.f_star, o.f_sos, o.rank_profile
        ),
        _ => format!(
            "solver failed at order {}: {}{}",
            o.order,
            o.status.map_or("unknown", |s| s.as_str()),
            o.diagnostic
                .as_ref()
                .map_or(String::new(), |d| format!(" ({d})"))
        ),
    }
}

/// Full command-line entry point; the document goes to `out` unless
/// `--out` is given, diagnostics to `err`.
pub fn main_with<I, T, O, E>(argv: I, out: &mut O, err: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    O: Write,
    E: Write,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitStatus::Usage.code()
            } else {
                0
            };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    let text = match fs::read_to_string(&args.problem) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", args.problem.display());
            return ExitStatus::Usage.code();
        }
    };
    let file = match parse_problem_file(&text) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(err, "error: {}:{e}", args.problem.display());
            return ExitStatus::Usage.code();
        }
    };
    let (doc, status) = match execute(&file, &args) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return ExitStatus::Usage.code();
        }
    };
    let json = doc.to_json();
    match &args.out {
        Some(path) => {
            if let Err(e) = fs::write(path, json + "\n") {
                let _ = writeln!(err, "error: {}: {e}", path.display());
                return ExitStatus::Usage.code();
            }
        }
        None => {
            let _ = writeln!(out, "{json}");
        }
    }
    let _ = writeln!(err, "{}", verdict_line(&doc));
    status.code()
}

/// [`main_with`] on the process arguments, stdout and stderr.
pub fn main() -> i32 {
    main_with(std::env::args_os(), &mut io::stdout(), &mut io::stderr())
}
