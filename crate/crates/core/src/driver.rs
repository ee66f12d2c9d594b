//! The hierarchy loop: solve successive relaxation orders, test each
//! optimizer for a flat truncation, extract and verify atoms, and track how
//! low-degree moments settle across orders.

use std::ops::RangeInclusive;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{extract_atoms, verify_atoms, AtomicMeasure, VerificationReport};
use crate::moment::{check_flat_truncation, tms_norm, FlatnessReport, Tms, DEFAULT_RANK_TOL};
use crate::relaxation::{build, minimum_order, Flavor, Problem};
use crate::sdp::{solve, SdpSolution, SdpStatus, SolverOptions};

/// `k_max = k_min + DEFAULT_ORDER_SPAN` unless given.
pub const DEFAULT_ORDER_SPAN: u32 = 4;
pub const DEFAULT_VERIFY_TOL: f64 = 1e-6;
/// A non-optimal solve whose moment side is at least this accurate is still
/// tested for flatness; verification decides the outcome.
pub const NEAR_OPTIMAL_TOL: f64 = 1e-6;
/// Moment noise from a solve of accuracy `a` is taken as `RANK_NOISE_GAIN·√a`
/// relative to the largest eigenvalue; the rank tolerance never goes below it.
pub const RANK_NOISE_GAIN: f64 = 30.0;
/// Slack on the dominance relations checked by [`compare_flavors`].
pub const DOMINANCE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyOptions {
    /// Defaults to the flavor's minimum order.
    pub k_min: Option<u32>,
    /// Defaults to `k_min + DEFAULT_ORDER_SPAN`.
    pub k_max: Option<u32>,
    pub rank_tol: f64,
    /// Used for both the gap and the feasibility tolerance of the solver.
    pub solver_tol: f64,
    pub max_iter: usize,
    pub verify_tol: f64,
    pub seed: u64,
    pub monitor_degree: Option<u32>,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            k_min: None,
            k_max: None,
            rank_tol: DEFAULT_RANK_TOL,
            solver_tol: 1e-8,
            max_iter: SolverOptions::default().max_iter,
            verify_tol: DEFAULT_VERIFY_TOL,
            seed: 0,
            monitor_degree: None,
        }
    }
}

impl HierarchyOptions {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iter: self.max_iter,
            gap_tol: self.solver_tol,
            feas_tol: self.solver_tol,
            seed: self.seed,
            verbose: false,
        }
    }

    /// `(k_min, k_max)` after defaults, checked against the flavor minimum.
    pub fn order_range(&self, prob: &Problem, flavor: Flavor) -> Result<(u32, u32)> {
        let floor = minimum_order(prob, flavor)?;
        let k_min = self.k_min.unwrap_or(floor);
        if k_min < floor {
            return Err(Error::domain(format!(
                "order {k_min} is below the minimum order {floor} of the {flavor} relaxation"
            )));
        }
        let k_max = self.k_max.unwrap_or(k_min + DEFAULT_ORDER_SPAN);
        if k_max < k_min {
            return Err(Error::domain(format!(
                "maximum order {k_max} is below the minimum order {k_min}"
            )));
        }
        Ok((k_min, k_max))
    }
}

/// Rank tolerance actually applied to a solver optimizer.
pub fn effective_rank_tol(rank_tol: f64, moment_accuracy: f64) -> f64 {
    rank_tol.max(RANK_NOISE_GAIN * moment_accuracy.max(0.0).sqrt())
}

/// Whether the moment side of `sol` is accurate enough to test.
pub fn is_usable(sol: &SdpSolution) -> bool {
    match sol.status {
        SdpStatus::Optimal => true,
        SdpStatus::NumericalFailure | SdpStatus::MaxIterations => {
            sol.moment_accuracy() <= NEAR_OPTIMAL_TOL
        }
        SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasibleOrUnbounded => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttemptOutcome {
    Verified {
        measure: AtomicMeasure,
        report: VerificationReport,
    },
    Rejected {
        measure: AtomicMeasure,
        report: VerificationReport,
    },
    Failed {
        message: String,
    },
}

/// Extraction at one flat order `t` with rank `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionAttempt {
    pub t: u32,
    pub rank: usize,
    pub outcome: AttemptOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderRecord {
    pub k: u32,
    pub status: SdpStatus,
    pub diagnostic: Option<String>,
    pub iterations: usize,
    /// Moment bound `f_k^*`; absent when the solve is unusable (unbounded
    /// orders have `f_k^* = −∞`).
    pub f_star: Option<f64>,
    /// SOS bound `f_k` from the block multipliers.
    pub f_sos: Option<f64>,
    pub gap: Option<f64>,
    pub moment_accuracy: f64,
    pub usable: bool,
    pub flatness: Option<FlatnessReport>,
    pub attempts: Vec<ExtractionAttempt>,
    pub seconds: f64,
    #[serde(skip)]
    pub moments: Option<Tms>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Certified {
        measure: AtomicMeasure,
        verification: VerificationReport,
        f_min: f64,
        order: u32,
        flat_order: u32,
    },
    Exhausted {
        max_order: u32,
        /// Last usable `(f_k^*, f_k)`.
        f_star: Option<f64>,
        f_sos: Option<f64>,
    },
    SolverFailed {
        order: u32,
        status: SdpStatus,
        diagnostic: Option<String>,
    },
}

impl Outcome {
    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::Certified { .. } => "certified",
            Outcome::Exhausted { .. } => "exhausted",
            Outcome::SolverFailed { .. } => "solver_failed",
        }
    }
}

/// `‖y^{(k)}|_{2t₀}‖₂` and the change from order `k − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: u32,
    pub norm: f64,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyRun {
    pub flavor: Flavor,
    pub k_min: u32,
    pub k_max: u32,
    pub d_f: u32,
    pub d_g: u32,
    pub options: HierarchyOptions,
    pub records: Vec<OrderRecord>,
    pub outcome: Outcome,
    pub monitor_degree: u32,
    pub trace: Vec<TraceEntry>,
}

impl HierarchyRun {
    pub fn is_certified(&self) -> bool {
        matches!(self.outcome, Outcome::Certified { .. })
    }

    pub fn certified_measure(&self) -> Option<&AtomicMeasure> {
        match &self.outcome {
            Outcome::Certified { measure, .. } => Some(measure),
            _ => None,
        }
    }

    pub fn record(&self, k: u32) -> Option<&OrderRecord> {
        self.records.iter().find(|r| r.k == k)
    }
}

/// Tries every flat order of `report` in increasing `t`; returns the
/// attempts and the index of the verified one.
fn attempt_extraction(
    prob: &Problem,
    y: &Tms,
    report: &FlatnessReport,
    f_star: f64,
    opts: &HierarchyOptions,
) -> Result<(Vec<ExtractionAttempt>, Option<usize>)> {
    let mut attempts = Vec::new();
    for t in report.passing_orders() {
        let rank = report.rank_at(t).unwrap_or(0);
        let z = y.truncate(t)?;
        let outcome = match extract_atoms(&z, rank, report.rank_tolerance, opts.seed) {
            Ok(mut measure) => {
                measure.attach_constraints(prob)?;
                let report = verify_atoms(&measure, prob, &z, f_star, opts.verify_tol)?;
                if report.passed {
                    attempts.push(ExtractionAttempt {
                        t,
                        rank,
                        outcome: AttemptOutcome::Verified { measure, report },
                    });
                    let last = attempts.len() - 1;
                    return Ok((attempts, Some(last)));
                }
                AttemptOutcome::Rejected { measure, report }
            }
            Err(Error::ExtractionFailed(message)) | Err(Error::Numerical(message)) => {
                AttemptOutcome::Failed { message }
            }
            Err(e) => return Err(e),
        };
        attempts.push(ExtractionAttempt { t, rank, outcome });
    }
    Ok((attempts, None))
}

/// Solves orders `k_min..=k_max` until an optimizer has a flat truncation
/// whose atoms verify.
pub fn run_hierarchy(
    prob: &Problem,
    flavor: Flavor,
    opts: &HierarchyOptions,
) -> Result<HierarchyRun> {
    if !flavor.applies_to(prob) {
        return Err(Error::Unsupported(format!(
            "the {flavor} relaxation does not apply to this problem"
        )));
    }
    let (k_min, k_max) = opts.order_range(prob, flavor)?;
    let solver_opts = opts.solver_options();
    let mut records: Vec<OrderRecord> = Vec::new();
    let mut outcome = None;
    let mut r_guess = 1usize;
    let (mut d_f, mut d_g) = (prob.d_f(), prob.d_g());

    for k in k_min..=k_max {
        let clock = Instant::now();
        let sdp = build(prob, flavor, k)?;
        d_f = sdp.d_f;
        d_g = sdp.d_g;
        let sol = solve(&sdp.to_sdp_problem(), &solver_opts)?;
        let usable = is_usable(&sol);
        let accuracy = sol.moment_accuracy();
        let mut record = OrderRecord {
            k,
            status: sol.status,
            diagnostic: sol.diagnostic.clone(),
            iterations: sol.iterations,
            f_star: usable.then_some(sol.primal_value),
            f_sos: usable.then_some(sol.dual_value),
            gap: usable.then_some(sol.gap),
            moment_accuracy: accuracy,
            usable,
            flatness: None,
            attempts: Vec::new(),
            seconds: 0.0,
            moments: None,
        };
        if usable {
            let y = Tms::with_basis(sdp.basis.clone(), sol.y.clone())?;
            let eps = effective_rank_tol(opts.rank_tol, accuracy);
            let report = check_flat_truncation(&y, sdp.d_f, sdp.d_g, eps)?;
            let (attempts, verified) =
                attempt_extraction(prob, &y, &report, sol.primal_value, opts)?;
            if let Some(last) = attempts.last() {
                r_guess = last.rank.max(1);
            }
            if let Some(i) = verified {
                if let AttemptOutcome::Verified { measure, report } = &attempts[i].outcome {
                    outcome = Some(Outcome::Certified {
                        measure: measure.clone(),
                        verification: report.clone(),
                        f_min: sol.primal_value,
                        order: k,
                        flat_order: attempts[i].t,
                    });
                }
            }
            record.flatness = Some(report);
            record.attempts = attempts;
            record.moments = Some(y);
        }
        record.seconds = clock.elapsed().as_secs_f64();
        // An infeasible relaxation proves the problem infeasible; the SOS
        // bound has fixed degree, so one unbounded order settles every order.
        let terminal = sol.status == SdpStatus::PrimalInfeasible
            || (flavor == Flavor::SosUnconstrained
                && sol.status == SdpStatus::DualInfeasibleOrUnbounded);
        records.push(record);
        if outcome.is_some() {
            break;
        }
        if terminal {
            outcome = Some(Outcome::SolverFailed {
                order: k,
                status: sol.status,
                diagnostic: sol.diagnostic,
            });
            break;
        }
    }

    let outcome = outcome.unwrap_or_else(|| match records.iter().rev().find(|r| r.usable) {
        Some(last) => Outcome::Exhausted {
            max_order: records.last().map_or(k_max, |r| r.k),
            f_star: last.f_star,
            f_sos: last.f_sos,
        },
        None => {
            let first = &records[0];
            Outcome::SolverFailed {
                order: first.k,
                status: first.status,
                diagnostic: first.diagnostic.clone(),
            }
        }
    });

    let monitor_degree = opts
        .monitor_degree
        .unwrap_or_else(|| d_f.max(d_g + r_guess as u32 - 1));
    let trace = asymptotic_trace(&records, monitor_degree)?;
    Ok(HierarchyRun {
        flavor,
        k_min,
        k_max,
        d_f,
        d_g,
        options: *opts,
        records,
        outcome,
        monitor_degree,
        trace,
    })
}

/// Trace over usable orders `k ≥ t₀`; `delta` needs order `k − 1` usable.
pub fn asymptotic_trace(records: &[OrderRecord], t0: u32) -> Result<Vec<TraceEntry>> {
    let mut out: Vec<TraceEntry> = Vec::new();
    let mut prev: Option<(u32, &Tms)> = None;
    for rec in records {
        let Some(y) = rec.moments.as_ref().filter(|_| rec.usable && rec.k >= t0) else {
            prev = None;
            continue;
        };
        let norm = tms_norm(y, 2 * t0)?;
        let delta = match prev {
            Some((pk, py)) if pk + 1 == rec.k => {
                let len = y.basis().prefix_len(2 * t0);
                let d = y.values()[..len]
                    .iter()
                    .zip(&py.values()[..len])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                Some(d)
            }
            _ => None,
        };
        out.push(TraceEntry {
            k: rec.k,
            norm,
            delta,
        });
        prev = Some((rec.k, y));
    }
    Ok(out)
}

/// One `(flavor, k)` cell of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub flavor: Flavor,
    pub k: u32,
    pub status: SdpStatus,
    pub bound: Option<f64>,
    pub flat: bool,
    pub seconds: f64,
}

impl ComparisonCell {
    /// The bound with an unbounded relaxation read as `−∞`; `None` when the
    /// solve says nothing about the value.
    pub fn level(&self) -> Option<f64> {
        match (self.bound, self.status) {
            (Some(b), _) => Some(b),
            (None, SdpStatus::DualInfeasibleOrUnbounded) => Some(f64::NEG_INFINITY),
            _ => None,
        }
    }
}

/// `lhs ≥ rhs` (or `=`) between two levels; `None` stands for `−∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub relation: String,
    pub k: u32,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub holds: bool,
}

impl DominanceCheck {
    fn new(relation: String, k: u32, lhs: f64, rhs: f64, equal: bool) -> Self {
        let ge = |a: f64, b: f64| a == b || a >= b - DOMINANCE_TOL;
        let holds = if equal {
            lhs == rhs || (lhs - rhs).abs() <= DOMINANCE_TOL
        } else {
            ge(lhs, rhs)
        };
        DominanceCheck {
            relation,
            k,
            lhs: lhs.is_finite().then_some(lhs),
            rhs: rhs.is_finite().then_some(rhs),
            holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlavorComparison {
    pub cells: Vec<ComparisonCell>,
    pub checks: Vec<DominanceCheck>,
}

impl FlavorComparison {
    pub fn bound(&self, flavor: Flavor, k: u32) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.flavor == flavor && c.k == k)
            .and_then(|c| c.bound)
    }

    /// See [`ComparisonCell::level`].
    pub fn level(&self, flavor: Flavor, k: u32) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.flavor == flavor && c.k == k)
            .and_then(ComparisonCell::level)
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Solves every applicable `(flavor, k)` and checks the orderings between
/// bounds: each flavor nondecreasing in `k`, the preordering bound at least
/// the quadratic-module bound, and the two equal for one inequality.
/// Unbounded orders enter the checks as `−∞`.
pub fn compare_flavors(
    prob: &Problem,
    flavors: &[Flavor],
    orders: RangeInclusive<u32>,
    opts: &HierarchyOptions,
) -> Result<FlavorComparison> {
    if let Some(f) = flavors.iter().find(|f| !f.applies_to(prob)) {
        return Err(Error::Unsupported(format!(
            "the {f} relaxation does not apply to this problem"
        )));
    }
    let solver_opts = opts.solver_options();
    let mut cells = Vec::new();
    for &flavor in flavors {
        let floor = minimum_order(prob, flavor)?;
        for k in orders.clone().filter(|k| *k >= floor) {
            let clock = Instant::now();
            let sdp = build(prob, flavor, k)?;
            let sol = solve(&sdp.to_sdp_problem(), &solver_opts)?;
            let usable = is_usable(&sol);
            let flat = if usable {
                let y = Tms::with_basis(sdp.basis.clone(), sol.y.clone())?;
                let eps = effective_rank_tol(opts.rank_tol, sol.moment_accuracy());
                check_flat_truncation(&y, sdp.d_f, sdp.d_g, eps)?
                    .flat_order
                    .is_some()
            } else {
                false
            };
            cells.push(ComparisonCell {
                flavor,
                k,
                status: sol.status,
                bound: usable.then_some(sol.primal_value),
                flat,
                seconds: clock.elapsed().as_secs_f64(),
            });
        }
    }

    let mut checks = Vec::new();
    let level = |f: Flavor, k: u32| {
        cells
            .iter()
            .find(|c: &&ComparisonCell| c.flavor == f && c.k == k)
            .and_then(ComparisonCell::level)
    };
    for &flavor in flavors {
        for k in orders.clone() {
            if let (Some(lo), Some(hi)) = (level(flavor, k), level(flavor, k + 1)) {
                let relation = format!("{flavor} order {} ≥ order {k}", k + 1);
                checks.push(DominanceCheck::new(relation, k + 1, hi, lo, false));
            }
        }
    }
    if flavors.contains(&Flavor::Putinar) && flavors.contains(&Flavor::Schmudgen) {
        for k in orders.clone() {
            let (Some(q), Some(s)) = (level(Flavor::Putinar, k), level(Flavor::Schmudgen, k))
            else {
                continue;
            };
            checks.push(DominanceCheck::new(
                "schmudgen ≥ putinar".into(),
                k,
                s,
                q,
                false,
            ));
            if prob.inequalities.len() == 1 {
                let relation = "schmudgen = putinar (one inequality)".into();
                checks.push(DominanceCheck::new(relation, k, s, q, true));
            }
        }
    }
    Ok(FlavorComparison { cells, checks })
}
