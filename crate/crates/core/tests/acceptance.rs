//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (uncaptured) before asserting.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{ball_point, planted_in_box, planted_with, recovery_error};
use lasserre::driver::{compare_flavors, run_hierarchy, HierarchyOptions, HierarchyRun, Outcome};
use lasserre::extraction::extract_atoms;
use lasserre::moment::{
    assemble_localizing, check_flat_truncation, riesz, tms_norm, DEFAULT_RANK_TOL,
};
use lasserre::polynomial::{parse_polynomial, Monomial, MonomialBasis, Polynomial, VarNames};
use lasserre::relaxation::{build, jacobian_equalities, Flavor, Problem};
use lasserre::sdp::{extract_dual_certificate, solve, SdpStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const F_STAR_TOL: f64 = 1e-6;
const ATOM_TOL: f64 = 1e-5;
const WEIGHT_TOL: f64 = 1e-5;
const JACOBIAN_AT_ATOM_TOL: f64 = 1e-8;
const MOTZKIN_ATOM_TOL: f64 = 1e-4;
const ROUND_TRIP_TOL: f64 = 1e-6;
const POSITIVITY_TOL: f64 = 1e-8;
const LOCALIZING_FEASIBILITY_TOL: f64 = 1e-9;
const KERNEL_CLOSURE_TOL: f64 = 1e-6;
const DOMINANCE_TOL: f64 = 1e-7;
const NORM_BOUND_SLACK: f64 = 1e-9;
const GAP_TOL: f64 = 1e-7;
const SOS_IDENTITY_TOL: f64 = 1e-6;

/// The Jacobian check at the atom is only as tight as the moments.
const DISK_SOLVER_TOL: f64 = 1e-10;

const INTERVAL_BUDGET: Duration = Duration::from_secs(1);
const DISK_BUDGET: Duration = Duration::from_secs(5);
const MOTZKIN_BUDGET: Duration = Duration::from_secs(30);

fn report(id: u32, title: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {id} [{verdict}] {title}: {detail}"
    );
}

fn problem(vars: &[&str], f: &str, g: &[&str]) -> Problem {
    let names = VarNames::new(vars.iter().copied()).unwrap();
    let p = |s: &str| parse_polynomial(s, &names).unwrap();
    Problem::new(
        names.clone(),
        p(f),
        g.iter().map(|s| p(s)).collect(),
        vec![],
    )
    .unwrap()
}

fn interval() -> Problem {
    problem(&["x"], "-x^2", &["1 - x^2"])
}

fn disk() -> Problem {
    problem(&["x1", "x2"], "-x1 - x2", &["1 - x1^2 - x2^2"])
}

fn motzkin() -> Problem {
    problem(
        &["x1", "x2"],
        "x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1",
        &[],
    )
}

fn opts(k_max: u32) -> HierarchyOptions {
    HierarchyOptions {
        k_max: Some(k_max),
        ..HierarchyOptions::default()
    }
}

fn certified(run: &HierarchyRun) -> Option<(f64, u32, u32)> {
    match &run.outcome {
        Outcome::Certified {
            f_min,
            order,
            flat_order,
            ..
        } => Some((*f_min, *order, *flat_order)),
        _ => None,
    }
}

#[test]
fn criterion_1_interval() {
    let clock = Instant::now();
    let run = run_hierarchy(&interval(), Flavor::Putinar, &opts(3)).unwrap();
    let elapsed = clock.elapsed();
    let mut problems = Vec::new();
    let mut detail = String::new();
    match (certified(&run), run.certified_measure()) {
        (Some((f, k, t)), Some(m)) => {
            if (f + 1.0).abs() > F_STAR_TOL {
                problems.push(format!("f* = {f}"));
            }
            let mut atoms: Vec<(f64, f64)> = m
                .atoms
                .iter()
                .map(|a| a[0])
                .zip(m.weights.iter().copied())
                .collect();
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            if atoms.len() != 2 {
                problems.push(format!("{} atoms", atoms.len()));
            } else {
                for ((x, w), want) in atoms.iter().zip([-1.0, 1.0]) {
                    if (x - want).abs() > ATOM_TOL || (w - 0.5).abs() > WEIGHT_TOL {
                        problems.push(format!("atom {x} weight {w}"));
                    }
                }
            }
            let flat = run
                .record(k)
                .and_then(|r| r.flatness.as_ref())
                .and_then(|f| f.tested_orders.iter().find(|x| x.t == t).copied());
            match flat {
                Some(ft) if ft.rank_low == 2 && ft.rank_high == 2 => {}
                other => problems.push(format!("flat test {other:?}")),
            }
            detail = format!("f* = {f:.9} at k = {k}, t = {t}, atoms {atoms:?}, ");
        }
        _ => problems.push(format!("outcome {}", run.outcome.kind())),
    }
    if elapsed > INTERVAL_BUDGET {
        problems.push(format!("took {elapsed:?}"));
    }
    detail.push_str(&format!("{:.3} s", elapsed.as_secs_f64()));
    let passed = problems.is_empty();
    report(1, "interval, Putinar", passed, &detail);
    assert!(passed, "{problems:?}");
}

#[test]
fn criterion_2_disk() {
    let prob = disk();
    let want = std::f64::consts::FRAC_1_SQRT_2;
    let mut problems = Vec::new();
    let mut lines = Vec::new();
    for flavor in [Flavor::Putinar, Flavor::JacobianSingle] {
        let clock = Instant::now();
        let options = HierarchyOptions {
            solver_tol: DISK_SOLVER_TOL,
            ..opts(5)
        };
        let run = run_hierarchy(&prob, flavor, &options).unwrap();
        let elapsed = clock.elapsed();
        let Some(((f, k, _), m)) = certified(&run).zip(run.certified_measure()) else {
            problems.push(format!("{flavor}: {}", run.outcome.kind()));
            continue;
        };
        if (f + 2f64.sqrt()).abs() > F_STAR_TOL {
            problems.push(format!("{flavor}: f* = {f}"));
        }
        if m.len() != 1 || m.atoms[0].iter().any(|x| (x - want).abs() > ATOM_TOL) {
            problems.push(format!("{flavor}: atoms {:?}", m.atoms));
        }
        let jac = jacobian_equalities(&prob.objective, &prob.inequalities[0]).unwrap();
        let worst = m
            .atoms
            .iter()
            .flat_map(|u| jac.iter().map(move |h| h.evaluate(u).unwrap().abs()))
            .fold(0.0f64, f64::max);
        if worst > JACOBIAN_AT_ATOM_TOL {
            problems.push(format!("{flavor}: jacobian residual {worst:e}"));
        }
        if elapsed > DISK_BUDGET {
            problems.push(format!("{flavor}: took {elapsed:?}"));
        }
        lines.push(format!(
            "{flavor} f* = {f:.9} at k = {k}, atom {:?}, jacobian residual {worst:.1e}, {:.3} s",
            m.atoms[0],
            elapsed.as_secs_f64()
        ));
    }
    let passed = problems.is_empty();
    report(2, "disk, Putinar and Jacobian", passed, &lines.join("; "));
    assert!(passed, "{problems:?}");
}

#[test]
fn criterion_3_motzkin() {
    let prob = motzkin();
    let mut problems = Vec::new();

    let sos = run_hierarchy(&prob, Flavor::SosUnconstrained, &opts(5)).unwrap();
    let sos_status = match &sos.outcome {
        Outcome::SolverFailed { order, status, .. } => {
            if *status != SdpStatus::DualInfeasibleOrUnbounded {
                problems.push(format!("sos status {status}"));
            }
            format!("sos unbounded at k = {order}")
        }
        other => {
            problems.push(format!("sos outcome {}", other.kind()));
            String::new()
        }
    };

    let clock = Instant::now();
    let grad = run_hierarchy(&prob, Flavor::Gradient, &opts(5)).unwrap();
    let elapsed = clock.elapsed();
    let mut grad_status = String::new();
    match certified(&grad).zip(grad.certified_measure()) {
        Some(((f, k, t), m)) => {
            if f.abs() > F_STAR_TOL {
                problems.push(format!("gradient f* = {f}"));
            }
            let corners = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
            let all_found = m.len() == 4
                && corners.iter().all(|c| {
                    m.atoms.iter().any(|a| {
                        a.iter()
                            .zip(c)
                            .all(|(x, y)| (x - y).abs() <= MOTZKIN_ATOM_TOL)
                    })
                });
            if !all_found {
                problems.push(format!("gradient atoms {:?}", m.atoms));
            }
            grad_status = format!(
                "gradient f* = {f:.2e} at k = {k}, t = {t}, {} atoms",
                m.len()
            );
        }
        None => problems.push(format!("gradient outcome {}", grad.outcome.kind())),
    }
    if elapsed > MOTZKIN_BUDGET {
        problems.push(format!("gradient took {elapsed:?}"));
    }
    let passed = problems.is_empty();
    report(
        3,
        "Motzkin, sos and gradient",
        passed,
        &format!(
            "{sos_status}; {grad_status}, {:.3} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed, "{problems:?}");
}

#[test]
fn criterion_4_round_trip_extraction() {
    const CASES: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for case in 0..CASES {
        let n = rng.gen_range(1..=3);
        let r = rng.gen_range(1..=4);
        let planted = planted_in_box(&mut rng, n, r);
        // d_f = d_g = 1.
        let t = (r as u32).max(1);
        let z = planted.tms(t);
        let report = check_flat_truncation(&z, 1, 1, DEFAULT_RANK_TOL).unwrap();
        let Some(flat) = report.flat_order else {
            failures.push(format!(
                "case {case}: not flat, ranks {:?}",
                report.rank_profile
            ));
            continue;
        };
        let rank = report.rank_at(flat).unwrap();
        let zt = z.truncate(flat).unwrap();
        match extract_atoms(&zt, rank, DEFAULT_RANK_TOL, case as u64) {
            Ok(m) => {
                let err = recovery_error(&m, &planted);
                worst = worst.max(err);
                if err > ROUND_TRIP_TOL {
                    failures.push(format!("case {case}: error {err:e}"));
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    let passed = failures.is_empty();
    report(
        4,
        "round-trip extraction",
        passed,
        &format!(
            "{} of {CASES} recovered, worst error {worst:.1e}",
            CASES - failures.len()
        ),
    );
    assert!(passed, "{failures:?}");
}

/// A random SOS polynomial `Σ p_j²` of degree at most `2d`.
fn random_sos(rng: &mut ChaCha8Rng, n: usize, d: u32) -> Polynomial {
    let basis = MonomialBasis::new(n, d);
    let mut s = Polynomial::zero(n);
    for _ in 0..rng.gen_range(1..=3) {
        let terms = basis
            .monomials()
            .iter()
            .map(|m| (m.exponents().to_vec(), rng.gen_range(-1.0..1.0)));
        let p = Polynomial::from_terms(n, terms).unwrap();
        s = &s + &(&p * &p);
    }
    s
}

/// A random constraint `c − Σ a_i (x_i − b_i)²` plus a small cubic term,
/// positive at the origin.
fn random_constraint(rng: &mut ChaCha8Rng, n: usize) -> Polynomial {
    let mut g = Polynomial::constant(n, rng.gen_range(0.5..2.0));
    for i in 0..n {
        let xi = Polynomial::var(n, i);
        let shifted = &xi - &Polynomial::constant(n, rng.gen_range(-0.3..0.3));
        g = &g - &(&shifted * &shifted).scale(rng.gen_range(0.5..1.5));
    }
    let i = rng.gen_range(0..n);
    let xi = Polynomial::var(n, i);
    &g + &(&(&xi * &xi) * &xi).scale(rng.gen_range(-0.2..0.2))
}

/// Kernel of `M_k(y)` restricted to degree `≤ k − 2`, times each `x_i`,
/// stays in the kernel; returns the worst relative residual and the
/// number of kernel vectors tested.
fn kernel_closure(y: &lasserre::moment::Tms, k: u32, r: usize) -> (f64, usize) {
    let n = y.nvars();
    let m = y.moment_matrix(k).unwrap();
    let basis = MonomialBasis::new(n, k);
    let low = basis.prefix_len(k - 2);
    let sub = m.columns(0, low).into_owned();
    let svd = sub.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    let norm = m.norm();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (row, s) in svd.singular_values.iter().enumerate() {
        if *s > 1e-8 * smax {
            continue;
        }
        count += 1;
        let q = vt.row(row);
        for i in 0..n {
            let mut shifted = nalgebra::DVector::zeros(basis.len());
            for (a, c) in q.iter().enumerate() {
                let moved = basis.get(a).mul(&Monomial::var(n, i));
                shifted[basis.index_of(&moved).unwrap()] += c;
            }
            worst = worst.max((&m * &shifted).norm() / norm);
        }
    }
    assert_eq!(count, low - r, "kernel dimension");
    (worst, count)
}

#[test]
fn criterion_5_localizing_positivity_and_kernel_closure() {
    const CASES: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = Vec::new();
    let (mut min_riesz, mut worst_closure, mut kernels) = (f64::INFINITY, 0.0f64, 0);
    for case in 0..CASES {
        let n = rng.gen_range(1..=3);
        let r = rng.gen_range(1..=3);
        let gs: Vec<Polynomial> = (0..rng.gen_range(1..=2))
            .map(|_| random_constraint(&mut rng, n))
            .collect();
        let planted = planted_with(&mut rng, r, |rng| loop {
            let u = ball_point(rng, n, 1.0);
            if gs.iter().all(|g| g.evaluate(&u).unwrap() >= 0.0) {
                return u;
            }
        });
        let k = r as u32 + 2;
        let y = planted.tms(k);

        for g in &gs {
            let dg = g.degree_half().unwrap();
            let loc = assemble_localizing(&y, g, k).unwrap();
            let scale = loc.entries.amax().max(1.0);
            let min_eig = loc.entries.clone().symmetric_eigenvalues().min();
            if min_eig < -LOCALIZING_FEASIBILITY_TOL * scale {
                violations.push(format!(
                    "case {case}: localizing min eigenvalue {min_eig:e}"
                ));
            }
            for _ in 0..3 {
                let s = random_sos(&mut rng, n, k - dg);
                let gs_poly = g * &s;
                let value = riesz(&y, &gs_poly).unwrap();
                let scale = gs_poly.max_abs_coefficient().max(1.0);
                min_riesz = min_riesz.min(value / scale);
                if value < -POSITIVITY_TOL * scale {
                    violations.push(format!("case {case}: riesz(g s) = {value:e}"));
                }
            }
        }
        let (closure, count) = kernel_closure(&y, k, r);
        worst_closure = worst_closure.max(closure);
        kernels += count;
        if closure > KERNEL_CLOSURE_TOL {
            violations.push(format!("case {case}: kernel closure {closure:e}"));
        }
    }
    let passed = violations.is_empty();
    report(
        5,
        "localizing positivity and kernel closure",
        passed,
        &format!(
            "{} violations over {CASES} measures, min scaled riesz {min_riesz:.2e}, \
             {kernels} kernel vectors with worst closure residual {worst_closure:.1e}",
            violations.len()
        ),
    );
    assert!(passed, "{violations:?}");
}

fn dominance_suite() -> Vec<(&'static str, Problem)> {
    vec![
        ("interval", interval()),
        ("disk", disk()),
        (
            "box",
            problem(&["x", "y"], "x*y + x - y^2", &["1 - x^2", "1 - y^2"]),
        ),
        (
            "annulus",
            problem(
                &["x", "y"],
                "x + y^2 - x*y",
                &["1 - x^2 - y^2", "x^2 + y^2 - 0.25"],
            ),
        ),
        (
            "triangle",
            problem(
                &["x", "y"],
                "-(x - 0.3)^2 - (y - 0.2)^2 + x*y",
                &["x", "y", "1 - x - y"],
            ),
        ),
    ]
}

#[test]
fn criterion_6_monotonicity_and_dominance() {
    let mut problems = Vec::new();
    let (mut checks, mut unbounded) = (0, 0);
    for (name, prob) in dominance_suite() {
        let table = compare_flavors(
            &prob,
            &[Flavor::Putinar, Flavor::Schmudgen],
            1..=3,
            &HierarchyOptions::default(),
        )
        .unwrap();
        for cell in table.cells.iter().filter(|c| c.level().is_none()) {
            problems.push(format!(
                "{name}: {} k = {} is {}",
                cell.flavor, cell.k, cell.status
            ));
        }
        for k in 1..=3 {
            let (Some(q), Some(s)) = (
                table.level(Flavor::Putinar, k),
                table.level(Flavor::Schmudgen, k),
            ) else {
                continue;
            };
            checks += 1;
            unbounded += usize::from(q == f64::NEG_INFINITY) + usize::from(s == f64::NEG_INFINITY);
            if q > s + DOMINANCE_TOL {
                problems.push(format!("{name}: k = {k} putinar {q} > schmudgen {s}"));
            }
            if prob.inequalities.len() == 1 && q != s && (q - s).abs() > DOMINANCE_TOL {
                problems.push(format!("{name}: k = {k} m = 1 but {q} != {s}"));
            }
        }
        for k in 1..3 {
            if let (Some(lo), Some(hi)) = (
                table.level(Flavor::Putinar, k),
                table.level(Flavor::Putinar, k + 1),
            ) {
                checks += 1;
                if hi < lo - DOMINANCE_TOL {
                    problems.push(format!(
                        "{name}: putinar k = {} drops to {hi} from {lo}",
                        k + 1
                    ));
                }
            }
        }
        if !table.all_hold() {
            let broken: Vec<_> = table.checks.iter().filter(|c| !c.holds).collect();
            problems.push(format!("{name}: {broken:?}"));
        }
    }
    let passed = problems.is_empty();
    report(
        6,
        "monotonicity and dominance",
        passed,
        &format!(
            "{checks} comparisons over 5 problems ({unbounded} unbounded cells read as -inf), \
             {} violations",
            problems.len()
        ),
    );
    assert!(passed, "{problems:?}");
}

#[test]
fn criterion_7_moment_norm_bound() {
    const CASES: usize = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut doubled_violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for case in 0..CASES {
        let radius_sq = [0.5, 1.0, 2.0][case % 3];
        let n = rng.gen_range(1..=3);
        let r = rng.gen_range(1..=4);
        let t = rng.gen_range(1..=3u32);
        let planted = planted_with(&mut rng, r, |rng| ball_point(rng, n, radius_sq));
        let y = planted.tms(t);
        let norm_sq = tms_norm(&y, 2 * t).unwrap().powi(2);
        let bound: f64 = (0..=t).map(|j| radius_sq.powi(j as i32)).sum();
        worst_excess = worst_excess.max(norm_sq - bound);
        if norm_sq > bound + NORM_BOUND_SLACK {
            violations += 1;
        }
        // Each degree-j block is at most ‖u‖^{2j} ≤ R^j, summed to 2t.
        let doubled: f64 = (0..=2 * t).map(|j| radius_sq.powi(j as i32)).sum();
        if norm_sq > doubled + NORM_BOUND_SLACK {
            doubled_violations += 1;
        }
    }
    let passed = violations == 0;
    report(
        7,
        "moment-norm bound",
        passed,
        &format!(
            "{violations} of {CASES} exceed Σ_{{j≤t}} R^j (worst excess {worst_excess:.3}); \
             {doubled_violations} exceed Σ_{{j≤2t}} R^j"
        ),
    );
    assert_eq!(doubled_violations, 0);
    assert!(passed, "{violations} measures violate the bound");
}

#[test]
fn criterion_8_duality_gap_and_sos_identity() {
    let mut suite = vec![("interval", interval()), ("disk", disk())];
    suite.extend(dominance_suite().into_iter().skip(2));
    let solver = HierarchyOptions::default().solver_options();
    let mut problems = Vec::new();
    let (mut worst_gap, mut worst_identity, mut solves) = (0.0f64, 0.0f64, 0);
    let mut unbounded = Vec::new();
    for (name, prob) in &suite {
        for flavor in [Flavor::Putinar, Flavor::Schmudgen] {
            for k in 1..=3 {
                let sdp = build(prob, flavor, k).unwrap();
                let sol = solve(&sdp.to_sdp_problem(), &solver).unwrap();
                solves += 1;
                if sol.status == SdpStatus::DualInfeasibleOrUnbounded {
                    unbounded.push(format!("{name} {flavor} k = {k}"));
                    continue;
                }
                if sol.status != SdpStatus::Optimal {
                    problems.push(format!("{name} {flavor} k = {k}: {}", sol.status));
                    continue;
                }
                worst_gap = worst_gap.max(sol.gap.abs());
                if sol.gap.abs() > GAP_TOL {
                    problems.push(format!("{name} {flavor} k = {k}: gap {:e}", sol.gap));
                }
                let cert = extract_dual_certificate(&sol, &sdp).unwrap();
                worst_identity = worst_identity.max(cert.relative_residual());
                if cert.relative_residual() > SOS_IDENTITY_TOL {
                    problems.push(format!(
                        "{name} {flavor} k = {k}: identity residual {:e}",
                        cert.relative_residual()
                    ));
                }
            }
        }
    }
    let passed = problems.is_empty();
    report(
        8,
        "duality gap and SOS identity",
        passed,
        &format!(
            "{solves} solves ({} unbounded: {}), worst |gap| {worst_gap:.1e}, \
             worst identity residual {worst_identity:.1e}",
            unbounded.len(),
            unbounded.join(", ")
        ),
    );
    assert!(passed, "{problems:?}");
}
