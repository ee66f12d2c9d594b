use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Residuals, SdpProblem, SdpSolution, SdpStatus, SolverOptions};
use crate::error::Result;

/// Certificates of infeasibility/unboundedness are accepted once the
/// normalized ray residual drops below this.
const INFEAS_TOL: f64 = 1e-8;
/// Relative rank cutoff when removing dependent equality rows.
const EQ_RANK_TOL: f64 = 1e-10;
/// Smallest admissible `|r_ii| / max|r_jj|` of the Schur QR factor.
const SCHUR_COND_TOL: f64 = 1e-15;
const STALL_ITERS: usize = 20;
/// A run whose best iterate got this close to optimal is never classified
/// as unbounded on stalling.
const STALL_NEAR_OPTIMAL: f64 = 1e-5;

struct Iterate {
    z: DVector<f64>,
    xs: Vec<DMatrix<f64>>,
    iter: usize,
    dinf: f64,
    merit: f64,
}

/// Shrinks `alpha` until every `x + alpha·dx` admits a Cholesky factor.
fn backtrack(
    xs: &[DMatrix<f64>],
    dxs: &[DMatrix<f64>],
    mut alpha: f64,
) -> (f64, Vec<DMatrix<f64>>) {
    for _ in 0..40 {
        let cand: Vec<DMatrix<f64>> = xs
            .iter()
            .zip(dxs)
            .map(|(x, dx)| sym(&(x + dx * alpha)))
            .collect();
        if cand.iter().all(|c| c.clone().cholesky().is_some()) {
            return (alpha, cand);
        }
        alpha *= 0.8;
    }
    (0.0, xs.to_vec())
}

/// Equality constraints eliminated as `y = y_p + N z`.
struct Reduced {
    y_p: DVector<f64>,
    null: DMatrix<f64>,
    /// `Nᵀc`
    q: DVector<f64>,
    /// `cᵀy_p`
    c0: f64,
}

/// One active block after elimination: `S = C + Σ z_i F_i`.
struct Block {
    /// Index in the original problem.
    source: usize,
    c: DMatrix<f64>,
    f: Vec<DMatrix<f64>>,
}

impl Block {
    fn dim(&self) -> usize {
        self.c.nrows()
    }

    fn apply(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.c.clone();
        for (fi, zi) in self.f.iter().zip(z.iter()) {
            if *zi != 0.0 {
                s += fi * *zi;
            }
        }
        s
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn adjoint(blocks: &[Block], xs: &[DMatrix<f64>], m: usize) -> DVector<f64> {
    let mut out = DVector::zeros(m);
    for (b, x) in blocks.iter().zip(xs) {
        for (i, fi) in b.f.iter().enumerate() {
            out[i] += inner(fi, x);
        }
    }
    out
}

fn eliminate(p: &SdpProblem) -> std::result::Result<Reduced, (DVector<f64>, String)> {
    let n = p.nvar;
    let c = DVector::from_column_slice(&p.objective);
    let rows: Vec<(Vec<f64>, f64)> = p
        .eq_rows
        .iter()
        .zip(&p.eq_rhs)
        .filter_map(|(r, &d)| {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return if d == 0.0 { None } else { Some((r.clone(), d)) };
            }
            Some((r.iter().map(|v| v / norm).collect(), d / norm))
        })
        .collect();
    if rows.is_empty() {
        return Ok(Reduced {
            y_p: DVector::zeros(n),
            null: DMatrix::identity(n, n),
            q: c,
            c0: 0.0,
        });
    }
    // Pad to a square matrix so the SVD returns a full right basis.
    let size = n.max(rows.len());
    let mut e = DMatrix::zeros(size, n);
    let mut d = DVector::zeros(size);
    for (i, (r, v)) in rows.iter().enumerate() {
        for (j, x) in r.iter().enumerate() {
            e[(i, j)] = *x;
        }
        d[i] = *v;
    }
    let svd = e.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let rank = order
        .iter()
        .filter(|&&i| smax > 0.0 && sigma[i] > EQ_RANK_TOL * smax)
        .count();
    let mut y_p = DVector::zeros(n);
    for &i in &order[..rank] {
        let coef = u.column(i).dot(&d) / sigma[i];
        y_p += v_t.row(i).transpose() * coef;
    }
    let resid = (&e * &y_p - &d).amax();
    if resid > 1e-10 * (1.0 + d.amax()) {
        return Err((
            y_p,
            format!("equality constraints are inconsistent (residual {resid:.3e})"),
        ));
    }
    let kernel: Vec<usize> = order[rank..].iter().copied().filter(|&i| i < n).collect();
    let mut null = DMatrix::zeros(n, kernel.len());
    for (col, &i) in kernel.iter().enumerate() {
        null.set_column(col, &v_t.row(i).transpose());
    }
    let q = null.transpose() * &c;
    let c0 = c.dot(&y_p);
    Ok(Reduced { y_p, null, q, c0 })
}

/// Maximal `α` with `x + α·dx ⪰ 0`, given the Cholesky factor of `x`.
fn max_step(chol_l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(a) = chol_l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(b) = chol_l.solve_lower_triangular(&a.transpose()) else {
        return 0.0;
    };
    let w = sym(&b);
    let lmin = SymmetricEigen::new(w).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(sym(a)).eigenvalues.min()
}

struct Finish<'a> {
    p: &'a SdpProblem,
    red: &'a Reduced,
    blocks: &'a [Block],
}

impl Finish<'_> {
    fn build(
        &self,
        status: SdpStatus,
        z: &DVector<f64>,
        xs: &[DMatrix<f64>],
        iterations: usize,
        dual_feas: f64,
        diagnostic: Option<String>,
    ) -> SdpSolution {
        let y = &self.red.y_p + &self.red.null * z;
        let y: Vec<f64> = y.iter().copied().collect();
        let primal_value: f64 = self.p.objective.iter().zip(&y).map(|(c, v)| c * v).sum();
        let mut dual_matrices: Vec<DMatrix<f64>> = self
            .p
            .blocks
            .iter()
            .map(|b| DMatrix::zeros(b.dim(), b.dim()))
            .collect();
        let mut cx = 0.0;
        for (b, x) in self.blocks.iter().zip(xs) {
            cx += inner(&b.c, x);
            dual_matrices[b.source] = x.clone();
        }
        let dual_value = self.red.c0 - cx;
        let primal_eq = self
            .p
            .eq_rows
            .iter()
            .zip(&self.p.eq_rhs)
            .map(|(r, d)| (r.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() - d).abs())
            .fold(0.0, f64::max);
        let block_min_eig = self
            .p
            .blocks
            .iter()
            .map(|b| min_eigenvalue(&b.evaluate(&y)))
            .fold(f64::INFINITY, f64::min);
        SdpSolution {
            status,
            y,
            primal_value,
            dual_value,
            dual_matrices,
            gap: primal_value - dual_value,
            residuals: Residuals {
                primal_eq,
                block_min_eig: if block_min_eig.is_finite() {
                    block_min_eig
                } else {
                    0.0
                },
                dual_feas,
            },
            iterations,
            diagnostic,
        }
    }
}

/// Solves the SDP with an infeasible-start primal-dual path-following
/// method (HKM direction, Mehrotra predictor-corrector).
pub fn solve(p: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    p.validate()?;
    let red = match eliminate(p) {
        Ok(r) => r,
        Err((y_p, msg)) => {
            let red = Reduced {
                y_p,
                null: DMatrix::zeros(p.nvar, 0),
                q: DVector::zeros(0),
                c0: 0.0,
            };
            let fin = Finish {
                p,
                red: &red,
                blocks: &[],
            };
            return Ok(fin.build(
                SdpStatus::PrimalInfeasible,
                &DVector::zeros(0),
                &[],
                0,
                0.0,
                Some(msg),
            ));
        }
    };
    let m = red.null.ncols();

    // Reduced blocks; constant ones are checked and dropped.
    let mut blocks = Vec::new();
    let mut infeasible_const = None;
    for (bi, pen) in p.blocks.iter().enumerate() {
        let dim = pen.dim();
        if dim == 0 {
            continue;
        }
        let mut c = pen.constant.clone();
        for (a, mat) in &pen.terms {
            if red.y_p[*a] != 0.0 {
                c += mat * red.y_p[*a];
            }
        }
        let mut f = vec![DMatrix::zeros(dim, dim); m];
        for (a, mat) in &pen.terms {
            for (i, fi) in f.iter_mut().enumerate() {
                let w = red.null[(*a, i)];
                if w != 0.0 {
                    *fi += mat * w;
                }
            }
        }
        let scale = pen
            .terms
            .iter()
            .fold(pen.constant.amax(), |acc, (_, a)| acc.max(a.amax()))
            .max(1e-300);
        let active = f.iter().any(|fi| fi.amax() > 1e-12 * scale);
        if active {
            blocks.push(Block { source: bi, c, f });
        } else if min_eigenvalue(&c) < -opts.feas_tol * (1.0 + c.amax()) {
            infeasible_const = Some(bi);
        }
    }
    let fin = Finish {
        p,
        red: &red,
        blocks: &blocks,
    };
    if let Some(bi) = infeasible_const {
        return Ok(fin.build(
            SdpStatus::PrimalInfeasible,
            &DVector::zeros(m),
            &[],
            0,
            0.0,
            Some(format!(
                "block {bi} is constant on the equality set and not PSD"
            )),
        ));
    }
    if m == 0 || blocks.is_empty() {
        let z = DVector::zeros(m);
        let status = if red.q.amax() <= opts.feas_tol {
            SdpStatus::Optimal
        } else {
            SdpStatus::DualInfeasibleOrUnbounded
        };
        let xs: Vec<DMatrix<f64>> = blocks
            .iter()
            .map(|b| DMatrix::zeros(b.dim(), b.dim()))
            .collect();
        return Ok(fin.build(status, &z, &xs, 0, 0.0, None));
    }

    Ipm::new(&red, &blocks, opts).run(&fin)
}

struct Ipm<'a> {
    red: &'a Reduced,
    blocks: &'a [Block],
    opts: &'a SolverOptions,
    m: usize,
    total_dim: usize,
    norm_c: f64,
    norm_q: f64,
}

struct Direction {
    dz: DVector<f64>,
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
}

impl<'a> Ipm<'a> {
    fn new(red: &'a Reduced, blocks: &'a [Block], opts: &'a SolverOptions) -> Self {
        let norm_c = blocks
            .iter()
            .map(|b| b.c.norm_squared())
            .sum::<f64>()
            .sqrt();
        Ipm {
            red,
            blocks,
            opts,
            m: red.null.ncols(),
            total_dim: blocks.iter().map(Block::dim).sum(),
            norm_c,
            norm_q: red.q.norm(),
        }
    }

    fn run(&self, fin: &Finish<'_>) -> Result<SdpSolution> {
        let m = self.m;
        let blocks = self.blocks;
        let nmax = blocks.iter().map(Block::dim).max().unwrap_or(1) as f64;
        let norm_f = (0..m)
            .map(|i| {
                blocks
                    .iter()
                    .map(|b| b.f[i].norm_squared())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        let xi = (0..m)
            .map(|i| {
                let nf = blocks
                    .iter()
                    .map(|b| b.f[i].norm_squared())
                    .sum::<f64>()
                    .sqrt();
                (1.0 + self.red.q[i].abs()) / (1.0 + nf)
            })
            .fold(10f64.max(nmax.sqrt()), f64::max);
        let eta = 10f64.max(nmax.sqrt()).max(self.norm_c).max(norm_f);

        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let mut z = DVector::from_fn(m, |_, _| 1e-6 * rng.gen_range(-1.0..1.0));
        let mut xs: Vec<DMatrix<f64>> = blocks
            .iter()
            .map(|b| DMatrix::identity(b.dim(), b.dim()) * xi)
            .collect();
        let mut ss: Vec<DMatrix<f64>> = blocks
            .iter()
            .map(|b| DMatrix::identity(b.dim(), b.dim()) * eta)
            .collect();

        let mut best = Iterate {
            z: z.clone(),
            xs: xs.clone(),
            iter: 0,
            dinf: f64::INFINITY,
            merit: f64::INFINITY,
        };
        let mut stall_ref = f64::INFINITY;
        let mut since_best = 0;
        let mut step_frac = 0.9;

        for iter in 0..self.opts.max_iter {
            // Residuals.
            let fx = adjoint(blocks, &xs, m);
            let r_p = &self.red.q - &fx;
            let r_d: Vec<DMatrix<f64>> = blocks
                .iter()
                .zip(&ss)
                .map(|(b, s)| b.apply(&z) - s)
                .collect();
            let norm_rd = r_d.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
            let cx: f64 = blocks.iter().zip(&xs).map(|(b, x)| inner(&b.c, x)).sum();
            let qz = self.red.q.dot(&z);
            let pobj = self.red.c0 + qz;
            let dobj = self.red.c0 - cx;
            let xs_inner: f64 = xs.iter().zip(&ss).map(|(x, s)| inner(x, s)).sum();
            let mu = xs_inner / self.total_dim as f64;
            let pinf = norm_rd / (1.0 + self.norm_c);
            let dinf = r_p.norm() / (1.0 + self.norm_q);
            let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            if self.opts.verbose {
                eprintln!(
                    "{iter:3} pobj {pobj:+.10e} dobj {dobj:+.10e} gap {relgap:.2e} pinf {pinf:.2e} dinf {dinf:.2e} mu {mu:.2e}"
                );
            }

            if relgap <= self.opts.gap_tol
                && pinf <= self.opts.feas_tol
                && dinf <= self.opts.feas_tol
            {
                return Ok(fin.build(SdpStatus::Optimal, &z, &xs, iter, dinf, None));
            }
            // Ray certificates.
            if qz < 0.0 && (self.norm_c + norm_rd) / (-qz) <= INFEAS_TOL {
                return Ok(fin.build(
                    SdpStatus::DualInfeasibleOrUnbounded,
                    &z,
                    &xs,
                    iter,
                    dinf,
                    Some(format!(
                        "objective decreases along a recession ray (cᵀy = {pobj:.3e})"
                    )),
                ));
            }
            if cx < 0.0 && (self.norm_q + r_p.norm()) / (-cx) <= INFEAS_TOL {
                return Ok(fin.build(
                    SdpStatus::PrimalInfeasible,
                    &z,
                    &xs,
                    iter,
                    dinf,
                    Some("multiplier ray certifies infeasibility".into()),
                ));
            }

            let merit = relgap.max(pinf).max(dinf);
            if merit < best.merit {
                best = Iterate {
                    z: z.clone(),
                    xs: xs.clone(),
                    iter,
                    dinf,
                    merit,
                };
            }
            if merit < 0.9 * stall_ref {
                stall_ref = merit;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= STALL_ITERS {
                    return Ok(self.stalled(fin, &best, relgap, pinf, dinf));
                }
            }

            // Factorizations.
            let mut s_inv = Vec::with_capacity(blocks.len());
            let mut x_chol = Vec::with_capacity(blocks.len());
            let mut s_chol = Vec::with_capacity(blocks.len());
            for (x, s) in xs.iter().zip(&ss) {
                let Some(cs) = s.clone().cholesky() else {
                    return Ok(self.failure(fin, &best, "slack matrix lost definiteness"));
                };
                let Some(cx) = x.clone().cholesky() else {
                    return Ok(self.failure(fin, &best, "multiplier lost definiteness"));
                };
                s_chol.push(cs.l());
                s_inv.push(cs);
                x_chol.push(cx.l());
            }

            let solver = match SchurSolver::new(blocks, &x_chol, &s_chol, m) {
                Some(s) => s,
                None => return Ok(self.failure(fin, &best, "Schur complement is singular")),
            };

            // Predictor.
            let aff = self.direction(&solver, &xs, &s_inv, &r_p, &r_d, 0.0, None);
            let ap = self.step(&x_chol, &aff.dx).min(1.0);
            let ad = self.step(&s_chol, &aff.ds).min(1.0);
            let mu_aff: f64 = xs
                .iter()
                .zip(&ss)
                .zip(aff.dx.iter().zip(&aff.ds))
                .map(|((x, s), (dx, ds))| inner(&(x + dx * ap), &(s + ds * ad)))
                .sum::<f64>()
                / self.total_dim as f64;
            let sigma = if mu > 0.0 {
                (mu_aff / mu).clamp(0.0, 1.0).powi(3)
            } else {
                0.0
            };

            // Corrector.
            let corr: Vec<DMatrix<f64>> =
                aff.dx.iter().zip(&aff.ds).map(|(dx, ds)| dx * ds).collect();
            let dir = self.direction(&solver, &xs, &s_inv, &r_p, &r_d, sigma * mu, Some(&corr));
            let ap = (step_frac * self.step(&x_chol, &dir.dx)).min(1.0);
            let ad = (step_frac * self.step(&s_chol, &dir.ds)).min(1.0);
            let (ap, new_x) = backtrack(&xs, &dir.dx, ap);
            let (ad, new_s) = backtrack(&ss, &dir.ds, ad);
            if ap < 1e-12 && ad < 1e-12 {
                return Ok(self.failure(fin, &best, "step length collapsed"));
            }
            xs = new_x;
            ss = new_s;
            z += &dir.dz * ad;
            step_frac = (0.9 + 0.09 * ap.min(ad)).min(0.99);
        }
        Ok(fin.build(
            SdpStatus::MaxIterations,
            &best.z,
            &best.xs,
            self.opts.max_iter,
            best.dinf,
            Some(format!("iteration limit {} reached", self.opts.max_iter)),
        ))
    }

    /// Reports the best iterate seen so far.
    fn failure(&self, fin: &Finish<'_>, best: &Iterate, msg: &str) -> SdpSolution {
        fin.build(
            SdpStatus::NumericalFailure,
            &best.z,
            &best.xs,
            best.iter,
            best.dinf,
            Some(format!("{msg} (best merit {:.2e})", best.merit)),
        )
    }

    /// A stall far from optimal with a feasible moment side means the SOS
    /// side has no feasible point (the multiplier residual or the gap will
    /// not close): the moment objective is unbounded below, though no strict
    /// ray exists.
    fn stalled(
        &self,
        fin: &Finish<'_>,
        best: &Iterate,
        relgap: f64,
        pinf: f64,
        dinf: f64,
    ) -> SdpSolution {
        if pinf <= self.opts.feas_tol && best.merit > STALL_NEAR_OPTIMAL {
            return fin.build(
                SdpStatus::DualInfeasibleOrUnbounded,
                &best.z,
                &best.xs,
                best.iter,
                best.dinf,
                Some(format!(
                    "gap {relgap:.2e} and multiplier residual {dinf:.2e} stalled while the moment side is feasible"
                )),
            );
        }
        self.failure(
            fin,
            best,
            &format!(
                "no progress for {STALL_ITERS} iterations (gap {relgap:.2e}, infeasibility {pinf:.2e}/{dinf:.2e})"
            ),
        )
    }

    fn step(&self, chol: &[DMatrix<f64>], d: &[DMatrix<f64>]) -> f64 {
        chol.iter()
            .zip(d)
            .map(|(l, dm)| max_step(l, dm))
            .fold(f64::INFINITY, f64::min)
    }

    /// Newton direction for `XS = σμI` with optional second-order term
    /// `corr` (the predictor's `ΔX ΔS`). `S⁻¹` is applied through its
    /// Cholesky factor, and `(XS)S⁻¹` is written as `X` exactly.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        solver: &SchurSolver,
        xs: &[DMatrix<f64>],
        s_fac: &[nalgebra::Cholesky<f64, nalgebra::Dyn>],
        r_p: &DVector<f64>,
        r_d: &[DMatrix<f64>],
        sigma_mu: f64,
        corr: Option<&[DMatrix<f64>]>,
    ) -> Direction {
        // W S⁻¹ = (S⁻¹ Wᵀ)ᵀ
        let right_inv = |fac: &nalgebra::Cholesky<f64, nalgebra::Dyn>, w: &DMatrix<f64>| {
            fac.solve(&w.transpose()).transpose()
        };
        // H = σμS⁻¹ − X − (X R_d + corr) S⁻¹; rhs = F*(H) − r_p
        let mut rhs = -r_p.clone();
        let mut partial = Vec::with_capacity(self.blocks.len());
        for (bi, ((b, x), (fac, rd))) in self
            .blocks
            .iter()
            .zip(xs)
            .zip(s_fac.iter().zip(r_d))
            .enumerate()
        {
            let mut w = x * rd;
            if let Some(c) = corr {
                w += &c[bi];
            }
            let mut h = -right_inv(fac, &w) - x;
            if sigma_mu != 0.0 {
                h += fac.inverse() * sigma_mu;
            }
            for (i, fi) in b.f.iter().enumerate() {
                rhs[i] += inner(fi, &h);
            }
            partial.push(h);
        }
        let dz = solver.solve(&rhs);
        let mut dx = Vec::with_capacity(self.blocks.len());
        let mut ds = Vec::with_capacity(self.blocks.len());
        for ((b, x), (fac, (rd, h))) in self
            .blocks
            .iter()
            .zip(xs)
            .zip(s_fac.iter().zip(r_d.iter().zip(&partial)))
        {
            let mut fdz = DMatrix::zeros(b.dim(), b.dim());
            for (fi, v) in b.f.iter().zip(dz.iter()) {
                fdz += fi * *v;
            }
            let dxb = h - right_inv(fac, &(x * &fdz));
            dx.push(sym(&dxb));
            ds.push(sym(&(rd + &fdz)));
        }
        Direction { dz, dx, ds }
    }
}

/// Solves `M v = r` for `M_ij = Σ_b ⟨F_i, X F_j S⁻¹⟩`, held as `GᵀG` with
/// columns `vec(L_xᵀ F_i L_s⁻ᵀ)` so the factor comes from a QR of `G`.
enum SchurSolver {
    Qr { g: DMatrix<f64>, r: DMatrix<f64> },
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurSolver {
    fn new(
        blocks: &[Block],
        x_chol: &[DMatrix<f64>],
        s_chol: &[DMatrix<f64>],
        m: usize,
    ) -> Option<Self> {
        let rows: usize = blocks.iter().map(|b| b.dim() * b.dim()).sum();
        let mut g = DMatrix::zeros(rows.max(m), m);
        let mut offset = 0;
        for ((b, lx), ls) in blocks.iter().zip(x_chol).zip(s_chol) {
            let d = b.dim();
            let lxt = lx.transpose();
            for (i, fi) in b.f.iter().enumerate() {
                let t = ls.solve_lower_triangular(fi)?;
                let gi = &lxt * t.transpose();
                g.view_mut((offset, i), (d * d, 1))
                    .copy_from_slice(gi.as_slice());
            }
            offset += d * d;
        }
        let r = g.clone().qr().r();
        let dmax = r.diagonal().amax();
        let dmin = r
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if dmax > 0.0 && dmin > SCHUR_COND_TOL * dmax {
            return Some(SchurSolver::Qr { g, r });
        }
        let mut mm = g.transpose() * &g;
        let scale = mm.diagonal().amax().max(1e-300);
        for i in 0..m {
            mm[(i, i)] += 1e-13 * scale;
        }
        let lu = mm.lu();
        lu.is_invertible().then_some(SchurSolver::Dense(lu))
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurSolver::Qr { g, r } => {
                let tri = |b: &DVector<f64>| {
                    r.tr_solve_upper_triangular(b)
                        .and_then(|w| r.solve_upper_triangular(&w))
                        .unwrap_or_else(|| DVector::zeros(b.len()))
                };
                let mut v = tri(rhs);
                for _ in 0..2 {
                    let res = rhs - g.tr_mul(&(g * &v));
                    v += tri(&res);
                }
                v
            }
            SchurSolver::Dense(l) => l.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}
