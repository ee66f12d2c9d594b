//! Recovery of an atomic representing measure from a flat truncated moment
//! sequence, and verification of the recovered atoms against a problem.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moment::Tms;
use crate::polynomial::{Monomial, MonomialBasis};
use crate::relaxation::Problem;

/// Largest admissible subdiagonal entry of the real Schur form, relative to
/// the matrix scale.
pub const SCHUR_REAL_TOL: f64 = 1e-6;
/// Largest negative least-squares weight that is silently clipped.
pub const WEIGHT_CLIP_TOL: f64 = 1e-6;
/// Reseeded attempts after the first random combination.
pub const RESEED_ATTEMPTS: u32 = 3;

/// `z ≈ Σ_j λ_j [u_j]_{2t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `‖z − Σ_j λ_j [u_j]_{2t}‖∞`.
    pub residual: f64,
    /// Half-degree `t` of the sequence the atoms were read from.
    pub order: u32,
    /// `g_i(u_j)` per atom; filled by [`AtomicMeasure::attach_constraints`].
    #[serde(default)]
    pub constraint_values: Vec<Vec<f64>>,
}

impl AtomicMeasure {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Records the inequality values of `prob` at every atom.
    pub fn attach_constraints(&mut self, prob: &Problem) -> Result<()> {
        self.constraint_values = self
            .atoms
            .iter()
            .map(|u| prob.inequalities.iter().map(|g| g.evaluate(u)).collect())
            .collect::<Result<_>>()?;
        Ok(())
    }
}

/// Column-echelon basis of the range of `M_t`: `[x]_t ≈ U [x]_P` on the
/// support, with `U[P, :] = I`.
struct Echelon {
    pivots: Vec<usize>,
    u: DMatrix<f64>,
}

/// Greedy pivot rows of `v` in graded-lex order: a row is kept when its
/// distance to the span of the kept rows exceeds `tol`.
fn echelon(v: &DMatrix<f64>, r: usize, tol: f64) -> Option<Echelon> {
    let mut pivots = Vec::with_capacity(r);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(r);
    for i in 0..v.nrows() {
        if pivots.len() == r {
            break;
        }
        let mut w = v.row(i).transpose();
        // Two passes of Gram-Schmidt keep the residual orthogonal.
        for _ in 0..2 {
            for q in &ortho {
                let c = q.dot(&w);
                w -= q * c;
            }
        }
        let norm = w.norm();
        if norm > tol {
            pivots.push(i);
            ortho.push(w / norm);
        }
    }
    if pivots.len() < r {
        return None;
    }
    let mut vp = DMatrix::zeros(r, r);
    for (a, &p) in pivots.iter().enumerate() {
        vp.set_row(a, &v.row(p));
    }
    // U = V · V_P⁻¹, computed as (V_P⁻ᵀ Vᵀ)ᵀ.
    let lu = vp.transpose().lu();
    let u = lu.solve(&v.transpose())?.transpose();
    Some(Echelon { pivots, u })
}

/// Recovers an `r`-atomic measure from the flat sequence `z` (half-degree
/// `t`), following the multiplication-matrix method. `eps` is the relative
/// eigenvalue tolerance under which `z` was found flat.
pub fn extract_atoms(z: &Tms, r: usize, eps: f64, seed: u64) -> Result<AtomicMeasure> {
    let t = z.half_degree();
    let n = z.nvars();
    if r == 0 {
        return Err(Error::domain("extraction needs rank at least 1"));
    }
    if t == 0 {
        return Err(Error::domain("extraction needs half-degree at least 1"));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::domain("rank tolerance must be positive"));
    }
    let basis = MonomialBasis::new(n, t);
    let m = z.moment_matrix(t)?;
    if r > basis.len() {
        return Err(Error::ExtractionFailed(format!(
            "rank {r} exceeds the moment matrix side {}",
            basis.len()
        )));
    }

    // Factor V with M_t ≈ VVᵀ from the top-r eigenpairs.
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    let smallest_kept = eig.eigenvalues[order[r - 1]];
    if smallest_kept.is_nan() || smallest_kept <= 0.0 {
        return Err(Error::ExtractionFailed(format!(
            "moment matrix has fewer than {r} positive eigenvalues"
        )));
    }
    let mut v = DMatrix::zeros(basis.len(), r);
    for (col, &i) in order[..r].iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        v.set_column(col, &(eig.eigenvectors.column(i) * s));
    }

    // Pivots; an eigenvalue cutoff ε on M is a cutoff √ε on V.
    let tol = (eps * lmax).sqrt();
    let ech = echelon(&v, r, tol).ok_or_else(|| {
        Error::ExtractionFailed(format!("fewer than {r} independent pivot monomials"))
    })?;
    let pivot_monos: Vec<&Monomial> = ech.pivots.iter().map(|&i| basis.get(i)).collect();
    if let Some(bad) = pivot_monos.iter().find(|b| b.degree() + 1 > t) {
        return Err(Error::ExtractionFailed(format!(
            "pivot monomial of degree {} reaches the truncation order {t}",
            bad.degree()
        )));
    }

    // N_i[j, :] = U[x_i β_j, :].
    let mults: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let xi = Monomial::var(n, i);
            let mut ni = DMatrix::zeros(r, r);
            for (j, b) in pivot_monos.iter().enumerate() {
                let row = basis
                    .index_of(&b.mul(&xi))
                    .expect("pivot degree below t keeps products in the basis");
                ni.set_row(j, &ech.u.row(row));
            }
            ni
        })
        .collect();

    // Joint triangularization through one random combination.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = String::new();
    for _ in 0..=RESEED_ATTEMPTS {
        let mut c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = c.iter().sum();
        c.iter_mut().for_each(|ci| *ci /= total);
        let mut comb = DMatrix::zeros(r, r);
        for (ni, ci) in mults.iter().zip(&c) {
            comb += ni * *ci;
        }
        let scale = comb.amax().max(1.0);
        let Some(schur) = Schur::try_new(comb, f64::EPSILON, 0) else {
            last_err = "real Schur decomposition did not converge".into();
            continue;
        };
        let (q, tri) = schur.unpack();
        let sub = (1..r).map(|j| tri[(j, j - 1)].abs()).fold(0.0, f64::max);
        if sub > SCHUR_REAL_TOL * scale {
            last_err = format!("complex eigenvalue block (subdiagonal {sub:.2e})");
            continue;
        }
        let atoms: Vec<Vec<f64>> = (0..r)
            .map(|j| {
                let qj = q.column(j);
                mults.iter().map(|ni| qj.dot(&(ni * qj))).collect()
            })
            .collect();
        if let Some(msg) = clustered(&atoms) {
            last_err = msg;
            continue;
        }
        return finish(z, atoms, t, eps * lmax.max(1.0));
    }
    Err(Error::ExtractionFailed(last_err))
}

/// Reports atoms that coincide within `1e−8 · scale`.
fn clustered(atoms: &[Vec<f64>]) -> Option<String> {
    let scale = atoms
        .iter()
        .flat_map(|u| u.iter())
        .fold(1.0f64, |a, v| a.max(v.abs()));
    for (i, a) in atoms.iter().enumerate() {
        for b in &atoms[i + 1..] {
            let d = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            if d <= 1e-8 * scale {
                return Some(format!("atoms {a:?} and {b:?} coincide"));
            }
        }
    }
    None
}

/// Weights by least squares against `z`, clipped and renormalized;
/// the reconstruction residual must stay within `tol`, the eigenvalue noise
/// level `ε · λ_max(M_t)` under which `z` was judged flat.
fn finish(z: &Tms, atoms: Vec<Vec<f64>>, t: u32, tol: f64) -> Result<AtomicMeasure> {
    let basis = z.basis();
    let cols: Vec<DVector<f64>> = atoms
        .iter()
        .map(|u| {
            DVector::from_iterator(basis.len(), basis.monomials().iter().map(|m| m.evaluate(u)))
        })
        .collect();
    let a = DMatrix::from_columns(&cols);
    let rhs = DVector::from_column_slice(z.values());
    let svd = a.clone().svd(true, true);
    let lam = svd
        .solve(&rhs, 1e-13 * svd.singular_values.max())
        .map_err(|e| Error::Numerical(format!("weight solve failed: {e}")))?;
    if let Some(w) = lam.iter().find(|w| **w < -WEIGHT_CLIP_TOL) {
        return Err(Error::ExtractionFailed(format!(
            "least-squares weight {w:.3e} is negative"
        )));
    }
    let mut weights: Vec<f64> = lam.iter().map(|w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ExtractionFailed("all weights vanish".into()));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    if let Some(j) = weights.iter().position(|w| *w == 0.0) {
        return Err(Error::ExtractionFailed(format!(
            "atom {:?} received zero weight",
            atoms[j]
        )));
    }
    let recon = &a * DVector::from_column_slice(&weights);
    let residual = (recon - rhs).amax();
    if residual > tol {
        return Err(Error::ExtractionFailed(format!(
            "moment reconstruction residual {residual:.3e} exceeds {tol:.3e}"
        )));
    }
    Ok(AtomicMeasure {
        atoms,
        weights,
        residual,
        order: t,
        constraint_values: Vec::new(),
    })
}

/// Per-atom verification outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomCheck {
    pub atom: Vec<f64>,
    pub objective: f64,
    pub inequality_values: Vec<f64>,
    pub equality_values: Vec<f64>,
    pub feasible: bool,
    pub objective_matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub f_star: f64,
    pub tolerance: f64,
    /// Objective comparisons use `tolerance · scale`.
    pub scale: f64,
    pub atoms: Vec<AtomCheck>,
    pub moment_residual: f64,
    pub passed: bool,
}

/// Checks feasibility and `|f(u_j) − f_star| ≤ tol · max(1, |f_star|)` at
/// every atom, and recomputes the reconstruction residual against `z`.
pub fn verify_atoms(
    meas: &AtomicMeasure,
    prob: &Problem,
    z: &Tms,
    f_star: f64,
    tol: f64,
) -> Result<VerificationReport> {
    let n = prob.nvars();
    if let Some(u) = meas.atoms.iter().find(|u| u.len() != n) {
        return Err(Error::NvarsMismatch {
            expected: n,
            found: u.len(),
        });
    }
    let scale = f_star.abs().max(1.0);
    let atoms = meas
        .atoms
        .iter()
        .map(|u| {
            let objective = prob.objective.evaluate(u)?;
            let inequality_values = prob
                .inequalities
                .iter()
                .map(|g| g.evaluate(u))
                .collect::<Result<Vec<_>>>()?;
            let equality_values = prob
                .equalities
                .iter()
                .map(|h| h.evaluate(u))
                .collect::<Result<Vec<_>>>()?;
            let feasible = inequality_values.iter().all(|g| *g >= -tol)
                && equality_values.iter().all(|h| h.abs() <= tol);
            Ok(AtomCheck {
                atom: u.clone(),
                objective,
                objective_matches: (objective - f_star).abs() <= tol * scale,
                inequality_values,
                equality_values,
                feasible,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let moment_residual = reconstruction_residual(meas, z)?;
    let passed = !atoms.is_empty() && atoms.iter().all(|a| a.feasible && a.objective_matches);
    Ok(VerificationReport {
        f_star,
        tolerance: tol,
        scale,
        atoms,
        moment_residual,
        passed,
    })
}

/// `‖z − Σ_j λ_j [u_j]‖∞` over the monomials of `z`.
pub fn reconstruction_residual(meas: &AtomicMeasure, z: &Tms) -> Result<f64> {
    let mut worst = 0.0f64;
    for (m, v) in z.basis().monomials().iter().zip(z.values()) {
        let mut acc = 0.0;
        for (u, w) in meas.atoms.iter().zip(&meas.weights) {
            if u.len() != z.nvars() {
                return Err(Error::NvarsMismatch {
                    expected: z.nvars(),
                    found: u.len(),
                });
            }
            acc += w * m.evaluate(u);
        }
        worst = worst.max((acc - v).abs());
    }
    Ok(worst)
}
