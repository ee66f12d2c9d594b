//! Truncated moment sequences, the Riesz functional, moment and localizing
//! matrices, numerical rank and the flat-truncation test.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polynomial::{compensated_sum, Monomial, MonomialBasis, Polynomial};

/// Default relative eigenvalue threshold for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-6;
/// Absolute floor on the reference eigenvalue, so the zero matrix has rank 0.
pub const RANK_FLOOR: f64 = 1e-12;

/// A truncated moment sequence `(y_α)_{|α| ≤ 2k}` stored densely in
/// graded-lex order.
#[derive(Clone)]
pub struct Tms {
    half_degree: u32,
    basis: Arc<MonomialBasis>,
    values: Vec<f64>,
}

impl Tms {
    pub fn new(nvars: usize, half_degree: u32, values: Vec<f64>) -> Result<Self> {
        let basis = Arc::new(MonomialBasis::new(nvars, 2 * half_degree));
        Tms::with_basis(basis, values)
    }

    /// Wraps `values` indexed by `basis`, which must have even degree.
    pub fn with_basis(basis: Arc<MonomialBasis>, values: Vec<f64>) -> Result<Self> {
        if !basis.max_degree().is_multiple_of(2) {
            return Err(Error::domain("moment basis must have even degree"));
        }
        if values.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: values.len(),
            });
        }
        Ok(Tms {
            half_degree: basis.max_degree() / 2,
            basis,
            values,
        })
    }

    pub fn nvars(&self) -> usize {
        self.basis.nvars()
    }

    pub fn half_degree(&self) -> u32 {
        self.half_degree
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, m: &Monomial) -> Option<f64> {
        self.basis.index_of(m).map(|i| self.values[i])
    }

    /// `y_0 = 1`, within `tol`.
    pub fn is_unit(&self, tol: f64) -> bool {
        (self.values[0] - 1.0).abs() <= tol
    }

    /// The truncation `y|_{2t}`.
    pub fn truncate(&self, t: u32) -> Result<Tms> {
        if t > self.half_degree {
            return Err(Error::DegreeOverflow {
                degree: 2 * t,
                available: 2 * self.half_degree,
            });
        }
        let basis = Arc::new(MonomialBasis::new(self.nvars(), 2 * t));
        let values = self.values[..basis.len()].to_vec();
        Tms::with_basis(basis, values)
    }

    /// The moment matrix `M_t(y)`, `t ≤ k`.
    pub fn moment_matrix(&self, t: u32) -> Result<DMatrix<f64>> {
        let one = Polynomial::constant(self.nvars(), 1.0);
        Ok(assemble_localizing(self, &one, t)?.entries)
    }

    /// `(exponents, value)` pairs in graded-lex order.
    pub fn pairs(&self) -> Vec<(Vec<u32>, f64)> {
        self.basis
            .monomials()
            .iter()
            .zip(&self.values)
            .map(|(m, &v)| (m.exponents().to_vec(), v))
            .collect()
    }
}

impl std::fmt::Debug for Tms {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tms")
            .field("nvars", &self.nvars())
            .field("half_degree", &self.half_degree)
            .field("values", &self.values)
            .finish()
    }
}

impl PartialEq for Tms {
    fn eq(&self, other: &Self) -> bool {
        self.nvars() == other.nvars()
            && self.half_degree == other.half_degree
            && self.values == other.values
    }
}

#[derive(Serialize, Deserialize)]
struct TmsRepr {
    nvars: usize,
    half_degree: u32,
    moments: Vec<(Vec<u32>, f64)>,
}

impl Serialize for Tms {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TmsRepr {
            nvars: self.nvars(),
            half_degree: self.half_degree,
            moments: self.pairs(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tms {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TmsRepr::deserialize(d)?;
        let basis = Arc::new(MonomialBasis::new(repr.nvars, 2 * repr.half_degree));
        let mut values = vec![0.0; basis.len()];
        for (exps, v) in repr.moments {
            let i = basis
                .index_of(&Monomial::new(exps))
                .ok_or_else(|| serde::de::Error::custom("moment outside the degree range"))?;
            values[i] = v;
        }
        Tms::with_basis(basis, values).map_err(serde::de::Error::custom)
    }
}

/// `𝓛_y(p) = Σ_α p_α y_α`.
pub fn riesz(y: &Tms, p: &Polynomial) -> Result<f64> {
    if p.nvars() != y.nvars() {
        return Err(Error::NvarsMismatch {
            expected: y.nvars(),
            found: p.nvars(),
        });
    }
    let mut terms = Vec::with_capacity(p.num_terms());
    for (m, c) in p.terms() {
        let i = y.basis.index_of(m).ok_or(Error::DegreeOverflow {
            degree: m.degree(),
            available: 2 * y.half_degree,
        })?;
        terms.push(c * y.values[i]);
    }
    Ok(compensated_sum(terms))
}

/// Moments `Σ_j λ_j [u_j]_{2k}` of a finitely atomic measure.
pub fn atomic_tms(atoms: &[(f64, Vec<f64>)], half_degree: u32) -> Result<Tms> {
    let Some((_, first)) = atoms.first() else {
        return Err(Error::domain("atomic measure needs at least one atom"));
    };
    let n = first.len();
    if n == 0 {
        return Err(Error::domain("atoms must have at least one coordinate"));
    }
    for (j, (w, u)) in atoms.iter().enumerate() {
        if u.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: u.len(),
            });
        }
        if !w.is_finite() || *w <= 0.0 {
            return Err(Error::domain(format!(
                "atom {j} has nonpositive weight {w}"
            )));
        }
        for (_, v) in &atoms[..j] {
            let dist = u
                .iter()
                .zip(v)
                .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            if dist <= 1e-10 {
                return Err(Error::domain(format!(
                    "atom {j} duplicates an earlier atom"
                )));
            }
        }
    }
    let basis = Arc::new(MonomialBasis::new(n, 2 * half_degree));
    let values = basis
        .monomials()
        .iter()
        .map(|m| compensated_sum(atoms.iter().map(|(w, u)| w * m.evaluate(u))))
        .collect();
    Tms::with_basis(basis, values)
}

/// The linear map `y ↦ L_h^{(k)}(y)`, stored entrywise as sparse
/// combinations of moment indices. Built once per (basis, h, k) and reused.
/// (moment index, coefficient) pairs.
type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct LocalizingMap {
    side: usize,
    /// Upper triangle (row ≤ col), each entry a list of (moment index, coeff).
    entries: Vec<(usize, usize, SparseRow)>,
}

impl LocalizingMap {
    /// Builds the map for generator `h` at order `k` over the moment basis
    /// `basis` (degree ≥ 2k). Rows are indexed by monomials of degree
    /// `≤ k − ⌈deg h / 2⌉`.
    pub fn new(basis: &MonomialBasis, h: &Polynomial, k: u32) -> Result<Self> {
        if h.nvars() != basis.nvars() {
            return Err(Error::NvarsMismatch {
                expected: basis.nvars(),
                found: h.nvars(),
            });
        }
        let d_h = h.degree_half()?;
        if k < d_h {
            return Err(Error::domain(format!(
                "order {k} is below ⌈deg h/2⌉ = {d_h}: localizing basis is empty"
            )));
        }
        if 2 * k > basis.max_degree() {
            return Err(Error::DegreeOverflow {
                degree: 2 * k,
                available: basis.max_degree(),
            });
        }
        let side = basis.prefix_len(k - d_h);
        let rows = &basis.monomials()[..side];
        let mut entries = Vec::with_capacity(side * (side + 1) / 2);
        for a in 0..side {
            for b in a..side {
                let ab = rows[a].mul(&rows[b]);
                let combo = h
                    .terms()
                    .map(|(g, c)| {
                        let m = ab.mul(g);
                        let idx = basis.index_of(&m).ok_or(Error::DegreeOverflow {
                            degree: m.degree(),
                            available: basis.max_degree(),
                        })?;
                        Ok((idx, c))
                    })
                    .collect::<Result<Vec<_>>>()?;
                entries.push((a, b, combo));
            }
        }
        Ok(LocalizingMap { side, entries })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Evaluates `L_h^{(k)}(y)` for the moment vector `y`.
    pub fn apply(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.side, self.side);
        for (a, b, combo) in &self.entries {
            let v: f64 = combo.iter().map(|&(i, c)| c * y[i]).sum();
            m[(*a, *b)] = v;
            m[(*b, *a)] = v;
        }
        m
    }

    /// Coefficient matrices `A_α` with `L_h^{(k)}(y) = Σ_α y_α A_α`, listed
    /// only for moment indices that appear.
    pub fn coefficient_matrices(&self) -> Vec<(usize, DMatrix<f64>)> {
        let mut by_index: std::collections::BTreeMap<usize, DMatrix<f64>> = Default::default();
        for (a, b, combo) in &self.entries {
            for &(i, c) in combo {
                let m = by_index
                    .entry(i)
                    .or_insert_with(|| DMatrix::zeros(self.side, self.side));
                m[(*a, *b)] += c;
                if a != b {
                    m[(*b, *a)] += c;
                }
            }
        }
        by_index.into_iter().collect()
    }

    /// Coefficient vector (over the moment basis) of `h · [x]ᵀ X [x]`, the
    /// adjoint of [`LocalizingMap::apply`].
    pub fn adjoint(&self, x: &DMatrix<f64>, nvar: usize) -> Result<Vec<f64>> {
        if x.nrows() != self.side || x.ncols() != self.side {
            return Err(Error::DimensionMismatch {
                expected: self.side,
                found: x.nrows(),
            });
        }
        let mut out = vec![0.0; nvar];
        for (a, b, combo) in &self.entries {
            let w = if a == b {
                x[(*a, *b)]
            } else {
                x[(*a, *b)] + x[(*b, *a)]
            };
            for &(i, c) in combo {
                out[i] += c * w;
            }
        }
        Ok(out)
    }

    /// Distinct linear forms on `y` appearing among the entries, with
    /// duplicates (same support and coefficients) dropped.
    pub fn distinct_rows(&self, nvar: usize) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (_, _, combo) in &self.entries {
            let mut key: Vec<(usize, u64)> = combo.iter().map(|&(i, c)| (i, c.to_bits())).collect();
            key.sort_unstable();
            if combo.is_empty() || !seen.insert(key) {
                continue;
            }
            let mut row = vec![0.0; nvar];
            for &(i, c) in combo {
                row[i] += c;
            }
            out.push(row);
        }
        out
    }
}

/// A localizing matrix `L_h^{(k)}(y)`; with `h ≡ 1` the moment matrix.
#[derive(Debug, Clone)]
pub struct LocalizingMatrix {
    pub generator: Polynomial,
    pub order: u32,
    pub entries: DMatrix<f64>,
}

impl LocalizingMatrix {
    pub fn side(&self) -> usize {
        self.entries.nrows()
    }
}

pub fn assemble_localizing(y: &Tms, h: &Polynomial, k: u32) -> Result<LocalizingMatrix> {
    if k > y.half_degree {
        return Err(Error::DegreeOverflow {
            degree: 2 * k,
            available: 2 * y.half_degree,
        });
    }
    let map = LocalizingMap::new(&y.basis, h, k)?;
    Ok(LocalizingMatrix {
        generator: h.clone(),
        order: k,
        entries: map.apply(&y.values),
    })
}

/// Number of eigenvalues `λ ≥ ε · max(λ_max, 1e-12)`, after clipping
/// negative eigenvalues to zero.
pub fn numerical_rank(a: &DMatrix<f64>, eps: f64) -> Result<usize> {
    Ok(rank_from_eigenvalues(
        symmetric_eigenvalues(a)?.as_slice(),
        eps,
    ))
}

pub(crate) fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !a.is_square() {
        return Err(Error::domain("rank of a non-square matrix"));
    }
    let norm = a.norm();
    let asym = (a - a.transpose()).amax();
    if asym > 1e-10 * norm.max(1.0) {
        return Err(Error::domain(format!(
            "matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    Ok(SymmetricEigen::new(a.clone()).eigenvalues)
}

pub(crate) fn rank_from_eigenvalues(eigs: &[f64], eps: f64) -> usize {
    let clipped: Vec<f64> = eigs.iter().map(|v| v.max(0.0)).collect();
    let top = clipped.iter().copied().fold(0.0, f64::max);
    let threshold = eps * top.max(RANK_FLOOR);
    clipped.iter().filter(|&&v| v >= threshold).count()
}

/// One tested truncation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatTest {
    pub t: u32,
    /// `rank M_{t − d_g}`.
    pub rank_low: usize,
    /// `rank M_t`.
    pub rank_high: usize,
}

impl FlatTest {
    pub fn is_flat(&self) -> bool {
        self.rank_low == self.rank_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub order_k: u32,
    pub tested_orders: Vec<FlatTest>,
    pub flat_order: Option<u32>,
    pub rank_tolerance: f64,
    /// `rank M_0, …, rank M_k`.
    pub rank_profile: Vec<usize>,
}

impl FlatnessReport {
    /// All orders where the rank condition holds, ascending.
    pub fn passing_orders(&self) -> Vec<u32> {
        self.tested_orders
            .iter()
            .filter(|t| t.is_flat())
            .map(|t| t.t)
            .collect()
    }

    pub fn rank_at(&self, t: u32) -> Option<usize> {
        self.rank_profile.get(t as usize).copied()
    }
}

/// Tests `rank M_{t−d_g}(y) = rank M_t(y)` for every `t` in
/// `[max(d_f, d_g), k]`, smallest first.
pub fn check_flat_truncation(y: &Tms, d_f: u32, d_g: u32, eps: f64) -> Result<FlatnessReport> {
    let k = y.half_degree;
    let lo = d_f.max(d_g);
    if k < lo {
        return Err(Error::domain(format!(
            "moment order {k} is below the flat-truncation window start {lo}"
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::domain("rank tolerance must be positive"));
    }
    let full = y.moment_matrix(k)?;
    let mut rank_profile = Vec::with_capacity(k as usize + 1);
    for t in 0..=k {
        let s = y.basis.prefix_len(t);
        let sub = full.view((0, 0), (s, s)).into_owned();
        rank_profile.push(numerical_rank(&sub, eps)?);
    }
    let tested_orders: Vec<FlatTest> = (lo..=k)
        .map(|t| FlatTest {
            t,
            rank_low: rank_profile[(t - d_g) as usize],
            rank_high: rank_profile[t as usize],
        })
        .collect();
    let flat_order = tested_orders.iter().find(|t| t.is_flat()).map(|t| t.t);
    Ok(FlatnessReport {
        order_k: k,
        tested_orders,
        flat_order,
        rank_tolerance: eps,
        rank_profile,
    })
}

/// Euclidean norm of `(y_α)_{|α| ≤ degree}`.
pub fn tms_norm(y: &Tms, degree: u32) -> Result<f64> {
    if degree > 2 * y.half_degree {
        return Err(Error::DegreeOverflow {
            degree,
            available: 2 * y.half_degree,
        });
    }
    let s = y.basis.prefix_len(degree);
    Ok(y.values[..s].iter().map(|v| v * v).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::{parse_polynomial, VarNames};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(text: &str, n: usize) -> Polynomial {
        parse_polynomial(text, &VarNames::indexed(n)).unwrap()
    }

    fn two_point() -> Tms {
        atomic_tms(&[(0.5, vec![-1.0]), (0.5, vec![1.0])], 2).unwrap()
    }

    #[test]
    fn riesz_examples() {
        let u = vec![0.3, -1.2];
        let y = atomic_tms(&[(1.0, u.clone())], 2).unwrap();
        let q = p("x1^3*x2 - 2*x2^2 + 0.5", 2);
        assert_abs_diff_eq!(
            riesz(&y, &q).unwrap(),
            q.evaluate(&u).unwrap(),
            epsilon = 1e-14
        );
        assert_eq!(
            riesz(&y, &Polynomial::constant(2, 1.0)).unwrap(),
            y.values()[0]
        );
        assert_abs_diff_eq!(riesz(&two_point(), &p("x1^2", 1)).unwrap(), 1.0);
        assert!(matches!(
            riesz(&two_point(), &p("x1^5", 1)),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn atomic_examples() {
        let y = atomic_tms(&[(1.0, vec![2.0])], 1).unwrap();
        assert_eq!(y.values(), &[1.0, 2.0, 4.0]);
        assert_eq!(two_point().values(), &[1.0, 0.0, 1.0, 0.0, 1.0]);
        let y = atomic_tms(&[(0.3, vec![0.0, 0.0]), (0.7, vec![1.0, 1.0])], 1).unwrap();
        assert_abs_diff_eq!(y.get(&Monomial::new(vec![1, 0])).unwrap(), 0.7);
        assert!(y.is_unit(1e-12));
        assert!(atomic_tms(&[(0.0, vec![1.0])], 1).is_err());
        assert!(atomic_tms(&[(0.5, vec![1.0]), (0.5, vec![1.0 + 1e-12])], 1).is_err());
    }

    #[test]
    fn localizing_examples() {
        let y = atomic_tms(&[(1.0, vec![2.0])], 1).unwrap();
        let m = y.moment_matrix(1).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));

        let y = atomic_tms(&[(1.0, vec![1.0])], 2).unwrap();
        let l = assemble_localizing(&y, &p("1 - x1^2", 1), 2).unwrap();
        assert_eq!(l.side(), 2);
        assert!(l.entries.amax() < 1e-15);

        let m = two_point().moment_matrix(2).unwrap();
        assert_eq!(
            m,
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
        );
    }

    #[test]
    fn localizing_errors() {
        let y = two_point();
        assert!(matches!(
            assemble_localizing(&y, &p("x1^4", 1), 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            assemble_localizing(&y, &Polynomial::constant(1, 1.0), 3),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn rank_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(numerical_rank(&a, 1e-6).unwrap(), 1);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3), 1e-6).unwrap(), 0);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(numerical_rank(&b, 1e-6).unwrap(), 2);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 4.0]);
        assert!(numerical_rank(&c, 1e-6).is_err());
    }

    #[test]
    fn flat_truncation_examples() {
        let y = atomic_tms(&[(1.0, vec![1.0])], 3).unwrap();
        let r = check_flat_truncation(&y, 1, 1, 1e-6).unwrap();
        assert_eq!(r.flat_order, Some(1));
        assert_eq!(
            (r.tested_orders[0].rank_low, r.tested_orders[0].rank_high),
            (1, 1)
        );

        let r = check_flat_truncation(&two_point(), 1, 1, 1e-6).unwrap();
        assert_eq!(r.flat_order, Some(2));
        assert_eq!(
            r.tested_orders[0],
            FlatTest {
                t: 1,
                rank_low: 1,
                rank_high: 2
            }
        );
        assert_eq!(
            r.tested_orders[1],
            FlatTest {
                t: 2,
                rank_low: 2,
                rank_high: 2
            }
        );
        assert_eq!(r.rank_profile, vec![1, 2, 2]);

        assert!(check_flat_truncation(&two_point(), 3, 1, 1e-6).is_err());
    }

    #[test]
    fn generic_interior_point_is_not_flat() {
        // Moments of a measure with a continuous density have positive
        // definite moment matrices: ranks strictly increase.
        let k = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let atoms: Vec<(f64, Vec<f64>)> = (0..60)
            .map(|_| {
                (
                    1.0 / 60.0,
                    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                )
            })
            .collect();
        let y = atomic_tms(&atoms, k).unwrap();
        let r = check_flat_truncation(&y, 1, 1, 1e-6).unwrap();
        assert_eq!(r.flat_order, None);
        assert_eq!(r.rank_profile, vec![1, 3, 6, 10]);
    }

    #[test]
    fn tms_norm_examples() {
        let y = atomic_tms(&[(1.0, vec![0.0, 0.0])], 2).unwrap();
        assert_eq!(tms_norm(&y, 4).unwrap(), 1.0);
        let y = atomic_tms(&[(1.0, vec![2.0])], 1).unwrap();
        assert_abs_diff_eq!(tms_norm(&y, 2).unwrap(), 21f64.sqrt());
        assert!(tms_norm(&y, 3).is_err());
    }

    #[test]
    fn truncation_keeps_prefix() {
        let y = two_point();
        let z = y.truncate(1).unwrap();
        assert_eq!(z.values(), &[1.0, 0.0, 1.0]);
        assert!(y.truncate(3).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let y = atomic_tms(&[(0.25, vec![0.5, -1.0]), (0.75, vec![1.0, 2.0])], 2).unwrap();
        let text = serde_json::to_string(&y).unwrap();
        let back: Tms = serde_json::from_str(&text).unwrap();
        assert_eq!(back, y);
    }

    fn random_poly(rng: &mut ChaCha8Rng, n: usize, deg: u32) -> Polynomial {
        let basis = MonomialBasis::new(n, deg);
        let mut q = Polynomial::zero(n);
        for m in basis.monomials() {
            q.add_term(m.clone(), rng.gen_range(-1.0..1.0));
        }
        q
    }

    #[test]
    fn defining_identity_of_localizing_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let n = 1 + trial % 3;
            let k = 2 + (trial % 2) as u32;
            let basis = Arc::new(MonomialBasis::new(n, 2 * k));
            let values: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = Tms::with_basis(basis, values).unwrap();
            let h = random_poly(&mut rng, n, 2);
            let l = assemble_localizing(&y, &h, k).unwrap();
            let q = random_poly(&mut rng, n, k - 1);
            let rows = MonomialBasis::new(n, k - 1);
            let v = DVector::from_iterator(
                rows.len(),
                rows.monomials().iter().map(|m| q.coefficient(m)),
            );
            let quad = (v.transpose() * &l.entries * &v)[(0, 0)];
            let direct = riesz(&y, &(&h * &(&q * &q))).unwrap();
            let scale = 1.0 + l.entries.amax() * v.norm_squared();
            assert!((quad - direct).abs() <= 1e-9 * scale, "{quad} vs {direct}");
        }
    }

    #[test]
    fn ranks_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let r = rng.gen_range(1..6);
            let atoms: Vec<(f64, Vec<f64>)> = (0..r)
                .map(|_| {
                    (
                        rng.gen_range(0.1..1.0),
                        vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    )
                })
                .collect();
            let y = atomic_tms(&atoms, 3).unwrap();
            let rep = check_flat_truncation(&y, 1, 1, 1e-6).unwrap();
            assert!(rep.rank_profile.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
