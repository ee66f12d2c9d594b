//! Builders for the order-k moment SDP of each hierarchy flavor.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moment::LocalizingMap;
use crate::polynomial::{d_g, MonomialBasis, Polynomial, VarNames};
use crate::sdp::{Pencil, SdpProblem};

/// Largest inequality count accepted by the preordering builder (2^m blocks).
pub const MAX_SCHMUDGEN_CONSTRAINTS: usize = 12;

/// `min f(x) s.t. g_i(x) ≥ 0, h_j(x) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub names: VarNames,
    pub objective: Polynomial,
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
}

impl Problem {
    pub fn new(
        names: VarNames,
        objective: Polynomial,
        inequalities: Vec<Polynomial>,
        equalities: Vec<Polynomial>,
    ) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::domain("problem needs at least one variable"));
        }
        for p in std::iter::once(&objective)
            .chain(&inequalities)
            .chain(&equalities)
        {
            if p.nvars() != n {
                return Err(Error::NvarsMismatch {
                    expected: n,
                    found: p.nvars(),
                });
            }
        }
        if objective.is_zero() {
            return Err(Error::domain("objective is the zero polynomial"));
        }
        Ok(Problem {
            names,
            objective,
            inequalities,
            equalities,
        })
    }

    pub fn unconstrained(names: VarNames, objective: Polynomial) -> Result<Self> {
        Problem::new(names, objective, Vec::new(), Vec::new())
    }

    pub fn nvars(&self) -> usize {
        self.names.len()
    }

    /// Appends the ball constraint `R − ‖x‖² ≥ 0`.
    pub fn with_ball(&self, radius_sq: f64) -> Result<Problem> {
        if radius_sq.is_nan() || radius_sq <= 0.0 {
            return Err(Error::domain("ball radius must be positive"));
        }
        let n = self.nvars();
        let mut g = Polynomial::constant(n, radius_sq);
        for i in 0..n {
            let xi = Polynomial::var(n, i);
            g = &g - &(&xi * &xi);
        }
        let mut out = self.clone();
        out.inequalities.push(g);
        Ok(out)
    }

    pub fn d_f(&self) -> u32 {
        self.objective.degree_half().unwrap_or(1)
    }

    pub fn d_g(&self) -> u32 {
        d_g(&self.inequalities)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Putinar,
    Schmudgen,
    SosUnconstrained,
    Gradient,
    JacobianSingle,
}

impl Flavor {
    pub const ALL: [Flavor; 5] = [
        Flavor::Putinar,
        Flavor::Schmudgen,
        Flavor::SosUnconstrained,
        Flavor::Gradient,
        Flavor::JacobianSingle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Flavor::Putinar => "putinar",
            Flavor::Schmudgen => "schmudgen",
            Flavor::SosUnconstrained => "sos",
            Flavor::Gradient => "gradient",
            Flavor::JacobianSingle => "jacobian",
        }
    }

    /// Whether the flavor can be built for `prob` at all.
    pub fn applies_to(&self, prob: &Problem) -> bool {
        let unconstrained = prob.inequalities.is_empty() && prob.equalities.is_empty();
        match self {
            Flavor::Putinar => true,
            Flavor::Schmudgen => prob.inequalities.len() <= MAX_SCHMUDGEN_CONSTRAINTS,
            Flavor::SosUnconstrained => {
                unconstrained && prob.objective.degree().is_some_and(|d| d % 2 == 0)
            }
            Flavor::Gradient => unconstrained,
            Flavor::JacobianSingle => prob.inequalities.len() == 1 && prob.equalities.is_empty(),
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "putinar" => Ok(Flavor::Putinar),
            "schmudgen" => Ok(Flavor::Schmudgen),
            "sos" | "sos_unconstrained" => Ok(Flavor::SosUnconstrained),
            "gradient" => Ok(Flavor::Gradient),
            "jacobian" | "jacobian_single" => Ok(Flavor::JacobianSingle),
            other => Err(Error::domain(format!("unknown flavor `{other}`"))),
        }
    }
}

/// One `L_h^{(k)}(y) ⪰ 0` constraint.
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub label: String,
    pub generator: Polynomial,
    pub map: LocalizingMap,
}

/// A linear equality `L_φ^{(k)}(y) = 0` imposed entrywise.
#[derive(Debug, Clone)]
pub struct EqualityBlock {
    pub label: String,
    pub generator: Polynomial,
    pub map: LocalizingMap,
}

/// Block-LMI description of one relaxation order.
#[derive(Debug, Clone)]
pub struct MomentSdp {
    pub flavor: Flavor,
    pub order: u32,
    pub basis: Arc<MonomialBasis>,
    /// `c` with `cᵀy = ⟨f, y⟩`.
    pub objective_coeffs: Vec<f64>,
    pub psd_blocks: Vec<PsdBlock>,
    pub equality_blocks: Vec<EqualityBlock>,
    /// Preordering products left out because their basis would be empty.
    pub omitted_blocks: Vec<String>,
    /// `⌈deg f/2⌉`.
    pub d_f: u32,
    /// Degree offset used by the flat-truncation test for this flavor.
    pub d_g: u32,
}

impl MomentSdp {
    pub fn nvars(&self) -> usize {
        self.basis.nvars()
    }

    pub fn num_moments(&self) -> usize {
        self.basis.len()
    }

    /// All linear equality rows `(row, rhs)`, starting with `y_0 = 1`.
    pub fn linear_equalities(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.num_moments();
        let mut unit = vec![0.0; n];
        unit[0] = 1.0;
        let mut rows = vec![(unit, 1.0)];
        for eq in &self.equality_blocks {
            rows.extend(eq.map.distinct_rows(n).into_iter().map(|r| (r, 0.0)));
        }
        rows
    }

    pub fn to_sdp_problem(&self) -> SdpProblem {
        let mut p = SdpProblem::new(self.num_moments(), self.objective_coeffs.clone());
        for b in &self.psd_blocks {
            let mut pencil = Pencil::new(b.map.side());
            pencil.terms = b.map.coefficient_matrices();
            p.blocks.push(pencil);
        }
        for (row, rhs) in self.linear_equalities() {
            p.add_equality(row, rhs);
        }
        p
    }
}

fn coefficient_vector(basis: &MonomialBasis, f: &Polynomial) -> Result<Vec<f64>> {
    let mut c = vec![0.0; basis.len()];
    for (m, v) in f.terms() {
        let i = basis.index_of(m).ok_or(Error::DegreeOverflow {
            degree: m.degree(),
            available: basis.max_degree(),
        })?;
        c[i] = v;
    }
    Ok(c)
}

fn max_half_degree(polys: &[Polynomial]) -> u32 {
    polys
        .iter()
        .filter_map(|p| p.degree_half().ok())
        .max()
        .unwrap_or(0)
}

struct Builder {
    flavor: Flavor,
    k: u32,
    basis: Arc<MonomialBasis>,
    psd: Vec<PsdBlock>,
    eqs: Vec<EqualityBlock>,
    omitted: Vec<String>,
}

impl Builder {
    fn new(flavor: Flavor, nvars: usize, k: u32) -> Self {
        Builder {
            flavor,
            k,
            basis: Arc::new(MonomialBasis::new(nvars, 2 * k)),
            psd: Vec::new(),
            eqs: Vec::new(),
            omitted: Vec::new(),
        }
    }

    fn psd(&mut self, label: String, g: &Polynomial) -> Result<()> {
        let map = LocalizingMap::new(&self.basis, g, self.k)?;
        self.psd.push(PsdBlock {
            label,
            generator: g.clone(),
            map,
        });
        Ok(())
    }

    fn eq(&mut self, label: String, phi: &Polynomial) -> Result<()> {
        if phi.is_zero() {
            return Ok(());
        }
        let map = LocalizingMap::new(&self.basis, phi, self.k)?;
        self.eqs.push(EqualityBlock {
            label,
            generator: phi.clone(),
            map,
        });
        Ok(())
    }

    fn finish(self, f: &Polynomial, d_g: u32) -> Result<MomentSdp> {
        Ok(MomentSdp {
            flavor: self.flavor,
            order: self.k,
            objective_coeffs: coefficient_vector(&self.basis, f)?,
            basis: self.basis,
            psd_blocks: self.psd,
            equality_blocks: self.eqs,
            omitted_blocks: self.omitted,
            d_f: f.degree_half()?,
            d_g,
        })
    }
}

fn check_order(k: u32, k_min: u32, what: &str) -> Result<()> {
    if k < k_min {
        return Err(Error::domain(format!(
            "order {k} is below the minimum order {k_min} of the {what} relaxation"
        )));
    }
    Ok(())
}

/// Quadratic-module relaxation: `M_k(y) ⪰ 0`, `L_{g_i}^{(k)}(y) ⪰ 0`,
/// `L_{h_j}^{(k)}(y) = 0`, `y_0 = 1`.
pub fn build_putinar(prob: &Problem, k: u32) -> Result<MomentSdp> {
    check_order(k, minimum_order(prob, Flavor::Putinar)?, "putinar")?;
    let n = prob.nvars();
    let mut b = Builder::new(Flavor::Putinar, n, k);
    b.psd("1".into(), &Polynomial::constant(n, 1.0))?;
    for (i, g) in prob.inequalities.iter().enumerate() {
        b.psd(format!("g{}", i + 1), g)?;
    }
    for (j, h) in prob.equalities.iter().enumerate() {
        b.eq(format!("h{}", j + 1), h)?;
    }
    b.finish(&prob.objective, d_g(&prob.inequalities))
}

/// Preordering relaxation: one block per product `g_ν`, `ν ∈ {0,1}^m`.
pub fn build_schmudgen(prob: &Problem, k: u32) -> Result<MomentSdp> {
    let m = prob.inequalities.len();
    if m > MAX_SCHMUDGEN_CONSTRAINTS {
        return Err(Error::Unsupported(format!(
            "preordering relaxation with {m} inequalities needs 2^{m} = {} blocks (limit {})",
            1u64 << m,
            1u64 << MAX_SCHMUDGEN_CONSTRAINTS
        )));
    }
    check_order(k, minimum_order(prob, Flavor::Schmudgen)?, "schmudgen")?;
    let n = prob.nvars();
    let mut b = Builder::new(Flavor::Schmudgen, n, k);
    for (label, g) in preordering_products(&prob.inequalities) {
        let fits = g.degree_half().map(|d| d <= k).unwrap_or(false);
        if fits {
            b.psd(label, &g)?;
        } else {
            b.omitted.push(label);
        }
    }
    for (j, h) in prob.equalities.iter().enumerate() {
        b.eq(format!("h{}", j + 1), h)?;
    }
    b.finish(&prob.objective, d_g(&prob.inequalities))
}

/// `(label, g_ν)` for every `ν ∈ {0,1}^m` in binary counting order
/// (`ν = 0` gives the constant 1).
pub fn preordering_products(gs: &[Polynomial]) -> Vec<(String, Polynomial)> {
    let Some(n) = gs.first().map(Polynomial::nvars) else {
        return Vec::new();
    };
    (0u32..(1 << gs.len()))
        .map(|mask| {
            let mut g = Polynomial::constant(n, 1.0);
            let mut label = Vec::new();
            for (i, gi) in gs.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    g = &g * gi;
                    label.push(format!("g{}", i + 1));
                }
            }
            let label = if label.is_empty() {
                "1".to_string()
            } else {
                label.join("*")
            };
            (label, g)
        })
        .collect()
}

/// `min ⟨f,y⟩ s.t. M_k(y) ⪰ 0, y_0 = 1` for an even-degree `f`.
pub fn build_sos_unconstrained(f: &Polynomial, k: u32) -> Result<MomentSdp> {
    let deg = f
        .degree()
        .ok_or_else(|| Error::domain("objective is the zero polynomial"))?;
    if deg % 2 != 0 {
        return Err(Error::domain(format!(
            "unconstrained SOS relaxation needs an even-degree objective, got degree {deg}"
        )));
    }
    check_order(k, deg / 2, "sos")?;
    let n = f.nvars();
    let mut b = Builder::new(Flavor::SosUnconstrained, n, k);
    b.psd("1".into(), &Polynomial::constant(n, 1.0))?;
    b.finish(f, 1)
}

/// The gradient polynomials `∂f/∂x_j`.
pub fn gradient(f: &Polynomial) -> Vec<Polynomial> {
    (0..f.nvars())
        .map(|j| f.partial_derivative(j).expect("index in range"))
        .collect()
}

/// `min ⟨f,y⟩ s.t. L_{∂f/∂x_j}^{(k)}(y) = 0, M_k(y) ⪰ 0, y_0 = 1`.
pub fn build_gradient(f: &Polynomial, k: u32) -> Result<MomentSdp> {
    let grads = gradient(f);
    let k_min = f.degree_half()?.max(max_half_degree(&grads));
    check_order(k, k_min, "gradient")?;
    let n = f.nvars();
    let mut b = Builder::new(Flavor::Gradient, n, k);
    b.psd("1".into(), &Polynomial::constant(n, 1.0))?;
    for (j, gj) in grads.iter().enumerate() {
        b.eq(format!("df/dx{}", j + 1), gj)?;
    }
    b.finish(f, d_g(&[]))
}

/// Redundant equalities for one inequality `g ≥ 0`: the `n` products
/// `g·∂f/∂x_i`, then for `ℓ = 3, …, 2n−1` the sums
/// `Σ_{i<j, i+j=ℓ} (∂f/∂x_i ∂g/∂x_j − ∂f/∂x_j ∂g/∂x_i)` (1-based indices).
pub fn jacobian_equalities(f: &Polynomial, g: &Polynomial) -> Result<Vec<Polynomial>> {
    if f.nvars() != g.nvars() {
        return Err(Error::NvarsMismatch {
            expected: f.nvars(),
            found: g.nvars(),
        });
    }
    let n = f.nvars();
    let df = gradient(f);
    let dg = gradient(g);
    let mut phis: Vec<Polynomial> = df.iter().map(|fi| g * fi).collect();
    if n >= 2 {
        for l in 3..=(2 * n - 1) {
            let mut acc = Polynomial::zero(n);
            for i in 1..=n {
                let j = l - i;
                if j <= i || j > n {
                    continue;
                }
                let a = &df[i - 1] * &dg[j - 1];
                let c = &df[j - 1] * &dg[i - 1];
                acc = &acc + &(&a - &c);
            }
            phis.push(acc);
        }
    }
    Ok(phis)
}

/// Preordering blocks over `{1, g}` plus `L_φ^{(k)}(y) = 0` for the
/// Jacobian equalities of a single inequality.
pub fn build_jacobian_single(f: &Polynomial, g: &Polynomial, k: u32) -> Result<MomentSdp> {
    let phis = jacobian_equalities(f, g)?;
    let k_min = f
        .degree_half()?
        .max(d_g(std::slice::from_ref(g)))
        .max(max_half_degree(&phis));
    check_order(k, k_min, "jacobian")?;
    let n = f.nvars();
    let mut b = Builder::new(Flavor::JacobianSingle, n, k);
    b.psd("1".into(), &Polynomial::constant(n, 1.0))?;
    b.psd("g1".into(), g)?;
    for (j, phi) in phis.iter().enumerate() {
        b.eq(format!("phi{}", j + 1), phi)?;
    }
    b.finish(f, d_g(std::slice::from_ref(g)))
}

/// Smallest order at which every block and equality of the flavor has a
/// nonempty basis; never below `max(d_f, d_g)`.
pub fn minimum_order(prob: &Problem, flavor: Flavor) -> Result<u32> {
    let base = prob.d_f().max(prob.d_g());
    let eq = max_half_degree(&prob.equalities);
    match flavor {
        Flavor::Putinar | Flavor::Schmudgen => Ok(base.max(eq)),
        Flavor::SosUnconstrained => Ok(base),
        Flavor::Gradient => Ok(base.max(max_half_degree(&gradient(&prob.objective)))),
        Flavor::JacobianSingle => {
            let [g] = prob.inequalities.as_slice() else {
                return Ok(base);
            };
            Ok(base.max(max_half_degree(&jacobian_equalities(&prob.objective, g)?)))
        }
    }
}

/// Builds the order-`k` relaxation of `prob` for `flavor`.
pub fn build(prob: &Problem, flavor: Flavor, k: u32) -> Result<MomentSdp> {
    if !flavor.applies_to(prob) {
        return Err(Error::Unsupported(format!(
            "the {flavor} relaxation does not apply to this problem ({} inequalities, {} equalities)",
            prob.inequalities.len(),
            prob.equalities.len()
        )));
    }
    match flavor {
        Flavor::Putinar => build_putinar(prob, k),
        Flavor::Schmudgen => build_schmudgen(prob, k),
        Flavor::SosUnconstrained => build_sos_unconstrained(&prob.objective, k),
        Flavor::Gradient => build_gradient(&prob.objective, k),
        Flavor::JacobianSingle => build_jacobian_single(&prob.objective, &prob.inequalities[0], k),
    }
}
