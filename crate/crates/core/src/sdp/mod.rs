//! Dense primal-dual interior-point solver for small SDPs in LMI form:
//!
//! ```text
//! minimize    cᵀy
//! subject to  F_b(y) = F_b0 + Σ_α y_α F_bα ⪰ 0   for every block b
//!             E y = d
//! ```
//!
//! The Lagrange multipliers of the blocks are the Gram matrices of the
//! sum-of-squares side of a moment relaxation.

mod certificate;
mod sdpa;
mod solver;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use certificate::{extract_dual_certificate, DualCertificate, GramBlock};
pub use sdpa::write_sdpa;
pub use solver::solve;

use crate::error::{Error, Result};

/// An affine symmetric matrix function `F_0 + Σ_α y_α F_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub constant: DMatrix<f64>,
    /// `(variable index, coefficient matrix)`, each matrix symmetric.
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl Pencil {
    pub fn new(dim: usize) -> Self {
        Pencil {
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, a) in &self.terms {
            m += a * y[*i];
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub nvar: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<Pencil>,
    /// Rows of `E`, each of length `nvar`.
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
}

impl SdpProblem {
    pub fn new(nvar: usize, objective: Vec<f64>) -> Self {
        SdpProblem {
            nvar,
            objective,
            blocks: Vec::new(),
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
        }
    }

    pub fn add_equality(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn validate(&self) -> Result<()> {
        if self.nvar == 0 {
            return Err(Error::domain("SDP has no variables"));
        }
        if self.objective.len() != self.nvar {
            return Err(Error::DimensionMismatch {
                expected: self.nvar,
                found: self.objective.len(),
            });
        }
        if self.eq_rows.len() != self.eq_rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.eq_rows.len(),
                found: self.eq_rhs.len(),
            });
        }
        for row in &self.eq_rows {
            if row.len() != self.nvar {
                return Err(Error::DimensionMismatch {
                    expected: self.nvar,
                    found: row.len(),
                });
            }
        }
        for (b, block) in self.blocks.iter().enumerate() {
            let dim = block.dim();
            if !block.constant.is_square() {
                return Err(Error::domain(format!("block {b}: constant is not square")));
            }
            check_symmetric(&block.constant, b)?;
            for (i, a) in &block.terms {
                if *i >= self.nvar {
                    return Err(Error::domain(format!(
                        "block {b}: variable {i} out of range"
                    )));
                }
                if a.nrows() != dim || a.ncols() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: a.nrows(),
                    });
                }
                check_symmetric(a, b)?;
            }
        }
        Ok(())
    }
}

fn check_symmetric(a: &DMatrix<f64>, block: usize) -> Result<()> {
    let asym = (a - a.transpose()).amax();
    if asym > 1e-12 * a.amax().max(1.0) {
        return Err(Error::domain(format!(
            "block {block}: coefficient matrix is not symmetric"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    /// The LMI/equality system has no solution.
    PrimalInfeasible,
    /// The objective is unbounded below (the multiplier side is infeasible).
    DualInfeasibleOrUnbounded,
    MaxIterations,
    NumericalFailure,
}

impl SdpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::PrimalInfeasible => "primal_infeasible",
            SdpStatus::DualInfeasibleOrUnbounded => "dual_infeasible_or_unbounded",
            SdpStatus::MaxIterations => "max_iterations",
            SdpStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub seed: u64,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 200,
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            seed: 0,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖E y − d‖_∞`.
    pub primal_eq: f64,
    /// Smallest eigenvalue over all blocks `F_b(y)`.
    pub block_min_eig: f64,
    /// Relative residual of the multiplier equations.
    pub dual_feas: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub y: Vec<f64>,
    /// `cᵀy`.
    pub primal_value: f64,
    /// Lower bound certified by the block multipliers.
    pub dual_value: f64,
    /// One PSD multiplier per block, in block order.
    pub dual_matrices: Vec<DMatrix<f64>>,
    /// `primal_value − dual_value`.
    pub gap: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub diagnostic: Option<String>,
}

impl SdpSolution {
    /// `|gap| / (1 + |primal| + |dual|)`.
    pub fn relative_gap(&self) -> f64 {
        self.gap.abs() / (1.0 + self.primal_value.abs() + self.dual_value.abs())
    }

    /// Accuracy of the moment side alone: relative gap, equality residual
    /// and block eigenvalue deficit, whichever is worst.
    pub fn moment_accuracy(&self) -> f64 {
        self.relative_gap()
            .max(self.residuals.primal_eq)
            .max(-self.residuals.block_min_eig)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(n: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, v)
    }

    #[test]
    fn scalar_lmi_with_off_diagonal_constant() {
        // min y  s.t. [[y,1],[1,y]] ⪰ 0  ⇒ y* = 1
        let mut p = SdpProblem::new(1, vec![1.0]);
        p.blocks.push(Pencil {
            constant: mat(2, &[0.0, 1.0, 1.0, 0.0]),
            terms: vec![(0, DMatrix::identity(2, 2))],
        });
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.y[0] - 1.0).abs() < 1e-7);
        assert!((sol.primal_value - 1.0).abs() < 1e-7);
        assert!(sol.gap.abs() < 1e-7);
    }

    #[test]
    fn first_relaxation_of_x_squared() {
        // y = (y0, y1, y2); min y2 s.t. [[y0,y1],[y1,y2]] ⪰ 0, y0 = 1
        let mut p = SdpProblem::new(3, vec![0.0, 0.0, 1.0]);
        p.blocks.push(Pencil {
            constant: DMatrix::zeros(2, 2),
            terms: vec![
                (0, mat(2, &[1.0, 0.0, 0.0, 0.0])),
                (1, mat(2, &[0.0, 1.0, 1.0, 0.0])),
                (2, mat(2, &[0.0, 0.0, 0.0, 1.0])),
            ],
        });
        p.add_equality(vec![1.0, 0.0, 0.0], 1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.primal_value.abs() < 1e-7);
        assert!(sol.y[1].abs() < 1e-4 && sol.y[2].abs() < 1e-7);
        assert!(sol.residuals.primal_eq < 1e-9);
    }

    #[test]
    fn unbounded_objective_is_detected() {
        // min −y s.t. [y] ⪰ 0
        let mut p = SdpProblem::new(1, vec![-1.0]);
        p.blocks.push(Pencil {
            constant: DMatrix::zeros(1, 1),
            terms: vec![(0, DMatrix::identity(1, 1))],
        });
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::DualInfeasibleOrUnbounded);
    }

    #[test]
    fn infeasible_lmi_is_detected() {
        // [[−1 − y², …]] modelled linearly: y ≥ 1 and −y ≥ 0 cannot both hold.
        let mut p = SdpProblem::new(1, vec![0.0]);
        p.blocks.push(Pencil {
            constant: mat(1, &[-1.0]),
            terms: vec![(0, DMatrix::identity(1, 1))],
        });
        p.blocks.push(Pencil {
            constant: DMatrix::zeros(1, 1),
            terms: vec![(0, -DMatrix::identity(1, 1))],
        });
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::PrimalInfeasible);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = SdpProblem::new(2, vec![1.0, 0.0]);
        p.blocks.push(Pencil {
            constant: DMatrix::zeros(1, 1),
            terms: vec![(0, DMatrix::identity(1, 1))],
        });
        p.add_equality(vec![1.0, 1.0], 1.0);
        p.add_equality(vec![2.0, 2.0], 3.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::PrimalInfeasible);
    }

    #[test]
    fn dependent_equalities_are_tolerated() {
        let mut p = SdpProblem::new(2, vec![1.0, 1.0]);
        p.blocks.push(Pencil {
            constant: DMatrix::zeros(2, 2),
            terms: vec![
                (0, mat(2, &[1.0, 0.0, 0.0, 0.0])),
                (1, mat(2, &[0.0, 0.0, 0.0, 1.0])),
            ],
        });
        p.add_equality(vec![1.0, -1.0], 0.0);
        p.add_equality(vec![2.0, -2.0], 0.0);
        p.add_equality(vec![1.0, 1.0], 2.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.y[0] - 1.0).abs() < 1e-8 && (sol.y[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_malformed_problems() {
        let p = SdpProblem::new(0, vec![]);
        assert!(solve(&p, &SolverOptions::default()).is_err());
        let mut p = SdpProblem::new(1, vec![1.0]);
        p.blocks.push(Pencil {
            constant: mat(2, &[0.0, 1.0, 0.0, 0.0]),
            terms: vec![],
        });
        assert!(solve(&p, &SolverOptions::default()).is_err());
    }

    #[test]
    fn solves_are_deterministic() {
        let mut p = SdpProblem::new(3, vec![0.0, -1.0, 1.0]);
        p.blocks.push(Pencil {
            constant: DMatrix::zeros(2, 2),
            terms: vec![
                (0, mat(2, &[1.0, 0.0, 0.0, 0.0])),
                (1, mat(2, &[0.0, 1.0, 1.0, 0.0])),
                (2, mat(2, &[0.0, 0.0, 0.0, 1.0])),
            ],
        });
        p.add_equality(vec![1.0, 0.0, 0.0], 1.0);
        let opts = SolverOptions {
            seed: 42,
            ..Default::default()
        };
        let a = solve(&p, &opts).unwrap();
        let b = solve(&p, &opts).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.y, b.y);
        assert!((a.primal_value + 0.25).abs() < 1e-7);
    }
}
