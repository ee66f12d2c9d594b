use nalgebra::{DMatrix, DVector};

use super::{SdpSolution, SdpStatus};
use crate::error::{Error, Result};
use crate::polynomial::{Monomial, Polynomial};
use crate::relaxation::MomentSdp;

/// Gram matrix of the SOS multiplier attached to one PSD block:
/// `σ = [x]ᵀ G [x]` over the first `gram.nrows()` monomials.
#[derive(Debug, Clone)]
pub struct GramBlock {
    pub label: String,
    pub generator: Polynomial,
    pub gram: DMatrix<f64>,
    pub basis: Vec<Monomial>,
}

impl GramBlock {
    /// `[x]ᵀ G [x]`.
    pub fn sos_polynomial(&self) -> Polynomial {
        let n = self.generator.nvars();
        let mut p = Polynomial::zero(n);
        for (a, ma) in self.basis.iter().enumerate() {
            for (b, mb) in self.basis.iter().enumerate() {
                p.add_term(ma.mul(mb), self.gram[(a, b)]);
            }
        }
        p
    }
}

/// `f − γ = Σ_i g_i σ_i + Σ_j φ_j q_j`, with the equality multipliers `q_j`
/// left implicit.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub gamma: f64,
    pub blocks: Vec<GramBlock>,
    /// `‖coeffs(f − γ − Σ g_i σ_i)‖∞` before the equality part is removed.
    pub raw_residual: f64,
    /// The same after least-squares projection off the span of `x^α φ_j`.
    pub residual: f64,
    /// `max(1, ‖coeffs(f)‖∞)`; residual bounds are relative to it.
    pub scale: f64,
}

impl DualCertificate {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.scale
    }
}

/// Reads the SOS certificate off the block multipliers of an optimal solve
/// of `sdp.to_sdp_problem()`.
pub fn extract_dual_certificate(sol: &SdpSolution, sdp: &MomentSdp) -> Result<DualCertificate> {
    if sol.status != SdpStatus::Optimal {
        return Err(Error::NotOptimal(format!(
            "dual certificate needs an optimal solve, status is {}",
            sol.status
        )));
    }
    if sol.dual_matrices.len() != sdp.psd_blocks.len() {
        return Err(Error::DimensionMismatch {
            expected: sdp.psd_blocks.len(),
            found: sol.dual_matrices.len(),
        });
    }
    let nmom = sdp.num_moments();
    let gamma = sol.dual_value;
    let mut resid: DVector<f64> = DVector::from_column_slice(&sdp.objective_coeffs);
    resid[0] -= gamma;
    let mut blocks = Vec::with_capacity(sdp.psd_blocks.len());
    for (b, x) in sdp.psd_blocks.iter().zip(&sol.dual_matrices) {
        let coeffs = b.map.adjoint(x, nmom)?;
        resid -= DVector::from_vec(coeffs);
        blocks.push(GramBlock {
            label: b.label.clone(),
            generator: b.generator.clone(),
            gram: x.clone(),
            basis: sdp.basis.monomials()[..b.map.side()].to_vec(),
        });
    }
    let raw_residual = resid.amax();
    let rows: Vec<Vec<f64>> = sdp
        .equality_blocks
        .iter()
        .flat_map(|e| e.map.distinct_rows(nmom))
        .collect();
    let residual = if rows.is_empty() {
        raw_residual
    } else {
        let a = DMatrix::from_fn(nmom, rows.len(), |i, j| rows[j][i]);
        let svd = a.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let coef = svd
            .solve(&resid, tol)
            .map_err(|e| Error::Numerical(format!("equality projection failed: {e}")))?;
        (&resid - &a * coef).amax()
    };
    let scale = sdp
        .objective_coeffs
        .iter()
        .fold(1.0f64, |acc, c| acc.max(c.abs()));
    Ok(DualCertificate {
        gamma,
        blocks,
        raw_residual,
        residual,
        scale,
    })
}
