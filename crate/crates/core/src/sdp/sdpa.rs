//! Export in the SDPA sparse text format.
//!
//! SDPA solves `min cᵀx s.t. Σ x_i F_i − F_0 ⪰ 0`. Each pencil block maps
//! to an SDP block with `F_0 = −constant`. Equality rows `E y = d` become a
//! diagonal (LP) block holding `E y − d ≥ 0` and `d − E y ≥ 0`.

use std::io::{self, Write};

use super::SdpProblem;

pub fn write_sdpa<W: Write>(p: &SdpProblem, out: &mut W) -> io::Result<()> {
    let has_lp = !p.eq_rows.is_empty();
    let nblocks = p.blocks.len() + usize::from(has_lp);
    writeln!(out, "\"moment relaxation exported by lasserre")?;
    writeln!(out, "{}", p.nvar)?;
    writeln!(out, "{nblocks}")?;
    let mut sizes: Vec<String> = p.blocks.iter().map(|b| b.dim().to_string()).collect();
    if has_lp {
        sizes.push(format!("-{}", 2 * p.eq_rows.len()));
    }
    writeln!(out, "{}", sizes.join(" "))?;
    let obj: Vec<String> = p.objective.iter().map(|c| format!("{c:?}")).collect();
    writeln!(out, "{}", obj.join(" "))?;

    for (b, block) in p.blocks.iter().enumerate() {
        let n = block.dim();
        for i in 0..n {
            for j in i..n {
                let v = block.constant[(i, j)];
                if v != 0.0 {
                    writeln!(out, "0 {} {} {} {:?}", b + 1, i + 1, j + 1, -v)?;
                }
            }
        }
        let mut terms: Vec<&(usize, nalgebra::DMatrix<f64>)> = block.terms.iter().collect();
        terms.sort_by_key(|(k, _)| *k);
        for (var, a) in terms {
            for i in 0..n {
                for j in i..n {
                    let v = a[(i, j)];
                    if v != 0.0 {
                        writeln!(out, "{} {} {} {} {:?}", var + 1, b + 1, i + 1, j + 1, v)?;
                    }
                }
            }
        }
    }
    if has_lp {
        let blk = p.blocks.len() + 1;
        for (r, (row, d)) in p.eq_rows.iter().zip(&p.eq_rhs).enumerate() {
            let (lo, hi) = (2 * r + 1, 2 * r + 2);
            if *d != 0.0 {
                writeln!(out, "0 {blk} {lo} {lo} {d:?}")?;
                writeln!(out, "0 {blk} {hi} {hi} {:?}", -d)?;
            }
            for (var, v) in row.iter().enumerate() {
                if *v != 0.0 {
                    writeln!(out, "{} {blk} {lo} {lo} {v:?}", var + 1)?;
                    writeln!(out, "{} {blk} {hi} {hi} {:?}", var + 1, -v)?;
                }
            }
        }
    }
    Ok(())
}
