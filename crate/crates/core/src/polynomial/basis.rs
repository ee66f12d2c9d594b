use std::collections::HashMap;

use super::Monomial;

/// All monomials of degree at most `max_degree` in graded-lex order, with a
/// dense index `0..len()`. Index 0 is always the constant monomial.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    nvars: usize,
    max_degree: u32,
    monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

impl MonomialBasis {
    pub fn new(nvars: usize, max_degree: u32) -> Self {
        let mut monomials = Vec::with_capacity(binomial(nvars + max_degree as usize, nvars));
        let mut buf = vec![0u32; nvars];
        for d in 0..=max_degree {
            push_degree(&mut monomials, &mut buf, 0, d);
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MonomialBasis {
            nvars,
            max_degree,
            monomials,
            index,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn get(&self, i: usize) -> &Monomial {
        &self.monomials[i]
    }

    pub fn index_of(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Number of basis monomials of degree at most `d` (a prefix of the basis).
    pub fn prefix_len(&self, d: u32) -> usize {
        binomial(self.nvars + d.min(self.max_degree) as usize, self.nvars)
    }
}

fn push_degree(out: &mut Vec<Monomial>, buf: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(Monomial::new(buf.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        buf[pos] = e;
        push_degree(out, buf, pos + 1, remaining - e);
    }
    buf[pos] = 0;
}

/// `C(n, k)` computed without overflow for the small sizes used here.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
