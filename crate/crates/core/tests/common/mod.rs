#![allow(dead_code)]

use lasserre::extraction::AtomicMeasure;
use lasserre::moment::{atomic_tms, Tms};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Smallest Euclidean distance between planted atoms.
pub const MIN_SEPARATION: f64 = 0.25;
/// Smallest weight before normalization; with `r ≤ 4` the normalized
/// weights stay above `MIN_RAW_WEIGHT / 4`.
pub const MIN_RAW_WEIGHT: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct Planted {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Planted {
    pub fn pairs(&self) -> Vec<(f64, Vec<f64>)> {
        self.weights
            .iter()
            .copied()
            .zip(self.atoms.iter().cloned())
            .collect()
    }

    pub fn tms(&self, half_degree: u32) -> Tms {
        atomic_tms(&self.pairs(), half_degree).unwrap()
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn weights(rng: &mut ChaCha8Rng, r: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..r).map(|_| rng.gen_range(MIN_RAW_WEIGHT..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// `r` atoms drawn from `sample`, pairwise at least [`MIN_SEPARATION`] apart.
pub fn planted_with(
    rng: &mut ChaCha8Rng,
    r: usize,
    mut sample: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
) -> Planted {
    let mut atoms: Vec<Vec<f64>> = Vec::with_capacity(r);
    while atoms.len() < r {
        let u = sample(rng);
        if atoms.iter().all(|v| distance(&u, v) >= MIN_SEPARATION) {
            atoms.push(u);
        }
    }
    Planted {
        atoms,
        weights: weights(rng, r),
    }
}

/// Atoms in the box `[−1, 1]ⁿ`.
pub fn planted_in_box(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Planted {
    planted_with(rng, r, |rng| {
        (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    })
}

/// A point uniform in the ball `‖x‖² ≤ radius_sq`.
pub fn ball_point(rng: &mut ChaCha8Rng, n: usize, radius_sq: f64) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm_sq: f64 = u.iter().map(|v| v * v).sum();
        if norm_sq <= 1.0 {
            return u.into_iter().map(|v| v * radius_sq.sqrt()).collect();
        }
    }
}

/// Largest coordinate or weight error after matching each planted atom to
/// its nearest recovered atom; infinite when the counts differ or two
/// planted atoms claim the same recovered one.
pub fn recovery_error(found: &AtomicMeasure, planted: &Planted) -> f64 {
    if found.len() != planted.atoms.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; found.len()];
    let mut err = 0.0f64;
    for (u, w) in planted.atoms.iter().zip(&planted.weights) {
        let (j, d) = found
            .atoms
            .iter()
            .enumerate()
            .map(|(j, v)| (j, distance(u, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if used[j] {
            return f64::INFINITY;
        }
        used[j] = true;
        let coord = u
            .iter()
            .zip(&found.atoms[j])
            .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        err = err.max(coord).max((w - found.weights[j]).abs());
        let _ = d;
    }
    err
}
