#![allow(dead_code)]

use l2s::data::{generate_synthetic, Dataset, SparseRow, SyntheticSpec};
use l2s::model::LogisticModel;
use l2s::sampling::RngStream;

pub fn synthetic(n: usize, d: usize, spread: f64, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        n,
        d,
        spread,
        noise: 0.1,
        seed,
    })
    .unwrap()
}

pub fn logistic(n: usize, d: usize, lambda: f64, seed: u64) -> LogisticModel {
    LogisticModel::l2(synthetic(n, d, 1.0, seed), lambda).unwrap()
}

/// Dense rows with uniform entries in [-1, 1] and random labels.
pub fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, 99);
    let rows = (0..n)
        .map(|_| {
            let values: Vec<f64> = (0..d).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
            let label = if rng.below(2) == 0 { -1.0 } else { 1.0 };
            SparseRow::new((0..d).collect(), values, label).unwrap()
        })
        .collect();
    Dataset::new("random", rows, d).unwrap()
}

/// Rows that all have exactly `k` entries of ±1, so every `‖a_i‖²` is equal.
pub fn equal_norm_dataset(n: usize, d: usize, k: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, 7);
    let rows = (0..n)
        .map(|_| {
            let mut cols: Vec<usize> = (0..d).collect();
            for j in 0..k {
                let r = j + rng.below((d - j) as u64) as usize;
                cols.swap(j, r);
            }
            let mut chosen = cols[..k].to_vec();
            chosen.sort_unstable();
            let values = chosen.iter().map(|_| if rng.below(2) == 0 { -1.0 } else { 1.0 }).collect();
            let label = if rng.below(2) == 0 { -1.0 } else { 1.0 };
            SparseRow::new(chosen, values, label).unwrap()
        })
        .collect();
    Dataset::new("equal-norm", rows, d).unwrap()
}

pub fn gaussian_point(d: usize, scale: f64, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = RngStream::new(seed, 1234);
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect()
}

pub fn grad_norm_sq(model: &dyn l2s::model::LossModel, x: &[f64]) -> f64 {
    let mut g = vec![0.0; x.len()];
    model.full_gradient_into(x, &mut g);
    g.iter().map(|v| v * v).sum()
}
