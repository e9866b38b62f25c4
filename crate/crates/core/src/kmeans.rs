//! Lloyd's k-means on scalars with k-means++ seeding and seeded restarts.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::sq;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans1d {
    pub centers: Vec<f64>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances to assigned centers.
    pub inertia: f64,
    pub iterations: usize,
}

const MAX_ITERS: usize = 200;

fn nearest(centers: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, &m) in centers.iter().enumerate() {
        let d = sq(x - m);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn seed_plus_plus(data: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centers = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..data.len())]);
    let mut d2: Vec<f64> = data.iter().map(|x| sq(x - centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = data.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if r < *w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..data.len())
        };
        let c = data[pick];
        centers.push(c);
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq(x - c));
        }
    }
    centers
}

fn lloyd(data: &[f64], mut centers: Vec<f64>) -> KMeans1d {
    let k = centers.len();
    let mut assignment = vec![usize::MAX; data.len()];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        for (a, &x) in assignment.iter_mut().zip(data) {
            let c = nearest(&centers, x);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &x) in assignment.iter().zip(data) {
            sums[a] += x;
            counts[a] += 1;
        }
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            }
        }
        if !changed || iterations >= MAX_ITERS {
            break;
        }
    }
    let inertia = assignment
        .iter()
        .zip(data)
        .map(|(&a, &x)| sq(x - centers[a]))
        .sum();
    KMeans1d {
        centers,
        assignment,
        inertia,
        iterations,
    }
}

/// Best of `restarts` seeded runs by inertia. Requires `data.len() >= k >= 1`.
pub fn kmeans_1d(data: &[f64], k: usize, restarts: usize, seed: u64) -> KMeans1d {
    assert!(k >= 1 && data.len() >= k, "k-means needs at least k points");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans1d> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(data, seed_plus_plus(data, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}
