//! DP-means: hard clustering that pays `lambda` per cluster.
//!
//! Minimises `sum_c sum_{x in c} |x - mu_c|^2 + lambda * k`. `lambda` is a
//! squared distance: a point opens a new cluster when its squared distance to
//! every centroid exceeds it.
//!
//! Starts from one cluster at the global centroid and sweeps points in input
//! order. Each sweep reassigns (or spawns), drops clusters left empty, then
//! moves centroids to their member means. Stops when a sweep changes no
//! assignment or after `max_iters` sweeps.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::sq_dist;

/// Largest instance the brute-force oracle accepts.
pub const ORACLE_MAX_POINTS: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpMeansError {
    #[error("no points to cluster")]
    Empty,
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("max_iters must be at least 1")]
    BadMaxIters,
    #[error("point {index} has dimension {got}, expected {expected}")]
    Dimension {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("assignment has {got} entries for {expected} points")]
    AssignmentLength { got: usize, expected: usize },
    #[error("point {index} assigned to cluster {label}, but only {k} clusters exist")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        k: usize,
    },
    #[error("brute force is limited to {ORACLE_MAX_POINTS} points, got {0}")]
    TooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DpMeansConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Unused by the algorithm, which is deterministic.
    pub seed: u64,
}

impl DpMeansConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            max_iters: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DpMeansError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(DpMeansError::BadLambda(self.lambda));
        }
        if self.max_iters == 0 {
            return Err(DpMeansError::BadMaxIters);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DpMeansResult {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub objective: f64,
    /// Objective at initialisation followed by the value after every sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize, DpMeansError> {
    let first = points.first().ok_or(DpMeansError::Empty)?;
    let d = first.as_ref().len();
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != d {
            return Err(DpMeansError::Dimension {
                index: i,
                got: p.len(),
                expected: d,
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(DpMeansError::NonFinite(i));
        }
    }
    Ok(d)
}

fn member_means<P: AsRef<[f64]>>(
    points: &[P],
    assignment: &[usize],
    k: usize,
    d: usize,
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        for (s, x) in sums[c].iter_mut().zip(p.as_ref()) {
            *s += x;
        }
        counts[c] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            for x in s.iter_mut() {
                *x /= n as f64;
            }
        }
    }
    sums
}

fn cost_with_centroids<P: AsRef<[f64]>>(
    points: &[P],
    assignment: &[usize],
    centroids: &[Vec<f64>],
    lambda: f64,
) -> f64 {
    let sse: f64 = points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| sq_dist(p.as_ref(), &centroids[c]))
        .sum();
    sse + lambda * centroids.len() as f64
}

/// Relabels clusters densely in order of their first appearance among the
/// surviving labels and drops the empty ones.
fn compact(assignment: &mut [usize], k: usize) -> usize {
    let mut used = vec![false; k];
    for &c in assignment.iter() {
        used[c] = true;
    }
    let mut remap = vec![usize::MAX; k];
    let mut next = 0;
    for c in 0..k {
        if used[c] {
            remap[c] = next;
            next += 1;
        }
    }
    for c in assignment.iter_mut() {
        *c = remap[*c];
    }
    next
}

pub fn dp_means_cluster<P: AsRef<[f64]>>(
    points: &[P],
    config: &DpMeansConfig,
) -> Result<DpMeansResult, DpMeansError> {
    config.validate()?;
    let d = check_points(points)?;
    let n = points.len();
    let lambda = config.lambda;

    let mut assignment = vec![0usize; n];
    let mut centroids = member_means(points, &assignment, 1, d);
    let mut objective = cost_with_centroids(points, &assignment, &centroids, lambda);
    let mut trace = vec![objective];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iters {
        iterations += 1;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let p = p.as_ref();
            let (best, best_d) = centroids
                .iter()
                .enumerate()
                .map(|(c, mu)| (c, sq_dist(p, mu)))
                .fold(
                    (0, f64::INFINITY),
                    |acc, x| if x.1 < acc.1 { x } else { acc },
                );
            let target = if best_d > lambda {
                centroids.push(p.to_vec());
                centroids.len() - 1
            } else {
                best
            };
            if target != assignment[i] {
                assignment[i] = target;
                changed = true;
            }
        }
        let k = compact(&mut assignment, centroids.len());
        centroids = member_means(points, &assignment, k, d);
        let next = cost_with_centroids(points, &assignment, &centroids, lambda);
        debug_assert!(
            next <= objective + 1e-9 * (1.0 + objective.abs()),
            "objective rose from {objective} to {next}"
        );
        objective = next;
        trace.push(objective);
        if !changed {
            converged = true;
            break;
        }
    }

    Ok(DpMeansResult {
        k: centroids.len(),
        centroids,
        assignment,
        objective,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Within-cluster squared error around member means plus `lambda` per
/// non-empty cluster. Labels must be below `k`.
pub fn clustering_objective<P: AsRef<[f64]>>(
    points: &[P],
    assignment: &[usize],
    k: usize,
    lambda: f64,
) -> Result<f64, DpMeansError> {
    let d = check_points(points)?;
    if assignment.len() != points.len() {
        return Err(DpMeansError::AssignmentLength {
            got: assignment.len(),
            expected: points.len(),
        });
    }
    if let Some((index, &label)) = assignment.iter().enumerate().find(|(_, &c)| c >= k) {
        return Err(DpMeansError::LabelOutOfRange { index, label, k });
    }
    let mut labels = assignment.to_vec();
    let used = compact(&mut labels, k);
    let means = member_means(points, &labels, used, d);
    Ok(cost_with_centroids(points, &labels, &means, lambda))
}

/// Exact minimiser over every set partition of up to nine points. The
/// returned partition uses first-occurrence labels.
pub fn brute_force_oracle<P: AsRef<[f64]>>(
    points: &[P],
    lambda: f64,
) -> Result<(f64, Vec<usize>), DpMeansError> {
    check_points(points)?;
    let n = points.len();
    if n > ORACLE_MAX_POINTS {
        return Err(DpMeansError::TooLarge(n));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(DpMeansError::BadLambda(lambda));
    }
    // restricted growth strings: z[0] = 0, z[i] <= 1 + max(z[..i])
    let mut z = vec![0usize; n];
    let mut best = (f64::INFINITY, z.clone());
    loop {
        let k = z.iter().max().map_or(0, |m| m + 1);
        let cost = clustering_objective(points, &z, k, lambda)?;
        if cost < best.0 {
            best = (cost, z.clone());
        }
        // advance to the next string
        let mut i = n;
        loop {
            if i <= 1 {
                return Ok(best);
            }
            i -= 1;
            let prefix_max = z[..i].iter().copied().max().unwrap_or(0);
            if z[i] <= prefix_max {
                z[i] += 1;
                for x in &mut z[i + 1..] {
                    *x = 0;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn single_point() {
        let r = dp_means_cluster(&pts(&[3.0]), &DpMeansConfig::new(2.0)).unwrap();
        assert_eq!(r.k, 1);
        assert_eq!(r.centroids[0], vec![3.0]);
        assert_eq!(r.objective, 2.0);
        assert_eq!(brute_force_oracle(&pts(&[3.0]), 2.0).unwrap().0, 2.0);
    }

    // {0, 1}: one cluster costs 0.25 + 0.25 + lambda, two clusters 2 * lambda.
    #[test]
    fn two_points_merge_or_split() {
        let r = dp_means_cluster(&pts(&[0.0, 1.0]), &DpMeansConfig::new(5.0)).unwrap();
        assert_eq!((r.k, r.centroids[0][0], r.objective), (1, 0.5, 5.5));
        assert_eq!(
            brute_force_oracle(&pts(&[0.0, 1.0]), 5.0).unwrap(),
            (5.5, vec![0, 0])
        );

        let r = dp_means_cluster(&pts(&[0.0, 1.0]), &DpMeansConfig::new(0.1)).unwrap();
        assert_eq!(r.k, 2);
        assert!((r.objective - 0.2).abs() < 1e-12);
        let (best, z) = brute_force_oracle(&pts(&[0.0, 1.0]), 0.1).unwrap();
        assert!((best - 0.2).abs() < 1e-12);
        assert_eq!(z, vec![0, 1]);
    }

    #[test]
    fn objective_extremes() {
        let p = pts(&[0.0, 2.0, 5.0]);
        assert_eq!(
            clustering_objective(&pts(&[1.0, 1.0]), &[0, 0], 1, 3.0).unwrap(),
            3.0
        );
        assert_eq!(clustering_objective(&p, &[0, 1, 2], 3, 1.5).unwrap(), 4.5);
        assert_eq!(
            clustering_objective(&p, &[0, 3, 1], 3, 1.0),
            Err(DpMeansError::LabelOutOfRange {
                index: 1,
                label: 3,
                k: 3
            })
        );
    }

    #[test]
    fn rejects_bad_input() {
        let empty: Vec<Vec<f64>> = Vec::new();
        assert_eq!(
            dp_means_cluster(&empty, &DpMeansConfig::new(1.0)),
            Err(DpMeansError::Empty)
        );
        assert_eq!(
            dp_means_cluster(&pts(&[1.0]), &DpMeansConfig::new(0.0)),
            Err(DpMeansError::BadLambda(0.0))
        );
        assert_eq!(
            brute_force_oracle(&pts(&[0.0; 10]), 1.0),
            Err(DpMeansError::TooLarge(10))
        );
    }

    #[test]
    fn oracle_visits_bell_many_partitions() {
        // Bell(4) = 15 partitions; each cluster costs exactly 1 with coincident points.
        let (cost, z) = brute_force_oracle(&pts(&[0.0, 10.0, 20.0, 30.0]), 1.0).unwrap();
        assert_eq!(cost, 4.0);
        assert_eq!(z, vec![0, 1, 2, 3]);
    }

    // Equilateral triangle with unit sides. Partition costs:
    //   {abc}: 1 + lambda, {ab}{c}: 0.5 + 2 lambda, {a}{b}{c}: 3 lambda.
    #[test]
    fn triangle_transitions_with_lambda() {
        let h = 3f64.sqrt() / 2.0;
        let tri = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]];
        let k_at = |l: f64| {
            let (_, z) = brute_force_oracle(&tri, l).unwrap();
            z.iter().max().unwrap() + 1
        };
        assert_eq!(k_at(2.0), 1);
        assert_eq!(k_at(0.4), 3);
        assert_eq!(k_at(0.1), 3);
        for l in [2.0, 0.1] {
            let r = dp_means_cluster(&tri, &DpMeansConfig::new(l)).unwrap();
            assert_eq!(r.k, k_at(l));
        }
    }

    fn naive_objective(points: &[Vec<f64>], z: &[usize], lambda: f64) -> f64 {
        let k = z.iter().max().unwrap() + 1;
        let mut total = 0.0;
        let mut clusters = 0;
        for c in 0..k {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(z)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            clusters += 1;
            let d = members[0].len();
            for j in 0..d {
                let m = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
                total += members.iter().map(|p| (p[j] - m) * (p[j] - m)).sum::<f64>();
            }
        }
        total + lambda * clusters as f64
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, f64)> {
        (1usize..=3, 1usize..=8).prop_flat_map(|(d, n)| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n),
                0.05f64..20.0,
            )
        })
    }

    proptest! {
        #[test]
        fn objective_matches_naive((p, l) in instance(), seed in 0usize..100) {
            let z: Vec<usize> = (0..p.len()).map(|i| (i * 7 + seed) % 3).collect();
            let got = clustering_objective(&p, &z, 3, l).unwrap();
            prop_assert!((got - naive_objective(&p, &z, l)).abs() < 1e-9);
        }

        #[test]
        fn sweeps_never_raise_the_objective((p, l) in instance()) {
            let r = dp_means_cluster(&p, &DpMeansConfig::new(l)).unwrap();
            for w in r.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()));
            }
            prop_assert!(r.converged);
            let (opt, _) = brute_force_oracle(&p, l).unwrap();
            prop_assert!(r.objective >= opt - 1e-9);
            let direct = clustering_objective(&p, &r.assignment, r.k, l).unwrap();
            prop_assert!((direct - r.objective).abs() < 1e-9);
        }

        #[test]
        fn lambda_extremes((p, _) in instance()) {
            let mut diam: f64 = 0.0;
            let mut min_d = f64::INFINITY;
            for i in 0..p.len() {
                for j in i + 1..p.len() {
                    let d = sq_dist(&p[i], &p[j]);
                    diam = diam.max(d);
                    min_d = min_d.min(d);
                }
            }
            let r = dp_means_cluster(&p, &DpMeansConfig::new(diam.max(1e-3))).unwrap();
            prop_assert_eq!(r.k, 1);
            // A cluster whose members are pairwise at least min_d apart has a
            // member at squared distance >= min_d / 4 from its mean.
            if min_d.is_finite() && min_d > 1e-6 {
                let r = dp_means_cluster(&p, &DpMeansConfig::new(min_d * 0.24)).unwrap();
                prop_assert_eq!(r.k, p.len());
                let (_, z) = brute_force_oracle(&p, min_d * 0.49).unwrap();
                prop_assert_eq!(z.iter().max().unwrap() + 1, p.len());
            }
        }
    }
}
