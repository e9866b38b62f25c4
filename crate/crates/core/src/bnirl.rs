//! Bayesian nonparametric IRL baseline for small instances.
//!
//! Observations are grouped into partitions under a Chinese restaurant
//! process prior. Each partition is explained by one subgoal drawn from the
//! observed states, and an observation's likelihood under subgoal `g` is
//! `exp(-alpha * |a - unit(g - s)|)`, where `a` is the unit direction of the
//! observed motion in pose space.
//!
//! Sampling follows Neal's auxiliary-variable scheme with one auxiliary
//! subgoal per step, and resamples each partition's subgoal after every sweep.
//! For tiny inputs [`exact_posterior`] enumerates every partition with the
//! subgoal summed out.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{jacobian, LinkParams};
use crate::math::{exp, log, norm, sub4};
use crate::partition::canonicalize;
use crate::Vec4;

/// Directions shorter than this are treated as no motion.
pub const MIN_DIRECTION_NORM: f64 = 1e-12;
/// Largest input [`exact_posterior`] accepts.
pub const EXACT_MAX_POINTS: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BnirlError {
    #[error("no observations")]
    Empty,
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
    #[error("exact enumeration is limited to {EXACT_MAX_POINTS} observations, got {0}")]
    TooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BnirlConfig {
    pub alpha: f64,
    pub concentration: f64,
    /// Total sweeps, including burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for BnirlConfig {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            concentration: 1.0,
            iterations: 2000,
            burn_in: 500,
            seed: 0,
        }
    }
}

impl BnirlConfig {
    pub fn validate(&self) -> Result<(), BnirlError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(BnirlError::BadConfig("alpha must be finite and >= 0"));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(BnirlError::BadConfig(
                "concentration must be finite and > 0",
            ));
        }
        if self.iterations <= self.burn_in {
            return Err(BnirlError::BadConfig("iterations must exceed burn_in"));
        }
        Ok(())
    }
}

/// A state and the unit direction of the motion observed there.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BnirlObservation {
    pub s: Vec4,
    /// Unit vector, or zero for a stationary observation.
    pub dir: Vec4,
}

pub fn unit_or_zero(v: &Vec4) -> Vec4 {
    let n = norm(v);
    if n < MIN_DIRECTION_NORM || !n.is_finite() {
        [0.0; 4]
    } else {
        v.map(|x| x / n)
    }
}

/// Pose-space direction of a segment: the Jacobian at the segment's first
/// joint configuration applied to its mean joint velocity, normalised.
pub fn observation_direction(q: &Vec4, mean_v: &Vec4, links: &LinkParams) -> Vec4 {
    let j = jacobian(q, links);
    let mut d = [0.0; 4];
    for (r, row) in j.iter().enumerate() {
        d[r] = row.iter().zip(mean_v).map(|(a, b)| a * b).sum();
    }
    unit_or_zero(&d)
}

/// `-alpha * |dir - unit(g - s)|`.
pub fn action_comparison_loglik(s: &Vec4, dir: &Vec4, g: &Vec4, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let a_cl = unit_or_zero(&sub4(g, s));
    -alpha * norm(&sub4(dir, &a_cl))
}

/// Partition labels in first-occurrence form, and the observation index
/// serving as each partition's subgoal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PartitionSample {
    pub z: Vec<usize>,
    pub subgoals: Vec<usize>,
}

impl PartitionSample {
    pub fn num_partitions(&self) -> usize {
        self.subgoals.len()
    }
}

fn loglik_table(obs: &[BnirlObservation], alpha: f64) -> Vec<Vec<f64>> {
    obs.iter()
        .map(|o| {
            obs.iter()
                .map(|g| action_comparison_loglik(&o.s, &o.dir, &g.s, alpha))
                .collect()
        })
        .collect()
}

/// Draws an index with probability proportional to `exp(logw)`.
fn sample_log_weights(logw: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| exp(l - max)).collect();
    let total: f64 = w.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, x) in w.iter().enumerate() {
        if r < *x {
            return i;
        }
        r -= x;
    }
    w.len() - 1
}

struct Chain {
    z: Vec<usize>,
    sizes: Vec<usize>,
    goals: Vec<usize>,
}

impl Chain {
    fn slot(&mut self, goal: usize) -> usize {
        if let Some(free) = self.sizes.iter().position(|&s| s == 0) {
            self.goals[free] = goal;
            free
        } else {
            self.sizes.push(0);
            self.goals.push(goal);
            self.sizes.len() - 1
        }
    }

    fn snapshot(&self) -> PartitionSample {
        let z = canonicalize(&self.z);
        let k = z.iter().max().map_or(0, |m| m + 1);
        let mut subgoals = vec![0; k];
        for (&raw, &c) in self.z.iter().zip(&z) {
            subgoals[c] = self.goals[raw];
        }
        PartitionSample { z, subgoals }
    }
}

/// Post-burn-in samples of the partition and its subgoals. Deterministic for
/// a given seed.
pub fn gibbs_sample_partitions(
    obs: &[BnirlObservation],
    config: &BnirlConfig,
) -> Result<Vec<PartitionSample>, BnirlError> {
    config.validate()?;
    let n = obs.len();
    if n == 0 {
        return Err(BnirlError::Empty);
    }
    let ll = loglik_table(obs, config.alpha);
    let log_conc = log(config.concentration);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut chain = Chain {
        z: vec![0; n],
        sizes: vec![n],
        goals: vec![0],
    };
    resample_goals(&mut chain, &ll, &mut rng);

    let mut samples = Vec::with_capacity(config.iterations - config.burn_in);
    let mut logw = Vec::new();
    let mut slots = Vec::new();
    for sweep in 0..config.iterations {
        for i in 0..n {
            let old = chain.z[i];
            chain.sizes[old] -= 1;
            let aux = if chain.sizes[old] == 0 {
                chain.goals[old]
            } else {
                rng.random_range(0..n)
            };
            logw.clear();
            slots.clear();
            for (c, &size) in chain.sizes.iter().enumerate() {
                if size > 0 {
                    logw.push(log(size as f64) + ll[i][chain.goals[c]]);
                    slots.push(Some(c));
                }
            }
            logw.push(log_conc + ll[i][aux]);
            slots.push(None);
            let pick = sample_log_weights(&logw, &mut rng);
            let c = match slots[pick] {
                Some(c) => c,
                None => chain.slot(aux),
            };
            chain.z[i] = c;
            chain.sizes[c] += 1;
        }
        resample_goals(&mut chain, &ll, &mut rng);
        if sweep >= config.burn_in {
            samples.push(chain.snapshot());
        }
    }
    Ok(samples)
}

fn resample_goals(chain: &mut Chain, ll: &[Vec<f64>], rng: &mut ChaCha8Rng) {
    let n = ll.len();
    let mut logw = vec![0.0; n];
    for c in 0..chain.sizes.len() {
        if chain.sizes[c] == 0 {
            continue;
        }
        for (g, w) in logw.iter_mut().enumerate() {
            *w = chain
                .z
                .iter()
                .enumerate()
                .filter(|(_, &zc)| zc == c)
                .map(|(i, _)| ll[i][g])
                .sum();
        }
        chain.goals[c] = sample_log_weights(&logw, rng);
    }
}

/// Most frequent partition up to relabelling; ties go to the one seen
/// first. Subgoals come from its first occurrence.
pub fn posterior_mode(samples: &[PartitionSample]) -> Option<PartitionSample> {
    let mut counts: BTreeMap<Vec<usize>, (usize, usize)> = BTreeMap::new();
    for (k, s) in samples.iter().enumerate() {
        let z = canonicalize(&s.z);
        counts.entry(z).or_insert((0, k)).0 += 1;
    }
    let (_, &(_, first)) = counts
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))?;
    let s = &samples[first];
    let z = canonicalize(&s.z);
    let k = z.iter().max().map_or(0, |m| m + 1);
    let mut subgoals = vec![0; k];
    for (&raw, &c) in s.z.iter().zip(&z) {
        subgoals[c] = s.subgoals[raw];
    }
    Some(PartitionSample { z, subgoals })
}

/// Empirical frequency of each canonical partition.
pub fn partition_frequencies(samples: &[PartitionSample]) -> BTreeMap<Vec<usize>, f64> {
    let mut out = BTreeMap::new();
    for s in samples {
        *out.entry(canonicalize(&s.z)).or_insert(0.0) += 1.0;
    }
    let n = samples.len() as f64;
    for v in out.values_mut() {
        *v /= n;
    }
    out
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + log(v.iter().map(|x| exp(x - max)).sum())
}

/// Exact posterior over partitions (first-occurrence labels), with each
/// partition's subgoal summed out under a uniform prior on observed states.
pub fn exact_posterior(
    obs: &[BnirlObservation],
    alpha: f64,
    concentration: f64,
) -> Result<Vec<(Vec<usize>, f64)>, BnirlError> {
    let n = obs.len();
    if n == 0 {
        return Err(BnirlError::Empty);
    }
    if n > EXACT_MAX_POINTS {
        return Err(BnirlError::TooLarge(n));
    }
    BnirlConfig {
        alpha,
        concentration,
        iterations: 1,
        burn_in: 0,
        seed: 0,
    }
    .validate()?;
    let ll = loglik_table(obs, alpha);
    let log_n = log(n as f64);
    let mut log_fact = vec![0.0; n + 1];
    for k in 1..=n {
        log_fact[k] = log_fact[k - 1] + log(k as f64);
    }

    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut z = vec![0usize; n];
    loop {
        let k = z.iter().max().map_or(0, |m| m + 1);
        let mut lp = 0.0;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| z[i] == c).collect();
            lp += log(concentration) + log_fact[members.len() - 1];
            lp +=
                log_sum_exp((0..n).map(|g| members.iter().map(|&i| ll[i][g]).sum::<f64>())) - log_n;
        }
        out.push((z.clone(), lp));
        let mut i = n;
        loop {
            if i <= 1 {
                let norm = log_sum_exp(out.iter().map(|(_, l)| *l));
                for (_, l) in &mut out {
                    *l = exp(*l - norm);
                }
                return Ok(out);
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

/// Two groups of three observations in the `x`-`y` plane, each heading for
/// its own target at `(+-3, 0)`. One observation per group sits on its
/// target without moving. `jitter` perturbs the states.
pub fn two_target_toy(jitter: f64, seed: u64) -> (Vec<BnirlObservation>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = Vec::new();
    let mut truth = Vec::new();
    for (label, side) in [1.0f64, -1.0].iter().enumerate() {
        let target = [3.0 * side, 0.0, 0.0, 0.0];
        for (k, offset) in [[0.0, 0.0], [-1.0 * side, 0.3], [-1.0 * side, -0.3]]
            .iter()
            .enumerate()
        {
            let mut s = [target[0] + offset[0], target[1] + offset[1], 0.0, 0.0];
            for x in &mut s[..2] {
                *x += jitter * (2.0 * rng.random::<f64>() - 1.0);
            }
            let dir = if k == 0 {
                [0.0; 4]
            } else {
                unit_or_zero(&sub4(&target, &s))
            };
            obs.push(BnirlObservation { s, dir });
            truth.push(label);
        }
    }
    (obs, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::adjusted_rand_index;

    fn total_variation(a: &BTreeMap<Vec<usize>, f64>, b: &BTreeMap<Vec<usize>, f64>) -> f64 {
        let mut keys: Vec<&Vec<usize>> = a.keys().chain(b.keys()).collect();
        keys.sort();
        keys.dedup();
        0.5 * keys
            .iter()
            .map(|k| (a.get(*k).unwrap_or(&0.0) - b.get(*k).unwrap_or(&0.0)).abs())
            .sum::<f64>()
    }

    #[test]
    fn likelihood_geometry() {
        let s = [0.0; 4];
        let g = [2.0, 0.0, 0.0, 0.0];
        assert_eq!(
            action_comparison_loglik(&s, &[1.0, 0.0, 0.0, 0.0], &g, 3.0),
            0.0
        );
        assert_eq!(
            action_comparison_loglik(&s, &[-1.0, 0.0, 0.0, 0.0], &g, 1.0),
            -2.0
        );
        assert_eq!(
            action_comparison_loglik(&s, &[0.0, 1.0, 0.0, 0.0], &g, 0.0),
            0.0
        );
        // stationary at the goal compares two zero vectors
        assert_eq!(action_comparison_loglik(&g, &[0.0; 4], &g, 5.0), 0.0);
    }

    #[test]
    fn direction_follows_the_jacobian() {
        let links = LinkParams::default();
        // turret rotation at q = 0 moves the tip along +y
        let d = observation_direction(&[0.0; 4], &[0.4, 0.0, 0.0, 0.0], &links);
        assert!((d[1] - 1.0).abs() < 1e-12 && d[0].abs() < 1e-12);
        assert_eq!(
            observation_direction(&[0.0; 4], &[0.0; 4], &links),
            [0.0; 4]
        );
    }

    #[test]
    fn single_observation_has_one_partition() {
        let obs = [BnirlObservation {
            s: [1.0, 2.0, 0.0, 0.0],
            dir: [1.0, 0.0, 0.0, 0.0],
        }];
        let samples = gibbs_sample_partitions(
            &obs,
            &BnirlConfig {
                iterations: 50,
                burn_in: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(samples.len(), 40);
        assert!(samples.iter().all(|s| s.z == [0] && s.subgoals == [0]));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = BnirlConfig {
            iterations: 10,
            burn_in: 10,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(BnirlError::BadConfig(_))));
        assert!(gibbs_sample_partitions(&[], &BnirlConfig::default()).is_err());
    }

    // With alpha = 0 the posterior is the CRP prior. For n = 4 and unit
    // concentration the block count follows |s(4, k)| / 4! = 6, 11, 6, 1 over 24.
    #[test]
    fn prior_only_matches_crp_block_counts() {
        let (obs, _) = two_target_toy(0.0, 0);
        let cfg = BnirlConfig {
            alpha: 0.0,
            iterations: 20_000,
            burn_in: 100,
            seed: 4,
            ..Default::default()
        };
        let samples = gibbs_sample_partitions(&obs[..4], &cfg).unwrap();
        let mut hist = [0.0; 5];
        for s in &samples {
            hist[s.num_partitions()] += 1.0 / samples.len() as f64;
        }
        for (k, expect) in [(1, 6.0), (2, 11.0), (3, 6.0), (4, 1.0)] {
            assert!((hist[k] - expect / 24.0).abs() < 0.02, "k={k}: {}", hist[k]);
        }
        let exact = exact_posterior(&obs[..4], 0.0, 1.0).unwrap();
        assert_eq!(exact.len(), 15);
        let total: f64 = exact.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gibbs_matches_exact_enumeration() {
        let (obs, _) = two_target_toy(0.2, 1);
        let obs = [obs[0], obs[1], obs[3], obs[4]];
        let cfg = BnirlConfig {
            alpha: 1.0,
            iterations: 30_000,
            burn_in: 500,
            seed: 9,
            ..Default::default()
        };
        let freq = partition_frequencies(&gibbs_sample_partitions(&obs, &cfg).unwrap());
        let exact: BTreeMap<Vec<usize>, f64> = exact_posterior(&obs, 1.0, 1.0)
            .unwrap()
            .into_iter()
            .collect();
        let tv = total_variation(&freq, &exact);
        assert!(tv < 0.03, "total variation {tv}");
    }

    #[test]
    fn tiny_concentration_collapses_to_one_partition() {
        let (obs, _) = two_target_toy(0.1, 2);
        let cfg = BnirlConfig {
            alpha: 0.0,
            concentration: 1e-6,
            iterations: 300,
            burn_in: 50,
            seed: 1,
        };
        let mode = posterior_mode(&gibbs_sample_partitions(&obs, &cfg).unwrap()).unwrap();
        assert_eq!(mode.z, [0; 6]);
    }

    #[test]
    fn mode_picks_the_most_frequent_partition() {
        let p1 = PartitionSample {
            z: vec![0, 0, 1],
            subgoals: vec![0, 2],
        };
        let p2 = PartitionSample {
            z: vec![0, 1, 1],
            subgoals: vec![0, 1],
        };
        let mut samples = vec![p1.clone(); 9];
        samples.push(p2);
        assert_eq!(posterior_mode(&samples), Some(p1.clone()));
        // relabelled copies count as the same partition
        let relabelled = PartitionSample {
            z: vec![1, 1, 0],
            subgoals: vec![2, 0],
        };
        assert_eq!(posterior_mode(&[relabelled.clone(), relabelled]), Some(p1));
        assert_eq!(posterior_mode(&[]), None);
    }

    #[test]
    fn toy_mode_equals_exact_map_and_truth() {
        let (obs, truth) = two_target_toy(0.05, 3);
        let samples = gibbs_sample_partitions(&obs, &BnirlConfig::default()).unwrap();
        let mode = posterior_mode(&samples).unwrap();
        let exact = exact_posterior(&obs, 5.0, 1.0).unwrap();
        let (map, _) = exact.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(&mode.z, map);
        assert_eq!(adjusted_rand_index(&mode.z, &truth), 1.0);
    }

    #[test]
    fn mode_distribution_is_exchangeable() {
        let (obs, _) = two_target_toy(0.05, 5);
        let perm = [4, 1, 5, 0, 3, 2];
        let permuted: Vec<BnirlObservation> = perm.iter().map(|&i| obs[i]).collect();
        let mut plain = Vec::new();
        let mut shuffled = Vec::new();
        for seed in 0..20 {
            let cfg = BnirlConfig {
                iterations: 400,
                burn_in: 100,
                seed,
                ..Default::default()
            };
            plain.push(posterior_mode(&gibbs_sample_partitions(&obs, &cfg).unwrap()).unwrap());
            let cfg = BnirlConfig {
                seed: seed + 1000,
                ..cfg
            };
            let m = posterior_mode(&gibbs_sample_partitions(&permuted, &cfg).unwrap()).unwrap();
            // back to the original observation order
            let mut z = vec![0; 6];
            for (k, &i) in perm.iter().enumerate() {
                z[i] = m.z[k];
            }
            shuffled.push(PartitionSample {
                z: canonicalize(&z),
                subgoals: m.subgoals,
            });
        }
        let tv = total_variation(
            &partition_frequencies(&plain),
            &partition_frequencies(&shuffled),
        );
        assert!(tv < 0.1, "total variation {tv}");
    }
}
