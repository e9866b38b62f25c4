//! Two-level instruction model learned by counting.
//!
//! The top level is a Markov chain `pi` over subgoals. Inside each subgoal a
//! second chain runs over the primitives demonstrated there: an entry row
//! gives the first primitive after arriving, and each primitive's row gives
//! its successor or the terminal marker that hands control back to `pi`.
//! Each `(subgoal, primitive)` pair carries a diagonal Gaussian over joint
//! velocities.
//!
//! Counts get add-one smoothing. Within a subgoal it covers only the
//! primitives seen there (plus the terminal marker). For `pi` it covers the
//! visited subgoals.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpmirl::{SubgoalIndex, SubgoalSet};
use crate::math::{sq, sqrt};
use crate::primitive::ActionPrimitive;
use crate::segmentation::PrimitiveSegment;
use crate::Vec4;

/// Smallest emission variance, (rad/s)^2.
pub const EMISSION_VAR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("no segments to learn from")]
    NoSegments,
    #[error("subgoal set is empty")]
    NoSubgoals,
    #[error("subgoal {0} does not exist")]
    UnknownSubgoal(usize),
    #[error("subgoal {0} was never visited in the demonstrations")]
    UnvisitedSubgoal(usize),
    #[error("no emission for primitive {primitive} at subgoal {subgoal}")]
    UnknownEmission {
        subgoal: usize,
        primitive: ActionPrimitive,
    },
    #[error("subgoal covariance is not positive definite")]
    BadSubgoals,
}

/// Primitive chain of one subgoal. Every `trans` row plus the matching
/// `terminal` entry sums to one, as does `entry`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PrimitiveChain {
    pub subgoal: usize,
    /// Sorted by primitive id.
    pub vocab: Vec<ActionPrimitive>,
    pub entry: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
    pub terminal: Vec<f64>,
}

impl PrimitiveChain {
    pub fn position(&self, p: &ActionPrimitive) -> Option<usize> {
        self.vocab.iter().position(|v| v == p)
    }
}

/// Diagonal Gaussian over joint velocities.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Emission {
    /// `None` for the per-primitive pooled fallback.
    pub subgoal: Option<usize>,
    pub primitive: ActionPrimitive,
    pub mean: Vec4,
    pub var: Vec4,
    /// Number of frames behind the estimate.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct InstructionPolicyModel {
    pub subgoals: SubgoalSet,
    pub pi: Vec<Vec<f64>>,
    /// One per subgoal, indexed by subgoal id. Unvisited subgoals have an
    /// empty vocabulary.
    pub chains: Vec<PrimitiveChain>,
    pub emissions: Vec<Emission>,
    pub pooled: Vec<Emission>,
}

#[derive(Default, Clone)]
struct Moments {
    n: usize,
    sum: Vec4,
    sum_sq: Vec4,
}

impl Moments {
    fn add_segment(&mut self, seg: &PrimitiveSegment) {
        let n = seg.len() as f64;
        self.n += seg.len();
        for j in 0..4 {
            self.sum[j] += n * seg.mean_v[j];
            self.sum_sq[j] += n * (seg.var_v[j] + sq(seg.mean_v[j]));
        }
    }

    fn absorb(&mut self, other: &Moments) {
        self.n += other.n;
        for j in 0..4 {
            self.sum[j] += other.sum[j];
            self.sum_sq[j] += other.sum_sq[j];
        }
    }

    fn emission(&self, subgoal: Option<usize>, primitive: ActionPrimitive) -> Emission {
        let n = self.n.max(1) as f64;
        let mean = self.sum.map(|s| s / n);
        let mut var = [0.0; 4];
        for j in 0..4 {
            var[j] = (self.sum_sq[j] / n - sq(mean[j])).max(EMISSION_VAR_FLOOR);
        }
        Emission {
            subgoal,
            primitive,
            mean,
            var,
            count: self.n,
        }
    }
}

fn normalize(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// Learns the model from per-demonstration segment lists. Each segment is
/// attributed to the most likely subgoal at its starting pose.
pub fn learn_policy(
    demos: &[Vec<PrimitiveSegment>],
    sgs: &SubgoalSet,
) -> Result<InstructionPolicyModel, PolicyError> {
    if demos.iter().all(|d| d.is_empty()) {
        return Err(PolicyError::NoSegments);
    }
    if sgs.is_empty() {
        return Err(PolicyError::NoSubgoals);
    }
    let index = sgs.index().map_err(|_| PolicyError::BadSubgoals)?;
    let labels: Vec<Vec<usize>> = demos.iter().map(|d| label_segments(d, &index)).collect();
    let p = sgs.len();

    let mut vocab: Vec<Vec<ActionPrimitive>> = vec![Vec::new(); p];
    for (demo, labs) in demos.iter().zip(&labels) {
        for (seg, &g) in demo.iter().zip(labs) {
            if !vocab[g].contains(&seg.primitive) {
                vocab[g].push(seg.primitive);
            }
        }
    }
    for v in &mut vocab {
        v.sort_by_key(|a| a.id());
    }
    let visited: Vec<bool> = vocab.iter().map(|v| !v.is_empty()).collect();

    let mut pi_counts = vec![vec![0.0; p]; p];
    let mut entry: Vec<Vec<f64>> = vocab.iter().map(|v| vec![0.0; v.len()]).collect();
    let mut trans: Vec<Vec<Vec<f64>>> = vocab
        .iter()
        .map(|v| vec![vec![0.0; v.len()]; v.len()])
        .collect();
    let mut terminal: Vec<Vec<f64>> = vocab.iter().map(|v| vec![0.0; v.len()]).collect();
    let mut moments: Vec<Vec<Moments>> = vocab
        .iter()
        .map(|v| vec![Moments::default(); v.len()])
        .collect();
    let pos = |g: usize, a: &ActionPrimitive| {
        vocab[g].iter().position(|v| v == a).expect("in vocabulary")
    };

    for (demo, labs) in demos.iter().zip(&labels) {
        for (k, (seg, &g)) in demo.iter().zip(labs).enumerate() {
            let a = pos(g, &seg.primitive);
            moments[g][a].add_segment(seg);
            if k == 0 {
                entry[g][a] += 1.0;
                continue;
            }
            let (prev, pg) = (&demo[k - 1], labs[k - 1]);
            let b = pos(pg, &prev.primitive);
            if pg == g {
                trans[g][b][a] += 1.0;
            } else {
                pi_counts[pg][g] += 1.0;
                terminal[pg][b] += 1.0;
                entry[g][a] += 1.0;
            }
        }
    }

    let pi: Vec<Vec<f64>> = pi_counts
        .iter()
        .map(|row| {
            let smoothed: Vec<f64> = row
                .iter()
                .zip(&visited)
                .map(|(c, &v)| if v { c + 1.0 } else { 0.0 })
                .collect();
            normalize(&smoothed)
        })
        .collect();

    let mut chains = Vec::with_capacity(p);
    let mut emissions = Vec::new();
    let mut pooled: Vec<(ActionPrimitive, Moments)> = Vec::new();
    for g in 0..p {
        let v = vocab[g].len();
        let entry_row = normalize(&entry[g].iter().map(|c| c + 1.0).collect::<Vec<_>>());
        let mut rows = Vec::with_capacity(v);
        let mut term = Vec::with_capacity(v);
        for a in 0..v {
            let total: f64 = trans[g][a].iter().sum::<f64>() + terminal[g][a] + v as f64 + 1.0;
            rows.push(trans[g][a].iter().map(|c| (c + 1.0) / total).collect());
            term.push((terminal[g][a] + 1.0) / total);
        }
        chains.push(PrimitiveChain {
            subgoal: g,
            vocab: vocab[g].clone(),
            entry: entry_row,
            trans: rows,
            terminal: term,
        });
        for (a, prim) in vocab[g].iter().enumerate() {
            emissions.push(moments[g][a].emission(Some(g), *prim));
            match pooled.iter_mut().find(|(q, _)| q == prim) {
                Some((_, m)) => m.absorb(&moments[g][a]),
                None => pooled.push((*prim, moments[g][a].clone())),
            }
        }
    }
    pooled.sort_by_key(|(p, _)| p.id());

    Ok(InstructionPolicyModel {
        subgoals: sgs.clone(),
        pi,
        chains,
        emissions,
        pooled: pooled.iter().map(|(p, m)| m.emission(None, *p)).collect(),
    })
}

fn label_segments(demo: &[PrimitiveSegment], index: &SubgoalIndex) -> Vec<usize> {
    demo.iter()
        .map(|s| index.most_likely(&s.s).expect("non-empty subgoal set"))
        .collect()
}

/// First index of the largest value.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

impl InstructionPolicyModel {
    pub fn num_subgoals(&self) -> usize {
        self.chains.len()
    }

    pub fn chain(&self, subgoal: usize) -> Result<&PrimitiveChain, PolicyError> {
        let c = self
            .chains
            .get(subgoal)
            .ok_or(PolicyError::UnknownSubgoal(subgoal))?;
        if c.vocab.is_empty() {
            return Err(PolicyError::UnvisitedSubgoal(subgoal));
        }
        Ok(c)
    }

    /// Distribution over the next primitive, renormalised without the exit
    /// mass, and its argmax (lowest id on ties). `None` or a primitive not
    /// seen at this subgoal selects the entry row.
    pub fn next_primitive(
        &self,
        subgoal: usize,
        prev: Option<ActionPrimitive>,
    ) -> Result<(Vec<(ActionPrimitive, f64)>, ActionPrimitive), PolicyError> {
        let c = self.chain(subgoal)?;
        let row = match prev.and_then(|p| c.position(&p)) {
            Some(i) => normalize(&c.trans[i]),
            None => c.entry.clone(),
        };
        let best = argmax(&row).expect("non-empty vocabulary");
        Ok((c.vocab.iter().copied().zip(row).collect(), c.vocab[best]))
    }

    /// Successor distribution including the exit marker, as `(vocab row, exit)`.
    pub fn chain_row(
        &self,
        subgoal: usize,
        prev: Option<ActionPrimitive>,
    ) -> Result<(Vec<f64>, f64), PolicyError> {
        let c = self.chain(subgoal)?;
        Ok(match prev.and_then(|p| c.position(&p)) {
            Some(i) => (c.trans[i].clone(), c.terminal[i]),
            None => (c.entry.clone(), 0.0),
        })
    }

    pub fn next_subgoal(&self, subgoal: usize) -> Result<&[f64], PolicyError> {
        self.pi
            .get(subgoal)
            .map(|r| r.as_slice())
            .ok_or(PolicyError::UnknownSubgoal(subgoal))
    }

    /// Emission for the pair, falling back to the pooled per-primitive one.
    pub fn emission(
        &self,
        subgoal: usize,
        primitive: ActionPrimitive,
    ) -> Result<&Emission, PolicyError> {
        self.emissions
            .iter()
            .find(|e| e.subgoal == Some(subgoal) && e.primitive == primitive)
            .or_else(|| self.pooled.iter().find(|e| e.primitive == primitive))
            .ok_or(PolicyError::UnknownEmission { subgoal, primitive })
    }

    pub fn velocity_mean(
        &self,
        subgoal: usize,
        primitive: ActionPrimitive,
    ) -> Result<Vec4, PolicyError> {
        Ok(self.emission(subgoal, primitive)?.mean)
    }

    pub fn sample_velocity_with(
        &self,
        subgoal: usize,
        primitive: ActionPrimitive,
        rng: &mut impl Rng,
    ) -> Result<Vec4, PolicyError> {
        let e = self.emission(subgoal, primitive)?;
        let mut v = e.mean;
        for j in 0..4 {
            let z: f64 = StandardNormal.sample(rng);
            v[j] += sqrt(e.var[j]) * z;
        }
        Ok(v)
    }

    pub fn sample_velocity(
        &self,
        subgoal: usize,
        primitive: ActionPrimitive,
        seed: u64,
    ) -> Result<Vec4, PolicyError> {
        self.sample_velocity_with(subgoal, primitive, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Subgoal relabelled by `perm[old] = new`, with every row and column
    /// permuted to match.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let p = self.num_subgoals();
        let mut out = self.clone();
        for (old, sg) in self.subgoals.subgoals.iter().enumerate() {
            let mut sg = sg.clone();
            sg.id = perm[old];
            out.subgoals.subgoals[perm[old]] = sg;
        }
        for a in 0..p {
            for b in 0..p {
                out.pi[perm[a]][perm[b]] = self.pi[a][b];
            }
            let mut c = self.chains[a].clone();
            c.subgoal = perm[a];
            out.chains[perm[a]] = c;
        }
        for e in &mut out.emissions {
            e.subgoal = e.subgoal.map(|g| perm[g]);
        }
        out
    }
}

/// One emitted instruction of a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RolloutStep {
    pub subgoal: usize,
    pub primitive: ActionPrimitive,
    /// First primitive after arriving at `subgoal`.
    pub entered: bool,
}

fn rollout_impl(
    model: &InstructionPolicyModel,
    start: usize,
    steps: usize,
    mut choose: impl FnMut(&[f64]) -> usize,
) -> Result<Vec<RolloutStep>, PolicyError> {
    let mut out = Vec::with_capacity(steps);
    let mut g = start;
    model.chain(g)?;
    let mut prev: Option<ActionPrimitive> = None;
    // bounded so that a chain of exits through unvisited subgoals cannot spin
    let mut exits_in_a_row = 0;
    while out.len() < steps {
        let (row, exit) = model.chain_row(g, prev)?;
        let mut weights = row;
        weights.push(exit);
        let k = choose(&weights);
        if k == weights.len() - 1 && prev.is_some() {
            exits_in_a_row += 1;
            if exits_in_a_row > 4 * model.num_subgoals() + 4 {
                return Err(PolicyError::UnvisitedSubgoal(g));
            }
            g = choose(model.next_subgoal(g)?);
            model.chain(g)?;
            prev = None;
            continue;
        }
        exits_in_a_row = 0;
        let primitive = model.chains[g].vocab[k];
        out.push(RolloutStep {
            subgoal: g,
            primitive,
            entered: prev.is_none(),
        });
        prev = Some(primitive);
    }
    Ok(out)
}

/// Samples `steps` primitives from the generative chain.
pub fn rollout(
    model: &InstructionPolicyModel,
    start: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<RolloutStep>, PolicyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rollout_impl(model, start, steps, |w| draw(w, &mut rng))
}

/// Follows the most likely choice at every step.
pub fn greedy_rollout(
    model: &InstructionPolicyModel,
    start: usize,
    steps: usize,
) -> Result<Vec<RolloutStep>, PolicyError> {
    rollout_impl(model, start, steps, |w| argmax(w).expect("non-empty row"))
}

/// Stationary distribution of a row-stochastic matrix by power iteration.
pub fn stationary_distribution(pi: &[Vec<f64>], iters: usize) -> Vec<f64> {
    let p = pi.len();
    let mut x = vec![1.0 / p as f64; p];
    for _ in 0..iters {
        let mut next = vec![0.0; p];
        for (a, row) in pi.iter().enumerate() {
            for (b, w) in row.iter().enumerate() {
                next[b] += x[a] * w;
            }
        }
        x = next;
    }
    x
}
