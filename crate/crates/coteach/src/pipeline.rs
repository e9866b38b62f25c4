//! Offline stages shared by the CLI, the benchmarks and the tests.

use anyhow::{anyhow, ensure, Context, Result};
use coteach_core::demo::{generate_expert_demo, DemoOracle, ExpertScript};
use coteach_core::dpmirl::{default_lambda, infer_subgoals};
use coteach_core::engine::EngineModel;
use coteach_core::kinematics::Machine;
use coteach_core::policy::learn_policy;
use coteach_core::segmentation::{
    fit_velocity_clusters, segment_trajectory, FitOptions, ObservationSet, PrimitiveSegment,
    VelocityClusterModel, DEFAULT_RESTARTS,
};
use coteach_core::task::TaskConfig;
use coteach_core::trajectory::Trajectory;

/// Offsets added to `--seed` so that stages draw independent streams.
pub mod seed_offset {
    pub const DEMO: u64 = 0;
    pub const CLUSTERS: u64 = 1_000;
    pub const BNIRL: u64 = 2_000;
    pub const SESSION: u64 = 3_000;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoOptions {
    pub demos: usize,
    pub cycles: usize,
    pub noise_std: f64,
    pub seed: u64,
}

/// Demo `i` uses seed `seed + DEMO + i`.
pub fn gen_demos(
    script: &ExpertScript,
    task: &TaskConfig,
    machine: &Machine,
    opts: &DemoOptions,
) -> Result<Vec<(Trajectory, DemoOracle)>> {
    ensure!(opts.demos >= 1, "need at least one demo");
    (0..opts.demos)
        .map(|i| {
            let seed = opts
                .seed
                .wrapping_add(seed_offset::DEMO)
                .wrapping_add(i as u64);
            let (mut traj, oracle) =
                generate_expert_demo(script, task, machine, opts.cycles, opts.noise_std, seed)
                    .map_err(|e| anyhow!("demo {i}: {e}"))?;
            traj.meta.insert("script".into(), script.name.clone());
            traj.meta.insert("cycles".into(), opts.cycles.to_string());
            traj.meta
                .insert("noise_std".into(), opts.noise_std.to_string());
            traj.meta.insert("seed".into(), seed.to_string());
            Ok((traj, oracle))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentOptions {
    pub min_len: usize,
    pub eta: Option<f64>,
    pub seed: u64,
    /// Fit clusters per demo instead of pooling all demos.
    pub per_demo: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Pooled fit; this is what the live engine classifies with.
    pub clusters: VelocityClusterModel,
    pub segments: Vec<Vec<PrimitiveSegment>>,
}

pub fn segment_demos(trajs: &[Trajectory], opts: &SegmentOptions) -> Result<Segmentation> {
    ensure!(!trajs.is_empty(), "no trajectories");
    ensure!(opts.min_len >= 1, "min_len must be at least 1");
    let fit = FitOptions {
        seed: opts.seed.wrapping_add(seed_offset::CLUSTERS),
        restarts: DEFAULT_RESTARTS,
        eta: opts.eta,
    };
    let clusters = fit_velocity_clusters(trajs, &fit).map_err(|e| anyhow!("clustering: {e}"))?;
    let segments = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let own;
            let model = if opts.per_demo {
                own = fit_velocity_clusters(std::slice::from_ref(t), &fit)
                    .map_err(|e| anyhow!("demo {i}: {e}"))?;
                &own
            } else {
                &clusters
            };
            segment_trajectory(t, model, opts.min_len).map_err(|e| anyhow!("demo {i}: {e}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Segmentation { clusters, segments })
}

pub fn observations(segments: &[Vec<PrimitiveSegment>]) -> ObservationSet {
    let mut obs = ObservationSet::default();
    for (d, segs) in segments.iter().enumerate() {
        obs.extend(ObservationSet::from_segments(d, segs));
    }
    obs
}

/// Subgoal inference followed by policy counting. `lambda` defaults to the
/// object-separation rule.
pub fn learn(
    segments: &[Vec<PrimitiveSegment>],
    clusters: VelocityClusterModel,
    task: &TaskConfig,
    lambda: Option<f64>,
    min_len: usize,
) -> Result<EngineModel> {
    let obs = observations(segments);
    ensure!(!obs.is_empty(), "no segments to learn from");
    let lambda = lambda.unwrap_or_else(|| default_lambda(task));
    let (sgs, _) = infer_subgoals(&obs, task, lambda).map_err(|e| anyhow!("subgoals: {e}"))?;
    let policy = learn_policy(segments, &sgs)
        .map_err(|e| anyhow!("policy: {e}"))
        .context("learn")?;
    let mut model = EngineModel::new(policy, clusters);
    model.min_len = min_len;
    Ok(model)
}
