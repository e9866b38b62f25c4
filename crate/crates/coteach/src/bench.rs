//! Segmentation timing and the DPMIRL/BNIRL agreement report.

use std::io::Write;
use std::time::Instant;

use anyhow::{anyhow, Result};
use coteach_core::bnirl::{
    exact_posterior, gibbs_sample_partitions, partition_frequencies, posterior_mode,
    two_target_toy, BnirlConfig, BnirlObservation, EXACT_MAX_POINTS,
};
use coteach_core::demo::{generate_expert_demo, ExpertScript};
use coteach_core::dpmirl::{default_lambda, infer_subgoals};
use coteach_core::kinematics::{EndEffectorPose, Machine};
use coteach_core::partition::{adjusted_rand_index, canonicalize};
use coteach_core::primitive::ActionPrimitive;
use coteach_core::segmentation::{
    fit_velocity_clusters, segment_trajectory, FitOptions, Observation, ObservationSet,
};
use coteach_core::task::{ObjectRole, TaskConfig, TaskObject};
use coteach_core::trajectory::Trajectory;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SIZES: [usize; 3] = [10_000, 20_000, 40_000];
pub const BENCH_NOISE_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub frames: usize,
    pub seconds: f64,
}

/// Noisy truck-loading demo truncated to exactly `frames` frames.
pub fn bench_trajectory(frames: usize, seed: u64) -> Result<Trajectory> {
    let script = ExpertScript::truck_loading();
    let cycles = frames.div_ceil(script.frames_per_cycle()).max(1);
    let (mut traj, _) = generate_expert_demo(
        &script,
        &TaskConfig::truck_loading(),
        &Machine::default(),
        cycles,
        BENCH_NOISE_STD,
        seed,
    )
    .map_err(|e| anyhow!("bench demo: {e}"))?;
    traj.frames.truncate(frames);
    Ok(traj)
}

/// Wall time of clustering plus segmentation, best of `reps` runs.
pub fn time_segmentation(traj: &Trajectory, seed: u64, min_len: usize, reps: usize) -> Result<f64> {
    let opts = FitOptions {
        seed,
        ..FitOptions::default()
    };
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let model =
            fit_velocity_clusters(std::slice::from_ref(traj), &opts).map_err(|e| anyhow!("{e}"))?;
        let segs = segment_trajectory(traj, &model, min_len).map_err(|e| anyhow!("{e}"))?;
        std::hint::black_box(segs);
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub fn segmentation_timing(
    sizes: &[usize],
    seed: u64,
    min_len: usize,
    reps: usize,
) -> Result<Vec<TimingRow>> {
    sizes
        .iter()
        .map(|&n| {
            let traj = bench_trajectory(n, seed)?;
            Ok(TimingRow {
                frames: n,
                seconds: time_segmentation(&traj, seed, min_len, reps)?,
            })
        })
        .collect()
}

pub fn write_timing_csv(rows: &[TimingRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `time(2T) / time(T)` for every pair of sizes where one doubles the other.
pub fn doubling_ratios(rows: &[TimingRow]) -> Vec<(usize, f64)> {
    rows.iter()
        .filter_map(|a| {
            let b = rows.iter().find(|b| b.frames == 2 * a.frames)?;
            Some((a.frames, b.seconds / a.seconds))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n: usize,
    pub jitter: f64,
    pub config: BnirlConfig,
    pub truth: Vec<usize>,
    pub bnirl_mode: Vec<usize>,
    pub bnirl_mode_subgoals: Vec<usize>,
    pub bnirl_mode_frequency: f64,
    pub exact_map: Option<Vec<usize>>,
    /// Total variation between Gibbs frequencies and the exact posterior.
    pub gibbs_exact_tv: Option<f64>,
    pub dpmirl_lambda: f64,
    pub dpmirl_assignment: Vec<usize>,
    pub ari_bnirl_dpmirl: f64,
    pub ari_bnirl_truth: f64,
    pub ari_dpmirl_truth: f64,
}

/// Task with one object on each toy target.
pub fn toy_task() -> TaskConfig {
    let object = |name: &str, x: f64| TaskObject {
        name: name.into(),
        role: ObjectRole::Other,
        center: [x, 0.0, 0.0],
        bed_height: 0.0,
        radius: 1.0,
    };
    TaskConfig {
        objects: vec![object("target_a", 3.0), object("target_b", -3.0)],
    }
}

/// DPMIRL subgoal assignment of the toy states.
pub fn dpmirl_assignment(
    obs: &[BnirlObservation],
    task: &TaskConfig,
    lambda: f64,
) -> Result<Vec<usize>> {
    let set = ObservationSet {
        pairs: obs
            .iter()
            .map(|o| Observation {
                s: EndEffectorPose::from_array(o.s),
                a: ActionPrimitive::STATIONARY,
                demo: 0,
            })
            .collect(),
    };
    let (_, assignment) = infer_subgoals(&set, task, lambda).map_err(|e| anyhow!("dpmirl: {e}"))?;
    Ok(assignment)
}

pub fn bnirl_agreement(config: &BnirlConfig, jitter: f64) -> Result<AgreementReport> {
    let (obs, truth) = two_target_toy(jitter, config.seed);
    let samples = gibbs_sample_partitions(&obs, config).map_err(|e| anyhow!("bnirl: {e}"))?;
    let mode = posterior_mode(&samples).ok_or_else(|| anyhow!("bnirl produced no samples"))?;
    let freqs = partition_frequencies(&samples);
    let (exact_map, tv) = if obs.len() <= EXACT_MAX_POINTS {
        let exact = exact_posterior(&obs, config.alpha, config.concentration)
            .map_err(|e| anyhow!("{e}"))?;
        let map = exact
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(z, _)| z.clone());
        let mut tv = 0.0;
        for (z, p) in &exact {
            tv += (p - freqs.get(z).copied().unwrap_or(0.0)).abs();
        }
        tv += freqs
            .iter()
            .filter(|(z, _)| !exact.iter().any(|(e, _)| e == *z))
            .map(|(_, f)| f)
            .sum::<f64>();
        (map, Some(0.5 * tv))
    } else {
        (None, None)
    };
    let task = toy_task();
    let lambda = default_lambda(&task);
    let dp = canonicalize(&dpmirl_assignment(&obs, &task, lambda)?);
    Ok(AgreementReport {
        n: obs.len(),
        jitter,
        config: *config,
        ari_bnirl_dpmirl: adjusted_rand_index(&mode.z, &dp),
        ari_bnirl_truth: adjusted_rand_index(&mode.z, &truth),
        ari_dpmirl_truth: adjusted_rand_index(&dp, &truth),
        bnirl_mode_frequency: freqs.get(&mode.z).copied().unwrap_or(0.0),
        truth,
        bnirl_mode: mode.z,
        bnirl_mode_subgoals: mode.subgoals,
        exact_map,
        gibbs_exact_tv: tv,
        dpmirl_lambda: lambda,
        dpmirl_assignment: dp,
    })
}
