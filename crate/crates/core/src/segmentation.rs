//! Action-primitive segmentation of demonstrations.
//!
//! Each joint's pooled velocities are clustered into three groups with
//! k-means. The groups are relabelled by descending mean so that label 1 is
//! counterclockwise (positive), 2 stationary and 3 clockwise (negative). A
//! frame's joint is stationary when the stationary density exceeds `eta`,
//! otherwise it takes whichever moving cluster is more likely (ties go to
//! counterclockwise). Consecutive frames with the same primitive form a
//! segment, and runs shorter than `min_len` are absorbed into a neighbouring
//! segment.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::EndEffectorPose;
use crate::kmeans::kmeans_1d;
use crate::math::{exp, log, normal_logpdf, sq, sqrt, LN_2PI};
use crate::primitive::{ActionPrimitive, JointAction};
use crate::trajectory::Trajectory;
use crate::{Vec4, NUM_JOINTS};

/// Smallest cluster variance, (rad/s)^2.
pub const VAR_FLOOR: f64 = 1e-6;
/// Joints whose pooled velocity range is below this are always stationary.
pub const DEGENERATE_RANGE: f64 = 1e-4;
pub const DEFAULT_MIN_LEN: usize = 3;
pub const DEFAULT_RESTARTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentationError {
    #[error("joint {joint} has {count} pooled samples, need at least 3")]
    TooFewSamples { joint: usize, count: usize },
    #[error("trajectory has {0} frames, need at least 2")]
    TooShort(usize),
    #[error("eta must be positive and finite, got {0}")]
    BadEta(f64),
    #[error("calibration needs at least one labelled frame")]
    NoLabels,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct JointClusters {
    /// Means ordered counterclockwise, stationary, clockwise.
    pub mean: [f64; 3],
    pub var: [f64; 3],
    /// `label_map[i]` is the k-means cluster index that became label `i + 1`.
    pub label_map: [u8; 3],
    /// Density threshold on the stationary cluster.
    pub eta: f64,
    pub always_stationary: bool,
}

impl JointClusters {
    fn degenerate(mean: f64) -> Self {
        Self {
            mean: [mean; 3],
            var: [VAR_FLOOR; 3],
            label_map: [0, 1, 2],
            eta: default_eta(VAR_FLOOR),
            always_stationary: true,
        }
    }

    pub fn log_density(&self, label: usize, v: f64) -> f64 {
        normal_logpdf(v, self.mean[label], self.var[label])
    }

    pub fn classify(&self, v: f64) -> JointAction {
        if self.always_stationary || !v.is_finite() {
            return JointAction::Stationary;
        }
        if self.log_density(1, v) > log(self.eta) {
            return JointAction::Stationary;
        }
        if self.log_density(0, v) >= self.log_density(2, v) {
            JointAction::CounterClockwise
        } else {
            JointAction::Clockwise
        }
    }
}

/// Stationary-cluster density two standard deviations from its mean.
pub fn default_eta(stationary_var: f64) -> f64 {
    exp(-2.0 - 0.5 * (LN_2PI + log(stationary_var)))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct VelocityClusterModel {
    pub joints: [JointClusters; NUM_JOINTS],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub seed: u64,
    pub restarts: usize,
    /// Overrides the per-joint default threshold.
    pub eta: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            eta: None,
        }
    }
}

fn fit_joint(samples: &[f64], opts: &FitOptions, joint: usize) -> JointClusters {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    if hi - lo < DEGENERATE_RANGE {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        return JointClusters::degenerate(mean);
    }
    let km = kmeans_1d(
        samples,
        3,
        opts.restarts,
        opts.seed.wrapping_add(joint as u64),
    );
    let mut sums = [0.0; 3];
    let mut sq_sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for (&a, &x) in km.assignment.iter().zip(samples) {
        sums[a] += x;
        counts[a] += 1;
    }
    let mut means = [0.0; 3];
    for c in 0..3 {
        means[c] = if counts[c] > 0 {
            sums[c] / counts[c] as f64
        } else {
            km.centers[c]
        };
    }
    for (&a, &x) in km.assignment.iter().zip(samples) {
        sq_sums[a] += sq(x - means[a]);
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]));
    let mut out = JointClusters {
        mean: [0.0; 3],
        var: [0.0; 3],
        label_map: [0; 3],
        eta: 0.0,
        always_stationary: false,
    };
    for (label, &c) in order.iter().enumerate() {
        out.mean[label] = means[c];
        out.var[label] = if counts[c] > 0 {
            (sq_sums[c] / counts[c] as f64).max(VAR_FLOOR)
        } else {
            VAR_FLOOR
        };
        out.label_map[label] = c as u8;
    }
    out.eta = opts.eta.unwrap_or_else(|| default_eta(out.var[1]));
    out
}

/// Fits three velocity clusters per joint on frames pooled across `trajs`.
pub fn fit_velocity_clusters(
    trajs: &[Trajectory],
    opts: &FitOptions,
) -> Result<VelocityClusterModel, SegmentationError> {
    if let Some(eta) = opts.eta {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(SegmentationError::BadEta(eta));
        }
    }
    let count: usize = trajs.iter().map(|t| t.frames.len()).sum();
    let mut joints = [JointClusters::degenerate(0.0); NUM_JOINTS];
    let mut samples = Vec::with_capacity(count);
    for (j, slot) in joints.iter_mut().enumerate() {
        samples.clear();
        samples.extend(
            trajs
                .iter()
                .flat_map(|t| t.frames.iter().map(move |f| f.v[j])),
        );
        samples.retain(|x| x.is_finite());
        if samples.len() < 3 {
            return Err(SegmentationError::TooFewSamples {
                joint: j,
                count: samples.len(),
            });
        }
        *slot = fit_joint(&samples, opts, j);
    }
    Ok(VelocityClusterModel { joints })
}

impl VelocityClusterModel {
    pub fn classify(&self, v: &Vec4) -> ActionPrimitive {
        let mut e = [JointAction::Stationary; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            e[j] = self.joints[j].classify(v[j]);
        }
        ActionPrimitive(e)
    }

    /// Sets the same threshold on every joint.
    pub fn with_eta(mut self, eta: f64) -> Result<Self, SegmentationError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(SegmentationError::BadEta(eta));
        }
        for j in &mut self.joints {
            j.eta = eta;
        }
        Ok(self)
    }

    /// Picks each joint's `eta` to maximise per-joint accuracy on labelled
    /// velocities by sweeping the stationary log-density of every sample as
    /// a candidate cut.
    pub fn calibrate_eta(
        mut self,
        labelled: &[(Vec4, ActionPrimitive)],
    ) -> Result<Self, SegmentationError> {
        if labelled.is_empty() {
            return Err(SegmentationError::NoLabels);
        }
        for (j, jc) in self.joints.iter_mut().enumerate() {
            if jc.always_stationary {
                continue;
            }
            // (stationary log-density, label is stationary, moving side would be correct)
            let mut rows: Vec<(f64, bool, bool)> = labelled
                .iter()
                .map(|(v, p)| {
                    let x = v[j];
                    let lp2 = jc.log_density(1, x);
                    let side = if jc.log_density(0, x) >= jc.log_density(2, x) {
                        JointAction::CounterClockwise
                    } else {
                        JointAction::Clockwise
                    };
                    (lp2, p.0[j] == JointAction::Stationary, side == p.0[j])
                })
                .collect();
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            // threshold below every sample: everything stationary
            let mut correct: usize = rows.iter().filter(|r| r.1).count();
            let mut best = (correct, rows[0].0 - 1.0);
            for i in 0..rows.len() {
                // raise the cut past rows[i]: it now classifies as moving
                let r = rows[i];
                if r.1 {
                    correct -= 1;
                }
                if r.2 && !r.1 {
                    correct += 1;
                }
                let tied = i + 1 < rows.len() && rows[i + 1].0 == r.0;
                if !tied && correct > best.0 {
                    let cut = if i + 1 < rows.len() {
                        0.5 * (r.0 + rows[i + 1].0)
                    } else {
                        r.0 + 1.0
                    };
                    best = (correct, cut);
                }
            }
            jc.eta = exp(best.1);
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PrimitiveSegment {
    pub primitive: ActionPrimitive,
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    /// End-effector pose at `start_frame`.
    pub s: EndEffectorPose,
    pub mean_v: Vec4,
    pub var_v: Vec4,
}

impl PrimitiveSegment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Observation {
    pub s: EndEffectorPose,
    pub a: ActionPrimitive,
    /// Index of the source trajectory.
    pub demo: usize,
}

/// Time-ordered `(pose, primitive)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ObservationSet {
    pub pairs: Vec<Observation>,
}

impl ObservationSet {
    pub fn from_segments(demo: usize, segments: &[PrimitiveSegment]) -> Self {
        Self {
            pairs: segments
                .iter()
                .map(|s| Observation {
                    s: s.s,
                    a: s.primitive,
                    demo,
                })
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ObservationSet) {
        self.pairs.extend(other.pairs);
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Merges runs shorter than `min_len` into their neighbours. Returns
/// inclusive `(label, start, end)`.
///
/// Short runs between two long runs are split at the point that maximises
/// length-weighted `similarity` to the label they join; ties go to the
/// preceding run. Leading short runs join the first long run and trailing
/// ones the last.
pub fn debounce_with<T: Copy + PartialEq>(
    labels: &[T],
    min_len: usize,
    similarity: impl Fn(T, T) -> u32,
) -> Vec<(T, usize, usize)> {
    let mut runs: Vec<(T, usize, usize)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.0 == l => r.2 = i,
            _ => runs.push((l, i, i)),
        }
    }
    let weight = |r: &(T, usize, usize), to: T| similarity(r.0, to) as u64 * (r.2 - r.1 + 1) as u64;
    let mut out: Vec<(T, usize, usize)> = Vec::new();
    // short runs seen since the last long one
    let mut pending: Vec<(T, usize, usize)> = Vec::new();
    for &(l, start, end) in &runs {
        if end - start + 1 < min_len {
            pending.push((l, start, end));
            continue;
        }
        let start = match out.last_mut() {
            Some(last) => {
                // score of giving pending[..k] to `last` and the rest to `l`
                let mut score: u64 = pending.iter().map(|p| weight(p, l)).sum();
                let (mut best, mut best_k) = (score, 0);
                for (k, p) in pending.iter().enumerate() {
                    score = score + weight(p, last.0) - weight(p, l);
                    if score >= best {
                        (best, best_k) = (score, k + 1);
                    }
                }
                if best_k > 0 {
                    last.2 = pending[best_k - 1].2;
                }
                pending.get(best_k).map_or(start, |p| p.1)
            }
            None => pending.first().map_or(start, |p| p.1),
        };
        pending.clear();
        match out.last_mut() {
            Some(last) if last.0 == l => last.2 = end,
            _ => out.push((l, start, end)),
        }
    }
    if let (Some(last), Some(p)) = (out.last_mut(), pending.last()) {
        last.2 = p.2;
    }
    if out.is_empty() {
        if let Some(&(l, _, _)) = runs.iter().rev().max_by_key(|r| r.2 - r.1) {
            out.push((l, 0, labels.len() - 1));
        }
    }
    out
}

/// [`debounce_with`] scoring primitives by the number of joints they share.
pub fn debounce(
    labels: &[ActionPrimitive],
    min_len: usize,
) -> Vec<(ActionPrimitive, usize, usize)> {
    debounce_with(labels, min_len, |a, b| {
        a.0.iter().zip(&b.0).filter(|(x, y)| x == y).count() as u32
    })
}

/// Classifies every frame and cuts the trajectory into segments.
pub fn segment_trajectory(
    traj: &Trajectory,
    model: &VelocityClusterModel,
    min_len: usize,
) -> Result<Vec<PrimitiveSegment>, SegmentationError> {
    if traj.frames.len() < 2 {
        return Err(SegmentationError::TooShort(traj.frames.len()));
    }
    let labels: Vec<ActionPrimitive> = traj.frames.iter().map(|f| model.classify(&f.v)).collect();
    Ok(debounce(&labels, min_len)
        .into_iter()
        .map(|(primitive, start, end)| {
            let members = &traj.frames[start..=end];
            let n = members.len() as f64;
            let mut mean_v = [0.0; 4];
            let mut var_v = [0.0; 4];
            for j in 0..4 {
                mean_v[j] = members.iter().map(|f| f.v[j]).sum::<f64>() / n;
                var_v[j] = members.iter().map(|f| sq(f.v[j] - mean_v[j])).sum::<f64>() / n;
            }
            PrimitiveSegment {
                primitive,
                start_frame: start,
                end_frame: end,
                s: traj.frames[start].ee,
                mean_v,
                var_v,
            }
        })
        .collect())
}

/// Segments and the observation pairs they induce.
pub fn segment_with_observations(
    traj: &Trajectory,
    model: &VelocityClusterModel,
    min_len: usize,
    demo: usize,
) -> Result<(Vec<PrimitiveSegment>, ObservationSet), SegmentationError> {
    let segments = segment_trajectory(traj, model, min_len)?;
    let obs = ObservationSet::from_segments(demo, &segments);
    Ok((segments, obs))
}

/// Standard deviation helper for reporting.
pub fn cluster_std(jc: &JointClusters) -> [f64; 3] {
    jc.var.map(sqrt)
}

/// Per-frame labels before debouncing.
pub fn frame_labels(traj: &Trajectory, model: &VelocityClusterModel) -> Vec<ActionPrimitive> {
    traj.frames.iter().map(|f| model.classify(&f.v)).collect()
}

/// Debounced per-frame labels, i.e. the primitive of the segment that
/// contains each frame.
pub fn segment_labels(segments: &[PrimitiveSegment], len: usize) -> Vec<ActionPrimitive> {
    let mut out = vec![ActionPrimitive::STATIONARY; len];
    for s in segments {
        for l in &mut out[s.start_frame..=s.end_frame] {
            *l = s.primitive;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{generate_expert_demo, ExpertScript};
    use crate::kinematics::Machine;
    use crate::task::TaskConfig;
    use crate::trajectory::Frame;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn traj_from_velocities(vs: &[Vec4]) -> Trajectory {
        let mut t = Trajectory::new(25.0);
        for (k, v) in vs.iter().enumerate() {
            t.frames.push(Frame {
                t: k as f64 / 25.0,
                q: [0.0; 4],
                v: *v,
                ee: EndEffectorPose::from_array([k as f64, 0.0, 0.0, 0.0]),
            });
        }
        t
    }

    fn hand_model() -> VelocityClusterModel {
        let jc = JointClusters {
            mean: [0.5, 0.0, -0.5],
            var: [0.01; 3],
            label_map: [0, 1, 2],
            eta: default_eta(0.01),
            always_stationary: false,
        };
        VelocityClusterModel { joints: [jc; 4] }
    }

    #[test]
    fn recovers_three_separated_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut vs = Vec::new();
        for i in 0..3000 {
            let c = [0.5, 0.0, -0.5][i % 3];
            let x = c + noise.sample(&mut rng);
            vs.push([x, x, x, x]);
        }
        let m =
            fit_velocity_clusters(&[traj_from_velocities(&vs)], &FitOptions::default()).unwrap();
        for jc in &m.joints {
            assert!((jc.mean[0] - 0.5).abs() < 0.02, "{:?}", jc.mean);
            assert!(jc.mean[1].abs() < 0.02);
            assert!((jc.mean[2] + 0.5).abs() < 0.02);
            assert!(jc.mean[0] >= jc.mean[1] && jc.mean[1] >= jc.mean[2]);
            let mut lm = jc.label_map;
            lm.sort();
            assert_eq!(lm, [0, 1, 2]);
        }
    }

    #[test]
    fn flat_joint_is_always_stationary() {
        let vs: Vec<Vec4> = (0..50)
            .map(|i| [0.0, (i % 3) as f64 - 1.0, 0.0, 0.0])
            .collect();
        let m =
            fit_velocity_clusters(&[traj_from_velocities(&vs)], &FitOptions::default()).unwrap();
        assert!(m.joints[0].always_stationary);
        assert!(!m.joints[1].always_stationary);
        assert_eq!(m.joints[0].classify(3.0), JointAction::Stationary);
    }

    #[test]
    fn too_few_samples() {
        let vs = [[0.0; 4]; 2];
        assert_eq!(
            fit_velocity_clusters(&[traj_from_velocities(&vs)], &FitOptions::default()),
            Err(SegmentationError::TooFewSamples { joint: 0, count: 2 })
        );
    }

    #[test]
    fn stationary_mean_is_stationary() {
        let m = hand_model();
        assert_eq!(m.joints[0].classify(0.0), JointAction::Stationary);
    }

    // Densities at v = 0.45 with sigma 0.1: stationary N(0.45|0,0.01) = 4.0e-4,
    // eta = N(0.2|0,0.01) = 0.5399, ccw N(0.45|0.5,0.01) = 3.52, cw ~ 0.
    #[test]
    fn moving_sample_goes_to_the_nearer_side() {
        let m = hand_model();
        assert!((m.joints[0].eta - 0.539_909_665_131_880_5).abs() < 1e-12);
        assert_eq!(m.joints[0].classify(0.45), JointAction::CounterClockwise);
        assert_eq!(m.joints[0].classify(-0.45), JointAction::Clockwise);
        let p = m.classify(&[0.45, 0.0, 0.0, 0.0]);
        assert_eq!(p.codes(), [1, 2, 2, 2]);
    }

    #[test]
    fn far_tail_does_not_tie() {
        // both moving densities underflow in linear space at this distance
        let m = hand_model();
        assert_eq!(m.joints[0].classify(-40.0), JointAction::Clockwise);
        assert_eq!(m.joints[0].classify(40.0), JointAction::CounterClockwise);
    }

    #[test]
    fn constant_velocity_is_one_segment() {
        let vs = vec![[0.5, 0.0, -0.5, 0.0]; 40];
        let segs = segment_trajectory(&traj_from_velocities(&vs), &hand_model(), 3).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start_frame, segs[0].end_frame), (0, 39));
        assert_eq!(segs[0].primitive.codes(), [1, 2, 3, 2]);
    }

    #[test]
    fn short_runs_are_absorbed() {
        let eq = |a: i32, b: i32| u32::from(a == b);
        let l = [1, 1, 1, 1, 2, 1, 1, 1, 3, 3, 3, 3, 4, 4];
        assert_eq!(debounce_with(&l, 3, eq), vec![(1, 0, 7), (3, 8, 13)]);
        // leading short run goes into the first long one
        assert_eq!(debounce_with(&[9, 1, 1, 1], 3, eq), vec![(1, 0, 3)]);
        assert_eq!(debounce_with(&[1, 2], 3, eq), vec![(1, 0, 1)]);
        // a blip right after a change does not push the boundary back
        let l = [1, 1, 1, 2, 2, 9, 2, 2, 2, 2];
        assert_eq!(debounce_with(&l, 3, eq), vec![(1, 0, 2), (2, 3, 9)]);
        // nothing to prefer: the preceding run takes all
        let l = [1, 1, 1, 2, 2, 9, 3, 3, 3];
        assert_eq!(debounce_with(&l, 3, eq), vec![(1, 0, 5), (3, 6, 8)]);
        assert_eq!(debounce_with(&[1, 1, 1, 7, 8, 8], 3, eq), vec![(1, 0, 5)]);
    }

    #[test]
    fn noisy_frames_join_the_closer_primitive() {
        let a = ActionPrimitive::from_codes([1, 2, 2, 2]).unwrap();
        let b = ActionPrimitive::from_codes([2, 3, 2, 2]).unwrap();
        let b1 = ActionPrimitive::from_codes([2, 3, 2, 1]).unwrap();
        let b2 = ActionPrimitive::from_codes([2, 3, 2, 3]).unwrap();
        let l = [a, a, a, a, b1, b1, b2, b, b, b];
        assert_eq!(debounce(&l, 3), vec![(a, 0, 3), (b, 4, 9)]);
    }

    #[test]
    fn noiseless_demo_boundaries_match_script() {
        let script = ExpertScript::truck_loading();
        let (traj, oracle) = generate_expert_demo(
            &script,
            &TaskConfig::truck_loading(),
            &Machine::default(),
            5,
            0.0,
            3,
        )
        .unwrap();
        let model =
            fit_velocity_clusters(core::slice::from_ref(&traj), &FitOptions::default()).unwrap();
        let segs = segment_trajectory(&traj, &model, DEFAULT_MIN_LEN).unwrap();
        let starts: Vec<usize> = segs.iter().skip(1).map(|s| s.start_frame).collect();
        assert_eq!(starts, oracle.boundaries);
        let mut vocab: Vec<_> = segs.iter().map(|s| s.primitive).collect();
        vocab.sort();
        vocab.dedup();
        assert_eq!(vocab, script.vocabulary());
        for s in &segs {
            assert_eq!(s.s, traj.frames[s.start_frame].ee);
        }
    }

    #[test]
    fn calibration_separates_labelled_classes() {
        let m = hand_model();
        let labelled: Vec<(Vec4, ActionPrimitive)> = [-0.5, -0.3, -0.05, 0.0, 0.04, 0.3, 0.5]
            .iter()
            .map(|&x| {
                let code = if x > 0.1 {
                    1
                } else if x < -0.1 {
                    3
                } else {
                    2
                };
                ([x; 4], ActionPrimitive::from_codes([code; 4]).unwrap())
            })
            .collect();
        let cal = m.calibrate_eta(&labelled).unwrap();
        for (v, p) in &labelled {
            assert_eq!(cal.classify(v), *p);
        }
    }

    proptest::proptest! {
        #[test]
        fn debounce_tiles_the_input(labels in proptest::collection::vec(0u8..4, 1..80), min_len in 1usize..6) {
            let out = debounce_with(&labels, min_len, |a, b| u32::from(a == b));
            proptest::prop_assert_eq!(out[0].1, 0);
            proptest::prop_assert_eq!(out.last().unwrap().2, labels.len() - 1);
            for w in out.windows(2) {
                proptest::prop_assert_eq!(w[0].2 + 1, w[1].1);
                proptest::prop_assert!(w[0].0 != w[1].0);
            }
            if out.len() > 1 {
                // every kept label has a run of at least min_len inside its segment
                for &(l, a, b) in &out {
                    let longest = labels[a..=b].split(|x| *x != l).map(|r| r.len()).max().unwrap_or(0);
                    proptest::prop_assert!(longest >= min_len);
                }
            }
        }
    }
}
