//! Subgoal discovery by DP-means in object frames.
//!
//! Observation poses are split by nearest object center and shifted into
//! that object's frame (position relative to the center, bucket angle left
//! absolute). DP-means runs independently per object and every resulting
//! cluster becomes a Gaussian subgoal.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp_means::{dp_means_cluster, DpMeansConfig, DpMeansError};
use crate::kinematics::EndEffectorPose;
use crate::math::{sq, Gaussian4, Mat4};
use crate::segmentation::ObservationSet;
use crate::task::{TaskConfig, TaskObject};
use crate::Vec4;

/// Relative covariance jitter added to every fitted subgoal.
pub const COV_JITTER: f64 = 1e-6;
/// Absolute lower bound on the jitter.
pub const COV_JITTER_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpmirlError {
    #[error("no observations")]
    Empty,
    #[error(transparent)]
    DpMeans(#[from] DpMeansError),
    #[error("subgoal {0} has a covariance that is not positive definite")]
    NotPositiveDefinite(usize),
    #[error("subgoal id {0} out of range")]
    UnknownSubgoal(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Subgoal {
    pub id: usize,
    pub object: usize,
    /// `(x, y, z)` relative to the object center, then absolute `phi`.
    pub mu: Vec4,
    pub sigma: Mat4,
    pub member_count: usize,
}

impl Subgoal {
    pub fn gaussian(&self) -> Option<Gaussian4> {
        Gaussian4::new(self.mu, &self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SubgoalSet {
    pub subgoals: Vec<Subgoal>,
    pub task: TaskConfig,
    pub lambda: f64,
}

/// Observations that fell closest to one object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectSubset {
    /// Indices into the observation set.
    pub indices: Vec<usize>,
    /// Object-frame feature vectors, aligned with `indices`.
    pub states: Vec<Vec4>,
}

pub fn to_object_frame(pose: &EndEffectorPose, object: &TaskObject) -> Vec4 {
    [
        pose.x - object.center[0],
        pose.y - object.center[1],
        pose.z - object.center[2],
        pose.phi,
    ]
}

pub fn from_object_frame(state: &Vec4, object: &TaskObject) -> EndEffectorPose {
    EndEffectorPose {
        x: state[0] + object.center[0],
        y: state[1] + object.center[1],
        z: state[2] + object.center[2],
        phi: state[3],
    }
}

/// One subset per task object, in object order. Subsets may be empty.
pub fn partition_by_object(obs: &ObservationSet, task: &TaskConfig) -> Vec<ObjectSubset> {
    let mut out = vec![ObjectSubset::default(); task.objects.len()];
    for (i, o) in obs.pairs.iter().enumerate() {
        let j = task.nearest_object(&o.s.position());
        out[j].indices.push(i);
        out[j].states.push(to_object_frame(&o.s, &task.objects[j]));
    }
    out
}

/// `(0.25 * nearest center separation)^2`. With a single object the object
/// radius stands in for the separation.
pub fn default_lambda(task: &TaskConfig) -> f64 {
    let sep = task
        .min_center_separation()
        .unwrap_or_else(|| task.objects.first().map_or(1.0, |o| o.radius));
    sq(0.25 * sep)
}

fn fit_covariance(members: &[Vec4], mean: &Vec4, lambda: f64) -> Mat4 {
    let mut cov = [[0.0; 4]; 4];
    if members.len() < 2 {
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = lambda / 16.0;
        }
        return cov;
    }
    let n = members.len() as f64;
    for m in members {
        for i in 0..4 {
            for j in 0..4 {
                cov[i][j] += (m[i] - mean[i]) * (m[j] - mean[j]) / n;
            }
        }
    }
    let trace: f64 = (0..4).map(|i| cov[i][i]).sum();
    let eps = (COV_JITTER * trace / 4.0).max(COV_JITTER_FLOOR);
    for (i, row) in cov.iter_mut().enumerate() {
        row[i] += eps;
    }
    cov
}

/// Runs DP-means per object and returns the subgoals together with the
/// subgoal id of every observation.
pub fn infer_subgoals(
    obs: &ObservationSet,
    task: &TaskConfig,
    lambda: f64,
) -> Result<(SubgoalSet, Vec<usize>), DpmirlError> {
    if obs.is_empty() {
        return Err(DpmirlError::Empty);
    }
    let config = DpMeansConfig::new(lambda);
    config.validate()?;
    let mut subgoals = Vec::new();
    let mut assignment = vec![usize::MAX; obs.len()];
    for (object, subset) in partition_by_object(obs, task).iter().enumerate() {
        if subset.states.is_empty() {
            continue;
        }
        let result = dp_means_cluster(&subset.states, &config)?;
        let base = subgoals.len();
        for (c, centroid) in result.centroids.iter().enumerate() {
            let members: Vec<Vec4> = subset
                .states
                .iter()
                .zip(&result.assignment)
                .filter(|(_, &a)| a == c)
                .map(|(s, _)| *s)
                .collect();
            let mu = [centroid[0], centroid[1], centroid[2], centroid[3]];
            let id = base + c;
            let sg = Subgoal {
                id,
                object,
                mu,
                sigma: fit_covariance(&members, &mu, lambda),
                member_count: members.len(),
            };
            if sg.gaussian().is_none() {
                return Err(DpmirlError::NotPositiveDefinite(id));
            }
            subgoals.push(sg);
        }
        for (&i, &c) in subset.indices.iter().zip(&result.assignment) {
            assignment[i] = base + c;
        }
    }
    Ok((
        SubgoalSet {
            subgoals,
            task: task.clone(),
            lambda,
        },
        assignment,
    ))
}

/// Log density of `pose` under `sg`, evaluated in the subgoal's object frame.
pub fn subgoal_loglik(pose: &EndEffectorPose, sg: &Subgoal, task: &TaskConfig) -> f64 {
    let x = to_object_frame(pose, &task.objects[sg.object]);
    sg.gaussian().map_or(f64::NEG_INFINITY, |g| g.log_pdf(&x))
}

impl SubgoalSet {
    pub fn len(&self) -> usize {
        self.subgoals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgoals.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&Subgoal, DpmirlError> {
        self.subgoals.get(id).ok_or(DpmirlError::UnknownSubgoal(id))
    }

    pub fn loglik(&self, pose: &EndEffectorPose, id: usize) -> Result<f64, DpmirlError> {
        Ok(subgoal_loglik(pose, self.get(id)?, &self.task))
    }

    /// Subgoal mean expressed in the base frame.
    pub fn world_mean(&self, id: usize) -> Result<EndEffectorPose, DpmirlError> {
        let sg = self.get(id)?;
        Ok(from_object_frame(&sg.mu, &self.task.objects[sg.object]))
    }

    /// Precomputed Gaussians for repeated queries.
    pub fn index(&self) -> Result<SubgoalIndex, DpmirlError> {
        let gaussians = self
            .subgoals
            .iter()
            .map(|sg| sg.gaussian().ok_or(DpmirlError::NotPositiveDefinite(sg.id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SubgoalIndex {
            objects: self.subgoals.iter().map(|s| s.object).collect(),
            gaussians,
            task: self.task.clone(),
        })
    }
}

/// Cached Cholesky factors of a subgoal set.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgoalIndex {
    objects: Vec<usize>,
    gaussians: Vec<Gaussian4>,
    task: TaskConfig,
}

impl SubgoalIndex {
    pub fn loglik(&self, pose: &EndEffectorPose, id: usize) -> f64 {
        let x = to_object_frame(pose, &self.task.objects[self.objects[id]]);
        self.gaussians[id].log_pdf(&x)
    }

    pub fn most_likely(&self, pose: &EndEffectorPose) -> Option<usize> {
        argmax_lowest((0..self.gaussians.len()).map(|id| self.loglik(pose, id)))
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

fn argmax_lowest(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Argmax of [`subgoal_loglik`]; ties go to the lowest id. `None` for an
/// empty set.
pub fn most_likely_subgoal(pose: &EndEffectorPose, sgs: &SubgoalSet) -> Option<usize> {
    argmax_lowest(
        sgs.subgoals
            .iter()
            .map(|sg| subgoal_loglik(pose, sg, &sgs.task)),
    )
}
