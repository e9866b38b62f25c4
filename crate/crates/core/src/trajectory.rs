//! Uniformly sampled demonstration trajectories.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::EndEffectorPose;
use crate::{Vec4, JOINT_NAMES};

/// Allowed deviation of a frame interval from `1 / rate_hz`, seconds.
pub const SPACING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("sampling rate must be positive, got {0}")]
    BadRate(f64),
    #[error("expected 4 joint names, got {0}")]
    JointCount(usize),
    #[error("frame {index}: time {t} does not follow {prev}")]
    NonMonotone { index: usize, prev: f64, t: f64 },
    #[error("frame {index}: spacing {dt} differs from 1/rate")]
    Spacing { index: usize, dt: f64 },
    #[error("frame {0}: non-finite value")]
    NonFinite(usize),
    #[error("need at least 2 frames, got {0}")]
    TooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Frame {
    pub t: f64,
    pub q: Vec4,
    pub v: Vec4,
    pub ee: EndEffectorPose,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Trajectory {
    pub rate_hz: f64,
    pub joints: Vec<String>,
    pub frames: Vec<Frame>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub meta: BTreeMap<String, String>,
}

impl Trajectory {
    /// Empty trajectory with the canonical joint names.
    pub fn new(rate_hz: f64) -> Self {
        Self {
            rate_hz,
            joints: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            frames: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(TrajectoryError::BadRate(self.rate_hz));
        }
        if self.joints.len() != 4 {
            return Err(TrajectoryError::JointCount(self.joints.len()));
        }
        let dt = self.dt();
        for (i, f) in self.frames.iter().enumerate() {
            let finite = f.t.is_finite()
                && f.q.iter().chain(&f.v).all(|x| x.is_finite())
                && f.ee.is_finite();
            if !finite {
                return Err(TrajectoryError::NonFinite(i));
            }
            if i > 0 {
                let prev = self.frames[i - 1].t;
                if !(f.t > prev) {
                    return Err(TrajectoryError::NonMonotone {
                        index: i,
                        prev,
                        t: f.t,
                    });
                }
                if (f.t - prev - dt).abs() > SPACING_TOLERANCE {
                    return Err(TrajectoryError::Spacing {
                        index: i,
                        dt: f.t - prev,
                    });
                }
            }
        }
        Ok(())
    }

    /// Replace every `v` with central differences of `q`.
    pub fn recompute_velocities(&mut self) {
        let q: Vec<Vec4> = self.frames.iter().map(|f| f.q).collect();
        let v = central_differences(&q, self.dt());
        for (f, v) in self.frames.iter_mut().zip(v) {
            f.v = v;
        }
    }
}

/// Central differences in the interior, one-sided at the ends.
pub fn central_differences(q: &[Vec4], dt: f64) -> Vec<Vec4> {
    let n = q.len();
    if n < 2 {
        return alloc::vec![[0.0; 4]; n];
    }
    (0..n)
        .map(|i| {
            let (a, b, span) = if i == 0 {
                (0, 1, dt)
            } else if i == n - 1 {
                (n - 2, n - 1, dt)
            } else {
                (i - 1, i + 1, 2.0 * dt)
            };
            let mut v = [0.0; 4];
            for j in 0..4 {
                v[j] = (q[b][j] - q[a][j]) / span;
            }
            v
        })
        .collect()
}

fn lerp4(a: &Vec4, b: &Vec4, w: f64) -> Vec4 {
    let mut out = [0.0; 4];
    for j in 0..4 {
        out[j] = a[j] + (b[j] - a[j]) * w;
    }
    out
}

/// Linear resampling of `q` and `ee`; velocities are recomputed at the new
/// rate. Resampling to the current rate returns the input unchanged.
pub fn resample(traj: &Trajectory, target_hz: f64) -> Result<Trajectory, TrajectoryError> {
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(TrajectoryError::BadRate(target_hz));
    }
    if traj.frames.len() < 2 {
        return Err(TrajectoryError::TooShort(traj.frames.len()));
    }
    if target_hz == traj.rate_hz {
        return Ok(traj.clone());
    }
    let last = (traj.frames.len() - 1) as f64;
    let ratio = traj.rate_hz / target_hz;
    let t0 = traj.frames[0].t;
    let mut out = Trajectory {
        rate_hz: target_hz,
        joints: traj.joints.clone(),
        frames: Vec::new(),
        meta: traj.meta.clone(),
    };
    let mut k = 0usize;
    loop {
        let pos = k as f64 * ratio;
        if pos > last + 1e-9 {
            break;
        }
        let i = (crate::math::floor(pos) as usize).min(traj.frames.len() - 2);
        let w = (pos - i as f64).clamp(0.0, 1.0);
        let (a, b) = (&traj.frames[i], &traj.frames[i + 1]);
        out.frames.push(Frame {
            t: t0 + k as f64 / target_hz,
            q: lerp4(&a.q, &b.q, w),
            v: [0.0; 4],
            ee: EndEffectorPose::from_array(lerp4(&a.ee.to_array(), &b.ee.to_array(), w)),
        });
        k += 1;
    }
    out.recompute_velocities();
    Ok(out)
}
