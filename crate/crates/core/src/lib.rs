//! Core algorithms for teaching excavator operators from expert demonstrations.
//!
//! The pipeline runs offline in four stages and then online in a feedback loop:
//!
//! 1. [`segmentation`] fits per-joint velocity clusters and cuts each
//!    demonstration into action-primitive segments, yielding `(pose, primitive)`
//!    observation pairs.
//! 2. [`dpmirl`] splits the observations by nearest task object and runs
//!    [`dp_means`] per object, producing Gaussian subgoals.
//! 3. [`policy`] counts subgoal and primitive transitions into a two-level
//!    Markov model with Gaussian velocity emissions.
//! 4. [`engine`] tracks a live operator against the model and emits
//!    instructions, then scores sessions.
//!
//! [`bnirl`] is a small-instance Gibbs sampler used as a comparison baseline.
//! [`kinematics`], [`sim`] and [`demo`] provide the simulated machine and the
//! scripted expert that serves as ground truth.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! network service live in the `coteach` crate.
#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bnirl;
pub mod demo;
pub mod dp_means;
pub mod dpmirl;
pub mod engine;
pub mod kinematics;
pub mod kmeans;
pub mod math;
pub mod partition;
pub mod policy;
pub mod primitive;
pub mod segmentation;
pub mod sim;
pub mod task;
pub mod trajectory;

pub use kinematics::{forward_kinematics, EndEffectorPose, JointLimits, JointState, LinkParams};
pub use primitive::{ActionPrimitive, JointAction};
pub use task::{ObjectRole, TaskConfig, TaskObject};
pub use trajectory::{Frame, Trajectory};

/// Number of actuated joints: turret, boom, arm, bucket.
pub const NUM_JOINTS: usize = 4;

/// Canonical demonstration sampling rate.
pub const DEFAULT_RATE_HZ: f64 = 25.0;

/// Joint names in canonical order.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = ["turret", "boom", "arm", "bucket"];

/// A 4-vector, used for joint quantities and for poses in feature space.
pub type Vec4 = [f64; NUM_JOINTS];
