//! Real-time instruction loop and session scoring.
//!
//! A [`Session`] owns a simulated machine. Each step applies the operator's
//! axis commands, classifies the resulting joint velocities into a primitive
//! and updates a small tracker:
//!
//! * `current` is the last committed primitive, `previous` the one before.
//! * A differing primitive is held as `pending` until it has been seen for
//!   `min_len` consecutive frames, mirroring the segmentation debounce.
//! * Every primitive is tied to the subgoal most likely at the pose where it
//!   began, the same rule used to label segments when learning.
//!
//! The desired primitive then comes from the policy:
//!
//! * while a new primitive from the subgoal's vocabulary is pending, the
//!   successor of `current`;
//! * when the pose has reached a different subgoal's region, that subgoal's
//!   entry row. Singleton subgoals only count as reached within
//!   [`ARRIVAL_FLOOR`] of their mean;
//! * otherwise the successor of `previous`, or the entry row if `current`
//!   began at a different subgoal than `previous`.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpmirl::{to_object_frame, SubgoalIndex, SubgoalSet};
use crate::kinematics::{EndEffectorPose, JointState, Machine};
use crate::math::{fabs, Gaussian4};
use crate::policy::{InstructionPolicyModel, PolicyError};
use crate::primitive::ActionPrimitive;
use crate::segmentation::{debounce, VelocityClusterModel, DEFAULT_MIN_LEN};
use crate::sim::{EventKind, SimError, SimEvent, SimState};
use crate::task::TaskConfig;
use crate::trajectory::Trajectory;
use crate::Vec4;

/// 99% quantile of the chi-squared distribution with four degrees of freedom.
pub const CHI2_4_99: f64 = 13.2767;
/// Standard deviation added to a subgoal's covariance when testing arrival.
pub const ARRIVAL_FLOOR: f64 = 1e-3;
/// Standard deviation added to the home subgoal when detecting cycle ends.
pub const HOME_REGION_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("model subgoals were learned for a different task layout")]
    TaskMismatch,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("subgoal set is empty or degenerate")]
    BadSubgoals,
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum InstructionStyle {
    #[default]
    Bars,
    Circles,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AxisInstruction {
    /// -1, 0 or +1.
    pub direction: i8,
    /// Fraction of full deflection, in `[0, 1]`.
    pub magnitude: f64,
    /// The operator's current primitive agrees with `desired` on this axis.
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Instruction {
    pub seq: u64,
    pub t: f64,
    pub subgoal: usize,
    pub desired: ActionPrimitive,
    pub per_axis: [AxisInstruction; 4],
    pub style: InstructionStyle,
    /// Joint velocity drawn from the emission of `(subgoal, desired)`.
    pub velocity: Vec4,
}

impl Instruction {
    pub fn all_matched(&self) -> bool {
        self.per_axis.iter().all(|a| a.matched)
    }
}

/// Everything the engine needs at run time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EngineModel {
    pub policy: InstructionPolicyModel,
    pub clusters: VelocityClusterModel,
    pub min_len: usize,
}

impl EngineModel {
    pub fn new(policy: InstructionPolicyModel, clusters: VelocityClusterModel) -> Self {
        Self {
            policy,
            clusters,
            min_len: DEFAULT_MIN_LEN,
        }
    }

    pub fn subgoals(&self) -> &SubgoalSet {
        &self.policy.subgoals
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SessionConfig {
    pub seed: u64,
    pub style: InstructionStyle,
    /// Initial joint angles.
    pub home: Vec4,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LogRecord {
    pub seq: u64,
    pub t: f64,
    pub joint: JointState,
    pub pose: EndEffectorPose,
    pub axes: Vec4,
    /// Primitive classified from `joint.v`, before debouncing.
    pub observed: ActionPrimitive,
    /// Instruction issued after this state.
    pub instruction: Instruction,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SessionLog {
    pub seed: u64,
    pub style: InstructionStyle,
    pub min_len: usize,
    pub initial: JointState,
    pub initial_pose: EndEffectorPose,
    pub initial_instruction: Instruction,
    pub records: Vec<LogRecord>,
}

impl SessionLog {
    /// Instruction on display when the input of record `k` was given.
    pub fn active_instruction(&self, k: usize) -> &Instruction {
        if k == 0 {
            &self.initial_instruction
        } else {
            &self.records[k - 1].instruction
        }
    }

    pub fn axes(&self) -> Vec<Vec4> {
        self.records.iter().map(|r| r.axes).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    primitive: ActionPrimitive,
    count: usize,
    subgoal: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Tracker {
    current: Option<ActionPrimitive>,
    previous: Option<ActionPrimitive>,
    current_subgoal: usize,
    previous_subgoal: Option<usize>,
    pending: Option<Pending>,
}

/// Where the next instruction is read from.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Context {
    subgoal: usize,
    prev: Option<ActionPrimitive>,
}

/// One live operator session. Sessions share the model read-only.
#[derive(Debug, Clone)]
pub struct Session {
    model: Arc<EngineModel>,
    index: SubgoalIndex,
    arrival: Vec<Gaussian4>,
    task: TaskConfig,
    machine: Machine,
    config: SessionConfig,
    sim: SimState,
    tracker: Tracker,
    last_pose: EndEffectorPose,
    rng: ChaCha8Rng,
    seq: u64,
    instruction: Instruction,
    log: SessionLog,
}

/// Subgoal Gaussians widened by `floor` on every axis. With `prior_free`,
/// singleton subgoals drop their prior covariance and keep only the floor.
fn inflated(sgs: &SubgoalSet, floor: f64, prior_free: bool) -> Result<Vec<Gaussian4>, EngineError> {
    sgs.subgoals
        .iter()
        .map(|sg| {
            let mut cov = if prior_free && sg.member_count < 2 {
                [[0.0; 4]; 4]
            } else {
                sg.sigma
            };
            for (i, row) in cov.iter_mut().enumerate() {
                row[i] += floor * floor;
            }
            Gaussian4::new(sg.mu, &cov).ok_or(EngineError::BadSubgoals)
        })
        .collect()
}

fn same_layout(a: &TaskConfig, b: &TaskConfig) -> bool {
    a.objects.len() == b.objects.len()
        && a.objects
            .iter()
            .zip(&b.objects)
            .all(|(x, y)| x.name == y.name && x.center == y.center)
}

impl Session {
    pub fn start(
        model: Arc<EngineModel>,
        task: TaskConfig,
        machine: Machine,
        config: SessionConfig,
    ) -> Result<Self, EngineError> {
        if !same_layout(&model.policy.subgoals.task, &task) {
            return Err(EngineError::TaskMismatch);
        }
        let index = model
            .policy
            .subgoals
            .index()
            .map_err(|_| EngineError::BadSubgoals)?;
        if index.is_empty() {
            return Err(EngineError::BadSubgoals);
        }
        let arrival = inflated(&model.policy.subgoals, ARRIVAL_FLOOR, true)?;
        let sim = SimState::at_rest(config.home, &machine)?;
        let placeholder = Instruction {
            seq: 0,
            t: sim.joint.t,
            subgoal: 0,
            desired: ActionPrimitive::STATIONARY,
            per_axis: [AxisInstruction {
                direction: 0,
                magnitude: 0.0,
                matched: true,
            }; 4],
            style: config.style,
            velocity: [0.0; 4],
        };
        let log = SessionLog {
            seed: config.seed,
            style: config.style,
            min_len: model.min_len,
            initial: sim.joint,
            initial_pose: sim.pose,
            initial_instruction: placeholder.clone(),
            records: Vec::new(),
        };
        let mut session = Self {
            index,
            arrival,
            task,
            machine,
            config,
            last_pose: sim.pose,
            sim,
            tracker: Tracker::default(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            seq: 0,
            instruction: placeholder,
            log,
            model,
        };
        let (joint, pose) = (session.sim.joint, session.sim.pose);
        let observed = session.track(&joint, &pose);
        let first = session.instruct(observed, joint.t, None)?;
        session.instruction = first.clone();
        session.log.initial_instruction = first;
        Ok(session)
    }

    pub fn instruction(&self) -> &Instruction {
        &self.instruction
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn model(&self) -> &EngineModel {
        &self.model
    }

    pub fn task(&self) -> &TaskConfig {
        &self.task
    }

    /// Advances the simulator one tick with the given axis commands and
    /// returns the new instruction along with the tick's events.
    pub fn step(&mut self, axes: &Vec4) -> Result<(Instruction, Vec<SimEvent>), EngineError> {
        let report = self
            .sim
            .step(axes, self.config.dt, &self.task, &self.machine)?;
        let (joint, pose) = (self.sim.joint, self.sim.pose);
        let instruction = self.on_state_update(&joint, &pose, axes, report.events.clone());
        Ok((instruction, report.events))
    }

    /// Feeds an externally measured state. Appends a log record.
    pub fn on_state_update(
        &mut self,
        joint: &JointState,
        pose: &EndEffectorPose,
        axes: &Vec4,
        events: Vec<SimEvent>,
    ) -> Instruction {
        let observed = self.track(joint, pose);
        let fallback = self.instruction.clone();
        let instruction = self
            .instruct(observed, joint.t, Some(pose))
            .unwrap_or_else(|_| {
                // keep showing the last valid instruction
                let mut i = fallback;
                i.seq = self.seq + 1;
                i.t = joint.t;
                for (a, (d, o)) in i
                    .per_axis
                    .iter_mut()
                    .zip(i.desired.0.iter().zip(observed.0))
                {
                    a.matched = *d == o;
                }
                i
            });
        self.seq = instruction.seq;
        self.instruction = instruction.clone();
        self.log.records.push(LogRecord {
            seq: instruction.seq,
            t: joint.t,
            joint: *joint,
            pose: *pose,
            axes: *axes,
            observed,
            instruction: instruction.clone(),
            events,
        });
        instruction
    }

    fn track(&mut self, joint: &JointState, pose: &EndEffectorPose) -> ActionPrimitive {
        let r = self.model.clusters.classify(&joint.v);
        let t = &mut self.tracker;
        if t.current == Some(r) {
            t.pending = None;
        } else {
            let p = match t.pending {
                Some(mut p) if p.primitive == r => {
                    p.count += 1;
                    p
                }
                // the primitive began at the pose before this step
                _ => Pending {
                    primitive: r,
                    count: 1,
                    subgoal: self.index.most_likely(&self.last_pose).unwrap_or(0),
                },
            };
            if t.current.is_none() || p.count >= self.model.min_len {
                t.previous = t.current;
                t.previous_subgoal = t.current.map(|_| t.current_subgoal);
                t.current = Some(r);
                t.current_subgoal = p.subgoal;
                t.pending = None;
            } else {
                t.pending = Some(p);
            }
        }
        self.last_pose = *pose;
        r
    }

    fn arrived_at(&self, pose: &EndEffectorPose) -> Option<usize> {
        let g = self.index.most_likely(pose)?;
        if g == self.tracker.current_subgoal {
            return None;
        }
        let sg = &self.model.policy.subgoals.subgoals[g];
        let x = to_object_frame(pose, &self.task.objects[sg.object]);
        (self.arrival[g].mahalanobis_sq(&x) <= CHI2_4_99).then_some(g)
    }

    fn context(&self, pose: Option<&EndEffectorPose>) -> Context {
        let t = &self.tracker;
        if let Some(p) = t.pending {
            let known = self
                .model
                .policy
                .chain(p.subgoal)
                .is_ok_and(|c| c.position(&p.primitive).is_some());
            if known {
                let prev = if p.subgoal == t.current_subgoal {
                    t.current
                } else {
                    None
                };
                return Context {
                    subgoal: p.subgoal,
                    prev,
                };
            }
        }
        if let Some(g) = pose.and_then(|p| self.arrived_at(p)) {
            return Context {
                subgoal: g,
                prev: None,
            };
        }
        let prev = if t.previous_subgoal == Some(t.current_subgoal) {
            t.previous
        } else {
            None
        };
        Context {
            subgoal: t.current_subgoal,
            prev,
        }
    }

    fn instruct(
        &mut self,
        observed: ActionPrimitive,
        t: f64,
        pose: Option<&EndEffectorPose>,
    ) -> Result<Instruction, EngineError> {
        let ctx = self.context(pose);
        let policy = &self.model.policy;
        let (_, desired) = policy.next_primitive(ctx.subgoal, ctx.prev)?;
        let mean = policy
            .velocity_mean(ctx.subgoal, desired)
            .unwrap_or([0.0; 4]);
        let velocity = policy
            .sample_velocity_with(ctx.subgoal, desired, &mut self.rng)
            .unwrap_or(mean);
        let mut per_axis = [AxisInstruction {
            direction: 0,
            magnitude: 0.0,
            matched: false,
        }; 4];
        for (j, a) in per_axis.iter_mut().enumerate() {
            a.direction = desired.0[j].direction();
            a.magnitude = (fabs(mean[j]) / self.machine.max_speed[j]).clamp(0.0, 1.0);
            a.matched = desired.0[j] == observed.0[j];
        }
        Ok(Instruction {
            seq: if pose.is_some() { self.seq + 1 } else { 0 },
            t,
            subgoal: ctx.subgoal,
            desired,
            per_axis,
            style: self.config.style,
            velocity,
        })
    }
}

/// Axis commands that reproduce a trajectory's joint velocities.
pub fn trajectory_axes(traj: &Trajectory, machine: &Machine) -> Vec<Vec4> {
    traj.frames
        .iter()
        .map(|f| {
            let mut a = [0.0; 4];
            for j in 0..4 {
                a[j] = f.v[j] / machine.max_speed[j];
            }
            a
        })
        .collect()
}

/// Runs a sequence of axis commands through a fresh session.
pub fn replay_axes(
    model: Arc<EngineModel>,
    task: &TaskConfig,
    machine: &Machine,
    config: SessionConfig,
    axes: &[Vec4],
) -> Result<SessionLog, EngineError> {
    let mut session = Session::start(model, task.clone(), *machine, config)?;
    for a in axes {
        session.step(a)?;
    }
    Ok(session.into_log())
}

/// Drives a session with a recorded demonstration, starting from its first
/// joint configuration.
pub fn replay_demo(
    model: Arc<EngineModel>,
    task: &TaskConfig,
    machine: &Machine,
    traj: &Trajectory,
    seed: u64,
) -> Result<SessionLog, EngineError> {
    let first = traj.frames.first().ok_or(EngineError::EmptyTrajectory)?;
    let config = SessionConfig {
        seed,
        style: InstructionStyle::Bars,
        home: first.q,
        dt: traj.dt(),
    };
    replay_axes(
        model,
        task,
        machine,
        config,
        &trajectory_axes(traj, machine),
    )
}

/// Debounced primitive of every record, as segmentation would label it.
pub fn executed_primitives(log: &SessionLog) -> Vec<ActionPrimitive> {
    let observed: Vec<ActionPrimitive> = log.records.iter().map(|r| r.observed).collect();
    let mut out = Vec::with_capacity(observed.len());
    for (p, start, end) in debounce(&observed, log.min_len.max(1)) {
        out.extend(core::iter::repeat_n(p, end - start + 1));
    }
    out
}

/// Fraction of records whose executed primitive equals the instruction on
/// display when its input was given.
pub fn instruction_agreement(log: &SessionLog) -> f64 {
    if log.records.is_empty() {
        return 1.0;
    }
    let executed = executed_primitives(log);
    let hits = (0..log.records.len())
        .filter(|&k| log.active_instruction(k).desired == executed[k])
        .count();
    hits as f64 / log.records.len() as f64
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Metrics {
    pub cycle_times: Vec<f64>,
    pub actions_per_cycle: Vec<usize>,
    pub erroneous_actions_per_cycle: Vec<usize>,
    pub dump_heights: Vec<f64>,
}

impl Metrics {
    pub fn completed_cycles(&self) -> usize {
        self.cycle_times.len()
    }
}

/// Scores a session.
///
/// The home subgoal is the one most likely at the initial pose. A cycle
/// closes after a dump, at the record closest to home during the first
/// visit to the home region (the home subgoal widened by
/// [`HOME_REGION_FLOOR`], chi-squared 99%). Actions are the debounced
/// segments of the observed primitives that start inside the cycle; an
/// action is erroneous when it differs from the instruction on display at
/// its first record. Each cycle reports the height of the dump that armed it.
pub fn compute_metrics(log: &SessionLog, sgs: &SubgoalSet) -> Result<Metrics, EngineError> {
    let index = sgs.index().map_err(|_| EngineError::BadSubgoals)?;
    let home = index
        .most_likely(&log.initial_pose)
        .ok_or(EngineError::BadSubgoals)?;
    let region = inflated(sgs, HOME_REGION_FLOOR, false)?.swap_remove(home);
    let home_object = &sgs.task.objects[sgs.subgoals[home].object];

    let mut ends: Vec<(usize, Option<f64>)> = Vec::new();
    let mut armed: Option<Option<f64>> = None;
    let mut best: Option<(usize, f64)> = None;
    for (k, rec) in log.records.iter().enumerate() {
        if armed.is_none() {
            if let Some(ev) = rec.events.iter().find(|e| e.kind == EventKind::Dumped) {
                armed = Some(ev.dump_height);
            }
            continue;
        }
        let d2 = region.mahalanobis_sq(&to_object_frame(&rec.pose, home_object));
        if d2 <= CHI2_4_99 {
            if best.is_none_or(|(_, b)| d2 < b) {
                best = Some((k, d2));
            }
        } else if let Some((b, _)) = best.take() {
            ends.push((b, armed.take().flatten()));
        }
    }
    if let (Some((b, _)), Some(h)) = (best, armed) {
        ends.push((b, h));
    }

    let observed: Vec<ActionPrimitive> = log.records.iter().map(|r| r.observed).collect();
    let segments = debounce(&observed, log.min_len.max(1));
    let mut m = Metrics::default();
    let mut start_t = log.initial.t;
    let mut lo = 0usize;
    for (end, height) in ends {
        m.cycle_times.push(log.records[end].t - start_t);
        let inside = segments.iter().filter(|s| s.1 >= lo && s.1 <= end);
        let (mut n, mut wrong) = (0, 0);
        for s in inside {
            n += 1;
            if log.active_instruction(s.1).desired != s.0 {
                wrong += 1;
            }
        }
        m.actions_per_cycle.push(n);
        m.erroneous_actions_per_cycle.push(wrong);
        if let Some(h) = height {
            m.dump_heights.push(h);
        }
        start_t = log.records[end].t;
        lo = end + 1;
    }
    Ok(m)
}
