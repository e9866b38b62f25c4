//! Kinematic task-space simulator with a two-scalar sand model.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{forward_kinematics, EndEffectorPose, JointState, Machine};
use crate::task::{ObjectRole, TaskConfig};
use crate::Vec4;

/// Fraction of the truck filled by one full bucket.
pub const FILL_PER_DUMP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("initial joint angles are outside the joint limits")]
    OutOfLimits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EventKind {
    Scooped,
    Dumped,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SimEvent {
    pub t: f64,
    pub kind: EventKind,
    /// Bucket height above the truck bed, set for dump events.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub dump_height: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub joint: JointState,
    pub pose: EndEffectorPose,
    pub bucket_load: f64,
    pub truck_fill: f64,
    pub events: Vec<SimEvent>,
    /// Set when the last step clamped any joint at a limit.
    pub limit_hit: bool,
    in_collision: bool,
}

/// What happened during a single step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub events: Vec<SimEvent>,
    pub clamped: [bool; 4],
}

impl SimState {
    /// Machine at rest at `q`, empty bucket and truck.
    pub fn at_rest(q: Vec4, machine: &Machine) -> Result<Self, SimError> {
        if !machine.limits.contains(&q) {
            return Err(SimError::OutOfLimits);
        }
        Ok(Self {
            joint: JointState {
                t: 0.0,
                q,
                v: [0.0; 4],
            },
            pose: forward_kinematics(&q, &machine.links),
            bucket_load: 0.0,
            truck_fill: 0.0,
            events: Vec::new(),
            limit_hit: false,
            in_collision: false,
        })
    }

    /// Advance by `dt` with axis commands in `[-1, 1]` (values outside are clamped).
    pub fn step(
        &mut self,
        axes: &Vec4,
        dt: f64,
        task: &TaskConfig,
        machine: &Machine,
    ) -> Result<StepReport, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::BadStep(dt));
        }
        let mut report = StepReport::default();
        let mut q = self.joint.q;
        let mut v = [0.0; 4];
        for j in 0..4 {
            let cmd = if axes[j].is_finite() {
                axes[j].clamp(-1.0, 1.0)
            } else {
                0.0
            };
            v[j] = cmd * machine.max_speed[j];
            let target = q[j] + v[j] * dt;
            let clamped = target.clamp(machine.limits.lower[j], machine.limits.upper[j]);
            if clamped != target {
                report.clamped[j] = true;
                v[j] = (clamped - q[j]) / dt;
            }
            q[j] = clamped;
        }
        let t = self.joint.t + dt;
        self.joint = JointState { t, q, v };
        self.pose = forward_kinematics(&q, &machine.links);
        self.limit_hit = report.clamped.iter().any(|c| *c);

        let tip = self.pose.position();
        let bucket_v = v[3];
        if let Some((_, pile)) = task.first_with_role(ObjectRole::Pile) {
            if bucket_v > 0.0 && self.bucket_load <= 0.0 && pile.in_pile_region(&tip) {
                self.bucket_load = 1.0;
                report.events.push(SimEvent {
                    t,
                    kind: EventKind::Scooped,
                    dump_height: None,
                });
            }
        }
        if let Some((_, truck)) = task.first_with_role(ObjectRole::Truck) {
            if bucket_v < 0.0 && self.bucket_load > 0.0 && truck.above_truck(&tip) {
                self.truck_fill = (self.truck_fill + self.bucket_load * FILL_PER_DUMP).min(1.0);
                self.bucket_load = 0.0;
                report.events.push(SimEvent {
                    t,
                    kind: EventKind::Dumped,
                    dump_height: Some(tip[2] - truck.bed_height),
                });
            }
        }
        let colliding = self.is_colliding(task);
        if colliding && !self.in_collision {
            report.events.push(SimEvent {
                t,
                kind: EventKind::Collision,
                dump_height: None,
            });
        }
        self.in_collision = colliding;
        self.events.extend_from_slice(&report.events);
        Ok(report)
    }

    fn is_colliding(&self, task: &TaskConfig) -> bool {
        let tip = self.pose.position();
        let in_pile = task
            .objects
            .iter()
            .any(|o| o.role == ObjectRole::Pile && o.horizontal_distance(&tip) <= o.radius);
        let into_truck = task.objects.iter().any(|o| {
            o.role == ObjectRole::Truck
                && o.horizontal_distance(&tip) <= o.radius
                && tip[2] < o.bed_height
        });
        (tip[2] < 0.0 && !in_pile) || into_truck
    }
}

/// Pure-value form of [`SimState::step`].
pub fn step_sim(
    state: &SimState,
    axes: &Vec4,
    dt: f64,
    task: &TaskConfig,
    machine: &Machine,
) -> Result<SimState, SimError> {
    let mut next = state.clone();
    next.step(axes, dt, task, machine)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::ExpertScript;

    fn setup() -> (SimState, TaskConfig, Machine) {
        let machine = Machine::default();
        let script = ExpertScript::truck_loading();
        (
            SimState::at_rest(script.home, &machine).unwrap(),
            TaskConfig::truck_loading(),
            machine,
        )
    }

    #[test]
    fn zero_command_only_advances_time() {
        let (s, task, m) = setup();
        let n = step_sim(&s, &[0.0; 4], 0.04, &task, &m).unwrap();
        assert_eq!(n.joint.q, s.joint.q);
        assert_eq!(n.pose, s.pose);
        assert!((n.joint.t - 0.04).abs() < 1e-15);
        assert!(n.events.is_empty());
    }

    #[test]
    fn turret_integrates_at_max_speed() {
        let (s, task, m) = setup();
        let mut s = s;
        s.joint.q[0] = 0.0;
        let n = step_sim(&s, &[1.0, 0.0, 0.0, 0.0], 0.04, &task, &m).unwrap();
        assert!((n.joint.q[0] - 0.5 * 0.04).abs() < 1e-15);
        let recovered = (n.joint.q[0] - s.joint.q[0]) / 0.04;
        assert!((recovered - n.joint.v[0]).abs() < 1e-9);
    }

    #[test]
    fn clamps_at_limits_and_flags() {
        let (mut s, task, m) = setup();
        s.joint.q[1] = m.limits.upper[1] - 0.001;
        let n = step_sim(&s, &[0.0, 1.0, 0.0, 0.0], 0.04, &task, &m).unwrap();
        assert_eq!(n.joint.q[1], m.limits.upper[1]);
        assert!(n.limit_hit);
    }

    #[test]
    fn rejects_bad_dt() {
        let (s, task, m) = setup();
        assert_eq!(
            step_sim(&s, &[0.0; 4], 0.0, &task, &m),
            Err(SimError::BadStep(0.0))
        );
    }

    #[test]
    fn scripted_cycle_scoops_then_dumps() {
        let (mut s, task, m) = setup();
        let script = ExpertScript::truck_loading();
        for cmd in script.cycle_commands() {
            s.step(&cmd, 1.0 / 25.0, &task, &m).unwrap();
        }
        let kinds: Vec<_> = s
            .events
            .iter()
            .map(|e| e.kind)
            .filter(|k| *k != EventKind::Collision)
            .collect();
        assert_eq!(kinds, [EventKind::Scooped, EventKind::Dumped]);
        assert!((s.truck_fill - FILL_PER_DUMP).abs() < 1e-12);
        let dump = s
            .events
            .iter()
            .find(|e| e.kind == EventKind::Dumped)
            .unwrap();
        assert!(dump.dump_height.unwrap() > 0.0);
        // the cycle is closed in joint space
        for j in 0..4 {
            assert!((s.joint.q[j] - script.home[j]).abs() < 1e-9);
        }
    }
}
