//! Scripted expert demonstrations with ground-truth labels.
//!
//! A script is a closed loop in joint space: an ordered list of primitives,
//! each held for a whole number of frames at full actuator speed. Running the
//! loop from `home` returns to `home`, so cycles can be chained.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{forward_kinematics, EndEffectorPose, Machine};
use crate::primitive::ActionPrimitive;
use crate::task::TaskConfig;
use crate::trajectory::{Frame, Trajectory};
use crate::{Vec4, DEFAULT_RATE_HZ};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemoError {
    #[error("need at least one cycle")]
    NoCycles,
    #[error("noise standard deviation must be finite and non-negative, got {0}")]
    BadNoise(f64),
    #[error("script has no steps")]
    EmptyScript,
    #[error("script step {0} has zero duration")]
    ZeroDuration(usize),
    #[error("script steps {0} and {1} repeat the same primitive")]
    RepeatedPrimitive(usize, usize),
    #[error("script does not return to its home pose")]
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScriptStep {
    pub phase: String,
    pub primitive: ActionPrimitive,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ExpertScript {
    pub name: String,
    pub rate_hz: f64,
    pub home: Vec4,
    pub steps: Vec<ScriptStep>,
}

impl ExpertScript {
    /// Bundled truck-loading cycle for the default machine and task.
    pub fn truck_loading() -> Self {
        let step = |phase: &str, codes: [u8; 4], frames| ScriptStep {
            phase: phase.into(),
            primitive: ActionPrimitive::from_codes(codes).expect("valid codes"),
            frames,
        };
        Self {
            name: "truck_loading".into(),
            rate_hz: DEFAULT_RATE_HZ,
            home: [1.56, 1.0, -1.9, -0.5],
            steps: alloc::vec![
                step("swing_to_pile", [3, 2, 2, 2], 78),
                step("lower", [2, 3, 2, 2], 20),
                step("scoop", [2, 2, 3, 1], 30),
                step("raise", [2, 1, 2, 2], 40),
                step("swing_to_truck", [1, 2, 2, 2], 78),
                step("dump", [2, 2, 1, 3], 30),
                step("return", [2, 3, 2, 2], 20),
            ],
        }
    }

    /// Checks durations, primitive changes at every boundary (including the
    /// wrap-around) and loop closure at the given actuator speeds.
    pub fn validate(&self, machine: &Machine) -> Result<(), DemoError> {
        if self.steps.is_empty() {
            return Err(DemoError::EmptyScript);
        }
        let n = self.steps.len();
        for (i, s) in self.steps.iter().enumerate() {
            if s.frames == 0 {
                return Err(DemoError::ZeroDuration(i));
            }
            let next = (i + 1) % n;
            if n > 1 && self.steps[next].primitive == s.primitive {
                return Err(DemoError::RepeatedPrimitive(i, next));
            }
        }
        let dt = 1.0 / self.rate_hz;
        let mut q = self.home;
        for s in &self.steps {
            for (j, d) in s.primitive.directions().iter().enumerate() {
                q[j] += f64::from(*d) * machine.max_speed[j] * dt * s.frames as f64;
            }
        }
        if (0..4).any(|j| (q[j] - self.home[j]).abs() > 1e-9) {
            return Err(DemoError::OpenLoop);
        }
        Ok(())
    }

    pub fn frames_per_cycle(&self) -> usize {
        self.steps.iter().map(|s| s.frames).sum()
    }

    /// Distinct primitives used by the script.
    pub fn vocabulary(&self) -> Vec<ActionPrimitive> {
        let mut v: Vec<_> = self.steps.iter().map(|s| s.primitive).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Per-frame axis commands for one cycle.
    pub fn cycle_commands(&self) -> impl Iterator<Item = Vec4> + '_ {
        self.steps.iter().flat_map(|s| {
            let cmd = s.primitive.directions().map(f64::from);
            core::iter::repeat_n(cmd, s.frames)
        })
    }
}

/// Pose at the first frame of a script step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Waypoint {
    pub frame: usize,
    pub cycle: usize,
    pub step: usize,
    pub pose: EndEffectorPose,
}

/// Ground truth emitted alongside a generated demonstration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DemoOracle {
    /// Generating primitive of every frame.
    pub labels: Vec<ActionPrimitive>,
    /// Script step index of every frame.
    pub steps: Vec<usize>,
    /// First frame of every step except the very first.
    pub boundaries: Vec<usize>,
    pub waypoints: Vec<Waypoint>,
    pub frames_per_cycle: usize,
}

/// Runs `cycles` loops of `script`, adding zero-mean Gaussian noise of
/// standard deviation `noise_std` to every joint velocity. Joint angles
/// integrate the noisy velocities.
pub fn generate_expert_demo(
    script: &ExpertScript,
    task: &TaskConfig,
    machine: &Machine,
    cycles: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(Trajectory, DemoOracle), DemoError> {
    if cycles == 0 {
        return Err(DemoError::NoCycles);
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(DemoError::BadNoise(noise_std));
    }
    script.validate(machine)?;
    let noise = Normal::new(0.0, noise_std).map_err(|_| DemoError::BadNoise(noise_std))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let dt = 1.0 / script.rate_hz;
    let total = script.frames_per_cycle() * cycles;
    let mut traj = Trajectory::new(script.rate_hz);
    traj.frames.reserve(total);
    traj.meta.insert("script".into(), script.name.clone());
    traj.meta.insert("seed".into(), alloc::format!("{seed}"));
    traj.meta
        .insert("cycles".into(), alloc::format!("{cycles}"));
    traj.meta
        .insert("noise_std".into(), alloc::format!("{noise_std}"));
    let names: Vec<&str> = task.objects.iter().map(|o| o.name.as_str()).collect();
    traj.meta.insert("objects".into(), names.join(","));

    let mut oracle = DemoOracle {
        labels: Vec::with_capacity(total),
        steps: Vec::with_capacity(total),
        boundaries: Vec::new(),
        waypoints: Vec::new(),
        frames_per_cycle: script.frames_per_cycle(),
    };
    let mut q = script.home;
    let mut k = 0usize;
    for cycle in 0..cycles {
        for (si, step) in script.steps.iter().enumerate() {
            if k > 0 {
                oracle.boundaries.push(k);
            }
            oracle.waypoints.push(Waypoint {
                frame: k,
                cycle,
                step: si,
                pose: forward_kinematics(&q, &machine.links),
            });
            let dirs = step.primitive.directions();
            for _ in 0..step.frames {
                let mut v = [0.0; 4];
                for j in 0..4 {
                    v[j] = f64::from(dirs[j]) * machine.max_speed[j];
                    if noise_std > 0.0 {
                        v[j] += noise.sample(&mut rng);
                    }
                }
                traj.frames.push(Frame {
                    t: k as f64 * dt,
                    q,
                    v,
                    ee: forward_kinematics(&q, &machine.links),
                });
                oracle.labels.push(step.primitive);
                oracle.steps.push(si);
                for j in 0..4 {
                    q[j] += v[j] * dt;
                }
                k += 1;
            }
        }
    }
    Ok((traj, oracle))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(cycles: usize, noise: f64, seed: u64) -> (Trajectory, DemoOracle) {
        generate_expert_demo(
            &ExpertScript::truck_loading(),
            &TaskConfig::truck_loading(),
            &Machine::default(),
            cycles,
            noise,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn bundled_script_is_closed() {
        ExpertScript::truck_loading()
            .validate(&Machine::default())
            .unwrap();
    }

    #[test]
    fn noiseless_labels_follow_velocity_signs() {
        let script = ExpertScript::truck_loading();
        let (traj, oracle) = demo(5, 0.0, 1);
        assert_eq!(traj.len(), script.frames_per_cycle() * 5);
        traj.validate().unwrap();
        for (f, label) in traj.frames.iter().zip(&oracle.labels) {
            assert_eq!(ActionPrimitive::from_signs(&f.v), *label);
        }
        assert_eq!(oracle.boundaries.len(), 5 * script.steps.len() - 1);
        for &b in &oracle.boundaries {
            assert_ne!(oracle.labels[b - 1], oracle.labels[b]);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let a = demo(5, 0.02, 7);
        let b = demo(5, 0.02, 7);
        assert_eq!(a, b);
        let c = demo(5, 0.02, 8);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn rejects_zero_cycles() {
        let err = generate_expert_demo(
            &ExpertScript::truck_loading(),
            &TaskConfig::truck_loading(),
            &Machine::default(),
            0,
            0.0,
            0,
        );
        assert_eq!(err, Err(DemoError::NoCycles));
    }

    #[test]
    fn open_loop_script_is_rejected() {
        let mut s = ExpertScript::truck_loading();
        s.steps[0].frames += 1;
        assert_eq!(s.validate(&Machine::default()), Err(DemoError::OpenLoop));
    }
}
