//! Turret plus planar boom/arm/bucket chain.
//!
//! Joint order is turret, boom, arm, bucket. The turret rotates about the
//! vertical axis; boom, arm and bucket angles are relative, measured in the
//! vertical plane selected by the turret, positive upward. The end effector is
//! the bucket tip and `phi` is the absolute bucket attitude, i.e. the sum of
//! the three planar angles.

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{cos, sin, Mat4};
use crate::Vec4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("link length `{0}` must be positive and finite")]
    BadLink(&'static str),
    #[error("joint {joint}: lower limit {lower} is not below upper limit {upper}")]
    BadLimits {
        joint: usize,
        lower: f64,
        upper: f64,
    },
    #[error("max speed for joint {0} must be positive")]
    BadSpeed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LinkParams {
    pub boom_length: f64,
    pub arm_length: f64,
    pub bucket_length: f64,
    pub base_height: f64,
}

impl LinkParams {
    pub fn new(
        boom_length: f64,
        arm_length: f64,
        bucket_length: f64,
        base_height: f64,
    ) -> Result<Self, KinematicsError> {
        let links = Self {
            boom_length,
            arm_length,
            bucket_length,
            base_height,
        };
        links.validate()?;
        Ok(links)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let check = |v: f64, name| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(KinematicsError::BadLink(name))
            }
        };
        check(self.boom_length, "boom_length")?;
        check(self.arm_length, "arm_length")?;
        check(self.bucket_length, "bucket_length")?;
        check(self.base_height, "base_height")
    }

    pub fn reach(&self) -> f64 {
        self.boom_length + self.arm_length + self.bucket_length
    }
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            boom_length: 1.0,
            arm_length: 1.0,
            bucket_length: 0.2,
            base_height: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct JointLimits {
    pub lower: Vec4,
    pub upper: Vec4,
}

impl JointLimits {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        for j in 0..4 {
            if !(self.lower[j] < self.upper[j]) {
                return Err(KinematicsError::BadLimits {
                    joint: j,
                    lower: self.lower[j],
                    upper: self.upper[j],
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, q: &Vec4) -> bool {
        (0..4).all(|j| q[j] >= self.lower[j] && q[j] <= self.upper[j])
    }
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            lower: [-core::f64::consts::PI, -0.5, -2.8, -1.5],
            upper: [core::f64::consts::PI, 1.6, -0.2, 1.0],
        }
    }
}

/// Geometry, joint limits and actuator speeds of the simulated machine.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Machine {
    pub links: LinkParams,
    pub limits: JointLimits,
    /// Joint speed at full axis deflection, rad/s.
    pub max_speed: Vec4,
}

impl Machine {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        self.links.validate()?;
        self.limits.validate()?;
        for (j, s) in self.max_speed.iter().enumerate() {
            if !(*s > 0.0 && s.is_finite()) {
                return Err(KinematicsError::BadSpeed(j));
            }
        }
        Ok(())
    }
}

impl Default for Machine {
    fn default() -> Self {
        Self {
            links: LinkParams::default(),
            limits: JointLimits::default(),
            max_speed: [0.5; 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct JointState {
    pub t: f64,
    pub q: Vec4,
    pub v: Vec4,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EndEffectorPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
}

impl EndEffectorPose {
    pub fn from_array(a: Vec4) -> Self {
        Self {
            x: a[0],
            y: a[1],
            z: a[2],
            phi: a[3],
        }
    }

    pub fn to_array(&self) -> Vec4 {
        [self.x, self.y, self.z, self.phi]
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Bucket-tip pose for joint angles `q`.
pub fn forward_kinematics(q: &Vec4, links: &LinkParams) -> EndEffectorPose {
    let [turret, boom, arm, bucket] = *q;
    let a1 = boom;
    let a2 = boom + arm;
    let a3 = a2 + bucket;
    let r =
        links.boom_length * cos(a1) + links.arm_length * cos(a2) + links.bucket_length * cos(a3);
    let z = links.base_height
        + links.boom_length * sin(a1)
        + links.arm_length * sin(a2)
        + links.bucket_length * sin(a3);
    EndEffectorPose {
        x: r * cos(turret),
        y: r * sin(turret),
        z,
        phi: a3,
    }
}

/// Partial derivatives of the pose `(x, y, z, phi)` with respect to `q`.
/// Row `i` is pose component `i`, column `j` is joint `j`.
pub fn jacobian(q: &Vec4, links: &LinkParams) -> Mat4 {
    let [turret, boom, arm, bucket] = *q;
    let a1 = boom;
    let a2 = boom + arm;
    let a3 = a2 + bucket;
    let (l1, l2, l3) = (links.boom_length, links.arm_length, links.bucket_length);
    let r = l1 * cos(a1) + l2 * cos(a2) + l3 * cos(a3);
    let dr = [
        -(l1 * sin(a1) + l2 * sin(a2) + l3 * sin(a3)),
        -(l2 * sin(a2) + l3 * sin(a3)),
        -(l3 * sin(a3)),
    ];
    let dz = [r, l2 * cos(a2) + l3 * cos(a3), l3 * cos(a3)];
    let (ct, st) = (cos(turret), sin(turret));
    [
        [-r * st, dr[0] * ct, dr[1] * ct, dr[2] * ct],
        [r * ct, dr[0] * st, dr[1] * st, dr[2] * st],
        [0.0, dz[0], dz[1], dz[2]],
        [0.0, 1.0, 1.0, 1.0],
    ]
}
