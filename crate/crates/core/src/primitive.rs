//! Ternary per-joint action codes.

use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NUM_JOINTS;

/// Size of the primitive vocabulary, `3^n` for `n` joints.
pub const VOCABULARY_SIZE: u16 = 81;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrimitiveError {
    #[error("joint code {0} is not one of 1, 2, 3")]
    BadCode(u8),
    #[error("primitive id {0} exceeds the vocabulary")]
    BadId(u16),
}

/// State of one joint within a primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JointAction {
    /// Code 1, positive velocity.
    CounterClockwise,
    /// Code 2, stationary or noisy perturbation.
    Stationary,
    /// Code 3, negative velocity.
    Clockwise,
}

impl JointAction {
    pub fn code(self) -> u8 {
        match self {
            Self::CounterClockwise => 1,
            Self::Stationary => 2,
            Self::Clockwise => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, PrimitiveError> {
        match code {
            1 => Ok(Self::CounterClockwise),
            2 => Ok(Self::Stationary),
            3 => Ok(Self::Clockwise),
            c => Err(PrimitiveError::BadCode(c)),
        }
    }

    /// Joystick direction: +1, 0 or -1.
    pub fn direction(self) -> i8 {
        match self {
            Self::CounterClockwise => 1,
            Self::Stationary => 0,
            Self::Clockwise => -1,
        }
    }
}

/// One action code per joint. Encoded as `sum_j (e_j - 1) * 3^j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "[u8; 4]", into = "[u8; 4]"))]
pub struct ActionPrimitive(pub [JointAction; NUM_JOINTS]);

impl ActionPrimitive {
    pub const STATIONARY: Self = Self([JointAction::Stationary; NUM_JOINTS]);

    pub fn from_codes(codes: [u8; NUM_JOINTS]) -> Result<Self, PrimitiveError> {
        let mut e = [JointAction::Stationary; NUM_JOINTS];
        for (slot, c) in e.iter_mut().zip(codes) {
            *slot = JointAction::from_code(c)?;
        }
        Ok(Self(e))
    }

    pub fn codes(&self) -> [u8; NUM_JOINTS] {
        self.0.map(JointAction::code)
    }

    pub fn id(&self) -> u16 {
        self.0
            .iter()
            .rev()
            .fold(0u16, |acc, a| acc * 3 + u16::from(a.code() - 1))
    }

    pub fn from_id(id: u16) -> Result<Self, PrimitiveError> {
        if id >= VOCABULARY_SIZE {
            return Err(PrimitiveError::BadId(id));
        }
        let mut rest = id;
        let mut codes = [0u8; NUM_JOINTS];
        for c in codes.iter_mut() {
            *c = (rest % 3) as u8 + 1;
            rest /= 3;
        }
        Self::from_codes(codes)
    }

    pub fn directions(&self) -> [i8; NUM_JOINTS] {
        self.0.map(JointAction::direction)
    }

    /// Primitive whose joint directions follow the signs of `v`.
    pub fn from_signs(v: &[f64; NUM_JOINTS]) -> Self {
        Self(v.map(|x| {
            if x > 0.0 {
                JointAction::CounterClockwise
            } else if x < 0.0 {
                JointAction::Clockwise
            } else {
                JointAction::Stationary
            }
        }))
    }
}

impl TryFrom<[u8; NUM_JOINTS]> for ActionPrimitive {
    type Error = PrimitiveError;

    fn try_from(codes: [u8; NUM_JOINTS]) -> Result<Self, Self::Error> {
        Self::from_codes(codes)
    }
}

impl From<ActionPrimitive> for [u8; NUM_JOINTS] {
    fn from(p: ActionPrimitive) -> Self {
        p.codes()
    }
}

impl fmt::Display for ActionPrimitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.codes();
        write!(f, "[{},{},{},{}]", c[0], c[1], c[2], c[3])
    }
}
