//! Task-space objects (pile, truck) expressed in the machine base frame.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{sq, sqrt};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("task has no objects")]
    Empty,
    #[error("duplicate object name `{0}`")]
    DuplicateName(String),
    #[error("object `{0}` has a non-finite center or non-positive radius")]
    BadGeometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ObjectRole {
    Pile,
    Truck,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TaskObject {
    pub name: String,
    pub role: ObjectRole,
    /// Object-frame origin in the base frame.
    pub center: [f64; 3],
    /// Truck: bed height above ground. Pile: height of the pile top.
    pub bed_height: f64,
    /// Horizontal radius of the object's region.
    pub radius: f64,
}

impl TaskObject {
    pub fn horizontal_distance(&self, p: &[f64; 3]) -> f64 {
        sqrt(sq(p[0] - self.center[0]) + sq(p[1] - self.center[1]))
    }

    pub fn distance(&self, p: &[f64; 3]) -> f64 {
        sqrt(sq(p[0] - self.center[0]) + sq(p[1] - self.center[1]) + sq(p[2] - self.center[2]))
    }

    /// Bucket tip is over the pile footprint and below its top.
    pub fn in_pile_region(&self, p: &[f64; 3]) -> bool {
        self.horizontal_distance(p) <= self.radius && p[2] <= self.bed_height
    }

    /// Bucket tip is over the truck footprint and above its bed.
    pub fn above_truck(&self, p: &[f64; 3]) -> bool {
        self.horizontal_distance(p) <= self.radius && p[2] > self.bed_height
    }
}

/// Ordered task objects. The base frame is the identity by convention.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TaskConfig {
    pub objects: Vec<TaskObject>,
}

impl TaskConfig {
    pub fn new(objects: Vec<TaskObject>) -> Result<Self, TaskError> {
        let task = Self { objects };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.objects.is_empty() {
            return Err(TaskError::Empty);
        }
        for (i, o) in self.objects.iter().enumerate() {
            if self.objects[..i].iter().any(|p| p.name == o.name) {
                return Err(TaskError::DuplicateName(o.name.clone()));
            }
            if !o.center.iter().all(|c| c.is_finite()) || !(o.radius > 0.0) {
                return Err(TaskError::BadGeometry(o.name.clone()));
            }
        }
        Ok(())
    }

    /// Default truck-loading layout matched to the bundled expert script.
    pub fn truck_loading() -> Self {
        Self {
            objects: alloc::vec![
                TaskObject {
                    name: "pile".into(),
                    role: ObjectRole::Pile,
                    center: [0.85, 0.0, 0.0],
                    bed_height: 0.3,
                    radius: 0.6,
                },
                TaskObject {
                    name: "truck".into(),
                    role: ObjectRole::Truck,
                    center: [0.0, 1.0, 0.0],
                    bed_height: 0.3,
                    radius: 0.6,
                },
            ],
        }
    }

    pub fn first_with_role(&self, role: ObjectRole) -> Option<(usize, &TaskObject)> {
        self.objects
            .iter()
            .enumerate()
            .find(|(_, o)| o.role == role)
    }

    /// Index of the nearest object center; ties go to the lower index.
    pub fn nearest_object(&self, p: &[f64; 3]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, o) in self.objects.iter().enumerate() {
            let d = o.distance(p);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Distance between the two closest object centers, if there are two.
    pub fn min_center_separation(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                let d = a.distance(&b.center);
                best = Some(best.map_or(d, |x: f64| x.min(d)));
            }
        }
        best
    }
}
