//! Camera-frame scenes and the per-point predictions voted from them.

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

/// Class id reserved for background points.
pub const BACKGROUND_CLASS: u32 = 0;

/// Instance id carried by background points.
pub const BACKGROUND_INSTANCE: i64 = -1;

/// Ground truth for one object instance in a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInstance {
    pub class_id: u32,
    pub pose: Pose,
    /// Number of points the instance would contribute without occlusion.
    pub expected_points: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub frame_id: u64,
    pub points: Vec<Vec3>,
    pub gt_class: Vec<u32>,
    pub gt_instance: Vec<i64>,
    pub instances: Vec<SceneInstance>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.gt_class.len() != n || self.gt_instance.len() != n {
            return Err(Error::invalid(format!(
                "scene arrays differ in length ({n} points, {} classes, {} instances)",
                self.gt_class.len(),
                self.gt_instance.len()
            )));
        }
        if let Some(i) = self.points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid(format!("scene point {i} is not finite")));
        }
        for (i, &inst) in self.gt_instance.iter().enumerate() {
            if inst == BACKGROUND_INSTANCE {
                continue;
            }
            let valid = usize::try_from(inst)
                .ok()
                .and_then(|k| self.instances.get(k))
                .is_some_and(|instance| instance.class_id == self.gt_class[i]);
            if !valid {
                return Err(Error::invalid(format!(
                    "point {i} references instance {inst} inconsistently"
                )));
            }
        }
        Ok(())
    }

    /// Indices of the points labelled with instance `instance_id`.
    pub fn instance_points(&self, instance_id: usize) -> Vec<usize> {
        self.gt_instance
            .iter()
            .enumerate()
            .filter(|(_, &inst)| inst == instance_id as i64)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-point network output: keypoint offsets, center offset and class
/// confidences. Arrays are stored flat, point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    num_keypoints: usize,
    num_classes: usize,
    kp_offsets: Vec<Vec3>,
    center_offsets: Vec<Vec3>,
    class_scores: Vec<f64>,
}

impl Prediction {
    /// `kp_offsets` holds `num_keypoints` entries per point and
    /// `class_scores` holds `num_classes` entries per point.
    pub fn new(
        num_keypoints: usize,
        num_classes: usize,
        kp_offsets: Vec<Vec3>,
        center_offsets: Vec<Vec3>,
        class_scores: Vec<f64>,
    ) -> Result<Self> {
        let n = center_offsets.len();
        if num_keypoints == 0 || num_classes == 0 {
            return Err(Error::invalid("prediction needs at least one keypoint and class"));
        }
        if kp_offsets.len() != n * num_keypoints || class_scores.len() != n * num_classes {
            return Err(Error::invalid("prediction array sizes disagree"));
        }
        let pred = Prediction {
            num_keypoints,
            num_classes,
            kp_offsets,
            center_offsets,
            class_scores,
        };
        pred.check_values()?;
        Ok(pred)
    }

    fn check_values(&self) -> Result<()> {
        if !self
            .kp_offsets
            .iter()
            .chain(&self.center_offsets)
            .all(|v| v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid("prediction offsets must be finite"));
        }
        for i in 0..self.len() {
            let row = self.scores(i);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|s| !(0.0..=1.0).contains(s)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "class scores of point {i} are not a distribution"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.center_offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center_offsets.is_empty()
    }

    pub fn num_keypoints(&self) -> usize {
        self.num_keypoints
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn kp_offsets(&self, point: usize) -> &[Vec3] {
        &self.kp_offsets[point * self.num_keypoints..(point + 1) * self.num_keypoints]
    }

    pub fn center_offset(&self, point: usize) -> &Vec3 {
        &self.center_offsets[point]
    }

    pub fn scores(&self, point: usize) -> &[f64] {
        &self.class_scores[point * self.num_classes..(point + 1) * self.num_classes]
    }

    pub fn all_kp_offsets(&self) -> &[Vec3] {
        &self.kp_offsets
    }

    pub fn all_center_offsets(&self) -> &[Vec3] {
        &self.center_offsets
    }

    pub fn all_scores(&self) -> &[f64] {
        &self.class_scores
    }

    /// Argmax of the class scores, lowest class id on ties.
    pub fn predicted_class(&self, point: usize) -> u32 {
        let mut best = 0;
        for (c, &s) in self.scores(point).iter().enumerate() {
            if s > self.scores(point)[best] {
                best = c;
            }
        }
        best as u32
    }

    pub fn check_matches(&self, scene: &Scene) -> Result<()> {
        if self.len() != scene.len() {
            return Err(Error::invalid(format!(
                "prediction covers {} points but the scene has {}",
                self.len(),
                scene.len()
            )));
        }
        Ok(())
    }
}
