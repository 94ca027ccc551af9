//! Object models and the selection of their target keypoints.
//!
//! Two selectors are provided: farthest point sampling seeded with the model
//! center, and the eight corners of the axis-aligned bounding box. Distances
//! are Euclidean and computed exactly.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, Vec3};

/// Surface keypoint count used when none is configured.
pub const DEFAULT_KEYPOINT_COUNT: usize = 8;

/// An object model expressed in its own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub class_id: u32,
    points: Vec<Vec3>,
    center: Vec3,
    diameter: f64,
    /// Selected surface keypoints. The center is not stored here; see
    /// [`ObjectModel::pipeline_keypoints`].
    pub keypoints: Vec<Vec3>,
}

impl ObjectModel {
    pub fn new(class_id: u32, points: Vec<Vec3>) -> Result<Self> {
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid("model contains non-finite coordinates"));
        }
        let center = centroid(&points).ok_or(Error::EmptyModel)?;
        let diameter = diameter(&points);
        Ok(ObjectModel {
            class_id,
            points,
            center,
            diameter,
            keypoints: Vec::new(),
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn center(&self) -> &Vec3 {
        &self.center
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn with_keypoints(mut self, method: KeypointMethod) -> Result<Self> {
        self.keypoints = method.select(&self)?;
        Ok(self)
    }

    /// Object-frame keypoints used by voting and fitting: the center first,
    /// then the selected surface keypoints.
    pub fn pipeline_keypoints(&self) -> Vec<Vec3> {
        std::iter::once(self.center)
            .chain(self.keypoints.iter().copied())
            .collect()
    }
}

/// Maximum pairwise distance, exact.
///
/// Points are visited in decreasing distance from the centroid; a pair can
/// only beat the running maximum if the sum of their radii does.
fn diameter(points: &[Vec3]) -> f64 {
    let Some(c) = centroid(points) else {
        return 0.0;
    };
    let mut by_radius: Vec<(f64, &Vec3)> = points.iter().map(|p| ((p - c).norm(), p)).collect();
    by_radius.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut best_sq = 0.0f64;
    for (i, (ri, pi)) in by_radius.iter().enumerate() {
        let best = best_sq.sqrt();
        if 2.0 * ri < best {
            break;
        }
        for (rj, pj) in &by_radius[i + 1..] {
            // Slack absorbs rounding in the radius bound.
            if ri + rj < best * (1.0 - 1e-12) {
                break;
            }
            best_sq = best_sq.max((*pi - *pj).norm_squared());
        }
    }
    best_sq.sqrt()
}

/// How keypoints are chosen from a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum KeypointMethod {
    /// Farthest point sampling of `m` surface points after the center.
    Fps { m: usize },
    /// The eight bounding-box corners.
    #[serde(rename = "bbox8")]
    BBox8,
}

impl KeypointMethod {
    /// Returns the surface keypoints (the center is never included).
    pub fn select(&self, model: &ObjectModel) -> Result<Vec<Vec3>> {
        match *self {
            KeypointMethod::Fps { m } => {
                if m == 0 {
                    return Err(Error::invalid("keypoint count must be at least 1"));
                }
                let mut selected = fps_select(model, m + 1)?;
                selected.remove(0);
                Ok(selected)
            }
            KeypointMethod::BBox8 => Ok(bbox8_select(model).to_vec()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            KeypointMethod::Fps { m } => format!("fps{m}"),
            KeypointMethod::BBox8 => "bbox8".to_owned(),
        }
    }
}

impl Default for KeypointMethod {
    fn default() -> Self {
        KeypointMethod::Fps {
            m: DEFAULT_KEYPOINT_COUNT,
        }
    }
}

impl fmt::Display for KeypointMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for KeypointMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "bbox8" {
            return Ok(KeypointMethod::BBox8);
        }
        s.strip_prefix("fps")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&m| m > 0)
            .map(|m| KeypointMethod::Fps { m })
            .ok_or_else(|| Error::invalid(format!("unknown keypoint method {s:?}")))
    }
}

/// Farthest point sampling initialized with the model center.
///
/// Returns `m` keypoints: the center, then repeatedly the model point whose
/// distance to the nearest already-selected keypoint is largest. Ties go to
/// the lowest point index.
pub fn fps_select(model: &ObjectModel, m: usize) -> Result<Vec<Vec3>> {
    if m == 0 {
        return Err(Error::invalid("keypoint count must be at least 1"));
    }
    let distinct = model
        .points
        .iter()
        .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
        .collect::<HashSet<_>>()
        .len();
    if m > distinct + 1 {
        return Err(Error::KeypointCountExceedsModel {
            requested: m,
            available: distinct + 1,
        });
    }

    let mut selected = Vec::with_capacity(m);
    selected.push(model.center);
    let mut min_sq: Vec<f64> = model
        .points
        .iter()
        .map(|p| (p - model.center).norm_squared())
        .collect();

    while selected.len() < m {
        let (best, _) = min_sq
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bd), (i, &d)| {
                if d > bd {
                    (i, d)
                } else {
                    (bi, bd)
                }
            });
        let chosen = model.points[best];
        selected.push(chosen);
        for (d, p) in min_sq.iter_mut().zip(&model.points) {
            *d = d.min((p - chosen).norm_squared());
        }
    }
    Ok(selected)
}

/// Corners of the axis-aligned bounding box.
///
/// Corner `k` takes the max along x if bit 0 of `k` is set, along y for
/// bit 1 and along z for bit 2; the min otherwise.
pub fn bbox8_select(model: &ObjectModel) -> [Vec3; 8] {
    let (lo, hi) = bounding_box(&model.points).expect("models are non-empty");
    std::array::from_fn(|k| {
        Vec3::new(
            if k & 1 != 0 { hi.x } else { lo.x },
            if k & 2 != 0 { hi.y } else { lo.y },
            if k & 4 != 0 { hi.z } else { lo.z },
        )
    })
}

pub(crate) fn bounding_box(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = *points.first()?;
    Some(
        points
            .iter()
            .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
    )
}

/// Mean distance from each keypoint to its nearest model point.
pub fn mean_keypoint_distance(model: &ObjectModel, keypoints: &[Vec3]) -> Result<f64> {
    if model.points.is_empty() {
        return Err(Error::invalid("model has no points"));
    }
    if keypoints.is_empty() {
        return Err(Error::invalid("no keypoints given"));
    }
    let total: f64 = keypoints
        .iter()
        .map(|k| {
            model
                .points
                .iter()
                .map(|p| (p - k).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    Ok(total / keypoints.len() as f64)
}
